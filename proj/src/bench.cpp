#include "ugsd/bench.hpp"

#include "ugsd/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ugsd {

namespace {

constexpr std::size_t kLayerWidth = 6;
constexpr std::size_t kBranching = 3;
constexpr std::size_t kRestarts = 3;
constexpr double kAmbiguousShare = 0.12;
constexpr std::size_t kRawBytes = 256;

struct Grammar {
  std::vector<std::uint32_t> starts;
  // successors[t]: (token, weight) pairs; empty for eos.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> successors;
};

Grammar make_grammar(std::size_t vocab_size, std::mt19937_64& rng) {
  const std::size_t content = vocab_size - 1;
  const std::size_t layer_count = std::max<std::size_t>(1, content / kLayerWidth);
  std::vector<std::vector<std::uint32_t>> layers(layer_count);
  std::vector<std::uint32_t> ids(content);
  std::iota(ids.begin(), ids.end(), 1u);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t i = 0; i < ids.size(); ++i) layers[i % layer_count].push_back(ids[i]);

  Grammar g;
  for (std::size_t layer = 0; layer < std::max<std::size_t>(1, layer_count / 4); ++layer)
    g.starts.insert(g.starts.end(), layers[layer].begin(), layers[layer].end());
  g.successors.resize(vocab_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  auto pick = [&](std::vector<std::uint32_t> pool, std::size_t k) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(k, pool.size()));
    return pool;
  };

  for (std::size_t layer = 0; layer + 1 < layer_count; ++layer) {
    std::vector<std::uint32_t> pool = layers[layer + 1];
    if (layer + 2 < layer_count) pool.insert(pool.end(), layers[layer + 2].begin(), layers[layer + 2].end());
    for (auto t : layers[layer]) {
      const auto next = pick(pool, kBranching);
      double top = 0.0;
      double second = 0.0;
      if (unit(rng) < kAmbiguousShare) {
        top = between(0.42, 0.50);
        second = top - between(0.02, 0.08);
      } else {
        top = between(0.88, 0.98);
        second = (1.0 - top) * between(0.55, 0.95);
      }
      const double w[3] = {top, second, 1.0 - top - second};
      for (std::size_t k = 0; k < next.size(); ++k) g.successors[t].emplace_back(next[k], w[k]);
    }
  }
  // Clause ends: stop, narrowly ahead of each way of starting a new clause.
  for (auto t : layers.back()) {
    const auto loop = pick(g.starts, kRestarts);
    std::vector<double> w;
    for (std::size_t k = 0; k < loop.size(); ++k) w.push_back(1.0 - 0.04 * static_cast<double>(k));
    const double stop = w.front() * between(1.05, 1.2);
    double norm = stop;
    for (double x : w) norm += x;
    auto& s = g.successors[t];
    s.emplace_back(0u, stop / norm);
    for (std::size_t k = 0; k < loop.size(); ++k) s.emplace_back(loop[k], w[k] / norm);
  }
  return g;
}

std::uint32_t draw(const std::vector<std::pair<std::uint32_t, double>>& options,
                   std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& o : options) w.push_back(o.second);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return options[d(rng)].first;
}

// Sentences must leave at least one token after the prompt.
Transcript sample_sentence(const Grammar& g, std::size_t min_len, std::size_t max_len,
                           std::mt19937_64& rng) {
  const TokenId eos(0);
  for (;;) {
    Transcript s;
    std::uniform_int_distribution<std::size_t> first(0, g.starts.size() - 1);
    std::uint32_t t = g.starts[first(rng)];
    s.append(TokenId(t), eos, max_len);
    while (!s.terminated && s.size() < max_len) {
      t = draw(g.successors[t], rng);
      s.append(TokenId(t), eos, max_len);
    }
    if (s.terminated && s.size() >= min_len) return s;
  }
}

std::vector<std::uint8_t> waveform(std::mt19937_64& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::vector<std::uint8_t> raw;
  raw.reserve(kRawBytes + 4);
  for (char c : std::string_view("RIFF")) raw.push_back(static_cast<std::uint8_t>(c));
  for (std::size_t i = 0; i < kRawBytes; ++i) raw.push_back(static_cast<std::uint8_t>(kHex[rng() & 15]));
  return raw;
}

}  // namespace

void BenchmarkSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::Config, m); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (corpus_sentences == 0) fail("corpus_sentences must be positive");
  if (ngram_order < 1) fail("ngram_order must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive and finite");
  if (!(draft_temperature > 0.0) || !std::isfinite(draft_temperature))
    fail("draft_temperature must be positive and finite");
  if (!(draft_noise_scale >= 0.0) || !std::isfinite(draft_noise_scale))
    fail("draft_noise_scale must be non-negative and finite");
  if (utterance_count == 0) fail("utterance_count must be positive");
  if (max_tokens == 0) fail("max_tokens must be positive");
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stream) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(seed ^ mix64(h));
}

Benchmark generate_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  Benchmark b{spec, Vocabulary(spec.vocab_size, TokenId(0)), {}, nullptr, nullptr, nullptr, {}, {}, {}};

  std::mt19937_64 grammar_rng(derive_seed(spec.corpus_seed, "grammar"));
  const Grammar g = make_grammar(spec.vocab_size, grammar_rng);

  const std::size_t prompt_len = spec.feature_dim();
  const std::size_t min_len = prompt_len + 1;
  const std::size_t max_len = prompt_len + spec.max_tokens;

  std::mt19937_64 corpus_rng(derive_seed(spec.corpus_seed, "corpus"));
  b.corpus.reserve(spec.corpus_sentences);
  for (std::size_t i = 0; i < spec.corpus_sentences; ++i)
    b.corpus.push_back(sample_sentence(g, min_len, max_len, corpus_rng));

  b.ngram = std::make_shared<NGramModel>(ngram_fit(b.corpus, spec.ngram_order, spec.alpha, b.vocab));
  b.verifier = std::make_shared<PromptedModel>(b.ngram);
  b.draft = std::make_shared<PerturbedModel>(b.verifier, spec.draft_temperature,
                                             spec.draft_noise_scale, spec.draft_seed);

  // Each utterance is prompted with the opening of a fresh grammar sentence;
  // its reference is the verifier's greedy continuation.
  std::mt19937_64 utt_rng(derive_seed(spec.corpus_seed, "features"));
  for (std::size_t i = 0; i < spec.utterance_count; ++i) {
    const Transcript s = sample_sentence(g, min_len, max_len, utt_rng);
    std::ostringstream id;
    id << "utt" << std::setw(4) << std::setfill('0') << i;
    UtteranceInput u;
    u.raw = waveform(utt_rng);
    const std::span<const TokenId> prompt(s.tokens.data(), prompt_len);
    u.features.values = encode_prompt(prompt, b.vocab);
    u.features.source_id = id.str();
    b.references.push_back(greedy_decode(*b.verifier, u.features, spec.max_tokens));
    b.ids.push_back(id.str());
    b.utterances.push_back(std::move(u));
  }
  return b;
}

void write_bundle(const Benchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "spec.json", spec_to_json(b.spec).dump(2) + "\n");
  save_model(*b.verifier, dir / "verifier.json");
  save_model(*b.draft, dir / "draft.json");
  std::string utts;
  std::string refs;
  for (std::size_t i = 0; i < b.utterances.size(); ++i) {
    const auto& u = b.utterances[i];
    nlohmann::ordered_json j{{"id", b.ids[i]},
                             {"raw", std::string(u.raw.begin(), u.raw.end())},
                             {"features", u.features.values}};
    utts += j.dump() + "\n";
    refs += format_tokens(b.references[i].tokens) + "\n";
  }
  write_file(dir / "utterances.jsonl", utts);
  write_file(dir / "references.txt", refs);
}

Benchmark load_bundle(const std::filesystem::path& dir) {
  Benchmark b{BenchmarkSpec{}, Vocabulary(2, TokenId(0)), {}, nullptr, nullptr, nullptr, {}, {}, {}};
  try {
    b.spec = spec_from_json(nlohmann::json::parse(read_file(dir / "spec.json")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadSnapshot, std::string("spec.json: ") + e.what());
  }
  b.verifier = load_model(dir / "verifier.json");
  b.draft = load_model(dir / "draft.json");
  if (b.verifier->vocabulary().checksum() != b.draft->vocabulary().checksum())
    throw Error(Errc::VocabMismatch, "bundle models disagree on the vocabulary");
  b.vocab = b.verifier->vocabulary();

  std::istringstream in(read_file(dir / "utterances.jsonl"));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    try {
      const auto j = nlohmann::json::parse(line);
      UtteranceInput u;
      const auto raw = j.at("raw").get<std::string>();
      u.raw.assign(raw.begin(), raw.end());
      u.features.values = j.at("features").get<std::vector<double>>();
      u.features.source_id = j.at("id").get<std::string>();
      b.ids.push_back(u.features.source_id);
      b.utterances.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadSnapshot,
                  "utterances.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (auto& refs : read_reference_lines(dir / "references.txt")) {
    Transcript t;
    t.tokens = std::move(refs.front());
    t.terminated = !t.tokens.empty() && t.tokens.back() == b.vocab.eos();
    b.references.push_back(std::move(t));
  }
  if (b.references.size() != b.utterances.size())
    throw Error(Errc::BadSnapshot, "references.txt and utterances.jsonl differ in length");
  return b;
}

}  // namespace ugsd
