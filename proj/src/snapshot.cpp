#include "ugsd/snapshot.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace ugsd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::BadSnapshot, why); }

void only_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) bad(std::string(what) + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) bad(std::string("unknown key '") + k + "' in " + what);
}

json field(const json& j, const char* key) {
  if (!j.contains(key)) bad(std::string("missing key '") + key + "'");
  return j.at(key);
}

}  // namespace

ordered_json vocab_to_json(const Vocabulary& v) {
  ordered_json j{{"size", v.size()}, {"eos", v.eos().value}};
  if (v.has_labels()) j["labels"] = v.labels();
  j["checksum"] = v.checksum();
  return j;
}

Vocabulary vocab_from_json(const json& j) {
  only_keys(j, {"size", "eos", "labels", "checksum"}, "vocab");
  try {
    std::vector<std::string> labels;
    if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
    Vocabulary v(field(j, "size").get<std::size_t>(), TokenId(field(j, "eos").get<std::uint32_t>()),
                 std::move(labels));
    if (j.contains("checksum") && j.at("checksum").get<std::uint64_t>() != v.checksum())
      bad("vocabulary checksum does not match its contents");
    return v;
  } catch (const json::exception& e) {
    bad(std::string("vocab: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::BadSnapshot) throw;
    bad(e.what());
  }
}

ordered_json model_to_json(const LanguageModel& m) {
  if (auto* n = dynamic_cast<const NGramModel*>(&m)) {
    ordered_json counts = ordered_json::array();
    for (const auto& [ctx, row] : n->counts()) {
      ordered_json sparse = ordered_json::array();
      for (std::size_t t = 0; t < row.size(); ++t)
        if (row[t] != 0) sparse.push_back({t, row[t]});
      counts.push_back({{"context", ctx}, {"counts", sparse}});
    }
    return {{"kind", "ngram"},       {"vocab", vocab_to_json(n->vocabulary())},
            {"order", n->order()},   {"alpha", n->alpha()},
            {"counts", counts}};
  }
  if (auto* p = dynamic_cast<const PerturbedModel*>(&m)) {
    return {{"kind", "perturbed"},
            {"temperature", p->temperature()},
            {"noise_scale", p->noise_scale()},
            {"seed", p->seed()},
            {"base", model_to_json(*p->base())}};
  }
  if (auto* p = dynamic_cast<const PromptedModel*>(&m)) {
    return {{"kind", "prompted"}, {"base", model_to_json(*p->base())}};
  }
  if (auto* t = dynamic_cast<const TableModel*>(&m)) {
    ordered_json entries = ordered_json::array();
    for (const auto& [key, dist] : t->entries()) {
      entries.push_back({{"prefix", key.prefix},
                         {"source_id", key.source_id},
                         {"probs", std::vector<double>(dist.values().begin(), dist.values().end())}});
    }
    return {{"kind", "table"}, {"vocab", vocab_to_json(t->vocabulary())}, {"entries", entries}};
  }
  throw Error(Errc::BadSnapshot, "model type has no snapshot form");
}

ModelPtr model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    bad("snapshot must be an object with a string 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "ngram") {
      only_keys(j, {"kind", "vocab", "order", "alpha", "counts"}, "ngram snapshot");
      Vocabulary vocab = vocab_from_json(field(j, "vocab"));
      NGramModel::CountTable table;
      for (const auto& entry : field(j, "counts")) {
        only_keys(entry, {"context", "counts"}, "count entry");
        auto ctx = field(entry, "context").get<NGramModel::Context>();
        std::vector<std::uint64_t> row(vocab.size(), 0);
        for (const auto& pair : field(entry, "counts")) {
          auto [tok, c] = pair.get<std::pair<std::size_t, std::uint64_t>>();
          if (tok >= vocab.size()) bad("count for token outside the vocabulary");
          row[tok] = c;
        }
        if (!table.emplace(std::move(ctx), std::move(row)).second) bad("duplicate context");
      }
      return std::make_shared<NGramModel>(std::move(vocab), field(j, "order").get<std::size_t>(),
                                          field(j, "alpha").get<double>(), std::move(table));
    }
    if (kind == "perturbed") {
      only_keys(j, {"kind", "temperature", "noise_scale", "seed", "base"}, "perturbed snapshot");
      return std::make_shared<PerturbedModel>(
          model_from_json(field(j, "base")), field(j, "temperature").get<double>(),
          field(j, "noise_scale").get<double>(), field(j, "seed").get<std::uint64_t>());
    }
    if (kind == "prompted") {
      only_keys(j, {"kind", "base"}, "prompted snapshot");
      return std::make_shared<PromptedModel>(model_from_json(field(j, "base")));
    }
    if (kind == "table") {
      only_keys(j, {"kind", "vocab", "entries"}, "table snapshot");
      auto t = std::make_shared<TableModel>(vocab_from_json(field(j, "vocab")));
      for (const auto& e : field(j, "entries")) {
        only_keys(e, {"prefix", "source_id", "probs"}, "table entry");
        TokenSeq prefix;
        for (auto v : field(e, "prefix").get<std::vector<std::uint32_t>>()) prefix.emplace_back(v);
        t->set(prefix, field(e, "source_id").get<std::string>(),
               ProbDist(field(e, "probs").get<std::vector<double>>()));
      }
      return t;
    }
  } catch (const json::exception& e) {
    bad(kind + " snapshot: " + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::BadSnapshot) throw;
    bad(kind + " snapshot: " + e.what());
  }
  bad("unknown model kind '" + kind + "'");
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::Parse, "cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& file, std::string_view contents) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Config, "cannot write " + file.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void save_model(const LanguageModel& m, const std::filesystem::path& file) {
  write_file(file, model_to_json(m).dump(1) + "\n");
}

ModelPtr load_model(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    bad(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(file.string() + ": " + e.what());
  }
  return model_from_json(j);
}

ordered_json spec_to_json(const BenchmarkSpec& s) {
  return {{"vocab_size", s.vocab_size},
          {"corpus_seed", s.corpus_seed},
          {"corpus_sentences", s.corpus_sentences},
          {"ngram_order", s.ngram_order},
          {"alpha", s.alpha},
          {"draft_temperature", s.draft_temperature},
          {"draft_noise_scale", s.draft_noise_scale},
          {"draft_seed", s.draft_seed},
          {"utterance_count", s.utterance_count},
          {"max_tokens", s.max_tokens}};
}

BenchmarkSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::Config, "benchmark spec must be an object");
  BenchmarkSpec s;
  const std::set<std::string> known{"vocab_size", "corpus_seed", "corpus_sentences",
                                    "ngram_order", "alpha", "draft_temperature",
                                    "draft_noise_scale", "draft_seed", "utterance_count",
                                    "max_tokens"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw Error(Errc::Config, "unknown benchmark key '" + k + "'");
  try {
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("vocab_size", s.vocab_size);
    get("corpus_seed", s.corpus_seed);
    get("corpus_sentences", s.corpus_sentences);
    get("ngram_order", s.ngram_order);
    get("alpha", s.alpha);
    get("draft_temperature", s.draft_temperature);
    get("draft_noise_scale", s.draft_noise_scale);
    get("draft_seed", s.draft_seed);
    get("utterance_count", s.utterance_count);
    get("max_tokens", s.max_tokens);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("benchmark spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string format_tokens(std::span<const TokenId> ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ts[i].value);
  }
  return out;
}

TokenSeq parse_tokens(std::string_view line, std::size_t lineno) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i == line.size()) break;
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), v);
    if (ec != std::errc() ||
        (ptr != line.data() + line.size() && *ptr != ' ' && *ptr != '\t' && *ptr != '\r'))
      throw Error(Errc::Parse, "line " + std::to_string(lineno) + ": expected token ids");
    out.emplace_back(v);
    i = static_cast<std::size_t>(ptr - line.data());
  }
  if (out.empty()) throw Error(Errc::Parse, "line " + std::to_string(lineno) + ": empty sequence");
  return out;
}

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

std::vector<TokenSeq> read_token_lines(const std::filesystem::path& file) {
  std::vector<TokenSeq> out;
  const auto lines = lines_of(read_file(file));
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_tokens(lines[i], i + 1));
  return out;
}

std::vector<std::vector<TokenSeq>> read_reference_lines(const std::filesystem::path& file) {
  std::vector<std::vector<TokenSeq>> out;
  const auto lines = lines_of(read_file(file));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<TokenSeq> refs;
    std::string_view rest = lines[i];
    for (;;) {
      auto bar = rest.find('|');
      refs.push_back(parse_tokens(rest.substr(0, bar), i + 1));
      if (bar == std::string_view::npos) break;
      rest.remove_prefix(bar + 1);
    }
    out.push_back(std::move(refs));
  }
  return out;
}

}  // namespace ugsd
