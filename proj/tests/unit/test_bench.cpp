#include "helpers.hpp"

#include "ugsd/bench.hpp"
#include "ugsd/evalmetrics.hpp"
#include "ugsd/snapshot.hpp"

#include <filesystem>

using namespace ugsd;

namespace {

BenchmarkSpec small_spec() {
  BenchmarkSpec s;
  s.corpus_sentences = 3000;
  s.utterance_count = 100;
  s.max_tokens = 40;
  return s;
}

// Fraction of reference positions where draft and verifier argmax differ.
double disagreement(const Benchmark& b) {
  double diff = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b.utterances.size(); ++i) {
    const auto& f = b.utterances[i].features;
    const auto& ref = b.references[i].tokens;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      std::span<const TokenId> prefix(ref.data(), k);
      diff += argmax_token(b.draft->next_dist(prefix, f)) != argmax_token(b.verifier->next_dist(prefix, f));
      total += 1.0;
    }
  }
  return diff / total;
}

double edge_bleu1(const Benchmark& b) {
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < b.utterances.size(); ++i)
    pairs.push_back({greedy_decode(*b.draft, b.utterances[i].features, b.spec.max_tokens).tokens,
                     {b.references[i].tokens}});
  return corpus_score(pairs, Metric::Bleu1);
}

}  // namespace

TEST_CASE("same spec gives identical artifacts") {
  auto a = generate_benchmark(small_spec());
  auto b = generate_benchmark(small_spec());
  CHECK(a.ids == b.ids);
  CHECK(a.references == b.references);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].raw == b.utterances[i].raw);
    CHECK(a.utterances[i].features == b.utterances[i].features);
  }
  CHECK(model_to_json(*a.verifier).dump() == model_to_json(*b.verifier).dump());
  CHECK(model_to_json(*a.draft).dump() == model_to_json(*b.draft).dump());
  CHECK(a.corpus == b.corpus);
}

TEST_CASE("benchmark shape") {
  auto spec = small_spec();
  auto b = generate_benchmark(spec);
  CHECK(b.utterances.size() == spec.utterance_count);
  CHECK(b.references.size() == spec.utterance_count);
  CHECK(b.corpus.size() == spec.corpus_sentences);
  for (std::size_t i = 0; i < b.utterances.size(); ++i) {
    CHECK(b.utterances[i].features.values.size() == spec.feature_dim());
    CHECK(b.utterances[i].features.source_id == b.ids[i]);
    CHECK(b.references[i].terminated);
    CHECK(b.references[i].size() <= spec.max_tokens);
  }
  CHECK(derive_seed(1, "grammar") != derive_seed(1, "corpus"));
  CHECK(derive_seed(1, "grammar") != derive_seed(2, "grammar"));
}

TEST_CASE("references are fixed points of verifier greedy decoding") {
  auto b = generate_benchmark(small_spec());
  for (std::size_t i = 0; i < b.utterances.size(); ++i) {
    const auto& f = b.utterances[i].features;
    const auto& ref = b.references[i].tokens;
    CHECK(greedy_decode(*b.verifier, f, b.spec.max_tokens) == b.references[i]);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      std::span<const TokenId> prefix(ref.data(), k);
      CHECK(argmax_token(b.verifier->next_dist(prefix, f)) == ref[k]);
    }
  }
}

TEST_CASE("zero-gap configuration makes the drafter exact") {
  auto spec = small_spec();
  spec.draft_noise_scale = 0.0;
  spec.draft_temperature = 1.0;
  auto b = generate_benchmark(spec);
  for (std::size_t i = 0; i < b.utterances.size(); ++i)
    CHECK(greedy_decode(*b.draft, b.utterances[i].features, spec.max_tokens) == b.references[i]);
  CHECK(edge_bleu1(b) == doctest::Approx(1.0));
}

TEST_CASE("default spec leaves a quality gap") {
  BenchmarkSpec spec;
  auto b = generate_benchmark(spec);
  double edge = edge_bleu1(b);
  CHECK(edge < 1.0);
  CHECK(edge > 0.0);
}

TEST_CASE("disagreement grows with noise") {
  double prev = -1.0;
  for (double noise : {0.0, 0.25, 0.5, 1.0, 2.0}) {
    auto spec = small_spec();
    spec.draft_temperature = 1.0;
    spec.draft_noise_scale = noise;
    double d = disagreement(generate_benchmark(spec));
    CHECK(d >= prev);
    prev = d;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("bundle round trip") {
  auto dir = std::filesystem::temp_directory_path() / "ugsd_bundle_test";
  std::filesystem::remove_all(dir);
  auto spec = small_spec();
  spec.utterance_count = 12;
  auto b = generate_benchmark(spec);
  write_bundle(b, dir);
  auto l = load_bundle(dir);
  CHECK(l.spec == b.spec);
  CHECK(l.ids == b.ids);
  CHECK(l.references == b.references);
  CHECK(l.vocab == b.vocab);
  for (std::size_t i = 0; i < b.utterances.size(); ++i) {
    CHECK(l.utterances[i].raw == b.utterances[i].raw);
    CHECK(l.utterances[i].features == b.utterances[i].features);
    const auto& f = b.utterances[i].features;
    CHECK(l.draft->next_dist({}, f) == b.draft->next_dist({}, f));
    CHECK(greedy_decode(*l.verifier, f, spec.max_tokens) == b.references[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("spec validation") {
  BenchmarkSpec s;
  s.vocab_size = 1;
  testing::require_errc([&] { s.validate(); }, Errc::Config);
}
