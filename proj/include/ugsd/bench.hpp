#pragma once

/**
 * Synthetic benchmark: a seeded layered grammar, an n-gram verifier fit on a
 * corpus sampled from it, a perturbed copy of the verifier as the drafter,
 * and per-utterance references decoded greedily by the verifier.
 *
 * Grammar shape. Non-eos tokens are split into layers; a token only leads to
 * tokens of the next layer, and the last layer leads to eos or back to the
 * first layer (a new clause). Most tokens have one dominant successor; a
 * fraction are ambiguous, with two near-tied successors. Those ambiguous
 * spots and clause ends are where a noisy drafter goes wrong and where its
 * entropy is high.
 *
 * Each utterance is conditioned on a short prompt (the first tokens of a
 * fresh grammar sentence), carried as feature values; see PromptedModel.
 */

#include "ugsd/core.hpp"
#include "ugsd/models.hpp"

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ugsd {

struct BenchmarkSpec {
  std::size_t vocab_size = 32;
  std::uint64_t corpus_seed = 1;
  std::size_t corpus_sentences = 10000;
  std::size_t ngram_order = 3;
  double alpha = 0.01;
  double draft_temperature = 0.7;
  double draft_noise_scale = 0.5;
  std::uint64_t draft_seed = 2;
  std::size_t utterance_count = 100;
  std::size_t max_tokens = 64;

  void validate() const;
  // Prompt length = feature dimension; one n-gram context.
  std::size_t feature_dim() const noexcept { return ngram_order > 1 ? ngram_order - 1 : 1; }
  friend bool operator==(const BenchmarkSpec&, const BenchmarkSpec&) = default;
};

struct Benchmark {
  BenchmarkSpec spec;
  Vocabulary vocab;
  std::vector<Transcript> corpus;  // empty when loaded from a bundle
  std::shared_ptr<const NGramModel> ngram;  // null when loaded from a bundle
  ModelPtr verifier;
  ModelPtr draft;
  std::vector<std::string> ids;
  std::vector<UtteranceInput> utterances;
  std::vector<Transcript> references;
};

// Derives an independent 64-bit seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

Benchmark generate_benchmark(const BenchmarkSpec& spec);

// Bundle directory: spec.json, verifier.json, draft.json, utterances.jsonl,
// references.txt.
void write_bundle(const Benchmark& b, const std::filesystem::path& dir);
Benchmark load_bundle(const std::filesystem::path& dir);

}  // namespace ugsd
