#pragma once

/**
 * Token-probability models the edge and cloud engines decode against.
 *
 * LanguageModel is the only thing either engine knows about a model. The
 * concrete models here are deterministic toys: an add-alpha n-gram stands in
 * for the cloud verifier, a seeded perturbation of it stands in for the
 * weaker edge drafter, and TableModel serves hand-written fixtures.
 *
 * Contract shared by every model:
 *   score_block(prefix, f, draft)[k] == next_dist(prefix ++ draft[0..k), f)
 * exactly. Scoring a block in one call is an efficiency device only.
 */

#include "ugsd/core.hpp"

#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ugsd {

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const noexcept = 0;

  virtual ProbDist next_dist(std::span<const TokenId> prefix,
                             const ConditioningFeatures& features) const = 0;

  // Teacher-forced distributions, one per draft position. The default walks
  // the block with next_dist; models override it when they can share work.
  virtual std::vector<ProbDist> score_block(std::span<const TokenId> prefix,
                                            const ConditioningFeatures& features,
                                            std::span<const TokenId> draft) const;
};

using ModelPtr = std::shared_ptr<const LanguageModel>;

class NGramModel final : public LanguageModel {
 public:
  using Context = std::vector<std::uint32_t>;
  using CountTable = std::map<Context, std::vector<std::uint64_t>>;

  NGramModel(Vocabulary vocab, std::size_t order, double alpha, CountTable counts);

  const Vocabulary& vocabulary() const noexcept override { return vocab_; }
  ProbDist next_dist(std::span<const TokenId> prefix,
                     const ConditioningFeatures& features) const override;
  std::vector<ProbDist> score_block(std::span<const TokenId> prefix,
                                    const ConditioningFeatures& features,
                                    std::span<const TokenId> draft) const override;

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const CountTable& counts() const noexcept { return counts_; }

 private:
  ProbDist dist_for_context(const Context& ctx) const;

  Vocabulary vocab_;
  std::size_t order_;
  double alpha_;
  CountTable counts_;
};

// Contexts are the previous min(i, order - 1) tokens of each sentence; there
// is no start-of-sentence padding.
NGramModel ngram_fit(std::span<const Transcript> corpus, std::size_t order, double alpha,
                     const Vocabulary& vocab);

// Stateless noise source: the same (key, counter) always yields the same
// draw, so perturbation does not depend on call order.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t bits(std::uint64_t counter) const noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept;
  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

// p_i^(1/T) times (1 + noise_scale * e_i) with e_i ~ Exp(1) drawn from
// `noise`, renormalized.
ProbDist perturb_dist(const ProbDist& base, double temperature, double noise_scale,
                      const CounterRng& noise);

class PerturbedModel final : public LanguageModel {
 public:
  PerturbedModel(ModelPtr base, double temperature, double noise_scale, std::uint64_t seed);

  const Vocabulary& vocabulary() const noexcept override { return base_->vocabulary(); }
  ProbDist next_dist(std::span<const TokenId> prefix,
                     const ConditioningFeatures& features) const override;
  std::vector<ProbDist> score_block(std::span<const TokenId> prefix,
                                    const ConditioningFeatures& features,
                                    std::span<const TokenId> draft) const override;

  const ModelPtr& base() const noexcept { return base_; }
  double temperature() const noexcept { return temperature_; }
  double noise_scale() const noexcept { return noise_scale_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  CounterRng stream_for(std::span<const TokenId> prefix) const;

  ModelPtr base_;
  double temperature_;
  double noise_scale_;
  std::uint64_t seed_;
};

class TableModel final : public LanguageModel {
 public:
  struct Key {
    std::vector<std::uint32_t> prefix;
    std::string source_id;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  explicit TableModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  void set(std::span<const TokenId> prefix, std::string source_id, ProbDist dist);

  const Vocabulary& vocabulary() const noexcept override { return vocab_; }
  ProbDist next_dist(std::span<const TokenId> prefix,
                     const ConditioningFeatures& features) const override;

  const std::map<Key, ProbDist>& entries() const noexcept { return entries_; }

 private:
  Vocabulary vocab_;
  std::map<Key, ProbDist> entries_;
};

// Quantizes feature values in [0, 1) to token ids. PromptedModel prepends
// these to every prefix, which is how models that ignore features directly
// still condition on the utterance.
TokenSeq prompt_tokens(const ConditioningFeatures& features, const Vocabulary& vocab);

// Inverse of prompt_tokens for a chosen prompt: bucket centres.
std::vector<double> encode_prompt(std::span<const TokenId> prompt, const Vocabulary& vocab);

class PromptedModel final : public LanguageModel {
 public:
  explicit PromptedModel(ModelPtr base) : base_(std::move(base)) {}

  const Vocabulary& vocabulary() const noexcept override { return base_->vocabulary(); }
  ProbDist next_dist(std::span<const TokenId> prefix,
                     const ConditioningFeatures& features) const override;
  std::vector<ProbDist> score_block(std::span<const TokenId> prefix,
                                    const ConditioningFeatures& features,
                                    std::span<const TokenId> draft) const override;

  const ModelPtr& base() const noexcept { return base_; }

 private:
  TokenSeq full_prefix(std::span<const TokenId> prefix, const ConditioningFeatures& f) const;

  ModelPtr base_;
};

// Plain greedy decoding with a single model, no gating or verification.
Transcript greedy_decode(const LanguageModel& lm, const ConditioningFeatures& features,
                         std::size_t max_tokens);

}  // namespace ugsd
