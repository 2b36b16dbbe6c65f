#pragma once

/**
 * Shared domain types: token ids, vocabularies, dense probability
 * distributions, conditioning features and committed transcripts.
 *
 * All values are immutable after construction and safe to hand between
 * threads.
 */

#include "ugsd/error.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ugsd {

struct TokenId {
  std::uint32_t value = 0;

  constexpr TokenId() = default;
  constexpr explicit TokenId(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(TokenId, TokenId) = default;
};

using TokenSeq = std::vector<TokenId>;

TokenSeq make_tokens(std::initializer_list<std::uint32_t> ids);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::size_t size, TokenId eos, std::vector<std::string> labels = {});

  std::size_t size() const noexcept { return size_; }
  TokenId eos() const noexcept { return eos_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return !labels_.empty(); }

  // FNV-1a over (size, labels, eos). Both ends of a session must agree on it.
  std::uint64_t checksum() const noexcept { return checksum_; }

  bool contains(TokenId t) const noexcept { return t.value < size_; }
  void check(TokenId t) const;
  void check(std::span<const TokenId> ts) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::size_t size_ = 0;
  TokenId eos_{};
  std::vector<std::string> labels_;
  std::uint64_t checksum_ = 0;
};

// Dense, normalized distribution over a vocabulary.
class ProbDist {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbDist() = default;
  // Validates non-negativity and unit mass; throws InvalidDist otherwise.
  explicit ProbDist(std::vector<double> probs);

  static ProbDist uniform(std::size_t n);
  static ProbDist one_hot(std::size_t n, TokenId t);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  double at(TokenId t) const { return probs_.at(t.value); }
  std::span<const double> values() const noexcept { return probs_; }

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  std::vector<double> probs_;
};

ProbDist normalize(std::span<const double> weights);

// Smallest id attaining the maximum probability.
TokenId argmax_token(const ProbDist& dist);

struct ConditioningFeatures {
  std::vector<double> values;
  std::string source_id;

  void validate(std::size_t dim) const;
  friend bool operator==(const ConditioningFeatures&, const ConditioningFeatures&) = default;
};

// The raw payload stays on the edge; only `features` ever leaves it.
struct UtteranceInput {
  std::vector<std::uint8_t> raw;
  ConditioningFeatures features;
};

struct Transcript {
  TokenSeq tokens;
  bool terminated = false;

  std::size_t size() const noexcept { return tokens.size(); }

  // Appends one token, enforcing that eos only ever closes the transcript.
  void append(TokenId t, TokenId eos, std::size_t max_tokens);

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

// Neumaier-compensated sum; used wherever long reductions must stay exact
// to ~1 ulp of the result.
double compensated_sum(std::span<const double> xs) noexcept;

}  // namespace ugsd
