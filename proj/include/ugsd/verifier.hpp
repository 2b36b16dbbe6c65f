#pragma once

/**
 * Cloud-side block verification.
 *
 * A drafted token is kept while its rank under the verifier distribution is
 * at most R. The walk is left to right; at the first token that misses, the
 * verifier's argmax at that position replaces it and the rest of the block is
 * dropped. Exactly one correction is emitted per rejected block.
 */

#include "ugsd/core.hpp"
#include "ugsd/models.hpp"

#include <optional>
#include <span>

namespace ugsd {

struct AcceptanceConfig {
  std::uint32_t rank_threshold = 20;
  void validate(std::size_t vocab_size) const;
};

struct VerificationOutcome {
  enum class Kind { FullyAccepted, Corrected };

  std::size_t accepted_count = 0;
  std::optional<TokenId> correction;
  Kind kind = Kind::FullyAccepted;

  static VerificationOutcome full(std::size_t n) { return {n, std::nullopt, Kind::FullyAccepted}; }
  static VerificationOutcome corrected(std::size_t n, TokenId t) { return {n, t, Kind::Corrected}; }

  // Throws InconsistentOutcome when the fields disagree with each other or
  // with the length of the block they answer.
  void validate(std::size_t block_len) const;

  friend bool operator==(const VerificationOutcome&, const VerificationOutcome&) = default;
};

// 1 + number of entries strictly more probable than `token`; ties share the
// best rank.
std::uint32_t rank_of(const ProbDist& dist, TokenId token);

// Scores the block with a single score_block call.
VerificationOutcome verify_block(const LanguageModel& verifier, const Transcript& prefix,
                                 const ConditioningFeatures& features,
                                 std::span<const TokenId> draft, const AcceptanceConfig& cfg);

// Reference path: one next_dist call per position, re-deriving every context.
VerificationOutcome verify_block_oracle(const LanguageModel& verifier, const Transcript& prefix,
                                        const ConditioningFeatures& features,
                                        std::span<const TokenId> draft,
                                        const AcceptanceConfig& cfg);

}  // namespace ugsd
