#pragma once

/**
 * Edge-side draft engine.
 *
 * The edge drafts a block autoregressively, recording the entropy of each
 * predictive distribution. Confident blocks are committed locally; escalated
 * blocks are committed only after the cloud answers, through resync().
 * SessionState::transcript therefore never holds an unverified escalated
 * token.
 */

#include "ugsd/adaptive.hpp"
#include "ugsd/core.hpp"
#include "ugsd/models.hpp"
#include "ugsd/privacy.hpp"
#include "ugsd/uncertainty.hpp"
#include "ugsd/verifier.hpp"

#include <random>

namespace ugsd {

struct DraftBlock {
  std::size_t start_index = 0;
  TokenSeq tokens;
  std::vector<EntropyNats> entropies;
  bool escalated = false;
};

struct DraftConfig {
  // Greedy argmax unless sampling is switched on.
  bool sample = false;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct SessionState {
  static constexpr std::size_t kDefaultMaxTokens = 64;

  TokenId eos;
  Transcript transcript;
  ConditioningFeatures features;
  AdaptiveState controller;
  PrivacyCounters counters;
  std::mt19937_64 rng;
  std::size_t max_tokens = kDefaultMaxTokens;
  DraftConfig draft;

  SessionState(TokenId eos_token, ConditioningFeatures f, std::size_t max_len = kDefaultMaxTokens,
               DraftConfig cfg = {});
};

DraftBlock draft_block(SessionState& state, const LanguageModel& draft_lm, std::size_t block_len);

void commit_local(SessionState& state, const DraftBlock& block);

// Applies a cloud verdict: the accepted prefix, then the correction if any.
void resync(SessionState& state, const DraftBlock& block, const VerificationOutcome& outcome);

}  // namespace ugsd
