#include "ugsd/verifier.hpp"

#include <string>

namespace ugsd {

void AcceptanceConfig::validate(std::size_t vocab_size) const {
  if (rank_threshold < 1 || rank_threshold > vocab_size)
    throw Error(Errc::InvalidArgument, "rank threshold " + std::to_string(rank_threshold) +
                                           " outside [1, " + std::to_string(vocab_size) + "]");
}

void VerificationOutcome::validate(std::size_t block_len) const {
  if (accepted_count > block_len)
    throw Error(Errc::InconsistentOutcome, "accepted_count exceeds block length");
  const bool full = accepted_count == block_len;
  if (full && correction)
    throw Error(Errc::InconsistentOutcome, "full acceptance cannot carry a correction");
  if (!full && !correction)
    throw Error(Errc::InconsistentOutcome, "partial acceptance requires a correction");
  if ((kind == Kind::FullyAccepted) != full)
    throw Error(Errc::InconsistentOutcome, "outcome kind disagrees with accepted_count");
}

std::uint32_t rank_of(const ProbDist& dist, TokenId token) {
  if (token.value >= dist.size()) throw Error(Errc::VocabMismatch, "token outside distribution");
  const double q = dist[token.value];
  std::uint32_t better = 0;
  for (double p : dist.values())
    if (p > q) ++better;
  return better + 1;
}

namespace {

void check_inputs(const LanguageModel& verifier, const Transcript& prefix,
                  std::span<const TokenId> draft, const AcceptanceConfig& cfg) {
  if (draft.empty()) throw Error(Errc::EmptyDraft, "nothing to verify");
  if (prefix.terminated) throw Error(Errc::Terminated, "prefix already terminated");
  const auto& vocab = verifier.vocabulary();
  vocab.check(prefix.tokens);
  vocab.check(draft);
  cfg.validate(vocab.size());
}

}  // namespace

VerificationOutcome verify_block(const LanguageModel& verifier, const Transcript& prefix,
                                 const ConditioningFeatures& features,
                                 std::span<const TokenId> draft, const AcceptanceConfig& cfg) {
  check_inputs(verifier, prefix, draft, cfg);
  // Teacher forcing is exact up to the first miss: every earlier position saw
  // the drafted tokens, which are exactly the accepted ones.
  const auto dists = verifier.score_block(prefix.tokens, features, draft);
  for (std::size_t i = 0; i < draft.size(); ++i) {
    if (rank_of(dists[i], draft[i]) > cfg.rank_threshold)
      return VerificationOutcome::corrected(i, argmax_token(dists[i]));
  }
  return VerificationOutcome::full(draft.size());
}

VerificationOutcome verify_block_oracle(const LanguageModel& verifier, const Transcript& prefix,
                                        const ConditioningFeatures& features,
                                        std::span<const TokenId> draft,
                                        const AcceptanceConfig& cfg) {
  check_inputs(verifier, prefix, draft, cfg);
  TokenSeq accepted = prefix.tokens;
  for (std::size_t i = 0; i < draft.size(); ++i) {
    const ProbDist q = verifier.next_dist(accepted, features);
    if (rank_of(q, draft[i]) > cfg.rank_threshold)
      return VerificationOutcome::corrected(i, argmax_token(q));
    accepted.push_back(draft[i]);
  }
  return VerificationOutcome::full(draft.size());
}

}  // namespace ugsd
