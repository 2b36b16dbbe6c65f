#include "ugsd/edge.hpp"

namespace ugsd {

double transmission_rate(const PrivacyCounters& counters) {
  if (counters.total_drafted == 0) throw Error(Errc::NoTokens, "no tokens were drafted");
  return static_cast<double>(counters.transmitted) / static_cast<double>(counters.total_drafted);
}

SessionState::SessionState(TokenId eos_token, ConditioningFeatures f, std::size_t max_len,
                           DraftConfig cfg)
    : eos(eos_token), features(std::move(f)), rng(cfg.seed), max_tokens(max_len), draft(cfg) {
  if (max_tokens == 0) throw Error(Errc::InvalidArgument, "max_tokens must be positive");
  if (draft.sample && !(draft.temperature > 0.0))
    throw Error(Errc::InvalidArgument, "sampling temperature must be positive");
}

namespace {

TokenId sample_token(const ProbDist& dist, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_nonzero = i;
    acc += dist[i];
    if (u < acc) return TokenId(static_cast<std::uint32_t>(i));
  }
  return TokenId(static_cast<std::uint32_t>(last_nonzero));
}

void check_block(const SessionState& state, const DraftBlock& block) {
  if (block.tokens.empty() || block.tokens.size() != block.entropies.size())
    throw Error(Errc::EmptyBlock, "draft block must hold matching tokens and entropies");
  if (block.start_index != state.transcript.size())
    throw Error(Errc::InvariantViolation, "block does not start at the committed position");
}

}  // namespace

DraftBlock draft_block(SessionState& state, const LanguageModel& draft_lm, std::size_t block_len) {
  if (state.transcript.terminated) throw Error(Errc::Terminated, "session already finished");
  if (block_len == 0) throw Error(Errc::InvalidArgument, "block length must be positive");

  DraftBlock block;
  block.start_index = state.transcript.size();
  TokenSeq ctx = state.transcript.tokens;
  while (block.tokens.size() < block_len && ctx.size() < state.max_tokens) {
    ProbDist dist = draft_lm.next_dist(ctx, state.features);
    if (state.draft.sample && state.draft.temperature != 1.0)
      dist = perturb_dist(dist, state.draft.temperature, 0.0, CounterRng(0));
    const TokenId t = state.draft.sample ? sample_token(dist, state.rng) : argmax_token(dist);
    block.entropies.push_back(entropy(dist));
    block.tokens.push_back(t);
    ctx.push_back(t);
    if (t == state.eos) break;
  }
  return block;
}

void commit_local(SessionState& state, const DraftBlock& block) {
  if (block.escalated) throw Error(Errc::EscalatedBlock, "escalated blocks wait for the cloud");
  check_block(state, block);
  for (auto t : block.tokens) state.transcript.append(t, state.eos, state.max_tokens);
  state.controller = record_outcome(state.controller, BlockOutcome::LocalCommit);
  state.counters.total_drafted += block.tokens.size();
}

void resync(SessionState& state, const DraftBlock& block, const VerificationOutcome& outcome) {
  if (!block.escalated) throw Error(Errc::InvariantViolation, "resync needs an escalated block");
  check_block(state, block);
  outcome.validate(block.tokens.size());

  for (std::size_t i = 0; i < outcome.accepted_count; ++i)
    state.transcript.append(block.tokens[i], state.eos, state.max_tokens);
  if (outcome.correction) state.transcript.append(*outcome.correction, state.eos, state.max_tokens);

  state.controller = record_outcome(state.controller, outcome.correction
                                                          ? BlockOutcome::Corrected
                                                          : BlockOutcome::FullyAccepted);
  state.counters.total_drafted += block.tokens.size();
  state.counters.transmitted += block.tokens.size();
}

}  // namespace ugsd
