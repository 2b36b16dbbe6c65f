#include "ugsd/adaptive.hpp"

#include "ugsd/error.hpp"

namespace ugsd {

void LengthConfig::validate() const {
  if (l_min == 0) throw Error(Errc::Config, "l_min must be positive");
  if (!(l_min <= l_base && l_base <= l_max))
    throw Error(Errc::Config, "block lengths must satisfy l_min <= l_base <= l_max");
  if (fixed_l && *fixed_l == 0) throw Error(Errc::Config, "fixed block length must be positive");
}

std::uint32_t next_block_length(const AdaptiveState& state, const LengthConfig& cfg) {
  if (cfg.fixed_l) return *cfg.fixed_l;
  switch (state.last_outcome) {
    case BlockOutcome::None: return cfg.l_base;
    case BlockOutcome::Corrected: return cfg.l_min;
    default: break;
  }
  return state.consecutive_accepts >= 2 ? cfg.l_max : cfg.l_base;
}

AdaptiveState record_outcome(AdaptiveState state, BlockOutcome outcome) {
  switch (outcome) {
    case BlockOutcome::Corrected:
      state.consecutive_accepts = 0;
      break;
    case BlockOutcome::FullyAccepted:
    case BlockOutcome::LocalCommit:
      if (state.consecutive_accepts < AdaptiveState::kStreakCap) ++state.consecutive_accepts;
      break;
    case BlockOutcome::None:
      throw Error(Errc::InvalidArgument, "None is not a block outcome");
  }
  state.last_outcome = outcome;
  return state;
}

}  // namespace ugsd
