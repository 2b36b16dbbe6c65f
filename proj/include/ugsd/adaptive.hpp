#pragma once

#include <cstdint>
#include <optional>

namespace ugsd {

// Block-length controller: start at l_base, drop to l_min for the block after
// a cloud correction, and run at l_max while at least two consecutive blocks
// went through unchanged.

enum class BlockOutcome { None, Corrected, FullyAccepted, LocalCommit };

struct LengthConfig {
  std::uint32_t l_min = 3;
  std::uint32_t l_base = 5;
  std::uint32_t l_max = 7;
  std::optional<std::uint32_t> fixed_l;

  static LengthConfig fixed(std::uint32_t l) { return {l, l, l, l}; }
  void validate() const;
};

struct AdaptiveState {
  static constexpr std::uint64_t kStreakCap = std::uint64_t{1} << 32;

  BlockOutcome last_outcome = BlockOutcome::None;
  std::uint64_t consecutive_accepts = 0;

  friend bool operator==(const AdaptiveState&, const AdaptiveState&) = default;
};

std::uint32_t next_block_length(const AdaptiveState& state, const LengthConfig& cfg);

// Local commits count toward the acceptance streak.
AdaptiveState record_outcome(AdaptiveState state, BlockOutcome outcome);

}  // namespace ugsd
