#pragma once

#include "ugsd/core.hpp"

#include <limits>
#include <span>

namespace ugsd {

// Shannon entropy in nats.
struct EntropyNats {
  double value = 0.0;
  friend constexpr auto operator<=>(EntropyNats, EntropyNats) = default;
};

struct GateConfig {
  // Threshold in nats; -inf escalates every block, +inf never escalates.
  double gamma = std::numeric_limits<double>::infinity();

  static GateConfig always() { return {-std::numeric_limits<double>::infinity()}; }
  static GateConfig never() { return {std::numeric_limits<double>::infinity()}; }
  void validate() const;
};

// -sum p ln p with 0 ln 0 = 0, accumulated with compensation.
EntropyNats entropy(const ProbDist& dist);

// True iff the block's maximum entropy strictly exceeds gamma.
bool should_escalate(std::span<const EntropyNats> entropies, const GateConfig& gate);

}  // namespace ugsd
