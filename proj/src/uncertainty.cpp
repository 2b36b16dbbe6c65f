#include "ugsd/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ugsd {

void GateConfig::validate() const {
  if (std::isnan(gamma)) throw Error(Errc::InvalidArgument, "gate threshold is NaN");
}

EntropyNats entropy(const ProbDist& dist) {
  auto p = dist.values();
  std::vector<double> terms;
  terms.reserve(p.size());
  for (double x : p)
    if (x > 0.0) terms.push_back(-x * std::log(x));
  double h = compensated_sum(terms);
  // Rounding can leave a one-hot at -0.0 or a hair below zero.
  return EntropyNats{std::max(h, 0.0)};
}

bool should_escalate(std::span<const EntropyNats> entropies, const GateConfig& gate) {
  if (entropies.empty()) throw Error(Errc::EmptyBlock, "gate evaluated on an empty block");
  gate.validate();
  auto peak = std::max_element(entropies.begin(), entropies.end());
  return peak->value > gate.gamma;
}

}  // namespace ugsd
