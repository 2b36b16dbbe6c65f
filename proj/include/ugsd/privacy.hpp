#pragma once

#include <cstdint>

namespace ugsd {

// Token transmission accounting for one session.
struct PrivacyCounters {
  // Every token produced by draft_block, discarded suffixes included.
  std::uint64_t total_drafted = 0;
  // Tokens sent to the cloud in draft_tokens fields.
  std::uint64_t transmitted = 0;

  PrivacyCounters& operator+=(const PrivacyCounters& o) {
    total_drafted += o.total_drafted;
    transmitted += o.transmitted;
    return *this;
  }
  friend bool operator==(const PrivacyCounters&, const PrivacyCounters&) = default;
};

// transmitted / total_drafted; throws NoTokens when nothing was drafted.
double transmission_rate(const PrivacyCounters& counters);

}  // namespace ugsd
