#pragma once

#include "ugsd/core.hpp"
#include "ugsd/error.hpp"

#include <doctest.h>

#include <random>
#include <vector>

namespace testing {

// Random normalized distribution; `zeros` sprinkles exact zeros in.
inline ugsd::ProbDist random_dist(std::mt19937_64& rng, std::size_t n, bool zeros = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = (zeros && u(rng) < 0.3) ? 0.0 : u(rng);
  w[rng() % n] += 0.5;
  return ugsd::normalize(w);
}

inline ugsd::TokenSeq random_tokens(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
  ugsd::TokenSeq out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(ugsd::TokenId(rng() % vocab));
  return out;
}

template <class F>
void require_errc(F&& f, ugsd::Errc code) {
  try {
    f();
    FAIL("expected " << ugsd::errc_name(code));
  } catch (const ugsd::Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace testing
