#pragma once

/**
 * Caption-quality scores over token-id sequences.
 *
 * BLEU: clipped n-gram precisions for n = 1..max_n, geometric mean, brevity
 * penalty exp(1 - r/c) when the candidate is shorter than the closest
 * reference (ties go to the shorter reference). An order with zero clipped
 * matches is smoothed by adding 1 to both its numerator and denominator.
 *
 * ROUGE-L: LCS-based F-measure with beta = 1.2, best over references.
 *
 * Both return values in [0, 1]; the CLI scales them by 100 for display.
 */

#include "ugsd/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace ugsd {

inline constexpr double kRougeBeta = 1.2;
inline constexpr const char* kBleuSmoothing = "add-one on zero-match orders";

struct ScoredPair {
  TokenSeq candidate;
  std::vector<TokenSeq> references;
};

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

double bleu(const ScoredPair& pair, int max_n);
double rouge_l(const ScoredPair& pair);

enum class Metric { Bleu1, Bleu4, RougeL };

std::string_view metric_name(Metric m);

// BLEU pools clipped counts and lengths over all pairs before combining;
// ROUGE-L is the mean of per-pair scores.
double corpus_score(std::span<const ScoredPair> pairs, Metric metric);

}  // namespace ugsd
