#include "ugsd/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ugsd {

namespace {

using Gram = std::vector<std::uint32_t>;

std::map<Gram, std::size_t> ngram_counts(std::span<const TokenId> seq, int n) {
  std::map<Gram, std::size_t> out;
  const auto len = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + len <= seq.size(); ++i) {
    Gram g(len);
    for (std::size_t k = 0; k < len; ++k) g[k] = seq[i + k].value;
    ++out[g];
  }
  return out;
}

struct BleuStats {
  // Per order: clipped matches and candidate n-gram totals.
  std::vector<double> matches;
  std::vector<double> totals;
  double cand_len = 0.0;
  double ref_len = 0.0;

  explicit BleuStats(int max_n) : matches(max_n, 0.0), totals(max_n, 0.0) {}
};

void check_pair(const ScoredPair& pair) {
  if (pair.candidate.empty()) throw Error(Errc::EmptyCandidate, "candidate is empty");
  if (pair.references.empty()) throw Error(Errc::EmptyReference, "no references");
}

void accumulate(const ScoredPair& pair, BleuStats& st) {
  const int max_n = static_cast<int>(st.matches.size());
  for (int n = 1; n <= max_n; ++n) {
    auto cand = ngram_counts(pair.candidate, n);
    std::map<Gram, std::size_t> max_ref;
    for (const auto& ref : pair.references)
      for (const auto& [g, c] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], c);
    double clipped = 0.0;
    double total = 0.0;
    for (const auto& [g, c] : cand) {
      total += static_cast<double>(c);
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += static_cast<double>(std::min(c, it->second));
    }
    st.matches[n - 1] += clipped;
    st.totals[n - 1] += total;
  }
  const double c = static_cast<double>(pair.candidate.size());
  // Closest reference length, shorter on ties.
  double best = static_cast<double>(pair.references.front().size());
  for (const auto& ref : pair.references) {
    const double r = static_cast<double>(ref.size());
    if (std::fabs(r - c) < std::fabs(best - c) || (std::fabs(r - c) == std::fabs(best - c) && r < best))
      best = r;
  }
  st.cand_len += c;
  st.ref_len += best;
}

double combine(const BleuStats& st) {
  double log_sum = 0.0;
  const auto orders = st.matches.size();
  for (std::size_t i = 0; i < orders; ++i) {
    double num = st.matches[i];
    double den = st.totals[i];
    if (num == 0.0) {
      num += 1.0;
      den += 1.0;
    }
    log_sum += std::log(num / den);
  }
  const double precision = std::exp(log_sum / static_cast<double>(orders));
  const double bp = st.cand_len < st.ref_len ? std::exp(1.0 - st.ref_len / st.cand_len) : 1.0;
  return bp * precision;
}

void check_order(int max_n) {
  if (max_n < 1 || max_n > 4) throw Error(Errc::InvalidArgument, "BLEU order must be in [1, 4]");
}

}  // namespace

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double bleu(const ScoredPair& pair, int max_n) {
  check_order(max_n);
  check_pair(pair);
  BleuStats st(max_n);
  accumulate(pair, st);
  return combine(st);
}

double rouge_l(const ScoredPair& pair) {
  check_pair(pair);
  double best = 0.0;
  const double beta2 = kRougeBeta * kRougeBeta;
  for (const auto& ref : pair.references) {
    if (ref.empty()) throw Error(Errc::EmptyReference, "reference is empty");
    const auto l = static_cast<double>(lcs_length(pair.candidate, ref));
    if (l == 0.0) continue;
    const double p = l / static_cast<double>(pair.candidate.size());
    const double r = l / static_cast<double>(ref.size());
    best = std::max(best, (1.0 + beta2) * p * r / (r + beta2 * p));
  }
  return best;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Bleu1: return "bleu1";
    case Metric::Bleu4: return "bleu4";
    case Metric::RougeL: return "rouge_l";
  }
  return "?";
}

double corpus_score(std::span<const ScoredPair> pairs, Metric metric) {
  if (pairs.empty()) throw Error(Errc::InvalidArgument, "no pairs to score");
  if (metric == Metric::RougeL) {
    double sum = 0.0;
    for (const auto& p : pairs) sum += rouge_l(p);
    return sum / static_cast<double>(pairs.size());
  }
  const int max_n = metric == Metric::Bleu1 ? 1 : 4;
  BleuStats st(max_n);
  for (const auto& p : pairs) {
    check_pair(p);
    accumulate(p, st);
  }
  return combine(st);
}

}  // namespace ugsd
