#include "ugsd/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ugsd {

std::vector<ProbDist> LanguageModel::score_block(std::span<const TokenId> prefix,
                                                 const ConditioningFeatures& features,
                                                 std::span<const TokenId> draft) const {
  TokenSeq ctx(prefix.begin(), prefix.end());
  ctx.reserve(prefix.size() + draft.size());
  std::vector<ProbDist> out;
  out.reserve(draft.size());
  for (auto t : draft) {
    out.push_back(next_dist(ctx, features));
    ctx.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// NGramModel

NGramModel::NGramModel(Vocabulary vocab, std::size_t order, double alpha, CountTable counts)
    : vocab_(std::move(vocab)), order_(order), alpha_(alpha), counts_(std::move(counts)) {
  if (order_ < 1) throw Error(Errc::InvalidArgument, "n-gram order must be >= 1");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_))
    throw Error(Errc::InvalidArgument, "smoothing alpha must be positive and finite");
  for (const auto& [ctx, row] : counts_) {
    if (ctx.size() >= order_) throw Error(Errc::InvalidArgument, "context longer than order - 1");
    if (row.size() != vocab_.size()) throw Error(Errc::VocabMismatch, "count row size");
    for (auto t : ctx)
      if (t >= vocab_.size()) throw Error(Errc::VocabMismatch, "context token out of range");
  }
}

ProbDist NGramModel::dist_for_context(const Context& ctx) const {
  const double v = static_cast<double>(vocab_.size());
  auto it = counts_.find(ctx);
  if (it == counts_.end()) return ProbDist::uniform(vocab_.size());
  const auto& row = it->second;
  std::uint64_t total = 0;
  for (auto c : row) total += c;
  const double denom = static_cast<double>(total) + alpha_ * v;
  std::vector<double> p(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) p[i] = (static_cast<double>(row[i]) + alpha_) / denom;
  return ProbDist(std::move(p));
}

ProbDist NGramModel::next_dist(std::span<const TokenId> prefix, const ConditioningFeatures&) const {
  vocab_.check(prefix);
  const std::size_t n = std::min(prefix.size(), order_ - 1);
  Context ctx;
  ctx.reserve(n);
  for (std::size_t i = prefix.size() - n; i < prefix.size(); ++i) ctx.push_back(prefix[i].value);
  return dist_for_context(ctx);
}

std::vector<ProbDist> NGramModel::score_block(std::span<const TokenId> prefix,
                                              const ConditioningFeatures&,
                                              std::span<const TokenId> draft) const {
  vocab_.check(prefix);
  vocab_.check(draft);
  const std::size_t window = order_ - 1;
  Context ctx;
  const std::size_t n = std::min(prefix.size(), window);
  for (std::size_t i = prefix.size() - n; i < prefix.size(); ++i) ctx.push_back(prefix[i].value);

  std::vector<ProbDist> out;
  out.reserve(draft.size());
  for (auto t : draft) {
    out.push_back(dist_for_context(ctx));
    if (window == 0) continue;
    if (ctx.size() == window) ctx.erase(ctx.begin());
    ctx.push_back(t.value);
  }
  return out;
}

NGramModel ngram_fit(std::span<const Transcript> corpus, std::size_t order, double alpha,
                     const Vocabulary& vocab) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "cannot fit an n-gram on no sentences");
  if (order < 1) throw Error(Errc::InvalidArgument, "n-gram order must be >= 1");
  NGramModel::CountTable counts;
  for (const auto& sentence : corpus) {
    const auto& toks = sentence.tokens;
    vocab.check(toks);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const std::size_t n = std::min(i, order - 1);
      NGramModel::Context ctx;
      for (std::size_t j = i - n; j < i; ++j) ctx.push_back(toks[j].value);
      auto& row = counts[ctx];
      if (row.empty()) row.assign(vocab.size(), 0);
      ++row[toks[i].value];
    }
  }
  return NGramModel(vocab, order, alpha, std::move(counts));
}

// ---------------------------------------------------------------------------
// Perturbation

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const noexcept {
  return mix64(key_ ^ mix64(counter));
}

double CounterRng::uniform(std::uint64_t counter) const noexcept {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

ProbDist perturb_dist(const ProbDist& base, double temperature, double noise_scale,
                      const CounterRng& noise) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(Errc::InvalidArgument, "temperature must be positive");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
    throw Error(Errc::InvalidArgument, "noise scale must be non-negative");
  if (temperature == 1.0 && noise_scale == 0.0) return base;

  auto p = base.values();
  const double pmax = *std::max_element(p.begin(), p.end());
  const double log_max = std::log(pmax);
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) {
      w[i] = 0.0;
      continue;
    }
    // Scaled by pmax^(-1/T) to keep small temperatures from underflowing.
    w[i] = temperature == 1.0 ? p[i] : std::exp((std::log(p[i]) - log_max) / temperature);
    if (noise_scale > 0.0) {
      const double e = -std::log1p(-noise.uniform(i));
      w[i] *= 1.0 + noise_scale * e;
    }
  }
  return normalize(w);
}

PerturbedModel::PerturbedModel(ModelPtr base, double temperature, double noise_scale,
                               std::uint64_t seed)
    : base_(std::move(base)), temperature_(temperature), noise_scale_(noise_scale), seed_(seed) {
  if (!base_) throw Error(Errc::InvalidArgument, "perturbed model needs a base");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
    throw Error(Errc::InvalidArgument, "temperature must be positive");
  if (!(noise_scale_ >= 0.0) || !std::isfinite(noise_scale_))
    throw Error(Errc::InvalidArgument, "noise scale must be non-negative");
}

CounterRng PerturbedModel::stream_for(std::span<const TokenId> prefix) const {
  std::uint64_t h = mix64(seed_ ^ mix64(prefix.size()));
  for (auto t : prefix) h = mix64(h ^ t.value);
  return CounterRng(h);
}

ProbDist PerturbedModel::next_dist(std::span<const TokenId> prefix,
                                   const ConditioningFeatures& features) const {
  return perturb_dist(base_->next_dist(prefix, features), temperature_, noise_scale_,
                      stream_for(prefix));
}

std::vector<ProbDist> PerturbedModel::score_block(std::span<const TokenId> prefix,
                                                  const ConditioningFeatures& features,
                                                  std::span<const TokenId> draft) const {
  auto base = base_->score_block(prefix, features, draft);
  TokenSeq ctx(prefix.begin(), prefix.end());
  for (std::size_t k = 0; k < base.size(); ++k) {
    base[k] = perturb_dist(base[k], temperature_, noise_scale_, stream_for(ctx));
    ctx.push_back(draft[k]);
  }
  return base;
}

// ---------------------------------------------------------------------------
// TableModel

void TableModel::set(std::span<const TokenId> prefix, std::string source_id, ProbDist dist) {
  vocab_.check(prefix);
  if (dist.size() != vocab_.size()) throw Error(Errc::VocabMismatch, "table entry size");
  Key key;
  for (auto t : prefix) key.prefix.push_back(t.value);
  key.source_id = std::move(source_id);
  entries_.insert_or_assign(std::move(key), std::move(dist));
}

ProbDist TableModel::next_dist(std::span<const TokenId> prefix,
                               const ConditioningFeatures& features) const {
  vocab_.check(prefix);
  Key key;
  for (auto t : prefix) key.prefix.push_back(t.value);
  key.source_id = features.source_id;
  auto it = entries_.find(key);
  if (it == entries_.end()) return ProbDist::uniform(vocab_.size());
  return it->second;
}

// ---------------------------------------------------------------------------
// PromptedModel

TokenSeq prompt_tokens(const ConditioningFeatures& features, const Vocabulary& vocab) {
  TokenSeq out;
  out.reserve(features.values.size());
  const double v = static_cast<double>(vocab.size());
  for (double x : features.values) {
    if (!std::isfinite(x)) throw Error(Errc::NonFinite, "feature value is not finite");
    double b = std::floor(std::clamp(x, 0.0, 1.0) * v);
    out.emplace_back(static_cast<std::uint32_t>(std::min(b, v - 1.0)));
  }
  return out;
}

std::vector<double> encode_prompt(std::span<const TokenId> prompt, const Vocabulary& vocab) {
  vocab.check(prompt);
  std::vector<double> out;
  out.reserve(prompt.size());
  for (auto t : prompt)
    out.push_back((static_cast<double>(t.value) + 0.5) / static_cast<double>(vocab.size()));
  return out;
}

TokenSeq PromptedModel::full_prefix(std::span<const TokenId> prefix,
                                    const ConditioningFeatures& f) const {
  TokenSeq ctx = prompt_tokens(f, vocabulary());
  ctx.insert(ctx.end(), prefix.begin(), prefix.end());
  return ctx;
}

ProbDist PromptedModel::next_dist(std::span<const TokenId> prefix,
                                  const ConditioningFeatures& features) const {
  return base_->next_dist(full_prefix(prefix, features), features);
}

std::vector<ProbDist> PromptedModel::score_block(std::span<const TokenId> prefix,
                                                 const ConditioningFeatures& features,
                                                 std::span<const TokenId> draft) const {
  return base_->score_block(full_prefix(prefix, features), features, draft);
}

Transcript greedy_decode(const LanguageModel& lm, const ConditioningFeatures& features,
                         std::size_t max_tokens) {
  Transcript out;
  const TokenId eos = lm.vocabulary().eos();
  while (!out.terminated && max_tokens > 0) {
    out.append(argmax_token(lm.next_dist(out.tokens, features)), eos, max_tokens);
  }
  return out;
}

}  // namespace ugsd
