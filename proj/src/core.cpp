#include "ugsd/core.hpp"

#include <cmath>
#include <cstring>

namespace ugsd {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::AllZero: return "AllZero";
    case Errc::NonFinite: return "NonFinite";
    case Errc::Negative: return "Negative";
    case Errc::InvalidDist: return "InvalidDist";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::VocabMismatch: return "VocabMismatch";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::EmptyBlock: return "EmptyBlock";
    case Errc::EmptyDraft: return "EmptyDraft";
    case Errc::Terminated: return "Terminated";
    case Errc::EscalatedBlock: return "EscalatedBlock";
    case Errc::InconsistentOutcome: return "InconsistentOutcome";
    case Errc::MalformedMessage: return "MalformedMessage";
    case Errc::UnknownType: return "UnknownType";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::SessionUnknown: return "SessionUnknown";
    case Errc::PositionMismatch: return "PositionMismatch";
    case Errc::TransportFailure: return "TransportFailure";
    case Errc::NoTokens: return "NoTokens";
    case Errc::InvalidTrace: return "InvalidTrace";
    case Errc::EmptyCandidate: return "EmptyCandidate";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::BadSnapshot: return "BadSnapshot";
    case Errc::BindFailure: return "BindFailure";
    case Errc::Config: return "Config";
    case Errc::Parse: return "Parse";
  }
  return "Unknown";
}

TokenSeq make_tokens(std::initializer_list<std::uint32_t> ids) {
  TokenSeq out;
  out.reserve(ids.size());
  for (auto id : ids) out.emplace_back(id);
  return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_mix_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_mix(h, bytes, 8);
}

}  // namespace

Vocabulary::Vocabulary(std::size_t size, TokenId eos, std::vector<std::string> labels)
    : size_(size), eos_(eos), labels_(std::move(labels)) {
  if (size_ == 0) throw Error(Errc::InvalidArgument, "vocabulary size must be positive");
  if (eos_.value >= size_) throw Error(Errc::InvalidArgument, "eos id out of range");
  if (!labels_.empty() && labels_.size() != size_)
    throw Error(Errc::InvalidArgument, "label count does not match vocabulary size");

  std::uint64_t h = kFnvOffset;
  fnv_mix_u64(h, size_);
  fnv_mix_u64(h, labels_.size());
  for (const auto& l : labels_) {
    fnv_mix_u64(h, l.size());
    fnv_mix(h, l.data(), l.size());
  }
  fnv_mix_u64(h, eos_.value);
  checksum_ = h;
}

void Vocabulary::check(TokenId t) const {
  if (!contains(t))
    throw Error(Errc::VocabMismatch,
                "token " + std::to_string(t.value) + " outside vocabulary of size " +
                    std::to_string(size_));
}

void Vocabulary::check(std::span<const TokenId> ts) const {
  for (auto t : ts) check(t);
}

double compensated_sum(std::span<const double> xs) noexcept {
  double sum = 0.0;
  double c = 0.0;
  for (double x : xs) {
    double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      c += (sum - t) + x;
    else
      c += (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(Errc::InvalidDist, "empty distribution");
  for (double p : probs_) {
    if (!std::isfinite(p)) throw Error(Errc::InvalidDist, "non-finite probability");
    if (p < 0.0) throw Error(Errc::InvalidDist, "negative probability");
  }
  double s = compensated_sum(probs_);
  if (std::fabs(s - 1.0) > kSumTolerance)
    throw Error(Errc::InvalidDist, "probabilities sum to " + std::to_string(s));
}

ProbDist ProbDist::uniform(std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidDist, "empty distribution");
  return ProbDist(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbDist ProbDist::one_hot(std::size_t n, TokenId t) {
  if (t.value >= n) throw Error(Errc::VocabMismatch, "one-hot index out of range");
  std::vector<double> p(n, 0.0);
  p[t.value] = 1.0;
  return ProbDist(std::move(p));
}

ProbDist normalize(std::span<const double> weights) {
  bool any_positive = false;
  for (double w : weights) {
    if (!std::isfinite(w)) throw Error(Errc::NonFinite, "weight is NaN or infinite");
    if (w < 0.0) throw Error(Errc::Negative, "weight is negative");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw Error(Errc::AllZero, "all weights are zero");

  double s = compensated_sum(weights);
  std::vector<double> out(weights.begin(), weights.end());
  // Input that already carries unit mass is returned verbatim so normalize
  // is idempotent bit for bit.
  if (std::fabs(s - 1.0) <= 1e-12) return ProbDist(std::move(out));
  for (double& w : out) w /= s;
  return ProbDist(std::move(out));
}

TokenId argmax_token(const ProbDist& dist) {
  auto v = dist.values();
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return TokenId(static_cast<std::uint32_t>(best));
}

void ConditioningFeatures::validate(std::size_t dim) const {
  if (values.size() != dim)
    throw Error(Errc::InvalidArgument, "feature dimension " + std::to_string(values.size()) +
                                           " != configured " + std::to_string(dim));
  for (double v : values)
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "feature value is not finite");
}

void Transcript::append(TokenId t, TokenId eos, std::size_t max_tokens) {
  if (terminated) throw Error(Errc::Terminated, "append to a terminated transcript");
  tokens.push_back(t);
  if (t == eos || tokens.size() >= max_tokens) terminated = true;
}

}  // namespace ugsd
