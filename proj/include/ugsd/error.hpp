#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ugsd {

enum class Errc {
  AllZero,
  NonFinite,
  Negative,
  InvalidDist,
  InvalidArgument,
  VocabMismatch,
  EmptyCorpus,
  EmptyBlock,
  EmptyDraft,
  Terminated,
  EscalatedBlock,
  InconsistentOutcome,
  MalformedMessage,
  UnknownType,
  InvariantViolation,
  SessionUnknown,
  PositionMismatch,
  TransportFailure,
  NoTokens,
  InvalidTrace,
  EmptyCandidate,
  EmptyReference,
  BadSnapshot,
  BindFailure,
  Config,
  Parse,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ugsd
