#pragma once

/**
 * Virtual-clock latency accounting over a decode event log.
 *
 * Metric definitions (all times in milliseconds of virtual clock):
 *   prefill  = input_token_count * edge_prefill_ms_per_input_token
 *   TTFT     = clock when the first output token is committed
 *   OET      = clock at the last commit minus clock at the first commit
 *   OTPS     = output tokens / OET in seconds
 *   ITPS     = input tokens / prefill in seconds (0 when prefill is free)
 *   total    = clock at Terminate
 *
 * OTPS is degenerate when OET is zero (one commit, or a free cost model). The
 * span then falls back to max(OET, one edge decode step), and to OTPS = 0
 * when that is zero as well; `degenerate` is set in both cases.
 */

#include "ugsd/error.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ugsd {

namespace trace {
struct DraftToken {
  std::uint64_t index;
  friend bool operator==(const DraftToken&, const DraftToken&) = default;
};
struct GateDecision {
  bool escalated;
  friend bool operator==(const GateDecision&, const GateDecision&) = default;
};
struct Send {
  std::uint64_t bytes;
  friend bool operator==(const Send&, const Send&) = default;
};
struct Verify {
  std::uint64_t block_len;
  friend bool operator==(const Verify&, const Verify&) = default;
};
struct Receive {
  std::uint64_t bytes;
  friend bool operator==(const Receive&, const Receive&) = default;
};
struct Commit {
  std::uint64_t count;
  friend bool operator==(const Commit&, const Commit&) = default;
};
struct Terminate {
  friend bool operator==(const Terminate&, const Terminate&) = default;
};
}  // namespace trace

using TraceEvent = std::variant<trace::DraftToken, trace::GateDecision, trace::Send,
                                trace::Verify, trace::Receive, trace::Commit, trace::Terminate>;

struct DecodeTrace {
  std::uint64_t input_token_count = 0;
  std::vector<TraceEvent> events;

  // Causal-order checks; throws InvalidTrace.
  void validate() const;
  std::uint64_t output_token_count() const;

  friend bool operator==(const DecodeTrace&, const DecodeTrace&) = default;
};

// Newline-delimited event records, one JSON object per line, prefill record
// first.
std::string trace_to_jsonl(const DecodeTrace& t);
DecodeTrace trace_from_jsonl(std::string_view text);

struct CostModel {
  double edge_prefill_ms_per_input_token = 0.0;
  double edge_decode_ms_per_token = 0.0;
  double cloud_verify_fixed_ms = 0.0;
  double cloud_verify_ms_per_token = 0.0;
  double network_rtt_ms = 0.0;
  // 0 means unmetered: frames cost no transfer time.
  double bandwidth_bytes_per_ms = 0.0;

  void validate() const;
};

struct MetricsReport {
  double ttft_ms = 0.0;
  double itps = 0.0;
  double oet_ms = 0.0;
  double otps = 0.0;
  double total_ms = 0.0;
  double rho = 0.0;
  std::uint64_t output_token_count = 0;
  bool degenerate = false;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport replay(const DecodeTrace& trace, const CostModel& cost);

// Per-field mean of the reports; rho is pooled (sum transmitted / sum drafted)
// over the traces rather than averaged.
MetricsReport summarize(std::span<const DecodeTrace> traces, const CostModel& cost);

using LabeledReport = std::pair<std::string, MetricsReport>;

std::vector<LabeledReport> compare_configs(
    std::span<const std::pair<std::string, DecodeTrace>> traces, const CostModel& cost);

inline constexpr const char* kMetricsCsvHeader =
    "label,ttft_ms,itps,oet_ms,otps,total_ms,rho,output_tokens";

std::string metrics_csv(std::span<const LabeledReport> rows);

// Shortest round-trip decimal form, independent of locale.
std::string format_double(double v);

}  // namespace ugsd
