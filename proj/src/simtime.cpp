#include "ugsd/simtime.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <sstream>

namespace ugsd {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

[[noreturn]] void bad_trace(const std::string& why) { throw Error(Errc::InvalidTrace, why); }

}  // namespace

void DecodeTrace::validate() const {
  bool sent_since_sync = false;
  bool verify_outstanding = false;
  std::size_t terminates = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::visit(Overloaded{
                   [&](const trace::Send&) { sent_since_sync = true; },
                   [&](const trace::Verify&) {
                     if (verify_outstanding) bad_trace("verify while another is outstanding");
                     if (!sent_since_sync) bad_trace("verify without a preceding send");
                     verify_outstanding = true;
                   },
                   [&](const trace::Receive&) {
                     if (!verify_outstanding) bad_trace("receive without a verify");
                     verify_outstanding = false;
                     sent_since_sync = false;
                   },
                   [&](const trace::Terminate&) {
                     ++terminates;
                     if (i + 1 != events.size()) bad_trace("terminate is not the last event");
                   },
                   [](const auto&) {},
               },
               events[i]);
  }
  if (terminates != 1) bad_trace("trace must end with exactly one terminate");
  if (verify_outstanding) bad_trace("trace ends with an unanswered verify");
}

std::uint64_t DecodeTrace::output_token_count() const {
  std::uint64_t n = 0;
  for (const auto& e : events)
    if (auto* c = std::get_if<trace::Commit>(&e)) n += c->count;
  return n;
}

std::string trace_to_jsonl(const DecodeTrace& t) {
  using nlohmann::ordered_json;
  std::string out;
  out += ordered_json{{"event", "prefill"}, {"input_tokens", t.input_token_count}}.dump();
  out += '\n';
  for (const auto& e : t.events) {
    ordered_json j = std::visit(
        Overloaded{
            [](const trace::DraftToken& x) { return ordered_json{{"event", "draft_token"}, {"index", x.index}}; },
            [](const trace::GateDecision& x) { return ordered_json{{"event", "gate"}, {"escalated", x.escalated}}; },
            [](const trace::Send& x) { return ordered_json{{"event", "send"}, {"bytes", x.bytes}}; },
            [](const trace::Verify& x) { return ordered_json{{"event", "verify"}, {"block_len", x.block_len}}; },
            [](const trace::Receive& x) { return ordered_json{{"event", "receive"}, {"bytes", x.bytes}}; },
            [](const trace::Commit& x) { return ordered_json{{"event", "commit"}, {"count", x.count}}; },
            [](const trace::Terminate&) { return ordered_json{{"event", "terminate"}}; },
        },
        e);
    out += j.dump();
    out += '\n';
  }
  return out;
}

DecodeTrace trace_from_jsonl(std::string_view text) {
  DecodeTrace t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool have_prefill = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const std::string kind = j.at("event").get<std::string>();
      if (kind == "prefill") {
        if (have_prefill) bad_trace("duplicate prefill record");
        t.input_token_count = j.at("input_tokens").get<std::uint64_t>();
        have_prefill = true;
      } else if (kind == "draft_token") {
        t.events.emplace_back(trace::DraftToken{j.at("index").get<std::uint64_t>()});
      } else if (kind == "gate") {
        t.events.emplace_back(trace::GateDecision{j.at("escalated").get<bool>()});
      } else if (kind == "send") {
        t.events.emplace_back(trace::Send{j.at("bytes").get<std::uint64_t>()});
      } else if (kind == "verify") {
        t.events.emplace_back(trace::Verify{j.at("block_len").get<std::uint64_t>()});
      } else if (kind == "receive") {
        t.events.emplace_back(trace::Receive{j.at("bytes").get<std::uint64_t>()});
      } else if (kind == "commit") {
        t.events.emplace_back(trace::Commit{j.at("count").get<std::uint64_t>()});
      } else if (kind == "terminate") {
        t.events.emplace_back(trace::Terminate{});
      } else {
        bad_trace("unknown event '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      bad_trace("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_prefill) bad_trace("missing prefill record");
  return t;
}

void CostModel::validate() const {
  for (double v : {edge_prefill_ms_per_input_token, edge_decode_ms_per_token, cloud_verify_fixed_ms,
                   cloud_verify_ms_per_token, network_rtt_ms, bandwidth_bytes_per_ms}) {
    if (!std::isfinite(v) || v < 0.0)
      throw Error(Errc::InvalidArgument, "cost model fields must be finite and non-negative");
  }
}

MetricsReport replay(const DecodeTrace& trace, const CostModel& cost) {
  trace.validate();
  cost.validate();

  auto transfer = [&](std::uint64_t bytes) {
    return cost.bandwidth_bytes_per_ms > 0.0
               ? static_cast<double>(bytes) / cost.bandwidth_bytes_per_ms
               : 0.0;
  };

  const double prefill_ms =
      static_cast<double>(trace.input_token_count) * cost.edge_prefill_ms_per_input_token;
  // The OET span is accumulated on its own so it does not pick up rounding
  // from the clock offset at the first commit.
  double clock = prefill_ms;
  double span = 0.0;
  double first_commit = -1.0;
  double oet = 0.0;
  std::uint64_t drafted = 0;
  std::uint64_t transmitted = 0;
  std::uint64_t output = 0;

  auto advance = [&](double dt) {
    clock += dt;
    if (first_commit >= 0.0) span += dt;
  };

  for (const auto& e : trace.events) {
    std::visit(Overloaded{
                   [&](const trace::DraftToken&) {
                     advance(cost.edge_decode_ms_per_token);
                     ++drafted;
                   },
                   [&](const trace::Send& s) { advance(transfer(s.bytes)); },
                   [&](const trace::Verify& v) {
                     advance(cost.network_rtt_ms + cost.cloud_verify_fixed_ms +
                             cost.cloud_verify_ms_per_token * static_cast<double>(v.block_len));
                     transmitted += v.block_len;
                   },
                   [&](const trace::Receive& r) { advance(transfer(r.bytes)); },
                   [&](const trace::Commit& c) {
                     if (c.count == 0) return;
                     if (first_commit < 0.0) first_commit = clock;
                     oet = span;
                     output += c.count;
                   },
                   [](const auto&) {},
               },
               e);
  }

  MetricsReport r;
  r.total_ms = clock;
  r.output_token_count = output;
  r.rho = drafted > 0 ? static_cast<double>(transmitted) / static_cast<double>(drafted) : 0.0;
  r.itps = prefill_ms > 0.0 ? static_cast<double>(trace.input_token_count) / (prefill_ms / 1000.0)
                            : 0.0;
  if (output == 0) {
    r.ttft_ms = clock;
    r.degenerate = true;
    return r;
  }
  r.ttft_ms = first_commit;
  r.oet_ms = oet;
  if (r.oet_ms > 0.0) {
    r.otps = static_cast<double>(output) / (r.oet_ms / 1000.0);
  } else {
    r.degenerate = true;
    const double span = std::max(r.oet_ms, cost.edge_decode_ms_per_token);
    r.otps = span > 0.0 ? static_cast<double>(output) / (span / 1000.0) : 0.0;
  }
  return r;
}

MetricsReport summarize(std::span<const DecodeTrace> traces, const CostModel& cost) {
  if (traces.empty()) throw Error(Errc::InvalidArgument, "nothing to summarize");
  MetricsReport mean;
  std::uint64_t drafted = 0;
  std::uint64_t transmitted = 0;
  for (const auto& t : traces) {
    auto r = replay(t, cost);
    mean.ttft_ms += r.ttft_ms;
    mean.itps += r.itps;
    mean.oet_ms += r.oet_ms;
    mean.otps += r.otps;
    mean.total_ms += r.total_ms;
    mean.output_token_count += r.output_token_count;
    mean.degenerate = mean.degenerate || r.degenerate;
    for (const auto& e : t.events) {
      if (std::holds_alternative<trace::DraftToken>(e)) ++drafted;
      if (auto* v = std::get_if<trace::Verify>(&e)) transmitted += v->block_len;
    }
  }
  const double n = static_cast<double>(traces.size());
  mean.ttft_ms /= n;
  mean.itps /= n;
  mean.oet_ms /= n;
  mean.otps /= n;
  mean.total_ms /= n;
  mean.rho = drafted > 0 ? static_cast<double>(transmitted) / static_cast<double>(drafted) : 0.0;
  return mean;
}

std::vector<LabeledReport> compare_configs(
    std::span<const std::pair<std::string, DecodeTrace>> traces, const CostModel& cost) {
  std::vector<LabeledReport> rows;
  rows.reserve(traces.size());
  for (const auto& [label, t] : traces) rows.emplace_back(label, replay(t, cost));
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv(std::span<const LabeledReport> rows) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const auto& [label, r] : rows) {
    out += label;
    for (double v : {r.ttft_ms, r.itps, r.oet_ms, r.otps, r.total_ms, r.rho}) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += std::to_string(r.output_token_count);
    out += '\n';
  }
  return out;
}

}  // namespace ugsd
