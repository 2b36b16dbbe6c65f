#pragma once

// Runs a benchmark end to end under one configuration and writes the report
// files. The CLI is a thin layer over this.

#include "ugsd/bench.hpp"
#include "ugsd/evalmetrics.hpp"
#include "ugsd/protocol.hpp"
#include "ugsd/simtime.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace ugsd {

enum class TransportKind { InProcess, Stream };

struct RunConfig {
  std::string label = "ugsd";
  GateConfig gate;
  AcceptanceConfig acceptance;
  LengthConfig lengths;
  CostModel cost;
  TransportKind transport = TransportKind::InProcess;
  std::string host = "127.0.0.1";
  // With the stream transport, port 0 starts a private loopback server.
  std::uint16_t port = 0;
  std::size_t max_tokens = 64;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool record_frames = false;

  void validate() const;
};

struct QualityScores {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
};

struct UtteranceResult {
  std::string id;
  SessionResult session;
  MetricsReport metrics;
  std::vector<RecordedFrame> frames;  // only with record_frames
};

struct RunResult {
  std::string label;
  std::vector<UtteranceResult> items;  // benchmark order
  MetricsReport mean;
  QualityScores quality;
  std::vector<CloudSessionStats> cloud_sessions;
  std::size_t aborted = 0;
};

QualityScores score_transcripts(std::span<const Transcript> candidates,
                                std::span<const Transcript> references);

RunResult run_benchmark(const Benchmark& bench, const RunConfig& cfg,
                        std::ostream* cloud_log = nullptr);

// transcripts.txt, references.txt, traces/<id>.jsonl, metrics.csv,
// quality.csv.
void write_run_outputs(const RunResult& run, const Benchmark& bench,
                       const std::filesystem::path& dir);

std::string quality_csv(const QualityScores& q);

enum class SweepAxis { Gamma, Rank, Length };

struct SweepPoint {
  std::string value;  // as printed in the CSV
  RunConfig config;
};

// The default grid for an axis, built around `base`. Length gives
// 3, 5, 7, 10, 20, 50 and dynamic.
std::vector<SweepPoint> default_grid(SweepAxis axis, const RunConfig& base);

struct SweepRow {
  std::string axis;
  std::string value;
  RunResult run;
};

inline constexpr std::string_view kSweepCsvHeader =
    "label,axis,value,bleu1,bleu4,rouge_l,ttft_ms,itps,oet_ms,otps,total_ms,rho,output_tokens";

std::string sweep_csv(std::span<const SweepRow> rows);
std::string_view sweep_axis_name(SweepAxis a);

}  // namespace ugsd
