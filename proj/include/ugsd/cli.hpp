#pragma once

// Command-line front end: serve, run, sweep, eval, generate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include "ugsd/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace ugsd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// One experiment as described by a config file. Exactly one of `spec` and
// `bundle` is set.
struct ExperimentConfig {
  RunConfig run;
  std::optional<BenchmarkSpec> spec;
  std::optional<std::filesystem::path> bundle;
  std::filesystem::path output_dir = "ugsd-out";
};

// Keys: label, benchmark (object) or bundle (path), gamma (number, "inf",
// "-inf"), rank_threshold, lengths {mode: adaptive|fixed, ...}, cost {...},
// transport {kind: inprocess|stream, host, port}, output_dir, seed,
// max_tokens, threads. gamma is required; anything unknown is an error.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);
nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c);

double parse_gamma(const nlohmann::json& j);
nlohmann::json gamma_to_json(double gamma);

Benchmark materialize_benchmark(const ExperimentConfig& c);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ugsd
