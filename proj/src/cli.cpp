#include "ugsd/cli.hpp"

#include "ugsd/snapshot.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace ugsd {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& why) { throw Error(Errc::Config, why); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) config_error("unknown key '" + k + "' in " + where);
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("bad value for '" + key + "' in " + where);
  }
}

LengthConfig parse_lengths(const json& j) {
  if (!j.is_object() || !j.contains("mode")) config_error("lengths needs a 'mode'");
  const auto mode = get_as<std::string>(j, "mode", "lengths");
  LengthConfig l;
  if (mode == "fixed") {
    check_keys(j, {"mode", "l"}, "lengths");
    if (!j.contains("l")) config_error("fixed lengths need 'l'");
    l = LengthConfig::fixed(get_as<std::uint32_t>(j, "l", "lengths"));
  } else if (mode == "adaptive") {
    check_keys(j, {"mode", "l_min", "l_base", "l_max"}, "lengths");
    if (j.contains("l_min")) l.l_min = get_as<std::uint32_t>(j, "l_min", "lengths");
    if (j.contains("l_base")) l.l_base = get_as<std::uint32_t>(j, "l_base", "lengths");
    if (j.contains("l_max")) l.l_max = get_as<std::uint32_t>(j, "l_max", "lengths");
  } else {
    config_error("lengths mode must be 'adaptive' or 'fixed'");
  }
  try {
    l.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return l;
}

CostModel parse_cost(const json& j) {
  check_keys(j,
             {"edge_prefill_ms_per_input_token", "edge_decode_ms_per_token", "cloud_verify_fixed_ms",
              "cloud_verify_ms_per_token", "network_rtt_ms", "bandwidth_bytes_per_ms"},
             "cost");
  CostModel c;
  auto get = [&](const char* k, double& out) {
    if (j.contains(k)) out = get_as<double>(j, k, "cost");
  };
  get("edge_prefill_ms_per_input_token", c.edge_prefill_ms_per_input_token);
  get("edge_decode_ms_per_token", c.edge_decode_ms_per_token);
  get("cloud_verify_fixed_ms", c.cloud_verify_fixed_ms);
  get("cloud_verify_ms_per_token", c.cloud_verify_ms_per_token);
  get("network_rtt_ms", c.network_rtt_ms);
  get("bandwidth_bytes_per_ms", c.bandwidth_bytes_per_ms);
  try {
    c.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return c;
}

ordered_json cost_to_json(const CostModel& c) {
  return {{"edge_prefill_ms_per_input_token", c.edge_prefill_ms_per_input_token},
          {"edge_decode_ms_per_token", c.edge_decode_ms_per_token},
          {"cloud_verify_fixed_ms", c.cloud_verify_fixed_ms},
          {"cloud_verify_ms_per_token", c.cloud_verify_ms_per_token},
          {"network_rtt_ms", c.network_rtt_ms},
          {"bandwidth_bytes_per_ms", c.bandwidth_bytes_per_ms}};
}

void parse_transport(const json& j, RunConfig& run) {
  if (!j.is_object() || !j.contains("kind")) config_error("transport needs a 'kind'");
  const auto kind = get_as<std::string>(j, "kind", "transport");
  if (kind == "inprocess") {
    check_keys(j, {"kind"}, "transport");
    run.transport = TransportKind::InProcess;
  } else if (kind == "stream") {
    check_keys(j, {"kind", "host", "port"}, "transport");
    run.transport = TransportKind::Stream;
    if (j.contains("host")) run.host = get_as<std::string>(j, "host", "transport");
    if (j.contains("port")) run.port = get_as<std::uint16_t>(j, "port", "transport");
  } else {
    config_error("transport kind must be 'inprocess' or 'stream'");
  }
}

}  // namespace

double parse_gamma(const json& j) {
  if (j.is_number()) {
    const double g = j.get<double>();
    if (std::isnan(g)) config_error("gamma is NaN");
    return g;
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
      std::size_t used = 0;
      const double g = std::stod(s, &used);
      if (used == s.size() && !std::isnan(g)) return g;
    } catch (const std::exception&) {
    }
  }
  config_error("gamma must be a number, \"inf\" or \"-inf\"");
}

json gamma_to_json(double gamma) {
  if (std::isinf(gamma)) return gamma > 0 ? "inf" : "-inf";
  return gamma;
}

ExperimentConfig parse_experiment_config(const json& j) {
  check_keys(j,
             {"label", "benchmark", "bundle", "gamma", "rank_threshold", "lengths", "cost",
              "transport", "output_dir", "seed", "threads"},
             "config");
  ExperimentConfig c;
  if (j.contains("benchmark") == j.contains("bundle"))
    config_error("config needs exactly one of 'benchmark' and 'bundle'");
  if (j.contains("benchmark")) c.spec = spec_from_json(j.at("benchmark"));
  if (j.contains("bundle")) c.bundle = get_as<std::string>(j, "bundle", "config");
  if (!j.contains("gamma")) config_error("config needs 'gamma'");
  c.run.gate.gamma = parse_gamma(j.at("gamma"));
  if (j.contains("label")) c.run.label = get_as<std::string>(j, "label", "config");
  if (j.contains("rank_threshold"))
    c.run.acceptance.rank_threshold = get_as<std::uint32_t>(j, "rank_threshold", "config");
  if (j.contains("lengths")) c.run.lengths = parse_lengths(j.at("lengths"));
  if (j.contains("cost")) c.run.cost = parse_cost(j.at("cost"));
  if (j.contains("transport")) parse_transport(j.at("transport"), c.run);
  if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j, "output_dir", "config");
  if (j.contains("seed")) c.run.seed = get_as<std::uint64_t>(j, "seed", "config");
  if (j.contains("threads")) c.run.threads = get_as<std::size_t>(j, "threads", "config");
  if (c.spec) c.run.max_tokens = c.spec->max_tokens;
  try {
    c.run.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    config_error(e.what());
  }
  try {
    return parse_experiment_config(json::parse(text));
  } catch (const json::parse_error& e) {
    config_error(file.string() + ": " + e.what());
  }
}

ordered_json experiment_config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["label"] = c.run.label;
  if (c.spec) j["benchmark"] = spec_to_json(*c.spec);
  if (c.bundle) j["bundle"] = c.bundle->string();
  j["gamma"] = gamma_to_json(c.run.gate.gamma);
  j["rank_threshold"] = c.run.acceptance.rank_threshold;
  if (c.run.lengths.fixed_l) {
    j["lengths"] = {{"mode", "fixed"}, {"l", *c.run.lengths.fixed_l}};
  } else {
    j["lengths"] = {{"mode", "adaptive"},
                    {"l_min", c.run.lengths.l_min},
                    {"l_base", c.run.lengths.l_base},
                    {"l_max", c.run.lengths.l_max}};
  }
  j["cost"] = cost_to_json(c.run.cost);
  if (c.run.transport == TransportKind::InProcess) {
    j["transport"] = {{"kind", "inprocess"}};
  } else {
    j["transport"] = {{"kind", "stream"}, {"host", c.run.host}, {"port", c.run.port}};
  }
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.run.seed;
  j["threads"] = c.run.threads;
  return j;
}

Benchmark materialize_benchmark(const ExperimentConfig& c) {
  if (c.spec) return generate_benchmark(*c.spec);
  return load_bundle(*c.bundle);
}

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

// Flags shared by run and sweep; unset ones leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::string> gamma;
  std::optional<std::uint32_t> rank;
  std::optional<std::uint32_t> fixed_l;
  std::optional<std::string> transport;
  std::optional<std::string> host;
  std::optional<std::uint16_t> port;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> utterances;
  std::optional<std::string> label;
  std::optional<std::string> bundle;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config, "experiment config (JSON)")->required();
    app.add_option("--gamma", gamma, "entropy threshold in nats, or inf / -inf");
    app.add_option("--rank", rank, "rank threshold R");
    app.add_option("--fixed-l", fixed_l, "fixed block length instead of adaptive");
    app.add_option("--transport", transport, "inprocess or stream");
    app.add_option("--host", host, "cloud host for the stream transport");
    app.add_option("--port", port, "cloud port; 0 starts a private loopback server");
    app.add_option("-o,--out", out, "output directory");
    app.add_option("--seed", seed, "session seed");
    app.add_option("--threads", threads, "decoding threads");
    app.add_option("--utterances", utterances, "override the benchmark utterance count");
    app.add_option("--label", label, "row label");
    app.add_option("--bundle", bundle, "load the benchmark from a bundle directory");
  }

  ExperimentConfig apply() const {
    ExperimentConfig c = load_experiment_config(config);
    if (gamma) c.run.gate.gamma = parse_gamma(json(*gamma));
    if (rank) c.run.acceptance.rank_threshold = *rank;
    if (fixed_l) c.run.lengths = LengthConfig::fixed(*fixed_l);
    if (transport) {
      if (*transport == "inprocess") {
        c.run.transport = TransportKind::InProcess;
      } else if (*transport == "stream") {
        c.run.transport = TransportKind::Stream;
      } else {
        config_error("--transport must be 'inprocess' or 'stream'");
      }
    }
    if (host) c.run.host = *host;
    if (port) c.run.port = *port;
    if (out) c.output_dir = *out;
    if (seed) c.run.seed = *seed;
    if (threads) c.run.threads = *threads;
    if (label) c.run.label = *label;
    if (bundle) {
      c.bundle = *bundle;
      c.spec.reset();
    }
    if (utterances) {
      if (!c.spec) config_error("--utterances needs a generated benchmark, not a bundle");
      c.spec->utterance_count = *utterances;
    }
    if (c.spec) c.run.max_tokens = c.spec->max_tokens;
    try {
      c.run.lengths.validate();
      c.run.validate();
      if (c.spec) c.spec->validate();
    } catch (const Error& e) {
      config_error(e.what());
    }
    return c;
  }
};

Benchmark prepare(ExperimentConfig& c) {
  Benchmark b = materialize_benchmark(c);
  c.run.max_tokens = b.spec.max_tokens;
  return b;
}

void log_line(std::ostream& err, const ordered_json& j) { err << j.dump() << "\n" << std::flush; }

int cmd_run(const Overrides& o, std::ostream& err) {
  ExperimentConfig c = o.apply();
  Benchmark b = prepare(c);
  RunResult r = run_benchmark(b, c.run);
  write_run_outputs(r, b, c.output_dir);
  write_file(c.output_dir / "config.json", experiment_config_to_json(c).dump(2) + "\n");
  log_line(err, {{"event", "run_complete"},
                 {"label", r.label},
                 {"utterances", r.items.size()},
                 {"aborted", r.aborted},
                 {"bleu1", r.quality.bleu1 * 100.0},
                 {"rho", r.mean.rho},
                 {"output_dir", c.output_dir.string()}});
  for (const auto& item : r.items)
    if (item.session.aborted)
      log_line(err, {{"event", "session_aborted"}, {"id", item.id}, {"error", item.session.error}});
  return r.aborted ? kExitRuntime : kExitOk;
}

std::vector<SweepPoint> parse_grid(SweepAxis axis, const std::string& text, const RunConfig& base) {
  std::vector<SweepPoint> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) config_error("empty grid value");
    RunConfig c = base;
    switch (axis) {
      case SweepAxis::Gamma:
        c.gate.gamma = parse_gamma(json(item));
        break;
      case SweepAxis::Rank:
        try {
          c.acceptance.rank_threshold = static_cast<std::uint32_t>(std::stoul(item));
        } catch (const std::exception&) {
          config_error("bad R grid value '" + item + "'");
        }
        break;
      case SweepAxis::Length:
        if (item == "dynamic") {
          if (c.lengths.fixed_l) c.lengths = LengthConfig{};
        } else {
          try {
            c.lengths = LengthConfig::fixed(static_cast<std::uint32_t>(std::stoul(item)));
          } catch (const std::exception&) {
            config_error("bad L grid value '" + item + "'");
          }
        }
        break;
    }
    grid.push_back({item, c});
  }
  if (grid.empty()) config_error("grid is empty");
  return grid;
}

int cmd_sweep(const Overrides& o, const std::string& axis_name, const std::optional<std::string>& grid_text,
              std::ostream& out, std::ostream& err) {
  SweepAxis axis;
  if (axis_name == "gamma") {
    axis = SweepAxis::Gamma;
  } else if (axis_name == "R") {
    axis = SweepAxis::Rank;
  } else if (axis_name == "L") {
    axis = SweepAxis::Length;
  } else {
    config_error("--axis must be gamma, R or L");
  }
  ExperimentConfig c = o.apply();
  Benchmark b = prepare(c);
  auto grid = grid_text ? parse_grid(axis, *grid_text, c.run) : default_grid(axis, c.run);
  std::vector<SweepRow> rows;
  std::size_t aborted = 0;
  for (auto& point : grid) {
    point.config.max_tokens = c.run.max_tokens;
    try {
      point.config.validate();
    } catch (const Error& e) {
      config_error(e.what());
    }
    RunResult r = run_benchmark(b, point.config);
    aborted += r.aborted;
    log_line(err, {{"event", "sweep_point"},
                   {"axis", sweep_axis_name(axis)},
                   {"value", point.value},
                   {"bleu1", r.quality.bleu1 * 100.0},
                   {"rho", r.mean.rho}});
    rows.push_back({std::string(sweep_axis_name(axis)), point.value, std::move(r)});
  }
  const std::string csv = sweep_csv(rows);
  write_file(c.output_dir / "sweep.csv", csv);
  out << csv;
  return aborted ? kExitRuntime : kExitOk;
}

int cmd_eval(const std::string& cand_file, const std::string& ref_file, std::ostream& out) {
  const auto cands = read_token_lines(cand_file);
  const auto refs = read_reference_lines(ref_file);
  if (cands.size() != refs.size())
    throw Error(Errc::Parse, "candidates have " + std::to_string(cands.size()) +
                                 " lines but references have " + std::to_string(refs.size()));
  if (cands.empty()) throw Error(Errc::Parse, "no candidates to score");
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < cands.size(); ++i) pairs.push_back({cands[i], refs[i]});
  QualityScores q{corpus_score(pairs, Metric::Bleu1), corpus_score(pairs, Metric::Bleu4),
                  corpus_score(pairs, Metric::RougeL)};
  out << quality_csv(q);
  return kExitOk;
}

int cmd_serve(const std::string& model_file, const std::string& host, std::uint16_t port,
              std::size_t exit_after, std::ostream& err) {
  ModelPtr verifier = load_model(model_file);
  CloudService service(verifier, &err);
  CloudServer server(service, host, port);
  server.start();
  log_line(err, {{"event", "listening"}, {"host", host}, {"port", server.port()}});
  g_interrupted = false;
  auto old_int = std::signal(SIGINT, on_signal);
  auto old_term = std::signal(SIGTERM, on_signal);
  while (!g_interrupted) {
    if (exit_after > 0 && service.finished().size() >= exit_after) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  server.stop();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
  log_line(err, {{"event", "stopped"}, {"sessions", service.finished().size()}});
  return kExitOk;
}

int cmd_generate(const std::optional<std::string>& config, const std::string& out_dir,
                 std::optional<std::size_t> utterances) {
  BenchmarkSpec spec;
  if (config) {
    json j;
    try {
      j = json::parse(read_file(*config));
    } catch (const json::parse_error& e) {
      config_error(*config + ": " + e.what());
    } catch (const Error& e) {
      config_error(e.what());
    }
    // Accept either a bare spec or an experiment config.
    if (j.is_object() && j.contains("gamma")) {
      auto c = parse_experiment_config(j);
      if (!c.spec) config_error("config names a bundle, not a benchmark spec");
      spec = *c.spec;
    } else {
      spec = spec_from_json(j);
    }
  }
  if (utterances) spec.utterance_count = *utterances;
  spec.validate();
  write_bundle(generate_benchmark(spec), out_dir);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ugsd: uncertainty-gated speculative decoding between an edge and a cloud model"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "decode a benchmark under one configuration");
  Overrides run_o;
  run_o.attach(*run);

  auto* sweep = app.add_subcommand("sweep", "repeat run over a grid on one axis");
  Overrides sweep_o;
  sweep_o.attach(*sweep);
  std::string axis;
  std::optional<std::string> grid;
  sweep->add_option("--axis", axis, "gamma, R or L")->required();
  sweep->add_option("--grid", grid, "comma-separated values (default grid if omitted)");

  auto* eval = app.add_subcommand("eval", "score candidates against references");
  std::string cand_file;
  std::string ref_file;
  eval->add_option("candidates", cand_file, "one candidate per line, token ids")->required();
  eval->add_option("references", ref_file, "one item per line, references split by '|'")->required();

  auto* serve = app.add_subcommand("serve", "run the cloud verifier service");
  std::string model_file;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::size_t exit_after = 0;
  serve->add_option("-m,--model", model_file, "verifier snapshot (JSON)")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port; 0 picks one");
  serve->add_option("--exit-after", exit_after, "stop after this many finished sessions");

  auto* gen = app.add_subcommand("generate", "write a benchmark bundle");
  std::optional<std::string> gen_config;
  std::string gen_out;
  std::optional<std::size_t> gen_utts;
  gen->add_option("-c,--config", gen_config, "benchmark spec or experiment config (JSON)");
  gen->add_option("-o,--out", gen_out, "bundle directory")->required();
  gen->add_option("--utterances", gen_utts, "utterance count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_o, err);
    if (*sweep) return cmd_sweep(sweep_o, axis, grid, out, err);
    if (*eval) return cmd_eval(cand_file, ref_file, out);
    if (*serve) return cmd_serve(model_file, host, port, exit_after, err);
    if (*gen) return cmd_generate(gen_config, gen_out, gen_utts);
  } catch (const Error& e) {
    log_line(err, {{"event", "error"}, {"code", std::string(errc_name(e.code()))}, {"message", e.what()}});
    return e.code() == Errc::Config ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    log_line(err, {{"event", "error"}, {"code", "internal"}, {"message", e.what()}});
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ugsd
