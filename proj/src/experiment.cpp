#include "ugsd/experiment.hpp"

#include "ugsd/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <thread>

namespace ugsd {

void RunConfig::validate() const {
  gate.validate();
  lengths.validate();
  cost.validate();
  if (acceptance.rank_threshold == 0) throw Error(Errc::Config, "rank_threshold must be >= 1");
  if (max_tokens == 0) throw Error(Errc::Config, "max_tokens must be positive");
  if (threads == 0) throw Error(Errc::Config, "threads must be positive");
  if (label.empty() || label.find_first_of(",\n\"") != std::string::npos)
    throw Error(Errc::Config, "label must be non-empty and CSV-safe");
}

QualityScores score_transcripts(std::span<const Transcript> candidates,
                                std::span<const Transcript> references) {
  if (candidates.size() != references.size())
    throw Error(Errc::InvalidArgument, "candidate and reference counts differ");
  std::vector<ScoredPair> pairs;
  pairs.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    pairs.push_back({candidates[i].tokens, {references[i].tokens}});
  return {corpus_score(pairs, Metric::Bleu1), corpus_score(pairs, Metric::Bleu4),
          corpus_score(pairs, Metric::RougeL)};
}

namespace {

std::unique_ptr<Channel> open_channel(const RunConfig& cfg, CloudService& service,
                                      std::uint16_t port) {
  if (cfg.transport == TransportKind::InProcess) return std::make_unique<InProcessChannel>(service);
  return StreamChannel::connect(cfg.host, port);
}

}  // namespace

RunResult run_benchmark(const Benchmark& bench, const RunConfig& cfg, std::ostream* cloud_log) {
  cfg.validate();
  cfg.acceptance.validate(bench.vocab.size());

  CloudService service(bench.verifier, cloud_log);
  std::unique_ptr<CloudServer> server;
  std::uint16_t port = cfg.port;
  if (cfg.transport == TransportKind::Stream && cfg.port == 0) {
    server = std::make_unique<CloudServer>(service, cfg.host, 0);
    server->start();
    port = server->port();
  }

  EdgeConfig edge;
  edge.gate = cfg.gate;
  edge.acceptance = cfg.acceptance;
  edge.lengths = cfg.lengths;
  edge.max_tokens = cfg.max_tokens;

  RunResult out;
  out.label = cfg.label;
  const std::size_t n = bench.utterances.size();
  out.items.resize(n);

  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < n; i += cfg.threads) {
      auto& item = out.items[i];
      item.id = bench.ids[i];
      EdgeConfig e = edge;
      e.session_id = make_session_id(derive_seed(cfg.seed, item.id));
      try {
        auto channel = open_channel(cfg, service, port);
        if (cfg.record_frames) {
          RecordingChannel rec(*channel);
          item.session = edge_run_session(bench.utterances[i], *bench.draft, rec, e);
          item.frames = rec.frames();
        } else {
          item.session = edge_run_session(bench.utterances[i], *bench.draft, *channel, e);
        }
      } catch (const Error& err) {
        item.session.aborted = true;
        item.session.error = err.what();
      }
    }
  };

  const std::size_t workers = std::min(cfg.threads, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (server) server->stop();

  std::vector<DecodeTrace> traces;
  for (auto& item : out.items) {
    if (item.session.aborted) ++out.aborted;
    item.metrics = replay(item.session.trace, cfg.cost);
    traces.push_back(item.session.trace);
  }
  if (!traces.empty()) out.mean = summarize(traces, cfg.cost);

  std::vector<Transcript> candidates;
  for (const auto& item : out.items) candidates.push_back(item.session.transcript);
  bool scorable = std::all_of(candidates.begin(), candidates.end(),
                              [](const Transcript& t) { return !t.tokens.empty(); });
  if (scorable && !candidates.empty()) out.quality = score_transcripts(candidates, bench.references);

  out.cloud_sessions = service.finished();
  std::sort(out.cloud_sessions.begin(), out.cloud_sessions.end(),
            [](const auto& a, const auto& b) { return a.session_id < b.session_id; });
  return out;
}

std::string quality_csv(const QualityScores& q) {
  std::string s = "metric,value\n";
  s += "bleu1," + format_double(q.bleu1 * 100.0) + "\n";
  s += "bleu4," + format_double(q.bleu4 * 100.0) + "\n";
  s += "rouge_l," + format_double(q.rouge_l * 100.0) + "\n";
  s += "rouge_beta," + format_double(kRougeBeta) + "\n";
  s += std::string("bleu_smoothing,") + kBleuSmoothing + "\n";
  return s;
}

void write_run_outputs(const RunResult& run, const Benchmark& bench,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "traces");
  std::string transcripts;
  std::string references;
  std::vector<LabeledReport> rows;
  for (std::size_t i = 0; i < run.items.size(); ++i) {
    const auto& item = run.items[i];
    transcripts += format_tokens(item.session.transcript.tokens) + "\n";
    references += format_tokens(bench.references[i].tokens) + "\n";
    write_file(dir / "traces" / (item.id + ".jsonl"), trace_to_jsonl(item.session.trace));
    rows.emplace_back(item.id, item.metrics);
  }
  rows.emplace_back(run.label, run.mean);
  write_file(dir / "transcripts.txt", transcripts);
  write_file(dir / "references.txt", references);
  write_file(dir / "metrics.csv", metrics_csv(rows));
  write_file(dir / "quality.csv", quality_csv(run.quality));
}

namespace {

std::string gamma_text(double g) {
  if (std::isinf(g)) return g > 0 ? "inf" : "-inf";
  return format_double(g);
}

}  // namespace

std::string_view sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::Rank: return "R";
    case SweepAxis::Length: return "L";
  }
  return "?";
}

std::vector<SweepPoint> default_grid(SweepAxis axis, const RunConfig& base) {
  std::vector<SweepPoint> grid;
  switch (axis) {
    case SweepAxis::Gamma: {
      const double inf = std::numeric_limits<double>::infinity();
      for (double g : {-inf, 0.25, 0.5, 0.75, 1.0, 1.1, 1.25, 1.5, 2.0, inf}) {
        RunConfig c = base;
        c.gate.gamma = g;
        grid.push_back({gamma_text(g), c});
      }
      break;
    }
    case SweepAxis::Rank:
      for (std::uint32_t r : {1u, 2u, 3u, 5u, 10u, 20u}) {
        RunConfig c = base;
        c.acceptance.rank_threshold = r;
        grid.push_back({std::to_string(r), c});
      }
      break;
    case SweepAxis::Length: {
      for (std::uint32_t l : {3u, 5u, 7u, 10u, 20u, 50u}) {
        RunConfig c = base;
        c.lengths = LengthConfig::fixed(l);
        grid.push_back({std::to_string(l), c});
      }
      RunConfig c = base;
      if (c.lengths.fixed_l) c.lengths = LengthConfig{};
      grid.push_back({"dynamic", c});
      break;
    }
  }
  return grid;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string s(kSweepCsvHeader);
  s += '\n';
  for (const auto& r : rows) {
    const auto& m = r.run.mean;
    const auto& q = r.run.quality;
    s += r.run.label + ',' + r.axis + ',' + r.value + ',' + format_double(q.bleu1 * 100.0) + ',' +
         format_double(q.bleu4 * 100.0) + ',' + format_double(q.rouge_l * 100.0) + ',' +
         format_double(m.ttft_ms) + ',' + format_double(m.itps) + ',' + format_double(m.oet_ms) +
         ',' + format_double(m.otps) + ',' + format_double(m.total_ms) + ',' +
         format_double(m.rho) + ',' + std::to_string(m.output_token_count) + '\n';
  }
  return s;
}

}  // namespace ugsd
