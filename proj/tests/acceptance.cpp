// Runs every acceptance criterion at its stated tolerance and time limit and
// prints one PASS/FAIL line per criterion. Exit status is non-zero if any
// criterion fails.

#include "ugsd/cli.hpp"
#include "ugsd/experiment.hpp"
#include "ugsd/snapshot.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace ugsd;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Collects the first few failures of one criterion.
struct Check {
  std::size_t failures = 0;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures++ < 5) notes.push_back(what);
  }
};

struct Criterion {
  std::string id;
  std::string title;
  double limit_s;
  std::function<void(Check&, std::string&)> body;
};

ExperimentConfig frozen() { return load_experiment_config(UGSD_FROZEN_CONFIG); }

Benchmark frozen_bench(std::size_t utterances) {
  auto c = frozen();
  c.spec->utterance_count = utterances;
  return generate_benchmark(*c.spec);
}

RunConfig frozen_run(const Benchmark& b) {
  auto run = frozen().run;
  run.max_tokens = b.spec.max_tokens;
  return run;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- 1, 2: endpoint equivalences ------------------------------------------

void edge_only(Check& chk, std::string& detail) {
  auto b = frozen_bench(200);
  auto cfg = frozen_run(b);
  cfg.gate = GateConfig::never();
  auto r = run_benchmark(b, cfg);
  std::size_t same = 0;
  std::uint64_t messages = 0;
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const auto& s = r.items[i].session;
    auto greedy = greedy_decode(*b.draft, b.utterances[i].features, cfg.max_tokens);
    same += s.transcript == greedy;
    chk.expect(s.transcript == greedy, r.items[i].id + " differs from greedy draft decoding");
    messages += s.messages_sent;
    chk.expect(s.counters.transmitted == 0, r.items[i].id + " transmitted tokens");
  }
  chk.expect(r.items.size() == 200, "expected 200 utterances");
  chk.expect(messages == 0, std::to_string(messages) + " messages sent");
  chk.expect(r.mean.rho == 0.0, "rho = " + format_double(r.mean.rho));
  chk.expect(r.cloud_sessions.empty(), "cloud saw sessions");
  detail = std::to_string(same) + "/200 identical, messages " + std::to_string(messages) +
           ", rho " + format_double(r.mean.rho);
}

void verifier_only(Check& chk, std::string& detail) {
  auto b = frozen_bench(200);
  auto cfg = frozen_run(b);
  cfg.gate = GateConfig::always();
  cfg.acceptance.rank_threshold = 1;
  auto r = run_benchmark(b, cfg);
  std::size_t same = 0;
  PrivacyCounters pooled;
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const auto& s = r.items[i].session;
    auto greedy = greedy_decode(*b.verifier, b.utterances[i].features, cfg.max_tokens);
    same += s.transcript == greedy;
    chk.expect(s.transcript == greedy, r.items[i].id + " differs from greedy verifier decoding");
    chk.expect(transmission_rate(s.counters) == 1.0, r.items[i].id + " rho != 1");
    pooled += s.counters;
  }
  chk.expect(r.items.size() == 200, "expected 200 utterances");
  chk.expect(r.mean.rho == 1.0, "rho = " + format_double(r.mean.rho));
  chk.expect(transmission_rate(pooled) == 1.0, "pooled counters rho != 1");
  chk.expect(r.aborted == 0, "aborted sessions");
  detail = std::to_string(same) + "/200 identical, rho " + format_double(r.mean.rho);
}

// --- 3: verification oracle -----------------------------------------------

void verification_oracle(Check& chk, std::string& detail) {
  std::size_t exhaustive = 0;
  std::size_t random = 0;

  // Fixed 2-gram verifier over |V| = 3.
  Vocabulary v3(3, TokenId(0));
  std::vector<Transcript> corpus{{make_tokens({1, 2, 1, 1, 0}), true},
                                 {make_tokens({2, 2, 0}), true},
                                 {make_tokens({1, 2, 2, 1, 0}), true},
                                 {make_tokens({2, 1, 0}), true}};
  NGramModel bigram = ngram_fit(corpus, 2, 0.5, v3);
  std::vector<Transcript> prefixes{{}, {make_tokens({0}), false}, {make_tokens({1}), false},
                                   {make_tokens({2}), false}, {make_tokens({1, 2}), false}};
  for (const auto& prefix : prefixes) {
    for (std::size_t len = 1; len <= 3; ++len) {
      std::size_t total = 1;
      for (std::size_t i = 0; i < len; ++i) total *= 3;
      for (std::size_t code = 0; code < total; ++code) {
        TokenSeq draft;
        for (std::size_t c = code, i = 0; i < len; ++i, c /= 3) draft.push_back(TokenId(c % 3));
        for (std::uint32_t r = 1; r <= 3; ++r) {
          bool ok = verify_block(bigram, prefix, {}, draft, {r}) ==
                    verify_block_oracle(bigram, prefix, {}, draft, {r});
          chk.expect(ok, "exhaustive mismatch");
          ++exhaustive;
        }
      }
    }
  }

  // Random models, prefixes, drafts and thresholds.
  std::mt19937_64 rng(20240601);
  auto tokens = [&](std::size_t len, std::size_t n) {
    TokenSeq s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(TokenId(static_cast<std::uint32_t>(rng() % n)));
    return s;
  };
  while (random < 100000) {
    std::size_t n = 2 + rng() % 31;
    Vocabulary v(n, TokenId(0));
    std::vector<Transcript> c;
    for (int s = 0; s < 12; ++s) c.push_back({tokens(4 + rng() % 12, n), false});
    auto base = std::make_shared<NGramModel>(ngram_fit(c, 1 + rng() % 3, 0.01 + 0.1 * (rng() % 10), v));
    std::vector<ModelPtr> models{base, std::make_shared<PerturbedModel>(base, 0.7, 0.5, rng()),
                                 std::make_shared<PromptedModel>(base)};
    ConditioningFeatures f{{0.2, 0.6}, "s"};
    for (int q = 0; q < 100; ++q) {
      const auto& m = models[rng() % models.size()];
      Transcript prefix{tokens(rng() % 6, n), false};
      auto draft = tokens(1 + rng() % 8, n);
      AcceptanceConfig acc{static_cast<std::uint32_t>(1 + rng() % n)};
      bool ok = verify_block(*m, prefix, f, draft, acc) == verify_block_oracle(*m, prefix, f, draft, acc);
      chk.expect(ok, "random mismatch at case " + std::to_string(random));
      ++random;
    }
  }
  detail = std::to_string(exhaustive) + " exhaustive + " + std::to_string(random) + " random cases, " +
           std::to_string(chk.failures) + " mismatches";
}

// --- 4: adaptive block length ---------------------------------------------

void adaptive_lengths(Check& chk, std::string& detail) {
  // Straight-line restatement: first block 5; after a correction 3; after
  // two or more consecutive non-corrected blocks 7; otherwise 5.
  auto reference = [](const std::vector<int>& seq) {
    std::vector<std::uint32_t> out{5};
    int streak = 0;
    for (int o : seq) {
      streak = o == 0 ? 0 : streak + 1;
      out.push_back(o == 0 ? 3u : streak >= 2 ? 7u : 5u);
    }
    return out;
  };
  std::size_t cases = 0;
  const BlockOutcome kinds[] = {BlockOutcome::Corrected, BlockOutcome::FullyAccepted, BlockOutcome::LocalCommit};
  for (std::size_t len = 0; len <= 10; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<int> seq;
      for (std::size_t c = code, i = 0; i < len; ++i, c /= 3) seq.push_back(static_cast<int>(c % 3));
      AdaptiveState s;
      LengthConfig cfg;
      std::vector<std::uint32_t> got{next_block_length(s, cfg)};
      for (int o : seq) {
        s = record_outcome(s, kinds[o]);
        got.push_back(next_block_length(s, cfg));
      }
      chk.expect(got == reference(seq), "length sequence mismatch");
      ++cases;
    }
  }
  chk.expect(cases == 88573, "wrong case count");
  detail = std::to_string(cases) + " sequences (all of length <= 10)";
}

// --- 5: entropy -----------------------------------------------------------

void entropy_checks(Check& chk, std::string& detail) {
  double worst = 0.0;
  for (std::size_t n = 2; n <= 1024; ++n) {
    double h0 = entropy(ProbDist::one_hot(n, TokenId(static_cast<std::uint32_t>(n - 1)))).value;
    chk.expect(std::abs(h0) <= 1e-12, "one-hot entropy at |V|=" + std::to_string(n));
    double hu = entropy(ProbDist::uniform(n)).value;
    double err = std::abs(hu - std::log(static_cast<double>(n)));
    worst = std::max(worst, err);
    chk.expect(err <= 1e-12, "uniform entropy at |V|=" + std::to_string(n));
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> w(2 + rng() % 1000);
    for (auto& x : w) x = u(rng) < 0.1 ? 0.0 : std::pow(u(rng), 1.0 + 6.0 * u(rng));
    w[0] += 1e-3;
    ProbDist d = normalize(w);
    // Kahan summation in extended precision.
    long double sum = 0.0L, comp = 0.0L;
    for (double p : d.values()) {
      if (p <= 0.0) continue;
      long double term = -static_cast<long double>(p) * std::log(static_cast<long double>(p));
      long double y = term - comp;
      long double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    double err = std::abs(entropy(d).value - static_cast<double>(sum));
    worst = std::max(worst, err);
    chk.expect(err <= 1e-12, "random distribution " + std::to_string(trial) + " off by " + std::to_string(err));
  }
  detail = "max abs error " + format_double(worst);
}

// --- 6: privacy closure over the stream transport -------------------------

void privacy_closure(Check& chk, std::string& detail) {
  auto b = frozen_bench(100);
  auto cfg = frozen_run(b);
  cfg.transport = TransportKind::Stream;
  cfg.port = 0;
  cfg.record_frames = true;
  auto r = run_benchmark(b, cfg);
  std::size_t frames = 0;
  std::uint64_t drafted = 0, transmitted = 0;
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const auto& item = r.items[i];
    std::string raw(b.utterances[i].raw.begin(), b.utterances[i].raw.end());
    std::string hex = raw.substr(4);
    for (const auto& f : item.frames) {
      ++frames;
      chk.expect(f.bytes.find(raw) == std::string::npos, item.id + ": raw bytes on the wire");
      chk.expect(f.bytes.find(hex) == std::string::npos, item.id + ": raw payload on the wire");
      try {
        decode_message(f.bytes);
      } catch (const Error& e) {
        chk.expect(false, item.id + ": frame fails the schema: " + e.what());
      }
    }
    std::uint64_t d = 0, t = 0;
    for (const auto& e : item.session.trace.events) {
      if (std::holds_alternative<trace::DraftToken>(e)) ++d;
      if (auto* v = std::get_if<trace::Verify>(&e)) t += v->block_len;
    }
    chk.expect(item.session.counters.total_drafted == d && item.session.counters.transmitted == t,
               item.id + ": counters disagree with the trace");
    chk.expect(item.metrics.rho == static_cast<double>(t) / static_cast<double>(d), item.id + ": rho");
    drafted += d;
    transmitted += t;
  }
  double rho = static_cast<double>(transmitted) / static_cast<double>(drafted);
  chk.expect(r.mean.rho == rho, "reported rho " + format_double(r.mean.rho) + " vs trace " + format_double(rho));
  chk.expect(r.aborted == 0, "aborted sessions");
  chk.expect(frames > 0, "no frames recorded");
  detail = std::to_string(frames) + " frames clean, rho " + fmt(r.mean.rho) + " matches trace";
}

// --- 7: transport equivalence ---------------------------------------------

std::vector<std::pair<std::string, std::string>> dir_files(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), read_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

void transport_equivalence(Check& chk, std::string& detail) {
  auto b = frozen_bench(50);
  auto cfg = frozen_run(b);
  auto local = run_benchmark(b, cfg);
  cfg.transport = TransportKind::Stream;
  auto stream = run_benchmark(b, cfg);
  for (std::size_t i = 0; i < local.items.size(); ++i) {
    const auto& a = local.items[i].session;
    const auto& s = stream.items[i].session;
    chk.expect(a.transcript == s.transcript, local.items[i].id + ": transcripts differ");
    chk.expect(a.trace == s.trace, local.items[i].id + ": traces differ");
    chk.expect(a.counters == s.counters, local.items[i].id + ": counters differ");
  }
  auto root = fs::temp_directory_path() / "ugsd_acceptance_transport";
  fs::remove_all(root);
  write_run_outputs(local, b, root / "inprocess");
  write_run_outputs(stream, b, root / "stream");
  auto fa = dir_files(root / "inprocess");
  auto fb = dir_files(root / "stream");
  chk.expect(fa == fb, "output files differ");
  chk.expect(local.aborted == 0 && stream.aborted == 0, "aborted sessions");
  fs::remove_all(root);
  detail = std::to_string(local.items.size()) + " utterances, " + std::to_string(fa.size()) +
           " output files identical";
}

// --- 8: trend reproduction ------------------------------------------------

void trends(Check& chk, std::string& detail) {
  auto c = frozen();
  auto b = generate_benchmark(*c.spec);
  auto cfg = frozen_run(b);
  chk.expect(cfg.cost.cloud_verify_ms_per_token * 10.0 <= cfg.cost.edge_decode_ms_per_token,
             "cost model does not have cloud-per-token << edge-per-token");
  chk.expect(!cfg.lengths.fixed_l, "frozen config must use dynamic L");

  auto edge_cfg = cfg;
  edge_cfg.gate = GateConfig::never();
  auto cloud_cfg = cfg;
  cloud_cfg.gate = GateConfig::always();
  cloud_cfg.acceptance.rank_threshold = 1;

  auto edge = run_benchmark(b, edge_cfg);
  auto ugsd = run_benchmark(b, cfg);
  auto cloud = run_benchmark(b, cloud_cfg);

  const double e = edge.quality.bleu1, u = ugsd.quality.bleu1, v = cloud.quality.bleu1;
  const double closure = (u - e) / (v - e);
  chk.expect(e < u && u < v, "BLEU-1 ordering fails: " + fmt(e) + " / " + fmt(u) + " / " + fmt(v));
  chk.expect(closure >= 0.4, "gap closure " + fmt(closure));
  chk.expect(ugsd.mean.total_ms < edge.mean.total_ms, "total time not below edge-only");
  chk.expect(ugsd.mean.otps > edge.mean.otps, "OTPS not above edge-only");
  chk.expect(ugsd.mean.rho > 0.0 && ugsd.mean.rho < 0.5, "rho " + fmt(ugsd.mean.rho));
  detail = "BLEU-1 " + fmt(e * 100, 2) + " < " + fmt(u * 100, 2) + " < " + fmt(v * 100, 2) + ", closure " +
           fmt(closure, 3) + ", total " + fmt(ugsd.mean.total_ms, 1) + " < " + fmt(edge.mean.total_ms, 1) +
           " ms, OTPS " + fmt(ugsd.mean.otps, 2) + " > " + fmt(edge.mean.otps, 2) + ", rho " +
           fmt(ugsd.mean.rho, 3);
}

// --- 9: metric fixtures ---------------------------------------------------

void metric_fixtures(Check& chk, std::string& detail) {
  const TokenId a{1}, b{2}, c{3}, d{4};
  auto near = [&](double got, double want, const std::string& what) {
    chk.expect(std::abs(got - want) <= 1e-9, what + ": " + format_double(got) + " vs " + format_double(want));
  };
  near(bleu({{a, b, c}, {{a, b, d}}}, 1), 2.0 / 3.0, "bleu unigram precision");
  near(bleu({{a}, {{a, b, c, d}}}, 1), std::exp(1.0 - 4.0), "bleu brevity penalty");
  for (int n = 1; n <= 4; ++n) near(bleu({{a, b, c, d}, {{a, b, c, d}}}, n), 1.0, "bleu identity");
  near(rouge_l({{a, b, c}, {{a, c}}}), 2.44 * (2.0 / 3.0) / (1.0 + 1.44 * (2.0 / 3.0)), "rouge-l");
  near(rouge_l({{a, b, c}, {{a, b, c}}}), 1.0, "rouge-l identity");
  near(rouge_l({{a, b}, {{c, d}}}), 0.0, "rouge-l disjoint");

  std::mt19937_64 rng(99);
  std::size_t pairs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto make = [&] {
      TokenSeq s;
      for (std::size_t i = 0, n = rng() % 31; i < n; ++i) s.push_back(TokenId(static_cast<std::uint32_t>(rng() % 5)));
      return s;
    };
    auto x = make();
    auto y = make();
    std::vector<std::vector<std::size_t>> dp(x.size() + 1, std::vector<std::size_t>(y.size() + 1, 0));
    for (std::size_t i = 1; i <= x.size(); ++i)
      for (std::size_t j = 1; j <= y.size(); ++j)
        dp[i][j] = x[i - 1] == y[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    chk.expect(lcs_length(x, y) == dp[x.size()][y.size()], "lcs mismatch");
    ++pairs;
  }
  detail = "hand fixtures within 1e-9, " + std::to_string(pairs) + " LCS pairs";
}

// --- 10: replay determinism -----------------------------------------------

void replay_checks(Check& chk, std::string& detail) {
  auto b = frozen_bench(100);
  auto cfg = frozen_run(b);
  auto r = run_benchmark(b, cfg);
  auto same = [](const MetricsReport& x, const MetricsReport& y) {
    for (auto [p, q] : {std::pair{x.ttft_ms, y.ttft_ms}, {x.itps, y.itps}, {x.oet_ms, y.oet_ms},
                        {x.otps, y.otps}, {x.total_ms, y.total_ms}, {x.rho, y.rho}})
      if (std::memcmp(&p, &q, sizeof p) != 0) return false;
    return x.output_token_count == y.output_token_count && x.degenerate == y.degenerate;
  };
  std::size_t traces = 0;
  for (const auto& item : r.items) {
    const auto& t = item.session.trace;
    auto x = replay(t, cfg.cost);
    auto y = replay(trace_from_jsonl(trace_to_jsonl(t)), cfg.cost);
    chk.expect(same(x, y), item.id + ": replay not bit-identical");
    if (!x.degenerate)
      chk.expect(std::abs(x.otps * x.oet_ms / 1000.0 - static_cast<double>(x.output_token_count)) <= 1e-9,
                 item.id + ": OTPS x OET != output tokens");
    ++traces;
  }

  // Constructed traces: k round trips, RTT 100 vs 0.
  std::size_t constructed = 0;
  for (std::size_t k = 0; k <= 20; ++k) {
    DecodeTrace t;
    t.input_token_count = 3;
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < k; ++i) {
      for (int j = 0; j < 5; ++j) t.events.emplace_back(trace::DraftToken{idx++});
      t.events.emplace_back(trace::GateDecision{true});
      t.events.emplace_back(trace::Send{120});
      t.events.emplace_back(trace::Verify{5});
      t.events.emplace_back(trace::Receive{90});
      t.events.emplace_back(trace::Commit{3});
      for (int j = 0; j < 4; ++j) t.events.emplace_back(trace::DraftToken{idx++});
      t.events.emplace_back(trace::GateDecision{false});
      t.events.emplace_back(trace::Commit{4});
    }
    t.events.emplace_back(trace::Terminate{});
    CostModel c0 = cfg.cost;
    c0.network_rtt_ms = 0.0;
    c0.bandwidth_bytes_per_ms = 0.0;
    CostModel c1 = c0;
    c1.network_rtt_ms = 100.0;
    double diff = replay(t, c1).total_ms - replay(t, c0).total_ms;
    chk.expect(diff == 100.0 * static_cast<double>(k), "RTT linearity fails at k=" + std::to_string(k));
    ++constructed;
  }
  detail = std::to_string(traces) + " benchmark traces, " + std::to_string(constructed) + " constructed traces";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "edge-only equivalence", 10.0, edge_only},
      {"AC2", "verifier-only equivalence", 30.0, verifier_only},
      {"AC3", "verification oracle", 60.0, verification_oracle},
      {"AC4", "adaptive block length", 5.0, adaptive_lengths},
      {"AC5", "entropy correctness", 5.0, entropy_checks},
      {"AC6", "privacy closure", 30.0, privacy_closure},
      {"AC7", "transport equivalence", 30.0, transport_equivalence},
      {"AC8", "trend reproduction", 120.0, trends},
      {"AC9", "metric fixtures", 5.0, metric_fixtures},
      {"AC10", "replay determinism", 5.0, replay_checks},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Check chk;
    std::string detail;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(chk, detail);
    } catch (const std::exception& e) {
      chk.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    chk.expect(secs < c.limit_s, "took " + fmt(secs, 2) + " s, limit " + fmt(c.limit_s, 0) + " s");
    const bool ok = chk.failures == 0;
    failed += !ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << c.id << " " << c.title << " (" << fmt(secs, 2) << " s / "
              << fmt(c.limit_s, 0) << " s): " << detail << "\n";
    for (const auto& n : chk.notes) std::cout << "       " << n << "\n";
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
