#include "helpers.hpp"

#include "ugsd/edge.hpp"

using namespace ugsd;

namespace {

// Deterministic chain 1 -> 2 -> 3 -> 4 -> 0 (eos), one-hot everywhere.
TableModel chain_model() {
  Vocabulary v(5, TokenId(0));
  TableModel t(v);
  TokenSeq prefix;
  for (std::uint32_t next : {1u, 2u, 3u, 4u, 0u}) {
    t.set(prefix, "", ProbDist::one_hot(5, TokenId(next)));
    prefix.push_back(TokenId(next));
  }
  return t;
}

DraftBlock escalated(std::size_t start, TokenSeq tokens) {
  DraftBlock b;
  b.start_index = start;
  b.entropies.assign(tokens.size(), EntropyNats{1.0});
  b.tokens = std::move(tokens);
  b.escalated = true;
  return b;
}

}  // namespace

TEST_CASE("one-hot drafting gives zero entropies") {
  auto m = chain_model();
  SessionState s(TokenId(0), {});
  auto b = draft_block(s, m, 3);
  CHECK(b.tokens == make_tokens({1, 2, 3}));
  for (auto e : b.entropies) CHECK(e.value == 0.0);
  CHECK_FALSE(b.escalated);
  CHECK(b.start_index == 0);
}

TEST_CASE("drafting stops at eos") {
  Vocabulary v(4, TokenId(0));
  TableModel t(v);
  t.set({}, "", ProbDist::one_hot(4, TokenId(2)));
  t.set(make_tokens({2}), "", ProbDist::one_hot(4, TokenId(3)));
  t.set(make_tokens({2, 3}), "", ProbDist::one_hot(4, TokenId(0)));
  SessionState s(TokenId(0), {});
  auto b = draft_block(s, t, 5);
  CHECK(b.tokens == make_tokens({2, 3, 0}));
}

TEST_CASE("drafting over a fitted bigram") {
  Vocabulary v(2, TokenId(1));
  std::vector<Transcript> corpus{{make_tokens({0, 1, 0, 1, 0}), false}};
  auto m = ngram_fit(corpus, 2, 1.0, v);
  SessionState s(TokenId(1), {}, 64);
  s.transcript.tokens = make_tokens({0});
  auto b = draft_block(s, m, 1);
  CHECK(b.tokens == make_tokens({1}));
}

TEST_CASE("drafting respects max tokens and termination") {
  auto m = chain_model();
  SessionState s(TokenId(0), {}, 2);
  auto b = draft_block(s, m, 5);
  CHECK(b.tokens.size() == 2);
  commit_local(s, b);
  CHECK(s.transcript.terminated);
  testing::require_errc([&] { draft_block(s, m, 1); }, Errc::Terminated);
}

TEST_CASE("local commits") {
  auto m = chain_model();
  SessionState s(TokenId(0), {});
  DraftBlock b;
  b.tokens = make_tokens({1, 2});
  b.entropies = {{0.0}, {0.0}};
  commit_local(s, b);
  CHECK(s.transcript.tokens == make_tokens({1, 2}));
  CHECK(s.controller.last_outcome == BlockOutcome::LocalCommit);

  auto b2 = draft_block(s, m, 5);
  CHECK(b2.tokens == make_tokens({3, 4, 0}));
  commit_local(s, b2);
  CHECK(s.transcript.terminated);
  CHECK(s.counters.total_drafted == 5);
  CHECK(s.counters.transmitted == 0);

  SessionState e(TokenId(0), {});
  testing::require_errc([&] { commit_local(e, escalated(0, make_tokens({1}))); }, Errc::EscalatedBlock);
}

TEST_CASE("successive local commits count every token") {
  Vocabulary v(9, TokenId(0));
  TableModel t(v);
  SessionState s(TokenId(0), {});
  DraftBlock a;
  a.tokens = make_tokens({1, 2, 3, 4, 5});
  a.entropies.assign(5, {0.0});
  commit_local(s, a);
  DraftBlock b;
  b.start_index = 5;
  b.tokens = make_tokens({6, 7, 8});
  b.entropies.assign(3, {0.0});
  commit_local(s, b);
  CHECK(s.transcript.size() == 8);
  CHECK(s.counters.total_drafted == 8);
}

TEST_CASE("resync examples") {
  const auto a = TokenId(1), b = TokenId(2), c = TokenId(3), d = TokenId(4);
  {
    SessionState s(TokenId(0), {});
    resync(s, escalated(0, {a, b, c}), VerificationOutcome::full(3));
    CHECK(s.transcript.tokens == TokenSeq{a, b, c});
    CHECK(s.controller.last_outcome == BlockOutcome::FullyAccepted);
  }
  {
    SessionState s(TokenId(0), {});
    resync(s, escalated(0, {a, b, c}), VerificationOutcome::corrected(1, d));
    CHECK(s.transcript.tokens == TokenSeq{a, d});
    CHECK(s.counters.total_drafted == 3);
    CHECK(s.counters.transmitted == 3);
    CHECK(s.controller.last_outcome == BlockOutcome::Corrected);
  }
  {
    SessionState s(TokenId(0), {});
    resync(s, escalated(0, {a}), VerificationOutcome::corrected(0, b));
    CHECK(s.transcript.tokens == TokenSeq{b});
  }
  {
    SessionState s(TokenId(0), {});
    resync(s, escalated(0, {a, b}), VerificationOutcome::corrected(1, TokenId(0)));
    CHECK(s.transcript.terminated);
  }
}

TEST_CASE("resync rejects inconsistent outcomes") {
  SessionState s(TokenId(0), {});
  testing::require_errc([&] { resync(s, escalated(0, make_tokens({1, 2})), VerificationOutcome::full(3)); },
                        Errc::InconsistentOutcome);
  testing::require_errc(
      [&] {
        resync(s, escalated(0, make_tokens({1, 2})),
               {2, TokenId(3), VerificationOutcome::Kind::FullyAccepted});
      },
      Errc::InconsistentOutcome);
}

TEST_CASE("resync grows the transcript by accepted plus correction") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    SessionState s(TokenId(0), {});
    s.transcript.tokens.assign(rng() % 5, TokenId(1));
    auto before = s.transcript.size();
    TokenSeq block;
    for (std::size_t i = 0, n = 1 + rng() % 7; i < n; ++i) block.push_back(TokenId(1 + rng() % 6));
    std::size_t k = rng() % (block.size() + 1);
    VerificationOutcome out = k == block.size() ? VerificationOutcome::full(k)
                                                : VerificationOutcome::corrected(k, TokenId(1 + rng() % 6));
    resync(s, escalated(before, block), out);
    CHECK(s.transcript.size() == before + out.accepted_count + (out.correction ? 1 : 0));
  }
}

TEST_CASE("transmission rate") {
  CHECK(transmission_rate({100, 18}) == doctest::Approx(0.18));
  CHECK(transmission_rate({50, 0}) == 0.0);
  testing::require_errc([] { transmission_rate({0, 0}); }, Errc::NoTokens);
}

TEST_CASE("seeded sampling is reproducible") {
  Vocabulary v(6, TokenId(0));
  TableModel t(v);
  DraftConfig cfg{true, 0.8, 123};
  SessionState a(TokenId(0), {}, 30, cfg);
  SessionState b(TokenId(0), {}, 30, cfg);
  CHECK(draft_block(a, t, 6).tokens == draft_block(b, t, 6).tokens);
}
