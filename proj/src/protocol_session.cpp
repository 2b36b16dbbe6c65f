#include "ugsd/protocol.hpp"

namespace ugsd {

namespace {

struct Aborted {
  std::string why;
};

class EdgeSession {
 public:
  EdgeSession(const UtteranceInput& utt, const LanguageModel& lm, Channel& cloud,
              const EdgeConfig& cfg)
      : lm_(lm),
        cloud_(cloud),
        cfg_(cfg),
        state_(lm.vocabulary().eos(), utt.features, cfg.max_tokens, cfg.draft) {
    result_.trace.input_token_count = utt.features.values.size();
  }

  SessionResult run() {
    try {
      while (!state_.transcript.terminated) step();
      if (hello_sent_) {
        ByeMsg bye{cfg_.session_id, state_.transcript.size(), state_.counters};
        send(bye);
      }
    } catch (const Aborted& a) {
      result_.aborted = true;
      result_.error = a.why;
    }
    result_.trace.events.emplace_back(trace::Terminate{});
    result_.transcript = state_.transcript;
    result_.counters = state_.counters;
    return std::move(result_);
  }

 private:
  void event(TraceEvent e) { result_.trace.events.push_back(e); }

  void send(const Message& m) {
    std::string frame = encode_message(m);
    try {
      cloud_.send(frame);
    } catch (const Error& e) {
      throw Aborted{e.what()};
    }
    ++result_.messages_sent;
    event(trace::Send{frame.size()});
  }

  VerifyResponseMsg receive_response() {
    std::string frame;
    Message m;
    try {
      frame = cloud_.receive();
      m = decode_message(frame);
    } catch (const Error& e) {
      throw Aborted{e.what()};
    }
    event(trace::Receive{frame.size()});
    if (auto* err = std::get_if<ErrorMsg>(&m)) throw Aborted{err->code + ": " + err->message};
    auto* resp = std::get_if<VerifyResponseMsg>(&m);
    if (!resp) throw Aborted{"expected verify_response, got " + std::string(message_type(m))};
    if (resp->session_id != cfg_.session_id) throw Aborted{"response for a different session"};
    return *resp;
  }

  void step() {
    const auto len = next_block_length(state_.controller, cfg_.lengths);
    DraftBlock block;
    try {
      block = draft_block(state_, lm_, len);
    } catch (const Error& e) {
      throw Aborted{e.what()};
    }
    for (std::size_t k = 0; k < block.tokens.size(); ++k)
      event(trace::DraftToken{block.start_index + k});

    block.escalated = should_escalate(block.entropies, cfg_.gate);
    event(trace::GateDecision{block.escalated});
    if (!block.escalated) {
      commit_local(state_, block);
      event(trace::Commit{block.tokens.size()});
      return;
    }

    if (!hello_sent_) {
      HelloMsg hello{cfg_.session_id, lm_.vocabulary().checksum(), state_.features.values,
                     SessionConfig{cfg_.acceptance.rank_threshold, cfg_.gate.gamma,
                                   cfg_.lengths.fixed_l.value_or(cfg_.lengths.l_min),
                                   cfg_.lengths.fixed_l.value_or(cfg_.lengths.l_base),
                                   cfg_.lengths.fixed_l.value_or(cfg_.lengths.l_max)}};
      send(hello);
      hello_sent_ = true;
    }

    const auto& committed = state_.transcript.tokens;
    VerifyRequestMsg req{cfg_.session_id, cloud_position_,
                         TokenSeq(committed.begin() + static_cast<std::ptrdiff_t>(cloud_position_),
                                  committed.end()),
                         block.tokens};
    send(req);
    event(trace::Verify{block.tokens.size()});
    const auto resp = receive_response();

    VerificationOutcome outcome =
        resp.correction ? VerificationOutcome::corrected(resp.accepted_count, *resp.correction)
                        : VerificationOutcome::full(resp.accepted_count);
    const std::size_t before = state_.transcript.size();
    try {
      if (outcome.correction) lm_.vocabulary().check(*outcome.correction);
      resync(state_, block, outcome);
    } catch (const Error& e) {
      throw Aborted{e.what()};
    }
    event(trace::Commit{state_.transcript.size() - before});
    if (resp.verifier_position != state_.transcript.size())
      throw Aborted{"PositionMismatch: cloud mirror at " + std::to_string(resp.verifier_position) +
                    ", edge at " + std::to_string(state_.transcript.size())};
    cloud_position_ = resp.verifier_position;
  }

  const LanguageModel& lm_;
  Channel& cloud_;
  const EdgeConfig& cfg_;
  SessionState state_;
  SessionResult result_;
  bool hello_sent_ = false;
  std::uint64_t cloud_position_ = 0;
};

}  // namespace

SessionResult edge_run_session(const UtteranceInput& utterance, const LanguageModel& draft_lm,
                               Channel& cloud, const EdgeConfig& cfg) {
  cfg.gate.validate();
  cfg.lengths.validate();
  cfg.acceptance.validate(draft_lm.vocabulary().size());
  return EdgeSession(utterance, draft_lm, cloud, cfg).run();
}

}  // namespace ugsd
