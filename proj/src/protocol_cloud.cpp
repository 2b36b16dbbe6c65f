#include "ugsd/protocol.hpp"

#include <json.hpp>

namespace ugsd {

CloudService::CloudService(ModelPtr verifier, std::ostream* log)
    : verifier_(std::move(verifier)), log_(log) {
  if (!verifier_) throw Error(Errc::InvalidArgument, "cloud service needs a verifier model");
}

CloudService::Reply CloudService::fail(const std::string& session_id, Errc code,
                                       const std::string& why) {
  if (!session_id.empty()) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lk(mu_);
      auto it = sessions_.find(session_id);
      if (it != sessions_.end()) {
        s = it->second;
        sessions_.erase(it);
      }
    }
    if (s) {
      CloudSessionStats stats = s->stats;
      stats.aborted = true;
      stats.final_length = s->mirror.size();
      retire(session_id, stats);
    }
  }
  ErrorMsg e{session_id, std::string(errc_name(code)), why};
  return Reply{encode_message(e), true};
}

std::shared_ptr<CloudService::Session> CloudService::find(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void CloudService::log_session(const CloudSessionStats& s) {
  if (!log_) return;
  nlohmann::ordered_json j{{"event", "session_end"},
                           {"session_id", s.session_id},
                           {"blocks_verified", s.blocks_verified},
                           {"corrections", s.corrections},
                           {"final_length", s.final_length},
                           {"aborted", s.aborted}};
  std::lock_guard lk(mu_);
  *log_ << j.dump() << '\n';
  log_->flush();
}

void CloudService::retire(const std::string& id, CloudSessionStats stats) {
  stats.session_id = id;
  log_session(stats);
  std::lock_guard lk(mu_);
  finished_.push_back(std::move(stats));
}

void CloudService::abandon(const std::string& session_id) {
  if (find(session_id)) fail(session_id, Errc::TransportFailure, "connection closed");
}

CloudService::Reply CloudService::handle(std::string_view frame) {
  Message m;
  try {
    m = decode_message(frame);
  } catch (const Error& e) {
    // Best effort at naming the session so the edge can match the error.
    std::string sid;
    try {
      auto j = nlohmann::json::parse(frame);
      if (j.is_object() && j.contains("session_id") && j["session_id"].is_string())
        sid = j["session_id"].get<std::string>();
    } catch (...) {
    }
    auto reply = fail(sid, e.code(), e.what());
    reply.session_id = sid;
    return reply;
  }

  const std::string sid = std::visit([](const auto& x) { return x.session_id; }, m);
  Reply reply;
  if (auto* h = std::get_if<HelloMsg>(&m))
    reply = on_hello(*h);
  else if (auto* r = std::get_if<VerifyRequestMsg>(&m))
    reply = on_verify(*r);
  else if (auto* b = std::get_if<ByeMsg>(&m))
    reply = on_bye(*b);
  else
    reply = fail(sid, Errc::UnknownType,
                 "cloud does not accept '" + std::string(message_type(m)) + "' frames");
  reply.session_id = sid;
  return reply;
}

CloudService::Reply CloudService::on_hello(const HelloMsg& m) {
  const auto& vocab = verifier_->vocabulary();
  if (m.vocab_checksum != vocab.checksum()) {
    ErrorMsg e{m.session_id, std::string(errc_name(Errc::VocabMismatch)),
               "vocabulary checksum does not match the verifier"};
    return Reply{encode_message(e), true};
  }
  AcceptanceConfig acc{m.config.rank_threshold};
  if (acc.rank_threshold > vocab.size()) {
    ErrorMsg e{m.session_id, std::string(errc_name(Errc::InvalidArgument)),
               "rank_threshold exceeds vocabulary size"};
    return Reply{encode_message(e), true};
  }

  auto s = std::make_shared<Session>();
  // Only feature values travel; the session id stands in for the utterance
  // name on this side.
  s->features = ConditioningFeatures{m.features, m.session_id};
  s->acceptance = acc;
  s->stats.session_id = m.session_id;
  {
    std::lock_guard lk(mu_);
    if (!sessions_.emplace(m.session_id, s).second) {
      ErrorMsg e{m.session_id, std::string(errc_name(Errc::InvariantViolation)),
                 "session id already in use"};
      return Reply{encode_message(e), true};
    }
  }
  return Reply{};
}

CloudService::Reply CloudService::on_verify(const VerifyRequestMsg& m) {
  auto s = find(m.session_id);
  if (!s) {
    ErrorMsg e{m.session_id, std::string(errc_name(Errc::SessionUnknown)), "no such session"};
    return Reply{encode_message(e), true};
  }

  std::unique_lock lk(s->mu);
  if (m.base_position != s->mirror.size()) {
    lk.unlock();
    return fail(m.session_id, Errc::PositionMismatch,
                "edge base_position " + std::to_string(m.base_position) + " != cloud mirror " +
                    std::to_string(s->mirror.size()));
  }

  const auto& vocab = verifier_->vocabulary();
  VerificationOutcome outcome;
  try {
    vocab.check(m.prefix_delta);
    vocab.check(m.draft_tokens);
    // Mirror length is bounded by the edge, so no max_tokens cap here.
    for (auto t : m.prefix_delta) s->mirror.append(t, vocab.eos(), SIZE_MAX);
    outcome = verify_block(*verifier_, s->mirror, s->features, m.draft_tokens, s->acceptance);
  } catch (const Error& e) {
    lk.unlock();
    return fail(m.session_id, e.code(), e.what());
  }

  for (std::size_t i = 0; i < outcome.accepted_count; ++i)
    s->mirror.append(m.draft_tokens[i], vocab.eos(), SIZE_MAX);
  if (outcome.correction) {
    s->mirror.append(*outcome.correction, vocab.eos(), SIZE_MAX);
    ++s->stats.corrections;
  }
  ++s->stats.blocks_verified;

  VerifyResponseMsg resp{m.session_id, outcome.accepted_count, outcome.correction,
                         s->mirror.size()};
  return Reply{encode_message(resp), false};
}

CloudService::Reply CloudService::on_bye(const ByeMsg& m) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(m.session_id);
    if (it == sessions_.end()) {
      ErrorMsg e{m.session_id, std::string(errc_name(Errc::SessionUnknown)), "no such session"};
      return Reply{encode_message(e), true};
    }
    s = it->second;
    sessions_.erase(it);
  }
  CloudSessionStats stats;
  {
    std::lock_guard lk(s->mu);
    stats = s->stats;
  }
  stats.final_length = m.final_length;
  retire(m.session_id, stats);
  return Reply{std::nullopt, true};
}

std::optional<Transcript> CloudService::mirror(const std::string& session_id) const {
  auto s = find(session_id);
  if (!s) return std::nullopt;
  std::lock_guard lk(s->mu);
  return s->mirror;
}

std::size_t CloudService::open_sessions() const {
  std::lock_guard lk(mu_);
  return sessions_.size();
}

std::vector<CloudSessionStats> CloudService::finished() const {
  std::lock_guard lk(mu_);
  return finished_;
}

}  // namespace ugsd
