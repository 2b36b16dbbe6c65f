#pragma once

/**
 * Edge-cloud wire protocol.
 *
 * Frames are single-line UTF-8 JSON objects terminated by '\n', each tagged
 * with a "type" field. The schema is closed: a frame with an unknown or
 * missing field is rejected, so no message can smuggle extra payload such
 * as the raw utterance.
 *
 *   hello            edge -> cloud   session_id, vocab_checksum, features, config
 *   verify_request   edge -> cloud   session_id, base_position, prefix_delta, draft_tokens
 *   verify_response  cloud -> edge   session_id, accepted_count, correction, verifier_position
 *   bye              edge -> cloud   session_id, final_length, rho_report
 *   error            cloud -> edge   session_id, code, message
 *
 * hello is sent lazily before the first escalation, so a session that never
 * escalates sends nothing at all. The cloud keeps a mirror of each edge
 * transcript; prefix_delta carries the tokens the edge committed locally
 * since the last exchange and base_position the mirror length it expects.
 *
 * gamma is encoded as a JSON number, or as the strings "inf" / "-inf" for
 * the never/always-escalate endpoints.
 */

#include "ugsd/adaptive.hpp"
#include "ugsd/core.hpp"
#include "ugsd/edge.hpp"
#include "ugsd/models.hpp"
#include "ugsd/privacy.hpp"
#include "ugsd/simtime.hpp"
#include "ugsd/uncertainty.hpp"
#include "ugsd/verifier.hpp"

#include <atomic>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

namespace ugsd {

struct SessionConfig {
  std::uint32_t rank_threshold = 20;
  double gamma = 0.0;
  std::uint32_t l_min = 3;
  std::uint32_t l_base = 5;
  std::uint32_t l_max = 7;
  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

struct HelloMsg {
  std::string session_id;
  std::uint64_t vocab_checksum = 0;
  std::vector<double> features;
  SessionConfig config;
  friend bool operator==(const HelloMsg&, const HelloMsg&) = default;
};

struct VerifyRequestMsg {
  std::string session_id;
  std::uint64_t base_position = 0;
  TokenSeq prefix_delta;
  TokenSeq draft_tokens;
  friend bool operator==(const VerifyRequestMsg&, const VerifyRequestMsg&) = default;
};

struct VerifyResponseMsg {
  std::string session_id;
  std::uint64_t accepted_count = 0;
  std::optional<TokenId> correction;
  std::uint64_t verifier_position = 0;
  friend bool operator==(const VerifyResponseMsg&, const VerifyResponseMsg&) = default;
};

struct ByeMsg {
  std::string session_id;
  std::uint64_t final_length = 0;
  PrivacyCounters rho_report;
  friend bool operator==(const ByeMsg&, const ByeMsg&) = default;
};

struct ErrorMsg {
  std::string session_id;
  std::string code;
  std::string message;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Message = std::variant<HelloMsg, VerifyRequestMsg, VerifyResponseMsg, ByeMsg, ErrorMsg>;

// Exact key set of each message type, "type" included.
const std::vector<std::string>& message_fields(std::string_view type);
std::string_view message_type(const Message& m);

// One frame, '\n' included. Throws InvariantViolation on invalid payloads.
std::string encode_message(const Message& m);
// Accepts a frame with or without its trailing newline.
Message decode_message(std::string_view frame);

std::string make_session_id(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cloud side

struct CloudSessionStats {
  std::string session_id;
  std::uint64_t blocks_verified = 0;
  std::uint64_t corrections = 0;
  std::uint64_t final_length = 0;
  bool aborted = false;
};

// Transport-independent cloud state machine. handle() may be called from
// many threads; frames of one session are processed in arrival order.
class CloudService {
 public:
  struct Reply {
    std::optional<std::string> frame;
    // The session was closed by the cloud (error or bye).
    bool close = false;
    std::string session_id{};
  };

  explicit CloudService(ModelPtr verifier, std::ostream* log = nullptr);

  Reply handle(std::string_view frame);
  // Drops a session whose connection went away; no-op if already closed.
  void abandon(const std::string& session_id);

  const LanguageModel& verifier() const noexcept { return *verifier_; }
  std::optional<Transcript> mirror(const std::string& session_id) const;
  std::size_t open_sessions() const;
  std::vector<CloudSessionStats> finished() const;

 private:
  struct Session {
    std::mutex mu;
    ConditioningFeatures features;
    AcceptanceConfig acceptance;
    Transcript mirror;
    CloudSessionStats stats;
  };

  Reply on_hello(const HelloMsg& m);
  Reply on_verify(const VerifyRequestMsg& m);
  Reply on_bye(const ByeMsg& m);
  Reply fail(const std::string& session_id, Errc code, const std::string& why);
  std::shared_ptr<Session> find(const std::string& id) const;
  void retire(const std::string& id, CloudSessionStats stats);
  void log_session(const CloudSessionStats& s);

  ModelPtr verifier_;
  std::ostream* log_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<CloudSessionStats> finished_;
};

// Edge-side handle to the cloud.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(std::string_view frame) = 0;
  // Blocks for the next frame from the cloud; throws TransportFailure.
  virtual std::string receive() = 0;
};

class InProcessChannel final : public Channel {
 public:
  explicit InProcessChannel(CloudService& service) : service_(service) {}
  void send(std::string_view frame) override;
  std::string receive() override;

 private:
  CloudService& service_;
  std::deque<std::string> inbox_;
  bool closed_ = false;
};

// Line-framed TCP client.
class StreamChannel final : public Channel {
 public:
  static std::unique_ptr<StreamChannel> connect(const std::string& host, std::uint16_t port);
  ~StreamChannel() override;
  StreamChannel(const StreamChannel&) = delete;
  StreamChannel& operator=(const StreamChannel&) = delete;

  void send(std::string_view frame) override;
  std::string receive() override;

 private:
  explicit StreamChannel(int fd) : fd_(fd) {}
  int fd_;
  std::string buffer_;
};

enum class Direction { EdgeToCloud, CloudToEdge };

struct RecordedFrame {
  Direction direction;
  std::string bytes;
};

// Tees every frame through to `inner` and keeps a copy.
class RecordingChannel final : public Channel {
 public:
  explicit RecordingChannel(Channel& inner) : inner_(inner) {}
  void send(std::string_view frame) override;
  std::string receive() override;
  const std::vector<RecordedFrame>& frames() const noexcept { return frames_; }

 private:
  Channel& inner_;
  std::vector<RecordedFrame> frames_;
};

// Accepts TCP connections and feeds their frames to a CloudService, one
// thread per connection.
class CloudServer {
 public:
  // Port 0 picks an ephemeral port; see port(). Throws BindFailure.
  CloudServer(CloudService& service, const std::string& host, std::uint16_t port);
  ~CloudServer();
  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  // Blocks until stop() is called.
  void run();
  // Runs the accept loop on a background thread.
  void start();
  void stop();

 private:
  void serve_connection(int fd);

  CloudService& service_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::vector<std::thread> workers_;
  std::vector<int> conn_fds_;
};

// ---------------------------------------------------------------------------
// Edge side

struct EdgeConfig {
  GateConfig gate;
  AcceptanceConfig acceptance;
  LengthConfig lengths;
  std::size_t max_tokens = SessionState::kDefaultMaxTokens;
  DraftConfig draft;
  std::string session_id;
};

struct SessionResult {
  Transcript transcript;
  DecodeTrace trace;
  PrivacyCounters counters;
  std::uint64_t messages_sent = 0;
  bool aborted = false;
  std::string error;
};

// Drafts, gates, and either commits locally or round-trips to the cloud
// until the transcript terminates. A transport or protocol failure aborts the
// session and returns what was committed so far with `aborted` set.
SessionResult edge_run_session(const UtteranceInput& utterance, const LanguageModel& draft_lm,
                               Channel& cloud, const EdgeConfig& cfg);

}  // namespace ugsd
