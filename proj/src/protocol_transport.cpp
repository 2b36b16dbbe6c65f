#include "ugsd/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <set>

namespace ugsd {

namespace {

[[noreturn]] void transport_error(const std::string& why) {
  throw Error(Errc::TransportFailure, why);
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      transport_error(std::string("send: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Returns false on orderly EOF before a full line arrived.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line = buffer.substr(0, nl + 1);
      buffer.erase(0, nl + 1);
      return true;
    }
    char chunk[4096];
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      transport_error(std::string("recv: ") + std::strerror(errno));
    }
    if (n == 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void InProcessChannel::send(std::string_view frame) {
  if (closed_) transport_error("session closed by the cloud");
  auto reply = service_.handle(frame);
  if (reply.frame) inbox_.push_back(std::move(*reply.frame));
  closed_ = reply.close;
}

std::string InProcessChannel::receive() {
  if (inbox_.empty()) transport_error("no frame pending from the cloud");
  std::string f = std::move(inbox_.front());
  inbox_.pop_front();
  return f;
}

void RecordingChannel::send(std::string_view frame) {
  frames_.push_back({Direction::EdgeToCloud, std::string(frame)});
  inner_.send(frame);
}

std::string RecordingChannel::receive() {
  auto f = inner_.receive();
  frames_.push_back({Direction::CloudToEdge, f});
  return f;
}

// ---------------------------------------------------------------------------

std::unique_ptr<StreamChannel> StreamChannel::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    transport_error("resolve " + host + ": " + ::gai_strerror(rc));

  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) transport_error("cannot connect to " + host + ":" + service);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::unique_ptr<StreamChannel>(new StreamChannel(fd));
}

StreamChannel::~StreamChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void StreamChannel::send(std::string_view frame) { write_all(fd_, frame); }

std::string StreamChannel::receive() {
  std::string line;
  if (!read_line(fd_, buffer_, line)) transport_error("connection closed by the cloud");
  return line;
}

// ---------------------------------------------------------------------------

CloudServer::CloudServer(CloudService& service, const std::string& host, std::uint16_t port)
    : service_(service) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string svc = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), svc.c_str(), &hints, &res); rc != 0)
    throw Error(Errc::BindFailure, "resolve " + host + ": " + ::gai_strerror(rc));

  std::string last_error = "no usable address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      listen_fd_ = fd;
      break;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) throw Error(Errc::BindFailure, host + ":" + svc + ": " + last_error);

  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.ss_family == AF_INET)
    port_ = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  else
    port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
}

CloudServer::~CloudServer() { stop(); }

void CloudServer::run() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (stopping_) {
      ::close(fd);
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lk(conn_mu_);
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void CloudServer::start() {
  accept_thread_ = std::thread([this] { run(); });
}

void CloudServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lk(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

void CloudServer::serve_connection(int fd) {
  std::string buffer;
  std::string line;
  std::set<std::string> seen;
  try {
    while (read_line(fd, buffer, line)) {
      auto reply = service_.handle(line);
      if (!reply.session_id.empty()) seen.insert(reply.session_id);
      if (reply.frame) write_all(fd, *reply.frame);
      if (reply.close && reply.frame) break;
    }
  } catch (const Error&) {
  }
  for (const auto& id : seen) service_.abandon(id);
  ::shutdown(fd, SHUT_RDWR);
  std::lock_guard lk(conn_mu_);
  std::erase(conn_fds_, fd);
  ::close(fd);
}

}  // namespace ugsd
