#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "knxsafe/simbus.hpp"

namespace knxsafe::udp {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port"; the port may be 0 when binding to let the system choose.
inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorKind::Validation, "address '" + text + "' is not of the form host:port");
  }
  Endpoint e{text.substr(0, colon), 0};
  try {
    std::size_t used = 0;
    const auto port = std::stoul(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Validation, "address '" + text + "' has an invalid port");
  }
  return e;
}

namespace detail {

inline sockaddr_in resolve(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorKind::Startup, "cannot resolve host '" + e.host + "'");
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  freeaddrinfo(res);
  addr.sin_port = htons(e.port);
  return addr;
}

class Socket {
 public:
  Socket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (fd_ < 0) throw Error(ErrorKind::Startup, std::string("socket: ") + std::strerror(errno));
  }
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }

  /// Waits up to `timeout` for one datagram.
  std::optional<std::pair<std::vector<std::uint8_t>, sockaddr_in>> receive(std::chrono::milliseconds timeout) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return std::nullopt;
    std::vector<std::uint8_t> buf(512);
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return std::pair(std::move(buf), from);
  }

  void send_to(const std::vector<std::uint8_t>& data, const sockaddr_in& to) {
    ::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof to);
  }

 private:
  int fd_;
};

inline bool same_peer(const sockaddr_in& a, const sockaddr_in& b) {
  return a.sin_addr.s_addr == b.sin_addr.s_addr && a.sin_port == b.sin_port;
}

}  // namespace detail

/// Bridges a SimBus onto UDP, one encoded telegram per datagram. Any sender
/// becomes a peer; every telegram published on the bus is forwarded to all
/// peers except the one it came from. Undecodable datagrams are dropped.
class BusEndpoint {
 public:
  BusEndpoint(sim::SimBus& bus, const Endpoint& bind_to, std::ostream* log = nullptr) : bus_(&bus), log_(log) {
    auto addr = detail::resolve(bind_to);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      throw Error(ErrorKind::Startup, "cannot bind " + bind_to.host + ":" + std::to_string(bind_to.port) + ": " +
                                          std::strerror(errno));
    }
    bus_->subscribe([this](const wire::Telegram& t) { forward(t); });
  }

  std::uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  /// Handles at most one datagram. Returns false when none arrived in time.
  bool poll(std::chrono::milliseconds timeout) {
    auto got = sock_.receive(timeout);
    if (!got) return false;
    auto& [data, from] = *got;
    {
      std::lock_guard lock(mu_);
      bool known = false;
      for (const auto& p : peers_) known = known || detail::same_peer(p, from);
      if (!known) peers_.push_back(from);
    }
    if (data.empty()) return true;  // registration only
    wire::Telegram t;
    try {
      t = wire::decode_telegram(data);
    } catch (const Error& e) {
      if (log_ != nullptr) *log_ << "dropped datagram: " << e.what() << std::endl;
      return true;
    }
    origin_ = from;
    skip_origin_ = true;
    bus_->publish(t);
    skip_origin_ = false;
    return true;
  }

  std::size_t peers() const {
    std::lock_guard lock(mu_);
    return peers_.size();
  }

 private:
  void forward(const wire::Telegram& t) {
    const auto frame = wire::encode_telegram(t);
    std::lock_guard lock(mu_);
    for (const auto& p : peers_) {
      // Only the telegram that arrived from a peer skips that peer; the
      // bus's own answers to it go back.
      if (skip_origin_ && detail::same_peer(*origin_, p)) continue;
      sock_.send_to(frame, p);
    }
    skip_origin_ = false;
  }

  sim::SimBus* bus_;
  std::ostream* log_;
  detail::Socket sock_;
  mutable std::mutex mu_;
  std::vector<sockaddr_in> peers_;
  std::optional<sockaddr_in> origin_;
  bool skip_origin_ = false;
};

/// The runtime's side of a UDP bus. Telegrams that arrive while waiting for
/// a read response are kept and handed out by the next poll().
class BusClient : public runtime::BusPort {
 public:
  using Handler = std::function<void(const wire::Telegram&)>;

  explicit BusClient(const Endpoint& server, std::chrono::milliseconds read_timeout = std::chrono::milliseconds(2000))
      : server_(detail::resolve(server)), read_timeout_(read_timeout) {
    if (::connect(sock_.fd(), reinterpret_cast<const sockaddr*>(&server_), sizeof server_) != 0) {
      throw Error(ErrorKind::Startup, "cannot reach " + server.host + ":" + std::to_string(server.port) + ": " +
                                          std::strerror(errno));
    }
    sock_.send_to({}, server_);  // register as a peer
  }

  void on_telegram(Handler h) { handler_ = std::move(h); }

  std::optional<std::vector<std::uint8_t>> read(const wire::IndividualAddress& self,
                                                const wire::GroupAddress& ga) override {
    send(wire::make_group_telegram(self, ga, wire::Service::Read));
    const auto deadline = std::chrono::steady_clock::now() + read_timeout_;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      auto t = receive(left);
      if (!t) continue;
      auto msg = wire::as_group_message(*t);
      if (msg && msg->service == wire::Service::Response && msg->address == ga) return msg->data;
      pending_.push_back(std::move(*t));
    }
  }

  void send(const wire::Telegram& t) override { sock_.send_to(wire::encode_telegram(t), server_); }

  /// Delivers pending telegrams, then at most one fresh datagram. Returns
  /// the number delivered.
  std::size_t poll(std::chrono::milliseconds timeout) {
    std::size_t n = 0;
    while (!pending_.empty()) {
      auto t = std::move(pending_.front());
      pending_.erase(pending_.begin());
      if (handler_) handler_(t);
      ++n;
    }
    if (auto t = receive(n > 0 ? std::chrono::milliseconds(0) : timeout)) {
      if (handler_) handler_(*t);
      ++n;
    }
    return n;
  }

 private:
  std::optional<wire::Telegram> receive(std::chrono::milliseconds timeout) {
    auto got = sock_.receive(timeout);
    if (!got) return std::nullopt;
    try {
      return wire::decode_telegram(got->first);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  detail::Socket sock_;
  sockaddr_in server_;
  std::chrono::milliseconds read_timeout_;
  Handler handler_;
  std::vector<wire::Telegram> pending_;
};

}  // namespace knxsafe::udp
