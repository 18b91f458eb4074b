#include "magicpairing/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <stdexcept>
#include <utility>

namespace magicpairing::transport {

Link::Link(const LinkConfig& config)
    : config_(config), drop_rng_(config.drop_seed) {}

LinkEvent Link::send(Endpoint from, const codec::L2capFrame& frame) {
  std::lock_guard lock(mu_);
  if (!connected_) return LinkEvent::Disconnected;
  (from == Endpoint::A ? to_b_ : to_a_).push_back(frame);
  return LinkEvent::Delivered;
}

std::optional<codec::L2capFrame> Link::recv(Endpoint at) {
  std::lock_guard lock(mu_);
  auto& q = at == Endpoint::A ? to_a_ : to_b_;
  if (!connected_ || q.empty()) return std::nullopt;
  codec::L2capFrame f = std::move(q.front());
  q.pop_front();
  return f;
}

void Link::disconnect_locked() {
  connected_ = false;
  to_a_.clear();
  to_b_.clear();
  for (auto* events : {&events_a_, &events_b_}) {
    bool drop = config_.drop_disconnect_per_mille > 0 &&
                drop_rng_.below(1000) < config_.drop_disconnect_per_mille;
    if (!drop) events->push_back(LinkEvent::Disconnected);
  }
}

LinkEvent Link::report_invalid(Endpoint at) {
  std::lock_guard lock(mu_);
  if (!connected_) return LinkEvent::Disconnected;
  unsigned& counter = at == Endpoint::A ? invalid_a_ : invalid_b_;
  ++counter;
  if (counter >= config_.disconnect_threshold) {
    disconnect_locked();
    return LinkEvent::Disconnected;
  }
  return LinkEvent::Delivered;
}

std::optional<LinkEvent> Link::poll_event(Endpoint at) {
  std::lock_guard lock(mu_);
  auto& events = at == Endpoint::A ? events_a_ : events_b_;
  if (events.empty()) return std::nullopt;
  LinkEvent e = events.front();
  events.pop_front();
  return e;
}

std::optional<LinkEvent> Link::reconnect() {
  std::lock_guard lock(mu_);
  if (connected_) return std::nullopt;
  connected_ = true;
  invalid_a_ = invalid_b_ = 0;
  to_a_.clear();
  to_b_.clear();
  events_a_.push_back(LinkEvent::Reconnected);
  events_b_.push_back(LinkEvent::Reconnected);
  return LinkEvent::Reconnected;
}

bool Link::connected() const {
  std::lock_guard lock(mu_);
  return connected_;
}

unsigned Link::invalid_count(Endpoint at) const {
  std::lock_guard lock(mu_);
  return at == Endpoint::A ? invalid_a_ : invalid_b_;
}

namespace {

bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::read(fd, buf + got, n - got);
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    ssize_t w = ::write(fd, buf + sent, n - sent);
    if (w <= 0) return false;
    sent += static_cast<std::size_t>(w);
  }
  return true;
}

sockaddr_in loopback_addr(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

}  // namespace

SocketCarrier::~SocketCarrier() {
  if (fd_ >= 0) ::close(fd_);
}

SocketCarrier::SocketCarrier(SocketCarrier&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)) {}

SocketCarrier& SocketCarrier::operator=(SocketCarrier&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

SocketListener::SocketListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = loopback_addr(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("bind() failed");
  }
  if (::listen(fd_, 1) != 0) {
    ::close(fd_);
    throw std::runtime_error("listen() failed");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

SocketCarrier SocketListener::accept_one() {
  int conn = ::accept(fd_, nullptr, nullptr);
  if (conn < 0) throw std::runtime_error("accept() failed");
  return SocketCarrier(conn);
}

SocketCarrier SocketCarrier::listen_and_accept(std::uint16_t port) {
  SocketListener listener(port);
  return listener.accept_one();
}

SocketCarrier SocketCarrier::connect(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  sockaddr_in addr = loopback_addr(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw std::runtime_error("connect() failed");
  }
  return SocketCarrier(fd);
}

bool SocketCarrier::send_frame(const codec::L2capFrame& frame) {
  Bytes wire = codec::encode_frame(frame);
  return write_all(fd_, wire.data(), wire.size());
}

std::optional<codec::L2capFrame> SocketCarrier::recv_frame() {
  std::uint8_t header[4];
  if (!read_exact(fd_, header, 4)) return std::nullopt;
  std::uint16_t len = static_cast<std::uint16_t>(header[0]) |
                      static_cast<std::uint16_t>(header[1]) << 8;
  Bytes wire(header, header + 4);
  wire.resize(4 + len);
  if (len > 0 && !read_exact(fd_, wire.data() + 4, len)) return std::nullopt;
  auto decoded = codec::decode_frame(wire);
  if (const auto* frame = std::get_if<codec::L2capFrame>(&decoded))
    return *frame;
  return std::nullopt;
}

}  // namespace magicpairing::transport
