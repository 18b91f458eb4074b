#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

#include "magicpairing/bytes.hpp"
#include "magicpairing/codec.hpp"

namespace magicpairing::transport {

enum class Endpoint : std::uint8_t { A, B };

inline Endpoint other(Endpoint e) {
  return e == Endpoint::A ? Endpoint::B : Endpoint::A;
}

enum class LinkEvent : std::uint8_t { Delivered, Disconnected, Reconnected };

struct LinkConfig {
  /// Invalid frames a receiver tolerates before the link drops.
  unsigned disconnect_threshold = 5;
  /// When > 0, Disconnected notifications are dropped with this
  /// per-mille probability (seeded), modeling unreliable delivery of
  /// disconnection events. State changes still happen.
  unsigned drop_disconnect_per_mille = 0;
  std::uint64_t drop_seed = 0;
};

/// In-memory duplex frame channel with disconnect-on-invalid semantics.
/// One thread per endpoint is the supported sharing pattern.
class Link {
 public:
  explicit Link(const LinkConfig& config = {});

  /// FIFO enqueue toward the other endpoint. Returns Delivered, or
  /// Disconnected (without sending) when the link is down.
  LinkEvent send(Endpoint from, const codec::L2capFrame& frame);

  /// Non-blocking; empty when no frame is queued or the link is down.
  std::optional<codec::L2capFrame> recv(Endpoint at);

  /// The receiving side's verdict on a frame it consumed. Reaching the
  /// threshold disconnects the link and notifies both endpoints.
  LinkEvent report_invalid(Endpoint at);

  /// Disconnected/Reconnected notifications, delivered once per endpoint.
  std::optional<LinkEvent> poll_event(Endpoint at);

  /// Fresh counters and queues. Empty result while still connected.
  std::optional<LinkEvent> reconnect();

  bool connected() const;
  unsigned invalid_count(Endpoint at) const;

 private:
  void disconnect_locked();

  mutable std::mutex mu_;
  LinkConfig config_;
  EntropySource drop_rng_;
  bool connected_ = true;
  std::deque<codec::L2capFrame> to_a_;
  std::deque<codec::L2capFrame> to_b_;
  std::deque<LinkEvent> events_a_;
  std::deque<LinkEvent> events_b_;
  unsigned invalid_a_ = 0;
  unsigned invalid_b_ = 0;
};

/// Loopback socket carrier: the same frame bytes as the in-memory path,
/// streamed over a local TCP connection so capture files are comparable.
class SocketCarrier {
 public:
  SocketCarrier() = default;
  ~SocketCarrier();

  SocketCarrier(SocketCarrier&& other) noexcept;
  SocketCarrier& operator=(SocketCarrier&& other) noexcept;
  SocketCarrier(const SocketCarrier&) = delete;
  SocketCarrier& operator=(const SocketCarrier&) = delete;

  /// Binds 127.0.0.1:port (0 picks an ephemeral port), accepts one peer.
  static SocketCarrier listen_and_accept(std::uint16_t port);
  static SocketCarrier connect(std::uint16_t port);

  bool send_frame(const codec::L2capFrame& frame);
  /// Blocking read of one frame; empty on EOF or malformed stream.
  std::optional<codec::L2capFrame> recv_frame();

  bool valid() const { return fd_ >= 0; }

 private:
  friend class SocketListener;
  explicit SocketCarrier(int fd) : fd_(fd) {}
  int fd_ = -1;
};

/// Two-step listen so tests and the CLI can learn an ephemeral port
/// before the peer connects.
class SocketListener {
 public:
  explicit SocketListener(std::uint16_t port);
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const { return port_; }
  SocketCarrier accept_one();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace magicpairing::transport
