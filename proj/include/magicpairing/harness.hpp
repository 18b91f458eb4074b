#pragma once

#include <optional>
#include <vector>

#include "magicpairing/session.hpp"
#include "magicpairing/transport.hpp"

namespace magicpairing::harness {

struct ExchangeRecord {
  bool from_host = false;
  codec::L2capFrame frame;
};

struct PairingRun {
  bool host_complete = false;
  bool accessory_complete = false;
  std::optional<Key16> host_link_key;
  std::optional<Key16> accessory_link_key;
  std::optional<std::uint8_t> host_failure_status;
  std::optional<std::uint8_t> accessory_failure_status;
  std::vector<ExchangeRecord> transcript;
  std::vector<session::FaultReport> faults;

  bool agreed() const {
    return host_complete && accessory_complete && host_link_key &&
           accessory_link_key && *host_link_key == *accessory_link_key;
  }
};

/// Drives a full host-initiated pairing between two peers over a link
/// (host at endpoint A) until traffic quiesces.
PairingRun run_pairing(session::PeerDevice& host, session::PeerDevice& accessory,
                       transport::Link& link, std::size_t max_rounds = 32);

/// One attacker-facing target: a device behind a link, with the attacker
/// holding endpoint A. Delivery, the target's invalid verdicts, and its
/// replies are pumped synchronously.
class TargetHarness {
 public:
  TargetHarness(keystore::Keystore ks, const session::PeerConfig& cfg,
                const BdAddr& attacker_addr,
                const transport::LinkConfig& link_cfg = {});

  struct Reply {
    std::vector<codec::MagicPairingMessage> messages;
    std::optional<session::FaultReport> fault;
    bool invalid = false;
    bool disconnected = false;
    std::vector<session::TraceEvent> events;
    std::uint64_t ratchet_steps = 0;
  };

  /// Sends message bytes in a frame on the target's channel.
  Reply send_payload(const Bytes& payload);
  Reply send_frame(const codec::L2capFrame& frame);

  void reconnect();

  keystore::Keystore& keystore() { return ks_; }
  session::PeerDevice& peer() { return peer_; }
  transport::Link& link() { return link_; }

 private:
  keystore::Keystore ks_;
  transport::Link link_;
  session::PeerDevice peer_;
};

}  // namespace magicpairing::harness
