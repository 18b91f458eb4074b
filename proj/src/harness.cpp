#include "magicpairing/harness.hpp"

namespace magicpairing::harness {

using session::PeerDevice;
using transport::Endpoint;
using transport::Link;
using transport::LinkEvent;

PairingRun run_pairing(PeerDevice& host, PeerDevice& accessory, Link& link,
                       std::size_t max_rounds) {
  PairingRun run;

  auto note_host = [&](const session::SessionOutput& out) {
    if (out.derived_link_key) run.host_link_key = out.derived_link_key;
  };

  session::SessionOutput start = host.start_pairing();
  note_host(start);
  for (const auto& msg : start.messages_to_send) {
    codec::L2capFrame f = host.wrap(msg);
    run.transcript.push_back(ExchangeRecord{true, f});
    link.send(Endpoint::A, f);
  }

  for (std::size_t round = 0; round < max_rounds; ++round) {
    bool moved = false;
    while (auto f = link.recv(Endpoint::B)) {
      moved = true;
      auto out = accessory.handle_frame(*f);
      if (out.invalid) link.report_invalid(Endpoint::B);
      if (out.fault) run.faults.push_back(*out.fault);
      if (out.link_key) run.accessory_link_key = out.link_key;
      for (const auto& reply : out.replies) {
        run.transcript.push_back(ExchangeRecord{false, reply});
        link.send(Endpoint::B, reply);
      }
    }
    while (auto f = link.recv(Endpoint::A)) {
      moved = true;
      auto out = host.handle_frame(*f);
      if (out.invalid) link.report_invalid(Endpoint::A);
      if (out.fault) run.faults.push_back(*out.fault);
      if (out.link_key) run.host_link_key = out.link_key;
      for (const auto& reply : out.replies) {
        run.transcript.push_back(ExchangeRecord{true, reply});
        link.send(Endpoint::A, reply);
      }
    }
    if (!moved) break;
  }

  if (host.session()) {
    run.host_complete = host.session()->state() == session::SessionState::Complete;
    run.host_failure_status = host.session()->failure_status();
  }
  if (accessory.session()) {
    run.accessory_complete =
        accessory.session()->state() == session::SessionState::Complete;
    run.accessory_failure_status = accessory.session()->failure_status();
  }
  return run;
}

TargetHarness::TargetHarness(keystore::Keystore ks,
                             const session::PeerConfig& cfg,
                             const BdAddr& attacker_addr,
                             const transport::LinkConfig& link_cfg)
    : ks_(std::move(ks)), link_(link_cfg), peer_(ks_, cfg) {
  peer_.connect_from(attacker_addr);
}

TargetHarness::Reply TargetHarness::send_frame(const codec::L2capFrame& frame) {
  Reply reply;
  if (link_.send(Endpoint::A, frame) == LinkEvent::Disconnected) {
    reply.disconnected = true;
    return reply;
  }
  while (auto delivered = link_.recv(Endpoint::B)) {
    auto out = peer_.handle_frame(*delivered);
    if (out.invalid &&
        link_.report_invalid(Endpoint::B) == LinkEvent::Disconnected)
      reply.disconnected = true;
    reply.invalid = reply.invalid || out.invalid;
    if (out.fault) reply.fault = out.fault;
    reply.ratchet_steps += out.ratchet_steps;
    for (const auto& e : out.events) reply.events.push_back(e);
    for (const auto& r : out.replies) link_.send(Endpoint::B, r);
  }
  while (auto back = link_.recv(Endpoint::A)) {
    auto decoded = codec::decode_message(back->payload);
    if (const auto* msg = std::get_if<codec::MagicPairingMessage>(&decoded))
      reply.messages.push_back(*msg);
  }
  while (auto event = link_.poll_event(Endpoint::A))
    if (*event == LinkEvent::Disconnected) reply.disconnected = true;
  return reply;
}

TargetHarness::Reply TargetHarness::send_payload(const Bytes& payload) {
  return send_frame(codec::L2capFrame{peer_.config().channel_id, payload});
}

void TargetHarness::reconnect() {
  link_.reconnect();
  peer_.reset_session();
}

}  // namespace magicpairing::harness
