#include "magicpairing/session.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "magicpairing/crypto.hpp"

namespace magicpairing::session {

namespace {

using codec::KeyEntry;

const KeyEntry* find_entry(const std::vector<KeyEntry>& entries,
                           std::uint8_t key_type, std::size_t len = 0) {
  for (const KeyEntry& e : entries) {
    if (e.key_type != key_type) continue;
    if (len != 0 && e.value.size() != len) continue;
    return &e;
  }
  return nullptr;
}

std::optional<Key16> key16_entry(const std::vector<KeyEntry>& entries,
                                 std::uint8_t key_type) {
  const KeyEntry* e = find_entry(entries, key_type, 16);
  if (!e) return std::nullopt;
  Key16 k;
  std::memcpy(k.data(), e->value.data(), 16);
  return k;
}

std::optional<RatchetCounter> ratchet_entry(const std::vector<KeyEntry>& entries) {
  const KeyEntry* e = find_entry(entries, codec::kKeyRatchet, 4);
  if (!e) return std::nullopt;
  return codec::read_ratchet_entry(*e);
}

void append(Bytes& out, std::span<const std::uint8_t> data) {
  out.insert(out.end(), data.begin(), data.end());
}

}  // namespace

const char* to_string(SessionState s) {
  switch (s) {
    case SessionState::Idle: return "Idle";
    case SessionState::AwaitHint: return "AwaitHint";
    case SessionState::AwaitRatchet: return "AwaitRatchet";
    case SessionState::AwaitAesSiv: return "AwaitAesSiv";
    case SessionState::AwaitStatus: return "AwaitStatus";
    case SessionState::Complete: return "Complete";
    case SessionState::Failed: return "Failed";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Accepted: return "Accepted";
    case Outcome::Rejected: return "Rejected";
    case Outcome::Fault: return "Fault";
  }
  return "?";
}

const char* to_string(FaultKind k) {
  switch (k) {
    case FaultKind::InvalidAccess: return "InvalidAccess";
    case FaultKind::Abort: return "Abort";
    case FaultKind::RatchetLoopEngaged: return "RatchetLoopEngaged";
    case FaultKind::LockoutCommitted: return "LockoutCommitted";
  }
  return "?";
}

PairingSession::PairingSession(Role role, const BdAddr& own_addr,
                               const BdAddr& peer_addr)
    : role_(role), own_addr_(own_addr), peer_addr_(peer_addr) {}

SessionOutput PairingSession::finish(SessionState arrived_in,
                                     std::uint8_t msg_type, Handled&& handled) {
  trace_.push_back(TraceEvent{arrived_in, msg_type, handled.outcome});
  return std::move(handled.out);
}

PairingSession::Handled PairingSession::begin_host_flow(
    const keystore::AccessoryKeyRecord& rec, SessionDeps deps) {
  Handled h;
  record_addr_ = rec.peer_addr;
  hint_ = rec.acc_hint;
  working_acc_key_ = rec.acc_key;
  working_ratchet_ = rec.ratchet;
  nonce_host_ = deps.entropy.next_key16();
  h.out.messages_to_send.push_back(
      codec::make_hint(hint_, nonce_host_, working_ratchet_));
  role_ = Role::Host;
  state_ = SessionState::AwaitRatchet;
  h.outcome = Outcome::Accepted;
  return h;
}

std::pair<PairingSession, SessionOutput> PairingSession::start_host(
    SessionDeps deps, const BdAddr& own_addr, const BdAddr& peer_addr) {
  PairingSession s(Role::Host, own_addr, peer_addr);
  SessionOutput out;
  auto rec = deps.keystore.lookup_by_address(peer_addr);
  if (!rec && deps.keystore.credentials())
    rec = deps.keystore.create_record(peer_addr);
  if (!rec) {
    out.messages_to_send.push_back(codec::make_status(codec::kStatusUnknownDevice));
    s.state_ = SessionState::Failed;
    s.last_reject_reason_ = "unknown-device";
    return {std::move(s), std::move(out)};
  }
  Handled h = s.begin_host_flow(*rec, deps);
  return {std::move(s), std::move(h.out)};
}

std::pair<PairingSession, SessionOutput> PairingSession::start_accessory(
    const BdAddr& own_addr, const BdAddr& peer_addr) {
  PairingSession s(Role::Accessory, own_addr, peer_addr);
  SessionOutput out;
  out.messages_to_send.push_back(codec::make_ping());
  s.state_ = SessionState::AwaitHint;
  return {std::move(s), std::move(out)};
}

PairingSession::Handled PairingSession::ping_impl(const codec::PingMsg&,
                                                  SessionDeps deps) {
  Handled h;
  if (state_ != SessionState::Idle) {
    last_reject_reason_ = "ping outside idle";
    return h;
  }
  // The Hint-reply path checks its lookup even in the flawed emulation;
  // the unchecked handlers are the Hint and Ratcheting receivers.
  auto rec = deps.keystore.lookup_by_address(peer_addr_);
  if (!rec) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusUnknownDevice));
    last_reject_reason_ = "unknown-device";
    return h;
  }
  return begin_host_flow(*rec, deps);
}

PairingSession::Handled PairingSession::hint_impl(const codec::HintMsg& msg,
                                                  SessionDeps deps) {
  Handled h;
  auto hint = key16_entry(msg.entries, codec::kKeyHint);
  auto nonce = key16_entry(msg.entries, codec::kKeyNonce);
  auto ratchet = ratchet_entry(msg.entries);
  if (!hint || !nonce || !ratchet) {
    last_reject_reason_ = "hint message missing entries";
    return h;
  }

  // Key-table lookup happens before any state checks, mirroring the
  // per-message handler dispatch of the emulated stacks.
  std::optional<keystore::AccessoryKeyRecord> rec =
      deps.lookup == LookupMode::HintEntry
          ? deps.keystore.lookup_by_hint(*hint)
          : deps.keystore.lookup_by_address(peer_addr_);
  if (!rec) {
    if (!deps.policy.lookup_checked) {
      h.out.fault = FaultReport{
          FaultKind::InvalidAccess,
          "hint handler: absent record dereferenced (unknown peer)"};
      h.outcome = Outcome::Fault;
      state_ = SessionState::Failed;
      return h;
    }
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusUnknownDevice));
    last_reject_reason_ = "unknown-device";
    return h;
  }

  if (role_ != Role::Accessory ||
      (state_ != SessionState::Idle && state_ != SessionState::AwaitHint)) {
    last_reject_reason_ = "hint outside accessory idle";
    return h;
  }

  record_addr_ = rec->peer_addr;
  working_acc_key_ = rec->acc_key;
  working_ratchet_ = rec->ratchet;
  hint_ = rec->acc_hint;

  std::uint64_t delta =
      *ratchet > working_ratchet_ ? *ratchet - working_ratchet_ : 0;
  if (delta > deps.policy.max_ratchet_delta) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    last_reject_reason_ = "ratchet-delta-rejected";
    state_ = SessionState::Failed;
    return h;
  }
  if (delta > deps.policy.accessory_ratchet_discrepancy_threshold) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    last_reject_reason_ = "discrepancy-declined";
    state_ = SessionState::Failed;
    return h;
  }
  if (delta > deps.policy.ratchet_budget_per_message) {
    // Bounded emulation of the unbounded loop: run exactly the budget,
    // count the work, report, and consider the endpoint gone.
    working_acc_key_ = crypto::ratchet_key(
        working_acc_key_,
        static_cast<std::uint32_t>(deps.policy.ratchet_budget_per_message));
    h.out.ratchet_steps = deps.policy.ratchet_budget_per_message;
    std::ostringstream detail;
    detail << "ratchet loop: requested " << delta << " steps, halted after "
           << deps.policy.ratchet_budget_per_message;
    h.out.fault = FaultReport{FaultKind::RatchetLoopEngaged, detail.str()};
    h.outcome = Outcome::Fault;
    state_ = SessionState::Failed;
    return h;
  }

  working_acc_key_ =
      crypto::ratchet_key(working_acc_key_, static_cast<std::uint32_t>(delta));
  working_ratchet_ = std::max(working_ratchet_, *ratchet);
  h.out.ratchet_steps = delta;

  if (!deps.policy.commit_on_verify)
    deps.keystore.commit_ratchet(record_addr_, working_ratchet_, working_acc_key_);

  siv_key_ = crypto::derive_siv_key(working_acc_key_);
  nonce_host_ = *nonce;
  rand_acc_ = deps.entropy.next_key16();

  Bytes plaintext;
  plaintext.reserve(38);
  append(plaintext, rand_acc_);
  append(plaintext, nonce_host_);
  append(plaintext, own_addr_);
  Bytes ct = crypto::siv_encrypt(siv_key_, plaintext);

  h.out.messages_to_send.push_back(
      codec::make_ratchet_aes_siv(working_ratchet_, ct));
  state_ = SessionState::AwaitAesSiv;
  h.outcome = Outcome::Accepted;
  return h;
}

PairingSession::Handled PairingSession::ratchet_aes_siv_impl(
    const codec::RatchetAesSivMsg& msg, SessionDeps deps) {
  Handled h;

  // Lookup precedes the state guard; this handler trusts the connection
  // address.
  auto rec = deps.keystore.lookup_by_address(peer_addr_);
  if (!rec) {
    if (!deps.policy.lookup_checked) {
      const char* first = msg.entries.empty()
                              ? "empty"
                              : (msg.entries.front().key_type == codec::kKeyAesSiv
                                     ? "aessiv-first"
                                     : "ratchet-first");
      h.out.fault = FaultReport{
          FaultKind::InvalidAccess,
          std::string("ratcheting handler: absent record dereferenced (") +
              first + " entry order)"};
      h.outcome = Outcome::Fault;
      state_ = SessionState::Failed;
      return h;
    }
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusUnknownDevice));
    last_reject_reason_ = "unknown-device";
    return h;
  }

  if (role_ != Role::Host || state_ != SessionState::AwaitRatchet) {
    last_reject_reason_ = "ratcheting outside host await-ratchet";
    return h;
  }

  auto ratchet = ratchet_entry(msg.entries);
  const KeyEntry* siv_entry = find_entry(msg.entries, codec::kKeyAesSiv);
  if (!ratchet || !siv_entry) {
    last_reject_reason_ = "ratcheting message missing entries";
    return h;
  }

  std::uint64_t delta =
      *ratchet > working_ratchet_ ? *ratchet - working_ratchet_ : 0;
  if (delta > deps.policy.max_ratchet_delta) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    last_reject_reason_ = "ratchet-delta-rejected";
    state_ = SessionState::Failed;
    return h;
  }
  if (delta > deps.policy.ratchet_budget_per_message) {
    working_acc_key_ = crypto::ratchet_key(
        working_acc_key_,
        static_cast<std::uint32_t>(deps.policy.ratchet_budget_per_message));
    h.out.ratchet_steps = deps.policy.ratchet_budget_per_message;
    std::ostringstream detail;
    detail << "ratchet loop: requested " << delta << " steps, halted after "
           << deps.policy.ratchet_budget_per_message;
    h.out.fault = FaultReport{FaultKind::RatchetLoopEngaged, detail.str()};
    h.outcome = Outcome::Fault;
    state_ = SessionState::Failed;
    return h;
  }

  RatchetCounter stored = rec->ratchet;
  working_acc_key_ =
      crypto::ratchet_key(working_acc_key_, static_cast<std::uint32_t>(delta));
  working_ratchet_ = std::max(working_ratchet_, *ratchet);
  h.out.ratchet_steps = delta;

  bool committed_early = false;
  if (!deps.policy.commit_on_verify) {
    deps.keystore.commit_ratchet(record_addr_, working_ratchet_, working_acc_key_);
    committed_early = working_ratchet_ > stored;
  }

  siv_key_ = crypto::derive_siv_key(working_acc_key_);
  auto dec = crypto::siv_decrypt(siv_key_, siv_entry->value);
  if (!dec || dec.plaintext->size() != 38) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    state_ = SessionState::Failed;
    last_reject_reason_ = "aessiv verification failed";
    if (committed_early) {
      std::ostringstream detail;
      detail << "ratchet " << stored << " -> " << working_ratchet_
             << " stored although AES-SIV verification failed";
      h.out.fault = FaultReport{FaultKind::LockoutCommitted, detail.str()};
      h.outcome = Outcome::Fault;
    }
    return h;
  }

  // The decryption authenticated, so the rotation itself is genuine;
  // store it before the field comparisons.
  if (deps.policy.commit_on_verify)
    deps.keystore.commit_ratchet(record_addr_, working_ratchet_, working_acc_key_);

  const Bytes& pt = *dec.plaintext;
  Key16 peer_rand;
  Key16 echoed_nonce;
  BdAddr peer_claimed;
  std::memcpy(peer_rand.data(), pt.data(), 16);
  std::memcpy(echoed_nonce.data(), pt.data() + 16, 16);
  std::memcpy(peer_claimed.data(), pt.data() + 32, 6);
  if (echoed_nonce != nonce_host_ || peer_claimed != peer_addr_) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    state_ = SessionState::Failed;
    last_reject_reason_ = "nonce or address mismatch";
    return h;
  }

  rand_acc_ = peer_rand;
  rand_host_ = deps.entropy.next_key16();

  Bytes plaintext;
  plaintext.reserve(64);
  append(plaintext, nonce_host_);
  append(plaintext, rand_host_);
  append(plaintext, rand_acc_);
  append(plaintext, hint_);
  Bytes ct = crypto::siv_encrypt(siv_key_, plaintext);

  h.out.messages_to_send.push_back(codec::make_aes_siv(ct));
  state_ = SessionState::AwaitStatus;
  h.outcome = Outcome::Accepted;
  return h;
}

PairingSession::Handled PairingSession::aes_siv_impl(const codec::AesSivMsg& msg,
                                                     SessionDeps deps) {
  Handled h;
  if (role_ != Role::Accessory || state_ != SessionState::AwaitAesSiv) {
    last_reject_reason_ = "aessiv outside accessory await-aessiv";
    return h;
  }
  const KeyEntry* siv_entry = find_entry(msg.entries, codec::kKeyAesSiv);
  if (!siv_entry) {
    last_reject_reason_ = "aessiv message missing entry";
    return h;
  }
  auto dec = crypto::siv_decrypt(siv_key_, siv_entry->value);
  if (!dec || dec.plaintext->size() != 64) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    state_ = SessionState::Failed;
    last_reject_reason_ = "aessiv verification failed";
    return h;
  }
  const Bytes& pt = *dec.plaintext;
  Key16 echoed_nonce, peer_rand, echoed_rand_acc, echoed_hint;
  std::memcpy(echoed_nonce.data(), pt.data(), 16);
  std::memcpy(peer_rand.data(), pt.data() + 16, 16);
  std::memcpy(echoed_rand_acc.data(), pt.data() + 32, 16);
  std::memcpy(echoed_hint.data(), pt.data() + 48, 16);
  if (echoed_nonce != nonce_host_ || echoed_rand_acc != rand_acc_ ||
      echoed_hint != hint_) {
    h.out.messages_to_send.push_back(
        codec::make_status(codec::kStatusInternalError));
    state_ = SessionState::Failed;
    last_reject_reason_ = "field mismatch";
    return h;
  }

  if (deps.policy.commit_on_verify)
    deps.keystore.commit_ratchet(record_addr_, working_ratchet_, working_acc_key_);

  rand_host_ = peer_rand;
  link_key_ = crypto::derive_link_key(rand_host_, rand_acc_);
  h.out.derived_link_key = link_key_;
  h.out.messages_to_send.push_back(codec::make_status(codec::kStatusSuccess));
  state_ = SessionState::Complete;
  h.outcome = Outcome::Accepted;
  return h;
}

PairingSession::Handled PairingSession::status_impl(const codec::StatusMsg& msg,
                                                    SessionDeps) {
  Handled h;
  if (msg.code != codec::kStatusSuccess) {
    // Any active state accepts an abort status; phase-2 rejections arrive
    // while the initiator awaits the Ratcheting reply.
    if (active()) {
      failure_status_ = msg.code;
      state_ = SessionState::Failed;
      h.outcome = Outcome::Accepted;
      return h;
    }
    last_reject_reason_ = "status outside active state";
    return h;
  }
  if (role_ == Role::Host && state_ == SessionState::AwaitStatus) {
    link_key_ = crypto::derive_link_key(rand_host_, rand_acc_);
    h.out.derived_link_key = link_key_;
    state_ = SessionState::Complete;
    h.outcome = Outcome::Accepted;
    return h;
  }
  last_reject_reason_ = "success status outside host await-status";
  return h;
}

SessionOutput PairingSession::handle_ping(const codec::PingMsg& msg,
                                          SessionDeps deps) {
  SessionState before = state_;
  return finish(before, codec::kMsgPing, ping_impl(msg, deps));
}

SessionOutput PairingSession::accessory_handle_hint(const codec::HintMsg& msg,
                                                    SessionDeps deps) {
  SessionState before = state_;
  return finish(before, codec::kMsgHint, hint_impl(msg, deps));
}

SessionOutput PairingSession::host_handle_ratchet_aes_siv(
    const codec::RatchetAesSivMsg& msg, SessionDeps deps) {
  SessionState before = state_;
  return finish(before, codec::kMsgRatchetAesSiv, ratchet_aes_siv_impl(msg, deps));
}

SessionOutput PairingSession::accessory_handle_aes_siv(
    const codec::AesSivMsg& msg, SessionDeps deps) {
  SessionState before = state_;
  return finish(before, codec::kMsgAesSiv, aes_siv_impl(msg, deps));
}

SessionOutput PairingSession::host_handle_status(const codec::StatusMsg& msg,
                                                 SessionDeps deps) {
  SessionState before = state_;
  return finish(before, codec::kMsgStatus, status_impl(msg, deps));
}

SessionOutput PairingSession::step(const codec::MessageResult& incoming,
                                   SessionDeps deps) {
  last_reject_reason_.clear();

  if (const auto* err = std::get_if<codec::DecodeError>(&incoming)) {
    SessionState before = state_;
    Handled h;
    if (deps.policy.parse_abort) {
      h.out.fault =
          FaultReport{FaultKind::Abort, "parse assertion: " + err->describe()};
      h.outcome = Outcome::Fault;
      state_ = SessionState::Failed;
    } else {
      last_reject_reason_ = "decode error: " + err->describe();
    }
    return finish(before, err->msg_type.value_or(0xff), std::move(h));
  }

  const auto& msg = std::get<codec::MagicPairingMessage>(incoming);
  if (const auto* ping = std::get_if<codec::PingMsg>(&msg.body))
    return handle_ping(*ping, deps);
  if (const auto* status = std::get_if<codec::StatusMsg>(&msg.body))
    return host_handle_status(*status, deps);
  if (const auto* hint = std::get_if<codec::HintMsg>(&msg.body))
    return accessory_handle_hint(*hint, deps);
  if (const auto* rk = std::get_if<codec::RatchetAesSivMsg>(&msg.body))
    return host_handle_ratchet_aes_siv(*rk, deps);
  if (const auto* as = std::get_if<codec::AesSivMsg>(&msg.body))
    return accessory_handle_aes_siv(*as, deps);

  // RatchetUnused (empty handler) and unknown types fall through.
  Handled h;
  last_reject_reason_ = "unhandled message type";
  return finish(state_, msg.type_code(), std::move(h));
}

PeerDevice::PeerDevice(keystore::Keystore& ks, const PeerConfig& cfg)
    : ks_(ks), cfg_(cfg), entropy_(cfg.entropy_seed) {}

void PeerDevice::connect_from(const BdAddr& peer) {
  peer_addr_ = peer;
  session_.reset();
}

void PeerDevice::reset_session() { session_.reset(); }

codec::L2capFrame PeerDevice::wrap(const codec::MagicPairingMessage& msg) const {
  return codec::L2capFrame{cfg_.channel_id, codec::encode_message(msg)};
}

SessionOutput PeerDevice::start_pairing() {
  auto [s, out] = PairingSession::start_host(deps(), cfg_.own_addr, peer_addr_);
  session_.emplace(std::move(s));
  return out;
}

PeerDevice::FrameOutput PeerDevice::handle_frame(const codec::L2capFrame& frame) {
  FrameOutput out;
  if (frame.channel_id != cfg_.channel_id) {
    // Traffic for reserved or unbound channels is turned away at the
    // framing layer; notably 0x0002, whose legacy group handler is gone.
    out.invalid = true;
    return out;
  }
  if (frame.payload.empty()) {
    if (cfg_.policy.empty_frame_fault) {
      out.fault = FaultReport{FaultKind::InvalidAccess,
                              "zero-length frame reached the frame handler"};
      faults_.push_back(*out.fault);
    }
    return out;  // otherwise ignored gracefully
  }

  codec::MessageResult result = codec::decode_message(frame.payload);
  if (!session_) {
    Role role = Role::Host;
    if (const auto* msg = std::get_if<codec::MagicPairingMessage>(&result);
        msg && std::holds_alternative<codec::HintMsg>(msg->body))
      role = Role::Accessory;
    session_.emplace(role, cfg_.own_addr, peer_addr_);
  }

  std::size_t trace_before = session_->trace().size();
  SessionOutput so = session_->step(result, deps());
  out.ratchet_steps = so.ratchet_steps;
  out.link_key = so.derived_link_key;
  out.fault = so.fault;
  if (so.fault) faults_.push_back(*so.fault);
  for (const auto& m : so.messages_to_send) out.replies.push_back(wrap(m));
  for (std::size_t i = trace_before; i < session_->trace().size(); ++i)
    out.events.push_back(session_->trace()[i]);
  if (std::holds_alternative<codec::DecodeError>(result)) out.invalid = true;
  return out;
}

}  // namespace magicpairing::session
