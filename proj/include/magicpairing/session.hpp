#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "magicpairing/bytes.hpp"
#include "magicpairing/codec.hpp"
#include "magicpairing/keystore.hpp"

namespace magicpairing::session {

/// Behavior switches spanning the hardened preset (all mitigations on)
/// and the flawed-emulation preset (reproduces the published bug classes
/// as structured fault reports).
struct PolicyConfig {
  /// Off: handlers dereference absent key-table lookups (unknown-peer
  /// crash emulation for Hint and Ratcheting messages).
  bool lookup_checked = true;

  /// Largest accepted forward jump of the peer's ratchet value.
  std::uint32_t max_ratchet_delta = 1024;

  /// On: the rotated (ratchet, key) pair is stored only after the AES-SIV
  /// payload authenticated. Off: committed before verification (lockout
  /// emulation).
  bool commit_on_verify = true;

  /// Hard cap on key rotations per incoming message. In flawed mode this
  /// is also the harness halt bound for the ratcheting-loop emulation:
  /// the loop executes exactly this many steps, then reports.
  std::uint64_t ratchet_budget_per_message = 1ull << 20;

  /// Accessory-side decline bound for the gap between its stored ratchet
  /// and the one a paired host presents. 0xffffffff disables the check
  /// (address-trusting responders have no such bound).
  std::uint32_t accessory_ratchet_discrepancy_threshold = 8;

  /// On: a buffer-overrunning parse error terminates the endpoint
  /// (reported as an Abort fault) instead of returning a decode error.
  bool parse_abort = false;

  /// On: a zero-length frame faults the frame handler (accessory
  /// firmware emulation). Off: empty frames are ignored gracefully.
  bool empty_frame_fault = false;

  static PolicyConfig hardened() { return PolicyConfig{}; }

  static PolicyConfig flawed() {
    PolicyConfig p;
    p.lookup_checked = false;
    p.max_ratchet_delta = 0xffffffff;
    p.commit_on_verify = false;
    p.accessory_ratchet_discrepancy_threshold = 0xffffffff;
    p.parse_abort = true;
    p.empty_frame_fault = true;
    return p;
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

enum class Role : std::uint8_t { Host, Accessory };

enum class SessionState : std::uint8_t {
  Idle,
  AwaitHint,     // accessory sent Ping
  AwaitRatchet,  // host sent Hint
  AwaitAesSiv,   // accessory sent RatchetAesSiv
  AwaitStatus,   // host sent AesSiv
  Complete,
  Failed,
};

const char* to_string(SessionState s);

enum class Outcome : std::uint8_t { Accepted, Rejected, Fault };

const char* to_string(Outcome o);

/// One record per processed message; doubles as the fuzzers' coverage
/// signal.
struct TraceEvent {
  SessionState state;     // state the message arrived in
  std::uint8_t msg_type;  // 0xff when no header byte was decodable
  Outcome outcome;

  friend auto operator<=>(const TraceEvent&, const TraceEvent&) = default;
};

enum class FaultKind : std::uint8_t {
  InvalidAccess,       // absent lookup dereferenced / zero-length frame
  Abort,               // parser assertion terminated the endpoint
  RatchetLoopEngaged,  // unbounded ratchet catch-up
  LockoutCommitted,    // ratchet stored although verification failed
};

const char* to_string(FaultKind k);

/// Emulated fault. Always a report value; the process never actually
/// faults, so campaigns stay in-process and measurable.
struct FaultReport {
  FaultKind kind;
  std::string detail;

  friend bool operator==(const FaultReport&, const FaultReport&) = default;
};

struct SessionOutput {
  std::vector<codec::MagicPairingMessage> messages_to_send;
  std::optional<Key16> derived_link_key;
  std::optional<FaultReport> fault;
  /// Key rotations performed while handling this message.
  std::uint64_t ratchet_steps = 0;
};

enum class LookupMode : std::uint8_t {
  Address,    // trust the connection's address (host-stack behavior)
  HintEntry,  // resolve the hint carried in the Hint message
};

/// Per-call dependencies; the session itself holds only protocol state.
struct SessionDeps {
  keystore::Keystore& keystore;
  const PolicyConfig& policy;
  EntropySource& entropy;
  LookupMode lookup = LookupMode::Address;
};

/// One side of a pairing run. Strictly single-threaded; distinct sessions
/// may live on distinct threads.
class PairingSession {
 public:
  PairingSession(Role role, const BdAddr& own_addr, const BdAddr& peer_addr);

  /// Active initiation: emits the Hint message and waits for the peer's
  /// Ratcheting reply. Derives a record on the fly when credentials exist;
  /// with neither record nor credentials the session fails with an
  /// unknown-device status.
  static std::pair<PairingSession, SessionOutput> start_host(
      SessionDeps deps, const BdAddr& own_addr, const BdAddr& peer_addr);

  /// Accessory-side initiation: emits a Ping to solicit the peer's Hint.
  static std::pair<PairingSession, SessionOutput> start_accessory(
      const BdAddr& own_addr, const BdAddr& peer_addr);

  /// Single dispatch entry; also the fuzzers' target. Appends exactly one
  /// trace event per call.
  SessionOutput step(const codec::MessageResult& incoming, SessionDeps deps);

  // Named reception handlers; step() routes to these. Each appends one
  // trace event.
  SessionOutput handle_ping(const codec::PingMsg& msg, SessionDeps deps);
  SessionOutput accessory_handle_hint(const codec::HintMsg& msg, SessionDeps deps);
  SessionOutput host_handle_ratchet_aes_siv(const codec::RatchetAesSivMsg& msg,
                                            SessionDeps deps);
  SessionOutput accessory_handle_aes_siv(const codec::AesSivMsg& msg,
                                         SessionDeps deps);
  SessionOutput host_handle_status(const codec::StatusMsg& msg, SessionDeps deps);

  Role role() const { return role_; }
  SessionState state() const { return state_; }
  const BdAddr& own_addr() const { return own_addr_; }
  const BdAddr& peer_addr() const { return peer_addr_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::optional<Key16>& link_key() const { return link_key_; }
  const Key16& nonce_host() const { return nonce_host_; }
  RatchetCounter working_ratchet() const { return working_ratchet_; }
  /// Status code that failed the session, when one was received.
  std::optional<std::uint8_t> failure_status() const { return failure_status_; }
  /// Why the last message was turned down (empty when none was).
  const std::string& last_reject_reason() const { return last_reject_reason_; }

 private:
  struct Handled {
    SessionOutput out;
    Outcome outcome = Outcome::Rejected;
  };

  Handled ping_impl(const codec::PingMsg& msg, SessionDeps deps);
  Handled hint_impl(const codec::HintMsg& msg, SessionDeps deps);
  Handled ratchet_aes_siv_impl(const codec::RatchetAesSivMsg& msg,
                               SessionDeps deps);
  Handled aes_siv_impl(const codec::AesSivMsg& msg, SessionDeps deps);
  Handled status_impl(const codec::StatusMsg& msg, SessionDeps deps);

  Handled begin_host_flow(const keystore::AccessoryKeyRecord& rec,
                          SessionDeps deps);
  SessionOutput finish(SessionState arrived_in, std::uint8_t msg_type,
                       Handled&& handled);

  bool active() const {
    return state_ == SessionState::AwaitHint ||
           state_ == SessionState::AwaitRatchet ||
           state_ == SessionState::AwaitAesSiv ||
           state_ == SessionState::AwaitStatus;
  }

  Role role_;
  SessionState state_ = SessionState::Idle;
  BdAddr own_addr_{};
  BdAddr peer_addr_{};
  BdAddr record_addr_{};  // key of the record this session operates on
  Key16 nonce_host_{};
  Key16 rand_host_{};
  Key16 rand_acc_{};
  Key16 hint_{};
  Key16 working_acc_key_{};
  RatchetCounter working_ratchet_ = 0;
  SivKey siv_key_{};
  std::optional<Key16> link_key_;
  std::optional<std::uint8_t> failure_status_;
  std::string last_reject_reason_;
  std::vector<TraceEvent> trace_;
};

struct PeerConfig {
  BdAddr own_addr{};
  PolicyConfig policy;
  LookupMode lookup = LookupMode::Address;
  std::uint64_t entropy_seed = 0;
  std::uint16_t channel_id = 0x0030;
};

/// A device endpoint driving sessions over frames: decodes each incoming
/// frame, instantiates a session on the first message (Hint opens the
/// accessory role, anything else the host role), and reports the frames
/// to send back plus its valid/invalid verdict for the transport.
class PeerDevice {
 public:
  PeerDevice(keystore::Keystore& ks, const PeerConfig& cfg);

  struct FrameOutput {
    std::vector<codec::L2capFrame> replies;
    bool invalid = false;
    std::vector<TraceEvent> events;
    std::optional<FaultReport> fault;
    std::optional<Key16> link_key;
    std::uint64_t ratchet_steps = 0;
  };

  /// Sets the peer address this connection is attributed to (the spoofable
  /// link-layer identity).
  void connect_from(const BdAddr& peer);

  /// Drops the in-flight session, as after a link reset.
  void reset_session();

  FrameOutput handle_frame(const codec::L2capFrame& frame);

  /// Host-side initiation against the connected peer.
  SessionOutput start_pairing();

  codec::L2capFrame wrap(const codec::MagicPairingMessage& msg) const;

  const std::optional<PairingSession>& session() const { return session_; }
  PairingSession* mutable_session() { return session_ ? &*session_ : nullptr; }
  const std::vector<FaultReport>& faults() const { return faults_; }
  keystore::Keystore& keystore() { return ks_; }
  const PeerConfig& config() const { return cfg_; }
  EntropySource& entropy() { return entropy_; }

 private:
  SessionDeps deps() {
    return SessionDeps{ks_, cfg_.policy, entropy_, cfg_.lookup};
  }

  keystore::Keystore& ks_;
  PeerConfig cfg_;
  EntropySource entropy_;
  BdAddr peer_addr_{};
  std::optional<PairingSession> session_;
  std::vector<FaultReport> faults_;
};

}  // namespace magicpairing::session
