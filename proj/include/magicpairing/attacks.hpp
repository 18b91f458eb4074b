#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "magicpairing/session.hpp"

namespace magicpairing::attacks {

enum class AttackId { MP1, MP2, MP3, MP4, MP5, MP6, MP7, MP8, L2CAP1 };

const char* to_string(AttackId id);
std::optional<AttackId> attack_from_string(std::string_view name);
const std::vector<AttackId>& all_attacks();

enum class FlawedOutcome { FaultReproduced, NotReproduced };
enum class HardenedOutcome { Mitigated, VulnerabilityPresent };

const char* to_string(FlawedOutcome o);
const char* to_string(HardenedOutcome o);

/// Result of one scripted reproduction: the same message script replayed
/// against a flawed-emulation target and a hardened target.
struct AttackVerdict {
  AttackId id = AttackId::MP1;
  FlawedOutcome against_flawed = FlawedOutcome::NotReproduced;
  HardenedOutcome against_hardened = HardenedOutcome::VulnerabilityPresent;
  /// Deterministic under a fixed seed; byte-identical across runs.
  std::vector<std::string> evidence;
  /// Informational timing (ratchet steps per second); excluded from the
  /// determinism guarantee.
  double measured_steps_per_second = 0.0;

  bool expected() const {
    return against_flawed == FlawedOutcome::FaultReproduced &&
           against_hardened == HardenedOutcome::Mitigated;
  }

  /// "<attack_id> flawed=<outcome> hardened=<outcome>"
  std::string serialize_line() const;
};

enum class UnknownPeerVariant {
  RatchetingCanonical,  // Ratchet entry first
  RatchetingSwapped,    // AES-SIV entry first
  HintMessage,
};

/// Ping, then the variant message, from an address the target has no
/// record for.
AttackVerdict attack_unknown_peer(AttackId id, UnknownPeerVariant variant,
                                  std::uint64_t seed);

/// Ratcheting message whose TLV declares more bytes than are present.
AttackVerdict attack_parse_abort(std::uint64_t seed);

/// Hint with the given ratchet value from a spoofed known address against
/// an address-trusting responder.
AttackVerdict attack_ratchet_loop(RatchetCounter ratchet_value,
                                  std::uint64_t seed);

/// Ping to read the ratchet, then a Ratcheting message with ratchet+delta
/// and a bogus AES-SIV value; afterwards a genuine re-pairing shows
/// whether the pairing survived.
AttackVerdict attack_lockout(std::uint32_t delta, std::uint64_t seed);

/// The 4-byte frame with length zero and no payload.
AttackVerdict attack_zero_length(std::uint64_t seed);

AttackVerdict run_attack(AttackId id, std::uint64_t seed);
std::vector<AttackVerdict> run_all(std::uint64_t seed);

}  // namespace magicpairing::attacks
