#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "magicpairing/bytes.hpp"

namespace magicpairing::keystore {

/// Per-account 16-byte root secrets.
struct MasterCredentials {
  Key16 master_key{};
  Key16 master_hint{};

  friend bool operator==(const MasterCredentials&, const MasterCredentials&) = default;
};

/// Per-peer chain key, identifier, and persisted ratchet position.
struct AccessoryKeyRecord {
  BdAddr peer_addr{};
  Key16 acc_key{};
  Key16 acc_hint{};
  RatchetCounter ratchet = 0;

  friend bool operator==(const AccessoryKeyRecord&, const AccessoryKeyRecord&) = default;
};

struct KeystoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parse failure when loading; carries the 1-based offending line.
struct KeystoreParseError : KeystoreError {
  KeystoreParseError(const std::string& what, std::size_t line)
      : KeystoreError(what + " (line " + std::to_string(line) + ")"),
        line_number(line) {}
  std::size_t line_number;
};

/// Aggregated per-device key state: optional master credentials plus the
/// accessory key table, unique per peer address and per hint. A keystore
/// instance is single-writer; whole instances may move across threads.
class Keystore {
 public:
  Keystore() = default;

  /// Draws two fresh 16-byte values. Throws KeystoreError when already
  /// provisioned and `overwrite` is not set.
  const MasterCredentials& provision_master(EntropySource& entropy,
                                            bool overwrite = false);

  const std::optional<MasterCredentials>& credentials() const {
    return credentials_;
  }

  /// Derives and inserts the record for `peer_addr` (ratchet starts at 0).
  /// Throws KeystoreError without credentials or on a duplicate address.
  const AccessoryKeyRecord& create_record(const BdAddr& peer_addr);

  /// Absence is a value; callers must handle it.
  std::optional<AccessoryKeyRecord> lookup_by_address(const BdAddr& addr) const;
  std::optional<AccessoryKeyRecord> lookup_by_hint(const Key16& hint) const;

  enum class CommitResult { Ok, UnknownPeer, Regression };

  /// Atomically replaces (ratchet, acc_key) for the peer; a ratchet lower
  /// than the stored one is rejected and leaves the record untouched.
  CommitResult commit_ratchet(const BdAddr& peer_addr, RatchetCounter new_ratchet,
                              const Key16& new_key);

  const std::vector<AccessoryKeyRecord>& records() const { return records_; }

  /// Line-oriented text format, version header "magicpair-keystore v1".
  void save(const std::filesystem::path& path) const;
  static Keystore load(const std::filesystem::path& path);

  std::string serialize() const;
  static Keystore deserialize(const std::string& text);

  friend bool operator==(const Keystore&, const Keystore&) = default;

 private:
  std::optional<MasterCredentials> credentials_;
  std::vector<AccessoryKeyRecord> records_;
};

}  // namespace magicpairing::keystore
