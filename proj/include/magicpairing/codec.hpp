#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "magicpairing/bytes.hpp"

namespace magicpairing::codec {

// Wire type codes. The protocol names the message types; the numeric
// values are fixed here and nowhere else.
enum MsgType : std::uint8_t {
  kMsgPing = 0x01,
  kMsgStatus = 0x02,
  kMsgHint = 0x03,
  kMsgRatchetAesSiv = 0x04,
  kMsgAesSiv = 0x05,
  kMsgRatchetUnused = 0x06,
};

enum KeyType : std::uint8_t {
  kKeyHint = 0x01,    // 16 bytes
  kKeyNonce = 0x02,   // 16 bytes
  kKeyRatchet = 0x03, // 4 bytes, little-endian
  kKeyAesSiv = 0x04,  // variable
};

enum StatusCode : std::uint8_t {
  kStatusSuccess = 0x00,
  kStatusUnknownDevice = 0x01,
  kStatusInternalError = 0x02,
};

/// One TLV entry of a key message. Unknown key types are carried opaquely.
struct KeyEntry {
  std::uint8_t key_type = 0;
  Bytes value;

  friend bool operator==(const KeyEntry&, const KeyEntry&) = default;
};

KeyEntry make_key_entry(KeyType type, std::span<const std::uint8_t> value);
KeyEntry make_ratchet_entry(RatchetCounter value);
std::optional<RatchetCounter> read_ratchet_entry(const KeyEntry& entry);

struct PingMsg {
  std::uint8_t data = 0x00;
  friend bool operator==(const PingMsg&, const PingMsg&) = default;
};

struct StatusMsg {
  std::uint8_t code = kStatusSuccess;
  friend bool operator==(const StatusMsg&, const StatusMsg&) = default;
};

struct HintMsg {
  std::vector<KeyEntry> entries;
  friend bool operator==(const HintMsg&, const HintMsg&) = default;
};

struct RatchetAesSivMsg {
  std::vector<KeyEntry> entries;
  friend bool operator==(const RatchetAesSivMsg&, const RatchetAesSivMsg&) = default;
};

struct AesSivMsg {
  std::vector<KeyEntry> entries;
  friend bool operator==(const AesSivMsg&, const AesSivMsg&) = default;
};

/// Reception handler for this type is empty in the emulated stacks; the
/// payload is carried verbatim.
struct RatchetUnusedMsg {
  Bytes raw;
  friend bool operator==(const RatchetUnusedMsg&, const RatchetUnusedMsg&) = default;
};

/// Message with an unrecognized type byte; decoded opaquely, re-encoded
/// bit-exactly.
struct OpaqueMsg {
  std::uint8_t msg_type = 0;
  Bytes raw;
  friend bool operator==(const OpaqueMsg&, const OpaqueMsg&) = default;
};

struct MagicPairingMessage {
  std::uint8_t version = 0x00;  // canonical output; decoders accept any
  std::variant<PingMsg, StatusMsg, HintMsg, RatchetAesSivMsg, AesSivMsg,
               RatchetUnusedMsg, OpaqueMsg>
      body;

  std::uint8_t type_code() const;
  friend bool operator==(const MagicPairingMessage&, const MagicPairingMessage&) = default;
};

MagicPairingMessage make_ping(std::uint8_t data = 0x00);
MagicPairingMessage make_status(std::uint8_t code);
MagicPairingMessage make_hint(const Key16& hint, const Key16& nonce,
                              RatchetCounter ratchet);
MagicPairingMessage make_ratchet_aes_siv(RatchetCounter ratchet,
                                         std::span<const std::uint8_t> aes_siv);
MagicPairingMessage make_aes_siv(std::span<const std::uint8_t> aes_siv);

/// Decoding failure. Always a value; decoding never throws and never
/// reads past the input buffer.
struct DecodeError {
  enum class Kind {
    Truncated,       // input ended before a required field
    Overflow,        // a TLV entry declared more bytes than remain
    TrailingBytes,   // bytes left over after the declared entry count
    LengthMismatch,  // frame length field disagrees with the payload
  };

  Kind kind = Kind::Truncated;
  std::size_t offset = 0;                  // where decoding failed
  std::optional<std::uint8_t> msg_type;    // header type byte, if one was read

  std::string describe() const;
  friend bool operator==(const DecodeError&, const DecodeError&) = default;
};

using MessageResult = std::variant<MagicPairingMessage, DecodeError>;

/// Canonical serialization: header(2), then count(1) and TLV entries for
/// key messages, one data byte for short messages, raw payload otherwise.
/// Throws std::invalid_argument when a message invariant is violated
/// (more than 255 entries, oversized entry, wrong typed-entry length).
Bytes encode_message(const MagicPairingMessage& msg);

MessageResult decode_message(std::span<const std::uint8_t> bytes);

/// Simulated L2CAP frame; the length field is implicit in the payload.
struct L2capFrame {
  std::uint16_t channel_id = 0x0030;
  Bytes payload;

  friend bool operator==(const L2capFrame&, const L2capFrame&) = default;
};

using FrameResult = std::variant<L2capFrame, DecodeError>;

/// 4-byte little-endian header (length, channel id), then payload.
Bytes encode_frame(const L2capFrame& frame);

/// A frame with length zero and no payload decodes to a valid empty frame.
FrameResult decode_frame(std::span<const std::uint8_t> bytes);

std::string describe_message(const MagicPairingMessage& msg);

}  // namespace magicpairing::codec
