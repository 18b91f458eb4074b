#include "magicpairing/codec.hpp"

#include <sstream>
#include <stdexcept>

namespace magicpairing::codec {

namespace {

bool is_key_message_type(std::uint8_t t) {
  return t == kMsgHint || t == kMsgRatchetAesSiv || t == kMsgAesSiv;
}

std::optional<std::size_t> fixed_entry_length(std::uint8_t key_type) {
  switch (key_type) {
    case kKeyHint:
    case kKeyNonce:
      return 16;
    case kKeyRatchet:
      return 4;
    default:
      return std::nullopt;
  }
}

void check_entries(const std::vector<KeyEntry>& entries) {
  if (entries.empty())
    throw std::invalid_argument("key message needs at least one entry");
  if (entries.size() > 0xff)
    throw std::invalid_argument("entry count exceeds one byte");
  for (const KeyEntry& e : entries) {
    if (e.value.size() > 0xff)
      throw std::invalid_argument("entry value exceeds one byte length");
    if (auto fixed = fixed_entry_length(e.key_type);
        fixed && e.value.size() != *fixed)
      throw std::invalid_argument("typed entry has wrong length");
  }
}

void append_entries(Bytes& out, const std::vector<KeyEntry>& entries) {
  out.push_back(static_cast<std::uint8_t>(entries.size()));
  for (const KeyEntry& e : entries) {
    out.push_back(e.key_type);
    out.push_back(static_cast<std::uint8_t>(e.value.size()));
    out.insert(out.end(), e.value.begin(), e.value.end());
  }
}

const char* key_type_name(std::uint8_t t) {
  switch (t) {
    case kKeyHint: return "hint";
    case kKeyNonce: return "nonce";
    case kKeyRatchet: return "ratchet";
    case kKeyAesSiv: return "aessiv";
    default: return "opaque";
  }
}

}  // namespace

KeyEntry make_key_entry(KeyType type, std::span<const std::uint8_t> value) {
  return KeyEntry{type, Bytes(value.begin(), value.end())};
}

KeyEntry make_ratchet_entry(RatchetCounter value) {
  KeyEntry e;
  e.key_type = kKeyRatchet;
  e.value = {static_cast<std::uint8_t>(value),
             static_cast<std::uint8_t>(value >> 8),
             static_cast<std::uint8_t>(value >> 16),
             static_cast<std::uint8_t>(value >> 24)};
  return e;
}

std::optional<RatchetCounter> read_ratchet_entry(const KeyEntry& entry) {
  if (entry.key_type != kKeyRatchet || entry.value.size() != 4)
    return std::nullopt;
  return static_cast<RatchetCounter>(entry.value[0]) |
         static_cast<RatchetCounter>(entry.value[1]) << 8 |
         static_cast<RatchetCounter>(entry.value[2]) << 16 |
         static_cast<RatchetCounter>(entry.value[3]) << 24;
}

std::uint8_t MagicPairingMessage::type_code() const {
  struct Visitor {
    std::uint8_t operator()(const PingMsg&) const { return kMsgPing; }
    std::uint8_t operator()(const StatusMsg&) const { return kMsgStatus; }
    std::uint8_t operator()(const HintMsg&) const { return kMsgHint; }
    std::uint8_t operator()(const RatchetAesSivMsg&) const { return kMsgRatchetAesSiv; }
    std::uint8_t operator()(const AesSivMsg&) const { return kMsgAesSiv; }
    std::uint8_t operator()(const RatchetUnusedMsg&) const { return kMsgRatchetUnused; }
    std::uint8_t operator()(const OpaqueMsg& m) const { return m.msg_type; }
  };
  return std::visit(Visitor{}, body);
}

MagicPairingMessage make_ping(std::uint8_t data) {
  return MagicPairingMessage{0x00, PingMsg{data}};
}

MagicPairingMessage make_status(std::uint8_t code) {
  return MagicPairingMessage{0x00, StatusMsg{code}};
}

MagicPairingMessage make_hint(const Key16& hint, const Key16& nonce,
                              RatchetCounter ratchet) {
  HintMsg m;
  m.entries.push_back(make_key_entry(kKeyHint, hint));
  m.entries.push_back(make_key_entry(kKeyNonce, nonce));
  m.entries.push_back(make_ratchet_entry(ratchet));
  return MagicPairingMessage{0x00, std::move(m)};
}

MagicPairingMessage make_ratchet_aes_siv(RatchetCounter ratchet,
                                         std::span<const std::uint8_t> aes_siv) {
  RatchetAesSivMsg m;
  m.entries.push_back(make_ratchet_entry(ratchet));
  m.entries.push_back(make_key_entry(kKeyAesSiv, aes_siv));
  return MagicPairingMessage{0x00, std::move(m)};
}

MagicPairingMessage make_aes_siv(std::span<const std::uint8_t> aes_siv) {
  AesSivMsg m;
  m.entries.push_back(make_key_entry(kKeyAesSiv, aes_siv));
  return MagicPairingMessage{0x00, std::move(m)};
}

Bytes encode_message(const MagicPairingMessage& msg) {
  Bytes out;
  out.push_back(msg.type_code());
  out.push_back(msg.version);

  struct Visitor {
    Bytes& out;
    void operator()(const PingMsg& m) { out.push_back(m.data); }
    void operator()(const StatusMsg& m) { out.push_back(m.code); }
    void operator()(const HintMsg& m) {
      check_entries(m.entries);
      append_entries(out, m.entries);
    }
    void operator()(const RatchetAesSivMsg& m) {
      check_entries(m.entries);
      append_entries(out, m.entries);
    }
    void operator()(const AesSivMsg& m) {
      check_entries(m.entries);
      append_entries(out, m.entries);
    }
    void operator()(const RatchetUnusedMsg& m) {
      out.insert(out.end(), m.raw.begin(), m.raw.end());
    }
    void operator()(const OpaqueMsg& m) {
      out.insert(out.end(), m.raw.begin(), m.raw.end());
    }
  };
  std::visit(Visitor{out}, msg.body);
  return out;
}

MessageResult decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.empty())
    return DecodeError{DecodeError::Kind::Truncated, 0, std::nullopt};
  std::uint8_t type = bytes[0];
  if (bytes.size() < 2)
    return DecodeError{DecodeError::Kind::Truncated, 1, type};
  std::uint8_t version = bytes[1];
  std::span<const std::uint8_t> rest = bytes.subspan(2);

  if (type == kMsgPing || type == kMsgStatus) {
    if (rest.empty())
      return DecodeError{DecodeError::Kind::Truncated, 2, type};
    if (rest.size() > 1)
      return DecodeError{DecodeError::Kind::TrailingBytes, 3, type};
    if (type == kMsgPing)
      return MagicPairingMessage{version, PingMsg{rest[0]}};
    return MagicPairingMessage{version, StatusMsg{rest[0]}};
  }

  if (is_key_message_type(type)) {
    if (rest.empty())
      return DecodeError{DecodeError::Kind::Truncated, 2, type};
    std::uint8_t count = rest[0];
    std::size_t pos = 3;  // absolute offset of the first entry
    std::span<const std::uint8_t> cursor = rest.subspan(1);
    std::vector<KeyEntry> entries;
    entries.reserve(count);
    for (std::uint8_t i = 0; i < count; ++i) {
      if (cursor.size() < 2)
        return DecodeError{DecodeError::Kind::Truncated, pos, type};
      std::uint8_t key_type = cursor[0];
      std::size_t len = cursor[1];
      if (cursor.size() - 2 < len)
        return DecodeError{DecodeError::Kind::Overflow, pos + 2, type};
      entries.push_back(
          KeyEntry{key_type, Bytes(cursor.begin() + 2, cursor.begin() + 2 +
                                                           static_cast<std::ptrdiff_t>(len))});
      cursor = cursor.subspan(2 + len);
      pos += 2 + len;
    }
    if (!cursor.empty())
      return DecodeError{DecodeError::Kind::TrailingBytes, pos, type};
    if (entries.empty())
      return DecodeError{DecodeError::Kind::Truncated, 2, type};
    if (type == kMsgHint)
      return MagicPairingMessage{version, HintMsg{std::move(entries)}};
    if (type == kMsgRatchetAesSiv)
      return MagicPairingMessage{version, RatchetAesSivMsg{std::move(entries)}};
    return MagicPairingMessage{version, AesSivMsg{std::move(entries)}};
  }

  if (type == kMsgRatchetUnused)
    return MagicPairingMessage{version,
                               RatchetUnusedMsg{Bytes(rest.begin(), rest.end())}};

  return MagicPairingMessage{version,
                             OpaqueMsg{type, Bytes(rest.begin(), rest.end())}};
}

std::string DecodeError::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Truncated: os << "truncated"; break;
    case Kind::Overflow: os << "entry length overflows buffer"; break;
    case Kind::TrailingBytes: os << "count/entry mismatch"; break;
    case Kind::LengthMismatch: os << "frame length mismatch"; break;
  }
  os << " at offset " << offset;
  return os.str();
}

Bytes encode_frame(const L2capFrame& frame) {
  if (frame.payload.size() > 0xffff)
    throw std::invalid_argument("frame payload exceeds 16-bit length");
  Bytes out;
  out.reserve(4 + frame.payload.size());
  auto len = static_cast<std::uint16_t>(frame.payload.size());
  out.push_back(static_cast<std::uint8_t>(len));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.channel_id));
  out.push_back(static_cast<std::uint8_t>(frame.channel_id >> 8));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

FrameResult decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4)
    return DecodeError{DecodeError::Kind::Truncated, bytes.size(), std::nullopt};
  std::uint16_t len = static_cast<std::uint16_t>(bytes[0]) |
                      static_cast<std::uint16_t>(bytes[1]) << 8;
  std::uint16_t cid = static_cast<std::uint16_t>(bytes[2]) |
                      static_cast<std::uint16_t>(bytes[3]) << 8;
  if (bytes.size() - 4 != len)
    return DecodeError{DecodeError::Kind::LengthMismatch, 4, std::nullopt};
  return L2capFrame{cid, Bytes(bytes.begin() + 4, bytes.end())};
}

std::string describe_message(const MagicPairingMessage& msg) {
  std::ostringstream os;
  struct Visitor {
    std::ostringstream& os;
    void operator()(const PingMsg& m) {
      os << "Ping data=" << to_hex(std::span(&m.data, 1));
    }
    void operator()(const StatusMsg& m) {
      os << "Status code=" << to_hex(std::span(&m.code, 1));
      switch (m.code) {
        case kStatusSuccess: os << " (success)"; break;
        case kStatusUnknownDevice: os << " (unknown-device)"; break;
        case kStatusInternalError: os << " (internal-error)"; break;
        default: os << " (reserved)"; break;
      }
    }
    void print_entries(const char* name, const std::vector<KeyEntry>& entries) {
      os << name;
      for (const KeyEntry& e : entries)
        os << ' ' << key_type_name(e.key_type) << '[' << e.value.size()
           << "]=" << to_hex(e.value);
    }
    void operator()(const HintMsg& m) { print_entries("Hint", m.entries); }
    void operator()(const RatchetAesSivMsg& m) {
      print_entries("RatchetAesSiv", m.entries);
    }
    void operator()(const AesSivMsg& m) { print_entries("AesSiv", m.entries); }
    void operator()(const RatchetUnusedMsg& m) {
      os << "RatchetUnused raw=" << to_hex(m.raw);
    }
    void operator()(const OpaqueMsg& m) {
      os << "Opaque type=" << to_hex(std::span(&m.msg_type, 1))
         << " raw=" << to_hex(m.raw);
    }
  };
  std::visit(Visitor{os}, msg.body);
  if (msg.version != 0)
    os << " version=" << to_hex(std::span(&msg.version, 1));
  return os.str();
}

}  // namespace magicpairing::codec
