#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace magicpairing {

using Bytes = std::vector<std::uint8_t>;

/// 16-byte key material (master keys, hints, nonces, random values, link keys).
using Key16 = std::array<std::uint8_t, 16>;

/// Bluetooth device address; index 0 is the most significant printed octet.
using BdAddr = std::array<std::uint8_t, 6>;

/// 16-byte AES plaintext derived from a Bluetooth address.
using AddressBlob = std::array<std::uint8_t, 16>;

using RatchetCounter = std::uint32_t;

/// 32-byte AES-SIV key; the authentication half precedes the encryption
/// half in serialized form.
struct SivKey {
  Key16 auth_part{};
  Key16 enc_part{};

  friend bool operator==(const SivKey&, const SivKey&) = default;
};

// Lowercase hex without separators is the canonical textual rendering.
std::string to_hex(std::span<const std::uint8_t> data);
std::optional<Bytes> from_hex(std::string_view hex);

template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> array_from_hex(std::string_view hex) {
  auto raw = from_hex(hex);
  if (!raw || raw->size() != N) return std::nullopt;
  std::array<std::uint8_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = (*raw)[i];
  return out;
}

/// "aa:bb:cc:dd:ee:ff" rendering used by the keystore file format and CLI.
std::string format_addr(const BdAddr& addr);
std::optional<BdAddr> parse_addr(std::string_view text);

/// Deterministic random source. All randomness in the artifact flows
/// through this so campaigns, attacks, and pairings replay bit-exactly
/// from a seed. Draw order: key16 fills bytes 0..7 then 8..15 from two
/// engine outputs, little-endian.
class EntropySource {
 public:
  explicit EntropySource(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  std::uint8_t next_byte() { return static_cast<std::uint8_t>(engine_() & 0xff); }

  // Engine output reduced by modulo; std::uniform_int_distribution is
  // implementation-defined and would break cross-platform determinism.
  std::uint64_t below(std::uint64_t bound) { return bound ? engine_() % bound : 0; }

  Key16 next_key16() {
    Key16 k;
    fill(k.data(), 8, engine_());
    fill(k.data() + 8, 8, engine_());
    return k;
  }

  Bytes next_bytes(std::size_t n) {
    Bytes out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = next_byte();
    return out;
  }

  BdAddr next_addr() {
    BdAddr a;
    for (auto& b : a) b = next_byte();
    return a;
  }

 private:
  static void fill(std::uint8_t* dst, int n, std::uint64_t v) {
    for (int i = 0; i < n; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

  std::mt19937_64 engine_;
};

}  // namespace magicpairing
