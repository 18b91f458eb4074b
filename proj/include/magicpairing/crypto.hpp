#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "magicpairing/bytes.hpp"

namespace magicpairing::crypto {

/// AES-128 single-block encryption of `block` under `key`. Pure and
/// deterministic; backed by a vetted primitive.
Key16 aes_encrypt_block(const Key16& key, const Key16& block);

/// Expands a 6-byte Bluetooth address into the 16-byte AES plaintext used
/// by the key and hint derivations:
///   blob[0]      = 0x00
///   blob[1..6]   = address reversed (addr[5] .. addr[0])
///   blob[7..10]  = addr[i] ^ addr[i-1] for i = 1..4
///   blob[11..15] = 0x00
AddressBlob derive_address_blob(const BdAddr& addr);

/// Per-peer chain key: AES(master_key, address blob).
Key16 derive_accessory_key(const Key16& master_key, const BdAddr& addr);

/// Per-peer identifier: AES(master_hint, address blob).
Key16 derive_accessory_hint(const Key16& master_hint, const BdAddr& addr);

/// One-way key rotation, applied `steps` times: k <- AES(k, 0^16).
Key16 ratchet_key(const Key16& acc_key, std::uint32_t steps);

/// Splits the 32-byte SIV key off the current chain key by ECB-encrypting
/// the two halves of "bt_aessivauthentbt_aessivencrypt".
SivKey derive_siv_key(const Key16& acc_key);

/// When set, S2V sees one empty associated-data component before the
/// plaintext instead of none; kept for interop experiments. The protocol
/// uses no nonce and no associated data.
struct SivOptions {
  bool siv_empty_ad_component = false;
};

/// RFC 5297 AES-SIV encryption with no associated data. Output is the
/// 16-byte synthetic IV followed by the ciphertext.
Bytes siv_encrypt(const SivKey& key, std::span<const std::uint8_t> plaintext,
                  SivOptions opts = {});

enum class SivError {
  AuthenticationFailure,  // synthetic IV did not verify
  MalformedLength,        // ciphertext shorter than 17 bytes
};

struct SivDecryptResult {
  std::optional<Bytes> plaintext;
  SivError error = SivError::AuthenticationFailure;

  explicit operator bool() const { return plaintext.has_value(); }
};

SivDecryptResult siv_decrypt(const SivKey& key,
                             std::span<const std::uint8_t> ciphertext,
                             SivOptions opts = {});

/// General RFC 5297 form with explicit associated-data components; the
/// protocol entry points above pass none.
Bytes siv_encrypt_ad(const SivKey& key,
                     std::span<const Bytes> associated_data,
                     std::span<const std::uint8_t> plaintext);
SivDecryptResult siv_decrypt_ad(const SivKey& key,
                                std::span<const Bytes> associated_data,
                                std::span<const std::uint8_t> ciphertext);

/// Link key: AES(rand_host, rand_acc) ^ AES(rand_acc, 0^16). The first
/// argument of each encryption is the AES key.
Key16 derive_link_key(const Key16& rand_host, const Key16& rand_acc);

}  // namespace magicpairing::crypto
