#pragma once

// Independent RFC 5297 AES-SIV (and the underlying AES-CMAC) used to
// cross-check the library implementation. Built only on ref_aes.

#include <cstdint>
#include <optional>
#include <vector>

#include "ref_aes.hpp"

namespace oracle {

using Bytes = std::vector<std::uint8_t>;

Block cmac(const Block& key, const Bytes& msg);

// S2V over the given component vector; the last component is the plaintext.
Block s2v(const Block& key, const std::vector<Bytes>& components);

// SIV encrypt with associated-data components `ads` (possibly empty).
// k1 keys S2V, k2 keys CTR. Output is IV || ciphertext.
Bytes siv_encrypt(const Block& k1, const Block& k2, const std::vector<Bytes>& ads,
                  const Bytes& plaintext);

std::optional<Bytes> siv_decrypt(const Block& k1, const Block& k2,
                                 const std::vector<Bytes>& ads, const Bytes& ct);

}  // namespace oracle
