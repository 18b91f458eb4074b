#include "magicpairing/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace magicpairing::crypto {

namespace {

// Reusable single-block AES-128-ECB context. Rekeying in place keeps the
// ratchet loop from paying a context allocation per step.
class AesBlock {
 public:
  AesBlock() : ctx_(EVP_CIPHER_CTX_new()) {
    if (!ctx_) throw std::runtime_error("EVP_CIPHER_CTX_new failed");
  }

  explicit AesBlock(const Key16& key) : AesBlock() { rekey(key); }

  ~AesBlock() { EVP_CIPHER_CTX_free(ctx_); }

  AesBlock(const AesBlock&) = delete;
  AesBlock& operator=(const AesBlock&) = delete;

  void rekey(const Key16& key) {
    if (EVP_EncryptInit_ex(ctx_, EVP_aes_128_ecb(), nullptr, key.data(),
                           nullptr) != 1)
      throw std::runtime_error("EVP_EncryptInit_ex failed");
    EVP_CIPHER_CTX_set_padding(ctx_, 0);
  }

  Key16 encrypt(const Key16& block) {
    Key16 out;
    int len = 0;
    if (EVP_EncryptUpdate(ctx_, out.data(), &len, block.data(),
                          static_cast<int>(block.size())) != 1 ||
        len != 16)
      throw std::runtime_error("EVP_EncryptUpdate failed");
    return out;
  }

 private:
  EVP_CIPHER_CTX* ctx_;
};

Key16 xor16(const Key16& a, const Key16& b) {
  Key16 r;
  for (int i = 0; i < 16; ++i) r[i] = static_cast<std::uint8_t>(a[i] ^ b[i]);
  return r;
}

Key16 dbl(const Key16& in) {
  Key16 out{};
  std::uint8_t carry = 0;
  for (int i = 15; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>((in[i] << 1) | carry);
    carry = in[i] >> 7;
  }
  if (carry) out[15] ^= 0x87;
  return out;
}

Key16 pad_10star(std::span<const std::uint8_t> data) {
  Key16 out{};
  std::memcpy(out.data(), data.data(), data.size());
  out[data.size()] = 0x80;
  return out;
}

// RFC 4493 AES-CMAC.
Key16 aes_cmac(AesBlock& aes, std::span<const std::uint8_t> msg) {
  Key16 k1 = dbl(aes.encrypt(Key16{}));
  Key16 k2 = dbl(k1);

  std::size_t n = msg.size();
  std::size_t full = n == 0 ? 0 : (n - 1) / 16;
  Key16 x{};
  for (std::size_t b = 0; b < full; ++b) {
    Key16 m;
    std::memcpy(m.data(), msg.data() + 16 * b, 16);
    x = aes.encrypt(xor16(x, m));
  }
  std::size_t rest = n - 16 * full;
  Key16 last;
  if (n > 0 && rest == 16) {
    Key16 m;
    std::memcpy(m.data(), msg.data() + 16 * full, 16);
    last = xor16(m, k1);
  } else {
    last = xor16(pad_10star(msg.subspan(16 * full, rest)), k2);
  }
  return aes.encrypt(xor16(x, last));
}

// RFC 5297 S2V. `ads` may be empty; the plaintext is the final vector
// component.
Key16 s2v(AesBlock& aes, std::span<const Bytes> ads,
          std::span<const std::uint8_t> plaintext) {
  Key16 d = aes_cmac(aes, Key16{});
  for (const Bytes& ad : ads) d = xor16(dbl(d), aes_cmac(aes, ad));
  if (plaintext.size() >= 16) {
    Bytes t(plaintext.begin(), plaintext.end());
    std::size_t off = t.size() - 16;
    for (int i = 0; i < 16; ++i) t[off + i] ^= d[i];
    return aes_cmac(aes, t);
  }
  Key16 t = xor16(dbl(d), pad_10star(plaintext));
  return aes_cmac(aes, std::span<const std::uint8_t>(t.data(), 16));
}

// CTR keystream XOR with the synthetic IV's bits 31 and 63 cleared; the
// counter increments as one 128-bit big-endian integer.
void ctr_xor(AesBlock& aes, const Key16& iv, std::span<const std::uint8_t> in,
             std::uint8_t* out) {
  Key16 counter = iv;
  counter[8] &= 0x7f;
  counter[12] &= 0x7f;
  std::size_t done = 0;
  while (done < in.size()) {
    Key16 ks = aes.encrypt(counter);
    std::size_t chunk = std::min<std::size_t>(16, in.size() - done);
    for (std::size_t i = 0; i < chunk; ++i)
      out[done + i] = static_cast<std::uint8_t>(in[done + i] ^ ks[i]);
    done += chunk;
    for (int i = 15; i >= 0; --i) {
      if (++counter[i] != 0) break;
    }
  }
}

Key16 ascii_block(const char* s) {
  Key16 b;
  std::memcpy(b.data(), s, 16);
  return b;
}

bool equal_consttime(const Key16& a, const Key16& b) {
  std::uint8_t diff = 0;
  for (int i = 0; i < 16; ++i) diff |= static_cast<std::uint8_t>(a[i] ^ b[i]);
  return diff == 0;
}

}  // namespace

Key16 aes_encrypt_block(const Key16& key, const Key16& block) {
  AesBlock aes(key);
  return aes.encrypt(block);
}

AddressBlob derive_address_blob(const BdAddr& addr) {
  AddressBlob blob{};
  for (int i = 0; i < 6; ++i) blob[1 + i] = addr[5 - i];
  for (int i = 1; i <= 4; ++i)
    blob[6 + i] = static_cast<std::uint8_t>(addr[i] ^ addr[i - 1]);
  return blob;
}

Key16 derive_accessory_key(const Key16& master_key, const BdAddr& addr) {
  return aes_encrypt_block(master_key, derive_address_blob(addr));
}

Key16 derive_accessory_hint(const Key16& master_hint, const BdAddr& addr) {
  return aes_encrypt_block(master_hint, derive_address_blob(addr));
}

Key16 ratchet_key(const Key16& acc_key, std::uint32_t steps) {
  AesBlock aes;
  Key16 k = acc_key;
  const Key16 zero{};
  for (std::uint32_t i = 0; i < steps; ++i) {
    aes.rekey(k);
    k = aes.encrypt(zero);
  }
  return k;
}

SivKey derive_siv_key(const Key16& acc_key) {
  AesBlock aes(acc_key);
  return SivKey{aes.encrypt(ascii_block("bt_aessivauthent")),
                aes.encrypt(ascii_block("bt_aessivencrypt"))};
}

Bytes siv_encrypt_ad(const SivKey& key, std::span<const Bytes> associated_data,
                     std::span<const std::uint8_t> plaintext) {
  AesBlock auth(key.auth_part);
  Key16 v = s2v(auth, associated_data, plaintext);
  Bytes out(16 + plaintext.size());
  std::memcpy(out.data(), v.data(), 16);
  AesBlock enc(key.enc_part);
  ctr_xor(enc, v, plaintext, out.data() + 16);
  return out;
}

SivDecryptResult siv_decrypt_ad(const SivKey& key,
                                std::span<const Bytes> associated_data,
                                std::span<const std::uint8_t> ciphertext) {
  if (ciphertext.size() < 17)
    return {std::nullopt, SivError::MalformedLength};
  Key16 v;
  std::memcpy(v.data(), ciphertext.data(), 16);
  Bytes pt(ciphertext.size() - 16);
  AesBlock enc(key.enc_part);
  ctr_xor(enc, v, ciphertext.subspan(16), pt.data());
  AesBlock auth(key.auth_part);
  Key16 check = s2v(auth, associated_data, pt);
  if (!equal_consttime(check, v))
    return {std::nullopt, SivError::AuthenticationFailure};
  return {std::move(pt), SivError::AuthenticationFailure};
}

Bytes siv_encrypt(const SivKey& key, std::span<const std::uint8_t> plaintext,
                  SivOptions opts) {
  if (opts.siv_empty_ad_component) {
    const Bytes empty_ad[1] = {Bytes{}};
    return siv_encrypt_ad(key, empty_ad, plaintext);
  }
  return siv_encrypt_ad(key, {}, plaintext);
}

SivDecryptResult siv_decrypt(const SivKey& key,
                             std::span<const std::uint8_t> ciphertext,
                             SivOptions opts) {
  if (opts.siv_empty_ad_component) {
    const Bytes empty_ad[1] = {Bytes{}};
    return siv_decrypt_ad(key, empty_ad, ciphertext);
  }
  return siv_decrypt_ad(key, {}, ciphertext);
}

Key16 derive_link_key(const Key16& rand_host, const Key16& rand_acc) {
  Key16 pre1 = aes_encrypt_block(rand_host, rand_acc);
  Key16 pre2 = aes_encrypt_block(rand_acc, Key16{});
  return xor16(pre1, pre2);
}

}  // namespace magicpairing::crypto
