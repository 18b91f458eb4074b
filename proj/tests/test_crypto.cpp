#include <doctest.h>

#include <cstring>

#include "magicpairing/crypto.hpp"
#include "ref_aes.hpp"
#include "ref_kdf.hpp"
#include "ref_siv.hpp"

using namespace magicpairing;

namespace {

Key16 key16(const char* hex) { return *array_from_hex<16>(hex); }

BdAddr addr(const char* text) { return *parse_addr(text); }

oracle::Block to_oracle(const Key16& k) {
  oracle::Block b;
  std::copy(k.begin(), k.end(), b.begin());
  return b;
}

Key16 from_oracle(const oracle::Block& b) {
  Key16 k;
  std::copy(b.begin(), b.end(), k.begin());
  return k;
}

}  // namespace

TEST_CASE("aes_encrypt_block matches the FIPS-197 vector") {
  Key16 key = key16("000102030405060708090a0b0c0d0e0f");
  Key16 pt = key16("00112233445566778899aabbccddeeff");
  Key16 ct = crypto::aes_encrypt_block(key, pt);
  CHECK(to_hex(ct) == "69c4e0d86a7b0430d8cdb78070b4c55a");
  // The reference oracle must agree on the same vector.
  CHECK(to_hex(from_oracle(oracle::aes128_encrypt(to_oracle(key), to_oracle(pt)))) ==
        "69c4e0d86a7b0430d8cdb78070b4c55a");
}

TEST_CASE("aes_encrypt_block on zero inputs agrees with the oracle") {
  Key16 zero{};
  Key16 ct = crypto::aes_encrypt_block(zero, zero);
  CHECK(ct == from_oracle(oracle::aes128_encrypt({}, {})));
  CHECK(to_hex(ct) == "66e94bd4ef8a2c3b884cfa59ca342b2e");
  CHECK(crypto::aes_encrypt_block(zero, zero) == ct);  // deterministic
}

TEST_CASE("aes oracle equivalence on random inputs") {
  EntropySource rng(101);
  for (int i = 0; i < 64; ++i) {
    Key16 key = rng.next_key16();
    Key16 pt = rng.next_key16();
    CHECK(crypto::aes_encrypt_block(key, pt) ==
          from_oracle(oracle::aes128_encrypt(to_oracle(key), to_oracle(pt))));
  }
}

TEST_CASE("address blob layout") {
  CHECK(to_hex(crypto::derive_address_blob(addr("00:00:00:00:00:00"))) ==
        "00000000000000000000000000000000");
  CHECK(to_hex(crypto::derive_address_blob(addr("01:02:03:04:05:06"))) ==
        "00060504030201030107010000000000");

  AddressBlob blob = crypto::derive_address_blob(addr("aa:aa:aa:aa:aa:aa"));
  for (int i = 1; i <= 6; ++i) CHECK(blob[i] == 0xaa);
  for (int i = 7; i <= 10; ++i) CHECK(blob[i] == 0x00);
}

TEST_CASE("address blob structure holds for random addresses") {
  EntropySource rng(7);
  for (int i = 0; i < 200; ++i) {
    BdAddr a = rng.next_addr();
    AddressBlob blob = crypto::derive_address_blob(a);
    CHECK(blob[0] == 0);
    for (int j = 11; j <= 15; ++j) CHECK(blob[j] == 0);
    // bytes 1..6 reverse-map to the address
    BdAddr recovered;
    for (int j = 0; j < 6; ++j) recovered[j] = blob[6 - j];
    CHECK(recovered == a);
    CHECK(blob == to_oracle(oracle::address_blob(a)));
  }
}

TEST_CASE("accessory key and hint derivations match the oracle") {
  EntropySource rng(11);
  Key16 master_key = rng.next_key16();
  Key16 master_hint = rng.next_key16();
  BdAddr a = addr("aa:bb:cc:dd:ee:01");
  BdAddr b = addr("aa:bb:cc:dd:ee:02");

  CHECK(crypto::derive_accessory_key(master_key, a) ==
        from_oracle(oracle::accessory_key(to_oracle(master_key), a)));
  CHECK(crypto::derive_accessory_hint(master_hint, a) ==
        from_oracle(oracle::accessory_hint(to_oracle(master_hint), a)));

  // distinct addresses give distinct keys; distinct hints for distinct
  // master hints
  CHECK(crypto::derive_accessory_key(master_key, a) !=
        crypto::derive_accessory_key(master_key, b));
  CHECK(crypto::derive_accessory_hint(master_key, a) ==
        crypto::derive_accessory_key(master_key, a));  // identical computation
  CHECK(crypto::derive_accessory_hint(master_hint, a) !=
        crypto::derive_accessory_hint(master_key, a));
}

TEST_CASE("ratchet_key basics") {
  EntropySource rng(13);
  Key16 k = rng.next_key16();
  CHECK(crypto::ratchet_key(k, 0) == k);
  CHECK(crypto::ratchet_key(k, 1) == crypto::aes_encrypt_block(k, Key16{}));
  CHECK(crypto::ratchet_key(k, 1000) ==
        from_oracle(oracle::ratchet(to_oracle(k), 1000)));
}

TEST_CASE("ratchet_key composes over step splits") {
  EntropySource rng(17);
  for (int i = 0; i < 24; ++i) {
    Key16 k = rng.next_key16();
    auto a = static_cast<std::uint32_t>(rng.below(1000));
    auto b = static_cast<std::uint32_t>(rng.below(1000));
    CHECK(crypto::ratchet_key(crypto::ratchet_key(k, a), b) ==
          crypto::ratchet_key(k, a + b));
  }
  // one split at the property bound
  Key16 k = rng.next_key16();
  CHECK(crypto::ratchet_key(crypto::ratchet_key(k, 40000), 25536) ==
        crypto::ratchet_key(k, 65536));
}

TEST_CASE("derive_siv_key splits the 32-byte constant blockwise") {
  EntropySource rng(19);
  Key16 acc = rng.next_key16();
  SivKey siv = crypto::derive_siv_key(acc);

  auto expected = oracle::siv_key(to_oracle(acc));
  CHECK(siv.auth_part == from_oracle(expected[0]));
  CHECK(siv.enc_part == from_oracle(expected[1]));
  CHECK(siv.auth_part != siv.enc_part);

  // Blockwise ECB over the full constant equals the two per-block
  // encryptions concatenated.
  const char* c = "bt_aessivauthentbt_aessivencrypt";
  Key16 block1, block2;
  std::memcpy(block1.data(), c, 16);
  std::memcpy(block2.data(), c + 16, 16);
  CHECK(siv.auth_part == crypto::aes_encrypt_block(acc, block1));
  CHECK(siv.enc_part == crypto::aes_encrypt_block(acc, block2));

  CHECK(crypto::derive_siv_key(rng.next_key16()).auth_part != siv.auth_part);
}

TEST_CASE("siv matches the RFC 5297 deterministic example") {
  SivKey key{key16("fffefdfcfbfaf9f8f7f6f5f4f3f2f1f0"),
             key16("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")};
  Bytes ad = *from_hex("101112131415161718191a1b1c1d1e1f2021222324252627");
  Bytes pt = *from_hex("112233445566778899aabbccddee");

  std::vector<Bytes> ads = {ad};
  Bytes out = crypto::siv_encrypt_ad(key, ads, pt);
  CHECK(to_hex(out) ==
        "85632d07c6e8f37f950acd320a2ecc93"
        "40c02b9690c4dc04daef7f6afe5c");

  auto back = crypto::siv_decrypt_ad(key, ads, out);
  REQUIRE(back);
  CHECK(*back.plaintext == pt);
}

TEST_CASE("siv zero-AD cross-checks against the independent oracle") {
  EntropySource rng(23);
  for (std::size_t len : {1u, 15u, 16u, 17u, 38u, 64u, 128u}) {
    SivKey key{rng.next_key16(), rng.next_key16()};
    Bytes pt = rng.next_bytes(len);
    Bytes mine = crypto::siv_encrypt(key, pt);
    oracle::Bytes theirs = oracle::siv_encrypt(
        to_oracle(key.auth_part), to_oracle(key.enc_part), {}, pt);
    CHECK(mine == Bytes(theirs.begin(), theirs.end()));
    CHECK(mine.size() == len + 16);
  }
}

TEST_CASE("siv empty-AD-component toggle matches the alternative reading") {
  EntropySource rng(29);
  SivKey key{rng.next_key16(), rng.next_key16()};
  Bytes pt = rng.next_bytes(20);
  crypto::SivOptions opts;
  opts.siv_empty_ad_component = true;
  Bytes mine = crypto::siv_encrypt(key, pt, opts);
  oracle::Bytes theirs = oracle::siv_encrypt(
      to_oracle(key.auth_part), to_oracle(key.enc_part), {oracle::Bytes{}}, pt);
  CHECK(mine == Bytes(theirs.begin(), theirs.end()));
  CHECK(mine != crypto::siv_encrypt(key, pt));
  auto back = crypto::siv_decrypt(key, mine, opts);
  REQUIRE(back);
  CHECK(*back.plaintext == pt);
}

TEST_CASE("siv round trip and corruption detection") {
  EntropySource rng(31);
  SivKey key{rng.next_key16(), rng.next_key16()};
  for (std::size_t len = 1; len <= 128; ++len) {
    Bytes pt = rng.next_bytes(len);
    Bytes ct = crypto::siv_encrypt(key, pt);
    auto back = crypto::siv_decrypt(key, ct);
    REQUIRE(back);
    CHECK(*back.plaintext == pt);

    // single flipped bit: authentication failure
    Bytes bad = ct;
    std::size_t bit = rng.below(bad.size() * 8);
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    auto rejected = crypto::siv_decrypt(key, bad);
    CHECK_FALSE(rejected);
    CHECK(rejected.error == crypto::SivError::AuthenticationFailure);
  }
}

TEST_CASE("siv rejects random and short ciphertexts") {
  EntropySource rng(37);
  SivKey key{rng.next_key16(), rng.next_key16()};
  for (int i = 0; i < 50; ++i) {
    Bytes junk = rng.next_bytes(54);
    CHECK_FALSE(crypto::siv_decrypt(key, junk));
  }
  auto short_ct = crypto::siv_decrypt(key, rng.next_bytes(16));
  CHECK_FALSE(short_ct);
  CHECK(short_ct.error == crypto::SivError::MalformedLength);
}

TEST_CASE("accessory field size: 38-byte plaintext gives 0x36 ciphertext") {
  EntropySource rng(41);
  SivKey key{rng.next_key16(), rng.next_key16()};
  Bytes ct = crypto::siv_encrypt(key, rng.next_bytes(38));
  CHECK(ct.size() == 0x36);
}

TEST_CASE("derive_link_key matches the oracle and is asymmetric") {
  Key16 a = key16("0102030405060708090a0b0c0d0e0f10");
  Key16 b = key16("ffeeddccbbaa99887766554433221100");
  CHECK(crypto::derive_link_key(a, b) ==
        from_oracle(oracle::link_key(to_oracle(a), to_oracle(b))));
  CHECK(crypto::derive_link_key(a, b) != crypto::derive_link_key(b, a));
  CHECK(crypto::derive_link_key(a, b) == crypto::derive_link_key(a, b));

  EntropySource rng(43);
  for (int i = 0; i < 32; ++i) {
    Key16 rh = rng.next_key16();
    Key16 ra = rng.next_key16();
    CHECK(crypto::derive_link_key(rh, ra) ==
          from_oracle(oracle::link_key(to_oracle(rh), to_oracle(ra))));
  }
}
