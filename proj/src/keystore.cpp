#include "magicpairing/keystore.hpp"

#include <fstream>
#include <sstream>

#include "magicpairing/crypto.hpp"

namespace magicpairing::keystore {

namespace {

constexpr char kVersionLine[] = "magicpair-keystore v1";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  std::string f;
  while (is >> f) fields.push_back(f);
  return fields;
}

}  // namespace

const MasterCredentials& Keystore::provision_master(EntropySource& entropy,
                                                    bool overwrite) {
  if (credentials_ && !overwrite)
    throw KeystoreError("master credentials already provisioned");
  MasterCredentials creds;
  creds.master_key = entropy.next_key16();
  creds.master_hint = entropy.next_key16();
  credentials_ = creds;
  return *credentials_;
}

const AccessoryKeyRecord& Keystore::create_record(const BdAddr& peer_addr) {
  if (!credentials_)
    throw KeystoreError("no master credentials provisioned");
  if (lookup_by_address(peer_addr))
    throw KeystoreError("record already exists for " + format_addr(peer_addr));
  AccessoryKeyRecord rec;
  rec.peer_addr = peer_addr;
  rec.acc_key = crypto::derive_accessory_key(credentials_->master_key, peer_addr);
  rec.acc_hint = crypto::derive_accessory_hint(credentials_->master_hint, peer_addr);
  rec.ratchet = 0;
  if (lookup_by_hint(rec.acc_hint))
    throw KeystoreError("hint collision for " + format_addr(peer_addr));
  records_.push_back(rec);
  return records_.back();
}

std::optional<AccessoryKeyRecord> Keystore::lookup_by_address(
    const BdAddr& addr) const {
  for (const auto& rec : records_)
    if (rec.peer_addr == addr) return rec;
  return std::nullopt;
}

std::optional<AccessoryKeyRecord> Keystore::lookup_by_hint(
    const Key16& hint) const {
  for (const auto& rec : records_)
    if (rec.acc_hint == hint) return rec;
  return std::nullopt;
}

Keystore::CommitResult Keystore::commit_ratchet(const BdAddr& peer_addr,
                                                RatchetCounter new_ratchet,
                                                const Key16& new_key) {
  for (auto& rec : records_) {
    if (rec.peer_addr != peer_addr) continue;
    if (new_ratchet < rec.ratchet) return CommitResult::Regression;
    rec.ratchet = new_ratchet;
    rec.acc_key = new_key;
    return CommitResult::Ok;
  }
  return CommitResult::UnknownPeer;
}

std::string Keystore::serialize() const {
  std::ostringstream os;
  os << kVersionLine << '\n';
  if (credentials_)
    os << "master " << to_hex(credentials_->master_key) << ' '
       << to_hex(credentials_->master_hint) << '\n';
  for (const auto& rec : records_)
    os << "acc " << format_addr(rec.peer_addr) << ' ' << to_hex(rec.acc_key)
       << ' ' << to_hex(rec.acc_hint) << ' ' << rec.ratchet << '\n';
  return os.str();
}

Keystore Keystore::deserialize(const std::string& text) {
  Keystore ks;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(is, line))
    throw KeystoreParseError("empty keystore file", 1);
  ++line_no;
  if (line != kVersionLine)
    throw KeystoreParseError("unsupported keystore version", line_no);

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields[0] == "master") {
      if (fields.size() != 3)
        throw KeystoreParseError("malformed master line", line_no);
      auto key = array_from_hex<16>(fields[1]);
      auto hint = array_from_hex<16>(fields[2]);
      if (!key || !hint)
        throw KeystoreParseError("malformed master key hex", line_no);
      if (ks.credentials_)
        throw KeystoreParseError("duplicate master line", line_no);
      ks.credentials_ = MasterCredentials{*key, *hint};
    } else if (fields[0] == "acc") {
      if (fields.size() != 5)
        throw KeystoreParseError("malformed record line", line_no);
      auto addr = parse_addr(fields[1]);
      auto key = array_from_hex<16>(fields[2]);
      auto hint = array_from_hex<16>(fields[3]);
      if (!addr || !key || !hint)
        throw KeystoreParseError("malformed record field", line_no);
      RatchetCounter ratchet = 0;
      try {
        unsigned long long v = std::stoull(fields[4]);
        if (v > 0xffffffffull) throw std::out_of_range("ratchet");
        ratchet = static_cast<RatchetCounter>(v);
      } catch (const std::exception&) {
        throw KeystoreParseError("malformed ratchet counter", line_no);
      }
      if (ks.lookup_by_address(*addr))
        throw KeystoreParseError("duplicate record address", line_no);
      if (ks.lookup_by_hint(*hint))
        throw KeystoreParseError("duplicate record hint", line_no);
      ks.records_.push_back(AccessoryKeyRecord{*addr, *key, *hint, ratchet});
    } else {
      throw KeystoreParseError("unknown line tag '" + fields[0] + "'", line_no);
    }
  }
  return ks;
}

void Keystore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw KeystoreError("cannot open " + path.string() + " for writing");
  out << serialize();
  if (!out) throw KeystoreError("write failed for " + path.string());
}

Keystore Keystore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KeystoreError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace magicpairing::keystore
