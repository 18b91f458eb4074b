#include "magicpairing/fuzz.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "magicpairing/harness.hpp"

namespace magicpairing::fuzz {

namespace {

using session::LookupMode;
using session::PairingSession;
using session::PeerConfig;
using session::PeerDevice;
using session::Role;
using session::SessionDeps;
using session::SessionState;

constexpr BdAddr kHostAddr = {0x10, 0x20, 0x30, 0x40, 0x50, 0x60};
constexpr BdAddr kAccessoryAddr = {0xa0, 0xb0, 0xc0, 0xd0, 0xe0, 0xf0};
constexpr BdAddr kFuzzerAddr = {0x0f, 0x0f, 0x0f, 0x0f, 0x0f, 0x0f};

constexpr std::uint64_t kCredsSeed = 0x6d616769637031;   // scenario credentials
constexpr std::uint64_t kHostEntropySeed = 0x686f7374;   // host-side draws
constexpr std::uint64_t kAccEntropySeed = 0x616363;      // accessory-side draws

CanonicalScenario build_canonical() {
  CanonicalScenario sc;
  sc.host_addr = kHostAddr;
  sc.accessory_addr = kAccessoryAddr;

  EntropySource creds1(kCredsSeed);
  sc.host_ks.provision_master(creds1);
  sc.host_ks.create_record(kAccessoryAddr);
  EntropySource creds2(kCredsSeed);
  sc.accessory_ks.provision_master(creds2);
  sc.accessory_ks.create_record(kAccessoryAddr);

  // One genuine handshake on scratch copies records the wire messages.
  keystore::Keystore hks = sc.host_ks;
  keystore::Keystore aks = sc.accessory_ks;
  EntropySource host_entropy(kHostEntropySeed);
  EntropySource acc_entropy(kAccEntropySeed);
  session::PolicyConfig policy;  // hardened

  SessionDeps host_deps{hks, policy, host_entropy, LookupMode::Address};
  SessionDeps acc_deps{aks, policy, acc_entropy, LookupMode::HintEntry};

  auto [host, host_out] =
      PairingSession::start_host(host_deps, kHostAddr, kAccessoryAddr);
  sc.hint_bytes = codec::encode_message(host_out.messages_to_send.front());

  PairingSession acc(Role::Accessory, kAccessoryAddr, kHostAddr);
  auto acc_out = acc.step(codec::decode_message(sc.hint_bytes), acc_deps);
  sc.ratchet_aes_siv_bytes =
      codec::encode_message(acc_out.messages_to_send.front());

  auto host_out2 =
      host.step(codec::decode_message(sc.ratchet_aes_siv_bytes), host_deps);
  sc.aes_siv_bytes = codec::encode_message(host_out2.messages_to_send.front());

  auto acc_out2 = acc.step(codec::decode_message(sc.aes_siv_bytes), acc_deps);
  sc.status_bytes = codec::encode_message(acc_out2.messages_to_send.front());

  sc.ping_bytes = codec::encode_message(codec::make_ping());
  sc.ratchet_unused_bytes = {codec::kMsgRatchetUnused, 0x00};
  return sc;
}

bool is_key_message_type(std::uint8_t t) {
  return t == codec::kMsgHint || t == codec::kMsgRatchetAesSiv ||
         t == codec::kMsgAesSiv;
}

}  // namespace

const CanonicalScenario& canonical_scenario() {
  static const CanonicalScenario sc = build_canonical();
  return sc;
}

Bytes generate_message(std::uint64_t seed) {
  constexpr int kClasses = 12;
  int cls = static_cast<int>(seed % kClasses);
  EntropySource rng(seed);

  auto random_hint = [&] {
    return codec::make_hint(rng.next_key16(), rng.next_key16(),
                            static_cast<RatchetCounter>(rng.next_u64()));
  };

  switch (cls) {
    case 0:
      return codec::encode_message(codec::make_ping(rng.next_byte()));
    case 1:
      return codec::encode_message(
          codec::make_status(static_cast<std::uint8_t>(rng.below(4))));
    case 2:
      return codec::encode_message(random_hint());
    case 3:
      return codec::encode_message(codec::make_ratchet_aes_siv(
          static_cast<RatchetCounter>(rng.next_u64()), rng.next_bytes(54)));
    case 4:
      return codec::encode_message(codec::make_aes_siv(rng.next_bytes(80)));
    case 5: {
      codec::RatchetUnusedMsg m{rng.next_bytes(rng.below(9))};
      return codec::encode_message(codec::MagicPairingMessage{0, std::move(m)});
    }
    case 6: {
      // TLV declaring more bytes than present.
      std::uint8_t type = static_cast<std::uint8_t>(
          codec::kMsgHint + rng.below(3));
      Bytes out = {type, 0x00, 0x01,
                   static_cast<std::uint8_t>(1 + rng.below(4)),
                   static_cast<std::uint8_t>(0x20 + rng.below(0xdf))};
      Bytes tail = rng.next_bytes(rng.below(4));
      out.insert(out.end(), tail.begin(), tail.end());
      return out;
    }
    case 7: {
      Bytes valid = codec::encode_message(random_hint());
      std::size_t cut = 1 + rng.below(valid.size() - 1);
      valid.resize(cut);
      return valid;
    }
    case 8: {
      Bytes valid = codec::encode_message(random_hint());
      valid[2] = static_cast<std::uint8_t>(valid[2] + 1 + rng.below(3));
      return valid;
    }
    case 9: {
      std::uint8_t type = static_cast<std::uint8_t>(0x07 + rng.below(0xf9));
      Bytes out = {type, static_cast<std::uint8_t>(rng.below(2))};
      Bytes tail = rng.next_bytes(rng.below(17));
      out.insert(out.end(), tail.begin(), tail.end());
      return out;
    }
    case 10:
      return rng.next_bytes(rng.below(64));
    case 11:
    default:
      return codec::encode_message(codec::make_hint(
          rng.next_key16(), rng.next_key16(),
          static_cast<RatchetCounter>(0xffffffff - rng.below(4))));
  }
}

Bytes mutate(std::span<const std::uint8_t> input, std::uint64_t seed) {
  Bytes out(input.begin(), input.end());
  if (out.empty()) return out;
  int op = static_cast<int>(seed % 6);
  EntropySource rng(seed);

  auto bit_flip = [&] {
    std::size_t bit = rng.below(out.size() * 8);
    out[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  };
  auto substitute = [&] { out[rng.below(out.size())] = rng.next_byte(); };

  switch (op) {
    case 0:
      bit_flip();
      break;
    case 1:
      substitute();
      break;
    case 2:
      out.resize(rng.below(out.size()));  // proper prefix
      break;
    case 3: {
      Bytes tail = rng.next_bytes(1 + rng.below(8));
      out.insert(out.end(), tail.begin(), tail.end());
      break;
    }
    case 4: {
      // TLV splice: duplicate one parseable entry at the end.
      if (out.size() >= 5 && is_key_message_type(out[0])) {
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        std::size_t pos = 3;
        while (pos + 2 <= out.size()) {
          std::size_t len = out[pos + 1];
          if (pos + 2 + len > out.size()) break;
          spans.emplace_back(pos, 2 + len);
          pos += 2 + len;
        }
        if (!spans.empty()) {
          auto [at, n] = spans[rng.below(spans.size())];
          Bytes dup(out.begin() + static_cast<std::ptrdiff_t>(at),
                    out.begin() + static_cast<std::ptrdiff_t>(at + n));
          out.insert(out.end(), dup.begin(), dup.end());
          out[2] = static_cast<std::uint8_t>(out[2] + 1);
          break;
        }
      }
      substitute();
      break;
    }
    case 5:
    default: {
      // Length-field rewrite on a random entry header.
      if (out.size() >= 5 && is_key_message_type(out[0])) {
        std::vector<std::size_t> len_offsets;
        std::size_t pos = 3;
        while (pos + 2 <= out.size()) {
          len_offsets.push_back(pos + 1);
          std::size_t len = out[pos + 1];
          if (pos + 2 + len > out.size()) break;
          pos += 2 + len;
        }
        if (!len_offsets.empty()) {
          out[len_offsets[rng.below(len_offsets.size())]] = rng.next_byte();
          break;
        }
      }
      bit_flip();
      break;
    }
  }
  return out;
}

Bytes fixup(std::span<const std::uint8_t> input) {
  Bytes out(input.begin(), input.end());
  if (out.size() < 3 || !is_key_message_type(out[0])) return out;

  std::size_t pos = 3;
  std::size_t entries = 0;
  while (pos + 2 <= out.size()) {
    std::size_t len = out[pos + 1];
    if (pos + 2 + len > out.size()) {
      out[pos + 1] = static_cast<std::uint8_t>(out.size() - pos - 2);
      len = out[pos + 1];
    }
    pos += 2 + len;
    ++entries;
  }
  if (pos < out.size()) out.resize(pos);  // dangling type byte
  if (entries <= 0xff) out[2] = static_cast<std::uint8_t>(entries);
  return out;
}

bool Corpus::add(Bytes entry) {
  if (!seen_.insert(entry).second) return false;
  entries_.push_back(std::move(entry));
  return true;
}

Corpus initial_corpus() {
  const CanonicalScenario& sc = canonical_scenario();
  Corpus corpus;
  corpus.add(sc.ping_bytes);
  corpus.add(sc.status_bytes);
  corpus.add(sc.hint_bytes);
  corpus.add(sc.ratchet_aes_siv_bytes);
  corpus.add(sc.aes_siv_bytes);
  corpus.add(sc.ratchet_unused_bytes);
  return corpus;
}

std::vector<SessionState> prepared_states(Role role) {
  if (role == Role::Host)
    return {SessionState::Idle, SessionState::AwaitRatchet,
            SessionState::AwaitStatus, SessionState::Complete};
  return {SessionState::Idle, SessionState::AwaitAesSiv, SessionState::Complete};
}

namespace {

struct PreparedTarget {
  keystore::Keystore ks;
  EntropySource entropy;
  PairingSession session;
  LookupMode lookup;
  const session::PolicyConfig* policy;

  SessionDeps deps() { return SessionDeps{ks, *policy, entropy, lookup}; }
};

PreparedTarget prepare(const MutationTarget& target, SessionState state) {
  const CanonicalScenario& sc = canonical_scenario();
  if (target.role == Role::Host) {
    PreparedTarget t{sc.host_ks, EntropySource(kHostEntropySeed),
                     PairingSession(Role::Host, sc.host_addr, sc.accessory_addr),
                     LookupMode::Address, &target.policy};
    if (state == SessionState::Idle) return t;
    auto deps = t.deps();
    auto [host, out] =
        PairingSession::start_host(deps, sc.host_addr, sc.accessory_addr);
    t.session = std::move(host);
    if (state == SessionState::AwaitRatchet) return t;
    t.session.step(codec::decode_message(sc.ratchet_aes_siv_bytes), t.deps());
    if (state == SessionState::AwaitStatus) return t;
    t.session.step(codec::decode_message(sc.status_bytes), t.deps());
    return t;  // Complete
  }

  PreparedTarget t{sc.accessory_ks, EntropySource(kAccEntropySeed),
                   PairingSession(Role::Accessory, sc.accessory_addr, sc.host_addr),
                   LookupMode::HintEntry, &target.policy};
  if (state == SessionState::Idle) return t;
  t.session.step(codec::decode_message(sc.hint_bytes), t.deps());
  if (state == SessionState::AwaitAesSiv) return t;
  t.session.step(codec::decode_message(sc.aes_siv_bytes), t.deps());
  return t;  // Complete
}

struct FindingDedup {
  std::set<std::tuple<session::FaultKind, SessionState, std::uint8_t>> seen;
  bool fresh(session::FaultKind kind, SessionState state, std::uint8_t msg) {
    return seen.insert({kind, state, msg}).second;
  }
};

}  // namespace

StepResult run_prepared_step(const MutationTarget& target, SessionState state,
                             const Bytes& input) {
  PreparedTarget t = prepare(target, state);
  auto deps = t.deps();
  auto out = t.session.step(codec::decode_message(input), deps);
  StepResult r;
  r.event = t.session.trace().back();
  r.fault = out.fault;
  r.ratchet_steps = out.ratchet_steps;
  return r;
}

bool FuzzCampaignReport::has_fault_kind(session::FaultKind kind) const {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const Finding& f) { return f.kind == kind; });
}

std::string FuzzCampaignReport::serialize_lines() const {
  std::ostringstream os;
  os << "fuzz-report mode=" << mode << " iterations=" << iterations
     << " seed=" << seed << '\n';
  for (const auto& [iter, size] : coverage_growth)
    os << "coverage " << iter << ' ' << size << '\n';
  for (const Finding& f : findings)
    os << "finding " << f.index << " iter=" << f.iteration
       << " kind=" << session::to_string(f.kind)
       << " state=" << session::to_string(f.state) << " msg=0x" << std::hex
       << static_cast<int>(f.msg_type) << std::dec
       << " input=" << to_hex(f.input) << '\n';
  os << "reconnects " << reconnects << '\n';
  os << "fixups " << fixups << '\n';
  os << "corpus " << corpus_size << '\n';
  os << "findings " << findings.size() << '\n';
  return os.str();
}

void FuzzCampaignReport::write_findings_dir(
    const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const Finding& f : findings) {
    std::ofstream out(dir / std::to_string(f.index), std::ios::binary);
    out.write(reinterpret_cast<const char*>(f.input.data()),
              static_cast<std::streamsize>(f.input.size()));
  }
}

FuzzCampaignReport run_generation_campaign(const GenerationTarget& target,
                                           std::size_t iterations,
                                           std::uint64_t seed) {
  FuzzCampaignReport report;
  report.mode = "generation";
  report.iterations = iterations;
  report.seed = seed;

  const CanonicalScenario& sc = canonical_scenario();
  PeerConfig cfg;
  cfg.own_addr = sc.host_addr;
  cfg.policy = target.policy;
  cfg.lookup = LookupMode::Address;
  cfg.entropy_seed = kHostEntropySeed;
  harness::TargetHarness device(sc.host_ks, cfg, kFuzzerAddr);

  EntropySource rng(seed);
  CoverageSet coverage;
  FindingDedup dedup;

  for (std::size_t i = 0; i < iterations; ++i) {
    std::uint64_t draw = rng.next_u64();
    std::uint64_t shape = draw % 100;
    codec::L2capFrame frame;
    frame.channel_id = cfg.channel_id;
    if (shape < 2) {
      // zero-length probe
    } else if (shape < 4) {
      frame.channel_id = 0x0002;
      frame.payload = {0x00};
    } else {
      frame.payload = generate_message(rng.next_u64());
    }

    auto reply = device.send_frame(frame);
    for (const auto& e : reply.events)
      if (coverage.add(e)) report.coverage_growth.emplace_back(i, coverage.size());
    if (reply.fault) {
      SessionState st = reply.events.empty() ? SessionState::Idle
                                             : reply.events.back().state;
      std::uint8_t msg = reply.events.empty()
                             ? (frame.payload.empty() ? 0x00 : frame.payload[0])
                             : reply.events.back().msg_type;
      if (dedup.fresh(reply.fault->kind, st, msg)) {
        Finding f;
        f.index = report.findings.size();
        f.iteration = i;
        f.kind = reply.fault->kind;
        f.state = st;
        f.msg_type = msg;
        f.input = codec::encode_frame(frame);
        report.findings.push_back(std::move(f));
      }
      // A crashed endpoint and a terminated connection are
      // indistinguishable; start over either way.
      device.reconnect();
      ++report.reconnects;
    } else if (reply.disconnected) {
      device.reconnect();
      ++report.reconnects;
    }
  }
  report.corpus_size = 0;
  return report;
}

FuzzCampaignReport run_mutation_campaign(const MutationTarget& target,
                                         Corpus corpus, std::size_t iterations,
                                         std::uint64_t seed) {
  FuzzCampaignReport report;
  report.mode = "mutation";
  report.iterations = iterations;
  report.seed = seed;

  CoverageSet coverage;
  FindingDedup dedup;
  const auto states = prepared_states(target.role);

  auto record = [&](std::size_t iteration, const Bytes& input,
                    SessionState state, const StepResult& result) {
    if (coverage.add(result.event)) {
      report.coverage_growth.emplace_back(iteration, coverage.size());
      corpus.add(input);
    }
    if (result.fault &&
        dedup.fresh(result.fault->kind, result.event.state,
                    result.event.msg_type)) {
      Finding f;
      f.index = report.findings.size();
      f.iteration = iteration;
      f.kind = result.fault->kind;
      f.state = state;
      f.msg_type = result.event.msg_type;
      f.input = input;
      report.findings.push_back(std::move(f));
    }
  };

  // Initial coverage: the seed corpus against every prepared state.
  std::size_t initial = corpus.size();
  for (std::size_t e = 0; e < initial; ++e)
    for (SessionState st : states)
      record(0, corpus.entries()[e], st,
             run_prepared_step(target, st, corpus.entries()[e]));

  EntropySource rng(seed);
  for (std::size_t i = 1; i <= iterations; ++i) {
    const Bytes& base = corpus.entries()[rng.below(corpus.size())];
    SessionState st = states[rng.below(states.size())];
    Bytes mutated = mutate(base, rng.next_u64());
    Bytes fixed = fixup(mutated);
    if (fixed != mutated) ++report.fixups;  // repaired input is what runs
    if (fixed.empty()) continue;
    record(i, fixed, st, run_prepared_step(target, st, fixed));
  }
  report.corpus_size = corpus.size();
  return report;
}

bool replay_mutation_finding(const MutationTarget& target,
                             const Finding& finding) {
  StepResult r = run_prepared_step(target, finding.state, finding.input);
  return r.fault && r.fault->kind == finding.kind;
}

bool replay_generation_finding(const GenerationTarget& target,
                               const Finding& finding) {
  const CanonicalScenario& sc = canonical_scenario();
  PeerConfig cfg;
  cfg.own_addr = sc.host_addr;
  cfg.policy = target.policy;
  cfg.lookup = LookupMode::Address;
  cfg.entropy_seed = kHostEntropySeed;
  harness::TargetHarness device(sc.host_ks, cfg, kFuzzerAddr);

  auto decoded = codec::decode_frame(finding.input);
  const auto* frame = std::get_if<codec::L2capFrame>(&decoded);
  if (!frame) return false;
  auto reply = device.send_frame(*frame);
  return reply.fault && reply.fault->kind == finding.kind;
}

bool replay_finding_over_transport(const session::PolicyConfig& policy,
                                   const Finding& finding) {
  const CanonicalScenario& sc = canonical_scenario();
  PeerConfig cfg;
  cfg.own_addr = sc.host_addr;
  cfg.policy = policy;
  cfg.lookup = LookupMode::Address;
  cfg.entropy_seed = kHostEntropySeed;
  // The walk uses genuine frames, so the device must know the sender.
  harness::TargetHarness device(sc.host_ks, cfg, sc.accessory_addr);

  switch (finding.state) {
    case SessionState::Idle:
      break;
    case SessionState::AwaitRatchet:
      device.send_payload(sc.ping_bytes);
      break;
    case SessionState::AwaitStatus:
      device.send_payload(sc.ping_bytes);
      device.send_payload(sc.ratchet_aes_siv_bytes);
      break;
    case SessionState::Complete:
      device.send_payload(sc.ping_bytes);
      device.send_payload(sc.ratchet_aes_siv_bytes);
      device.send_payload(sc.status_bytes);
      break;
    default:
      return false;  // accessory-side states replay via a Hint-opened peer
  }
  auto reply = device.send_payload(finding.input);
  return reply.fault && reply.fault->kind == finding.kind;
}

}  // namespace magicpairing::fuzz
