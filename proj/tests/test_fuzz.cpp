#include <doctest.h>

#include "magicpairing/fuzz.hpp"

using namespace magicpairing;
using namespace magicpairing::fuzz;
using session::FaultKind;
using session::Outcome;
using session::PolicyConfig;
using session::Role;
using session::SessionState;
using session::TraceEvent;

TEST_CASE("generate_message: seed zero is a valid ping; seeds are stable") {
  Bytes msg = generate_message(0);
  auto decoded = codec::decode_message(msg);
  REQUIRE(std::holds_alternative<codec::MagicPairingMessage>(decoded));
  CHECK(std::holds_alternative<codec::PingMsg>(
      std::get<codec::MagicPairingMessage>(decoded).body));
  CHECK(to_hex(msg) == "01003e");  // frozen first-run snapshot

  for (std::uint64_t seed : {0ull, 1ull, 17ull, 123456789ull})
    CHECK(generate_message(seed) == generate_message(seed));
}

TEST_CASE("generator class six produces a TLV length overflow") {
  Bytes msg = generate_message(6);
  auto decoded = codec::decode_message(msg);
  REQUIRE(std::holds_alternative<codec::DecodeError>(decoded));
  CHECK(std::get<codec::DecodeError>(decoded).kind ==
        codec::DecodeError::Kind::Overflow);
}

TEST_CASE("mutation operators behave as documented") {
  Bytes input = canonical_scenario().hint_bytes;

  // seed 0 -> bit flip: Hamming distance one
  Bytes flipped = mutate(input, 0);
  REQUIRE(flipped.size() == input.size());
  int bits = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    std::uint8_t diff = flipped[i] ^ input[i];
    while (diff) {
      bits += diff & 1;
      diff >>= 1;
    }
  }
  CHECK(bits == 1);

  // seed 2 -> truncation: proper prefix
  Bytes truncated = mutate(input, 2);
  CHECK(truncated.size() < input.size());
  CHECK(std::equal(truncated.begin(), truncated.end(), input.begin()));

  // seed 4 -> TLV splice still parses the header
  Bytes spliced = mutate(input, 4);
  CHECK(spliced[0] == input[0]);
  CHECK(spliced[1] == input[1]);

  // determinism
  CHECK(mutate(input, 99) == mutate(input, 99));
}

TEST_CASE("fixup repairs counts and lengths, idempotently") {
  // count byte says 3, only one entry present
  Bytes wire = {codec::kMsgHint, 0x00, 0x03, codec::kKeyRatchet, 0x04,
                0x01, 0x00, 0x00, 0x00};
  Bytes fixed = fixup(wire);
  auto decoded = codec::decode_message(fixed);
  REQUIRE(std::holds_alternative<codec::MagicPairingMessage>(decoded));
  CHECK(fixed[2] == 1);

  // overflowing final length is clamped
  Bytes overflow = {codec::kMsgAesSiv, 0x00, 0x01, codec::kKeyAesSiv, 0x50,
                    0xaa, 0xbb, 0xcc};
  Bytes clamped = fixup(overflow);
  CHECK(clamped[4] == 3);
  CHECK(std::holds_alternative<codec::MagicPairingMessage>(
      codec::decode_message(clamped)));

  // idempotent
  CHECK(fixup(fixed) == fixed);
  CHECK(fixup(clamped) == clamped);

  // non key-messages pass through unchanged
  Bytes garbage = {0x99, 0x12, 0x34, 0x56};
  CHECK(fixup(garbage) == garbage);
  Bytes ping = {0x01, 0x00, 0x00};
  CHECK(fixup(ping) == ping);
}

TEST_CASE("initial corpus covers every host-role accepted tuple") {
  MutationTarget target;
  target.policy = PolicyConfig::hardened();
  target.role = Role::Host;

  CoverageSet coverage;
  Corpus corpus = initial_corpus();
  for (const Bytes& entry : corpus.entries())
    for (SessionState st : prepared_states(Role::Host))
      coverage.add(run_prepared_step(target, st, entry).event);

  CHECK(coverage.contains(
      TraceEvent{SessionState::Idle, codec::kMsgPing, Outcome::Accepted}));
  CHECK(coverage.contains(TraceEvent{SessionState::AwaitRatchet,
                                     codec::kMsgRatchetAesSiv,
                                     Outcome::Accepted}));
  CHECK(coverage.contains(
      TraceEvent{SessionState::AwaitStatus, codec::kMsgStatus, Outcome::Accepted}));
}

TEST_CASE("corpus deduplicates by content") {
  Corpus corpus;
  CHECK(corpus.add({0x01, 0x02}));
  CHECK_FALSE(corpus.add({0x01, 0x02}));
  CHECK(corpus.add({0x01, 0x03}));
  CHECK(corpus.size() == 2);
}

TEST_CASE("generation campaign against hardened target finds nothing") {
  GenerationTarget target{PolicyConfig::hardened()};
  auto report = run_generation_campaign(target, 2000, 9);
  CHECK(report.findings.empty());
  CHECK(report.iterations == 2000);
}

TEST_CASE("generation campaign against the all-flaws target finds both classes") {
  GenerationTarget target{PolicyConfig::flawed()};
  auto report = run_generation_campaign(target, 2000, 9);
  CHECK(report.has_fault_kind(FaultKind::InvalidAccess));
  CHECK(report.has_fault_kind(FaultKind::Abort));
  CHECK(report.reconnects > 0);

  // findings replay deterministically against a fresh target
  for (const auto& finding : report.findings)
    CHECK(replay_generation_finding(target, finding));
}

TEST_CASE("generation campaign reports are deterministic") {
  GenerationTarget target{PolicyConfig::flawed()};
  auto a = run_generation_campaign(target, 500, 33);
  auto b = run_generation_campaign(target, 500, 33);
  CHECK(a.serialize_lines() == b.serialize_lines());
  auto c = run_generation_campaign(target, 500, 34);
  CHECK(a.serialize_lines() != c.serialize_lines());
}

TEST_CASE("mutation campaign: coverage grows monotonically and replays hold") {
  MutationTarget target;
  target.policy = PolicyConfig::flawed();
  target.policy.ratchet_budget_per_message = 1 << 12;  // fast loop halts
  target.role = Role::Host;

  auto report = run_mutation_campaign(target, initial_corpus(), 1500, 21);
  REQUIRE_FALSE(report.coverage_growth.empty());
  for (std::size_t i = 1; i < report.coverage_growth.size(); ++i) {
    CHECK(report.coverage_growth[i].second >
          report.coverage_growth[i - 1].second);
    CHECK(report.coverage_growth[i].first >=
          report.coverage_growth[i - 1].first);
  }
  CHECK(report.corpus_size >= initial_corpus().size());
  CHECK_FALSE(report.findings.empty());

  for (const auto& finding : report.findings)
    CHECK(replay_mutation_finding(target, finding));
}

TEST_CASE("mutation campaign against hardened target emits no findings") {
  MutationTarget target;
  target.policy = PolicyConfig::hardened();
  auto report = run_mutation_campaign(target, initial_corpus(), 1500, 22);
  CHECK(report.findings.empty());
}

TEST_CASE("mutation findings reproduce over the transport") {
  MutationTarget target;
  target.policy = PolicyConfig::flawed();
  target.policy.ratchet_budget_per_message = 1 << 12;
  auto report = run_mutation_campaign(target, initial_corpus(), 800, 23);
  REQUIRE_FALSE(report.findings.empty());
  std::size_t replayed = 0;
  for (const auto& finding : report.findings) {
    if (replay_finding_over_transport(target.policy, finding)) ++replayed;
  }
  CHECK(replayed == report.findings.size());
}

TEST_CASE("findings directory holds one raw input per finding") {
  GenerationTarget target{PolicyConfig::flawed()};
  auto report = run_generation_campaign(target, 1000, 44);
  REQUIRE_FALSE(report.findings.empty());

  auto dir = std::filesystem::temp_directory_path() / "mp_findings_test";
  std::filesystem::remove_all(dir);
  report.write_findings_dir(dir);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    ++files;
    CHECK(std::filesystem::file_size(e.path()) > 0);
  }
  CHECK(files == report.findings.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("mutation campaign throughput stays above the floor") {
  MutationTarget target;
  target.policy = PolicyConfig::hardened();
  auto begin = std::chrono::steady_clock::now();
  auto report = run_mutation_campaign(target, initial_corpus(), 3000, 55);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              begin)
                    .count();
  CHECK(report.iterations == 3000);
  CHECK(3000.0 / secs > 1000.0);
}
