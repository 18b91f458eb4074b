#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "magicpairing/session.hpp"

namespace magicpairing::fuzz {

/// Deterministic message generator: well-formed messages of every variant
/// plus boundary TLVs, wrong counts, oversized lengths, truncations, and
/// plain garbage. The low bits of the seed select the generator class, so
/// every class is reachable by construction (seed 0 is a valid Ping).
Bytes generate_message(std::uint64_t seed);

/// Seed-deterministic mutation. Operators, selected by seed % 6: bit
/// flip, byte substitution, truncation, extension, TLV-aware splice,
/// length-field rewrite.
Bytes mutate(std::span<const std::uint8_t> input, std::uint64_t seed);

/// Best-effort outer repair so deeper handlers are reached: clamps a
/// final TLV length that overruns the buffer and rewrites the entry
/// count to the number of parseable entries. Idempotent; inputs that are
/// not key messages pass through unchanged.
Bytes fixup(std::span<const std::uint8_t> input);

/// Deduplicated corpus of raw inputs.
class Corpus {
 public:
  bool add(Bytes entry);
  const std::vector<Bytes>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Bytes> entries_;
  std::set<Bytes> seen_;
};

/// Trace tuples reached so far; the campaign's coverage signal.
class CoverageSet {
 public:
  bool add(const session::TraceEvent& e) { return tuples_.insert(e).second; }
  std::size_t size() const { return tuples_.size(); }
  bool contains(const session::TraceEvent& e) const { return tuples_.count(e) > 0; }
  const std::set<session::TraceEvent>& tuples() const { return tuples_; }

 private:
  std::set<session::TraceEvent> tuples_;
};

struct Finding {
  std::size_t index = 0;       // sequence number; also the dump filename
  std::size_t iteration = 0;
  session::FaultKind kind = session::FaultKind::InvalidAccess;
  session::SessionState state = session::SessionState::Idle;  // arrival state
  std::uint8_t msg_type = 0xff;
  Bytes input;
};

struct FuzzCampaignReport {
  std::string mode;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  /// (iteration, coverage size) recorded whenever coverage grew.
  std::vector<std::pair<std::size_t, std::size_t>> coverage_growth;
  std::vector<Finding> findings;
  std::size_t reconnects = 0;   // generation mode
  std::size_t fixups = 0;       // mutation mode
  std::size_t corpus_size = 0;

  std::size_t final_coverage() const {
    return coverage_growth.empty() ? 0 : coverage_growth.back().second;
  }
  bool has_fault_kind(session::FaultKind kind) const;

  std::string serialize_lines() const;
  /// One raw input file per finding, named by sequence number.
  void write_findings_dir(const std::filesystem::path& dir) const;
};

/// The fixed scenario behind campaign targets and seed corpora: one
/// provisioned pairing with deterministic credentials and entropy.
struct CanonicalScenario {
  keystore::Keystore host_ks;
  keystore::Keystore accessory_ks;
  BdAddr host_addr{};
  BdAddr accessory_addr{};
  Bytes ping_bytes;
  Bytes hint_bytes;
  Bytes ratchet_aes_siv_bytes;
  Bytes aes_siv_bytes;
  Bytes status_bytes;
  Bytes ratchet_unused_bytes;
};

const CanonicalScenario& canonical_scenario();

/// Valid encodings of each message variant, from the canonical scenario.
Corpus initial_corpus();

/// Target of the in-process mutation fuzzer: the session states of one
/// role, re-prepared deterministically for every invocation.
struct MutationTarget {
  session::PolicyConfig policy;
  session::Role role = session::Role::Host;
};

std::vector<session::SessionState> prepared_states(session::Role role);

/// Driving one input into a freshly prepared session; used by the
/// campaign and by finding replays.
struct StepResult {
  session::TraceEvent event{};
  std::optional<session::FaultReport> fault;
  std::uint64_t ratchet_steps = 0;
};
StepResult run_prepared_step(const MutationTarget& target,
                             session::SessionState state, const Bytes& input);

/// Generation-based campaign over the simulated transport against a full
/// device; the fuzzer connects from an address the target does not know.
struct GenerationTarget {
  session::PolicyConfig policy;
};

FuzzCampaignReport run_generation_campaign(const GenerationTarget& target,
                                           std::size_t iterations,
                                           std::uint64_t seed);

FuzzCampaignReport run_mutation_campaign(const MutationTarget& target,
                                         Corpus corpus, std::size_t iterations,
                                         std::uint64_t seed);

/// A finding replays iff the same fault kind fires again from the same
/// prepared state and input.
bool replay_mutation_finding(const MutationTarget& target, const Finding& finding);

/// Generation findings store whole frames; replaying one against a fresh
/// device must reproduce its fault kind.
bool replay_generation_finding(const GenerationTarget& target,
                               const Finding& finding);

/// Over-the-wire verification of a finding: a fresh device is walked to
/// the finding's state with genuine frames, then the input is delivered.
bool replay_finding_over_transport(const session::PolicyConfig& policy,
                                   const Finding& finding);

}  // namespace magicpairing::fuzz
