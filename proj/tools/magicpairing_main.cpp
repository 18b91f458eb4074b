// Command-line front end: key provisioning, message inspection, pairing
// simulation, attack scripts, and fuzz campaigns.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "magicpairing/attacks.hpp"
#include "magicpairing/fuzz.hpp"
#include "magicpairing/harness.hpp"
#include "magicpairing/transport.hpp"

namespace mp = magicpairing;
using mp::session::LookupMode;
using mp::session::PeerConfig;
using mp::session::PeerDevice;
using mp::session::PolicyConfig;

namespace {

constexpr mp::BdAddr kDefaultHostAddr = {0x10, 0x20, 0x30, 0x40, 0x50, 0x60};
constexpr mp::BdAddr kDefaultAccessoryAddr = {0xa0, 0xb0, 0xc0, 0xd0, 0xe0, 0xf0};

struct CommonOpts {
  std::string keystore_path;
  std::uint64_t seed = 0;
  std::string policy_name = "hardened";
  std::vector<std::string> policy_flags;
  std::string output = "text";
  std::uint16_t channel_id = 0x0030;
  std::uint16_t port = 0;
};

bool parse_bool(const std::string& v, bool& out) {
  if (v == "1" || v == "true" || v == "on") { out = true; return true; }
  if (v == "0" || v == "false" || v == "off") { out = false; return true; }
  return false;
}

PolicyConfig resolve_policy(const CommonOpts& opts) {
  PolicyConfig policy = opts.policy_name == "flawed" ? PolicyConfig::flawed()
                                                     : PolicyConfig::hardened();
  for (const std::string& flag : opts.policy_flags) {
    auto eq = flag.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--policy-flag expects NAME=VALUE");
    std::string name = flag.substr(0, eq);
    std::string value = flag.substr(eq + 1);
    bool b = false;
    if (name == "lookup_checked" && parse_bool(value, b)) policy.lookup_checked = b;
    else if (name == "commit_on_verify" && parse_bool(value, b)) policy.commit_on_verify = b;
    else if (name == "parse_abort" && parse_bool(value, b)) policy.parse_abort = b;
    else if (name == "empty_frame_fault" && parse_bool(value, b)) policy.empty_frame_fault = b;
    else if (name == "max_ratchet_delta") policy.max_ratchet_delta = static_cast<std::uint32_t>(std::stoull(value, nullptr, 0));
    else if (name == "ratchet_budget_per_message") policy.ratchet_budget_per_message = std::stoull(value, nullptr, 0);
    else if (name == "accessory_ratchet_discrepancy_threshold") policy.accessory_ratchet_discrepancy_threshold = static_cast<std::uint32_t>(std::stoull(value, nullptr, 0));
    else throw CLI::ValidationError("unknown policy flag '" + name + "'");
  }
  return policy;
}

// Ephemeral stores share credentials when derived from the same seed.
mp::keystore::Keystore ephemeral_keystore(std::uint64_t seed,
                                          const mp::BdAddr& record_addr) {
  mp::keystore::Keystore ks;
  mp::EntropySource entropy(seed);
  ks.provision_master(entropy);
  ks.create_record(record_addr);
  return ks;
}

int cmd_keygen(const CommonOpts& opts, const std::string& addr_text,
               bool provision, bool overwrite) {
  if (opts.keystore_path.empty()) {
    std::cerr << "keygen: --keystore is required\n";
    return 1;
  }
  if (!provision && addr_text.empty()) {
    std::cerr << "keygen: nothing to do (use --provision and/or --addr)\n";
    return 1;
  }
  mp::keystore::Keystore ks;
  if (std::filesystem::exists(opts.keystore_path))
    ks = mp::keystore::Keystore::load(opts.keystore_path);

  mp::EntropySource entropy(opts.seed);
  if (provision) {
    const auto& creds = ks.provision_master(entropy, overwrite);
    std::cout << "master " << mp::to_hex(creds.master_key) << ' '
              << mp::to_hex(creds.master_hint) << '\n';
  }
  if (!addr_text.empty()) {
    auto addr = mp::parse_addr(addr_text);
    if (!addr) {
      std::cerr << "keygen: malformed address '" << addr_text << "'\n";
      return 1;
    }
    const auto& rec = ks.create_record(*addr);
    std::cout << "acc " << mp::format_addr(rec.peer_addr) << ' '
              << mp::to_hex(rec.acc_key) << ' ' << mp::to_hex(rec.acc_hint)
              << ' ' << rec.ratchet << '\n';
  }
  ks.save(opts.keystore_path);
  return 0;
}

int cmd_parse(const std::string& hex, const std::string& file, bool as_frame) {
  mp::Bytes bytes;
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      std::cerr << "parse: cannot open " << file << '\n';
      return 1;
    }
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  } else {
    auto decoded = mp::from_hex(hex);
    if (!decoded) {
      std::cerr << "parse: malformed hex input\n";
      return 1;
    }
    bytes = *decoded;
  }

  if (as_frame) {
    auto result = mp::codec::decode_frame(bytes);
    if (const auto* err = std::get_if<mp::codec::DecodeError>(&result)) {
      std::cout << "decode-error: " << err->describe() << '\n';
      return 1;
    }
    const auto& frame = std::get<mp::codec::L2capFrame>(result);
    std::cout << "frame channel=0x" << std::hex << frame.channel_id << std::dec
              << " len=" << frame.payload.size() << " payload="
              << mp::to_hex(frame.payload) << '\n';
    return 0;
  }

  auto result = mp::codec::decode_message(bytes);
  if (const auto* err = std::get_if<mp::codec::DecodeError>(&result)) {
    std::cout << "decode-error: " << err->describe() << '\n';
    return 1;
  }
  std::cout << mp::codec::describe_message(
                   std::get<mp::codec::MagicPairingMessage>(result))
            << '\n';
  return 0;
}

void print_transcript(const mp::harness::PairingRun& run, bool lines) {
  for (const auto& rec : run.transcript) {
    mp::Bytes wire = mp::codec::encode_frame(rec.frame);
    if (lines) {
      std::cout << "step dir=" << (rec.from_host ? "host" : "accessory")
                << " bytes=" << mp::to_hex(wire) << '\n';
    } else {
      auto decoded = mp::codec::decode_message(rec.frame.payload);
      std::string what =
          std::holds_alternative<mp::codec::MagicPairingMessage>(decoded)
              ? mp::codec::describe_message(
                    std::get<mp::codec::MagicPairingMessage>(decoded))
              : std::string("(undecodable)");
      std::cout << (rec.from_host ? "host     -> " : "accessory-> ") << what
                << "\n            " << mp::to_hex(wire) << '\n';
    }
  }
}

int cmd_pair(const CommonOpts& opts, const std::string& acc_keystore_path,
             const std::string& role, bool listen) {
  PolicyConfig policy = resolve_policy(opts);
  bool lines = opts.output == "lines";

  mp::keystore::Keystore host_ks =
      opts.keystore_path.empty()
          ? ephemeral_keystore(opts.seed, kDefaultAccessoryAddr)
          : mp::keystore::Keystore::load(opts.keystore_path);
  mp::keystore::Keystore acc_ks =
      acc_keystore_path.empty()
          ? (opts.keystore_path.empty()
                 ? ephemeral_keystore(opts.seed, kDefaultAccessoryAddr)
                 : host_ks)
          : mp::keystore::Keystore::load(acc_keystore_path);

  PeerConfig host_cfg;
  host_cfg.own_addr = kDefaultHostAddr;
  host_cfg.policy = policy;
  host_cfg.lookup = LookupMode::Address;
  host_cfg.entropy_seed = opts.seed ^ 0x484f5354;
  host_cfg.channel_id = opts.channel_id;

  PeerConfig acc_cfg;
  acc_cfg.own_addr = kDefaultAccessoryAddr;
  acc_cfg.policy = policy;
  acc_cfg.lookup = LookupMode::HintEntry;
  acc_cfg.entropy_seed = opts.seed ^ 0x414343;
  acc_cfg.channel_id = opts.channel_id;

  if (opts.port != 0) {
    // Loopback carrier: one side per process.
    if (role == "accessory" || listen) {
      mp::transport::SocketListener listener(opts.port);
      if (!lines)
        std::cout << "listening on 127.0.0.1:" << listener.port() << '\n';
      auto carrier = listener.accept_one();
      PeerDevice accessory(acc_ks, acc_cfg);
      accessory.connect_from(kDefaultHostAddr);
      while (auto frame = carrier.recv_frame()) {
        auto out = accessory.handle_frame(*frame);
        for (const auto& reply : out.replies) carrier.send_frame(reply);
        if (out.link_key) {
          std::cout << "linkkey accessory=" << mp::to_hex(*out.link_key) << '\n';
          return 0;
        }
      }
      return 1;
    }
    auto carrier = mp::transport::SocketCarrier::connect(opts.port);
    PeerDevice host(host_ks, host_cfg);
    host.connect_from(kDefaultAccessoryAddr);
    auto start = host.start_pairing();
    for (const auto& msg : start.messages_to_send)
      carrier.send_frame(host.wrap(msg));
    while (auto frame = carrier.recv_frame()) {
      auto out = host.handle_frame(*frame);
      for (const auto& reply : out.replies) carrier.send_frame(reply);
      if (out.link_key) {
        std::cout << "linkkey host=" << mp::to_hex(*out.link_key) << '\n';
        return 0;
      }
      if (host.session() &&
          host.session()->state() == mp::session::SessionState::Failed)
        break;
    }
    std::cout << "pairing failed\n";
    return 1;
  }

  PeerDevice host(host_ks, host_cfg);
  PeerDevice accessory(acc_ks, acc_cfg);
  host.connect_from(kDefaultAccessoryAddr);
  accessory.connect_from(kDefaultHostAddr);
  mp::transport::Link link;
  auto run = mp::harness::run_pairing(host, accessory, link);

  print_transcript(run, lines);
  if (run.agreed()) {
    if (lines) {
      std::cout << "linkkey host=" << mp::to_hex(*run.host_link_key)
                << " accessory=" << mp::to_hex(*run.accessory_link_key)
                << " match=yes\n";
    } else {
      std::cout << "link key (host):      " << mp::to_hex(*run.host_link_key)
                << '\n'
                << "link key (accessory): "
                << mp::to_hex(*run.accessory_link_key) << '\n'
                << "link keys MATCH\n";
    }
    return 0;
  }
  if (run.host_failure_status &&
      *run.host_failure_status == mp::codec::kStatusUnknownDevice)
    std::cout << "pairing failed: unknown-device\n";
  else
    std::cout << "pairing failed\n";
  return 1;
}

int cmd_attack(const CommonOpts& opts, const std::string& id_text) {
  bool lines = opts.output == "lines";
  std::vector<mp::attacks::AttackVerdict> verdicts;
  if (id_text == "ALL" || id_text == "all") {
    verdicts = mp::attacks::run_all(opts.seed);
  } else {
    auto id = mp::attacks::attack_from_string(id_text);
    if (!id) {
      std::cerr << "attack: unknown id '" << id_text
                << "' (MP1..MP8, L2CAP1, ALL)\n";
      return 1;
    }
    verdicts.push_back(mp::attacks::run_attack(*id, opts.seed));
  }

  bool all_expected = true;
  for (const auto& v : verdicts) {
    std::cout << v.serialize_line() << '\n';
    if (!lines) {
      for (const auto& line : v.evidence) std::cout << "  " << line << '\n';
      if (v.measured_steps_per_second > 0)
        std::cout << "  measured ratchet rate: "
                  << static_cast<std::uint64_t>(v.measured_steps_per_second)
                  << " steps/s (reference hardware looped at ~7000/s)\n";
    }
    all_expected = all_expected && v.expected();
  }
  return all_expected ? 0 : 1;
}

int cmd_fuzz(const CommonOpts& opts, const std::string& mode,
             std::size_t iterations, const std::string& findings_dir,
             const std::string& role_name) {
  PolicyConfig policy = resolve_policy(opts);
  mp::fuzz::FuzzCampaignReport report;
  if (mode == "generation") {
    report = mp::fuzz::run_generation_campaign(
        mp::fuzz::GenerationTarget{policy}, iterations, opts.seed);
  } else if (mode == "mutation") {
    mp::fuzz::MutationTarget target;
    target.policy = policy;
    target.role = role_name == "accessory" ? mp::session::Role::Accessory
                                           : mp::session::Role::Host;
    report = mp::fuzz::run_mutation_campaign(target, mp::fuzz::initial_corpus(),
                                             iterations, opts.seed);
  } else {
    std::cerr << "fuzz: mode must be generation or mutation\n";
    return 1;
  }

  std::cout << report.serialize_lines();
  if (!findings_dir.empty()) report.write_findings_dir(findings_dir);

  bool hardened = policy == PolicyConfig::hardened();
  if (hardened) return report.findings.empty() ? 0 : 1;
  return report.findings.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MagicPairing protocol study: pairing, attacks, fuzzing"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--keystore", opts.keystore_path, "keystore file path");
  app.add_option("--seed", opts.seed, "deterministic seed");
  app.add_option("--policy", opts.policy_name, "hardened|flawed")
      ->check(CLI::IsMember({"hardened", "flawed"}));
  app.add_option("--policy-flag", opts.policy_flags,
                 "NAME=VALUE override of one policy field");
  app.add_option("--output", opts.output, "text|lines")
      ->check(CLI::IsMember({"text", "lines"}));
  app.add_option("--channel-id", opts.channel_id, "frame channel id");
  app.add_option("--port", opts.port, "loopback carrier TCP port");

  auto* keygen = app.add_subcommand("keygen", "provision credentials / records");
  keygen->fallthrough();
  std::string addr_text;
  bool provision = false;
  bool overwrite = false;
  keygen->add_option("--addr", addr_text, "peer address aa:bb:cc:dd:ee:ff");
  keygen->add_flag("--provision", provision, "create master credentials");
  keygen->add_flag("--overwrite", overwrite,
                   "replace existing credentials (implies --provision)");

  auto* parse = app.add_subcommand("parse", "decode message bytes");
  parse->fallthrough();
  std::string hex, file;
  bool as_frame = false;
  parse->add_option("hex", hex, "message bytes as lowercase hex");
  parse->add_option("--file", file, "read raw bytes from file");
  parse->add_flag("--frame", as_frame, "decode as a frame instead");

  auto* pair = app.add_subcommand("pair", "run a full pairing");
  pair->fallthrough();
  std::string acc_keystore, pair_role = "host";
  bool listen = false;
  pair->add_option("--acc-keystore", acc_keystore, "accessory keystore path");
  pair->add_option("--role", pair_role, "host|accessory (with --port)")
      ->check(CLI::IsMember({"host", "accessory"}));
  pair->add_flag("--listen", listen, "listen for the peer (with --port)");

  auto* attack = app.add_subcommand("attack", "run attack scripts");
  attack->fallthrough();
  std::string attack_id;
  attack->add_option("id", attack_id, "MP1..MP8, L2CAP1, or ALL")->required();

  auto* fuzz = app.add_subcommand("fuzz", "run a fuzz campaign");
  fuzz->fallthrough();
  std::string fuzz_mode, findings_dir, fuzz_role = "host";
  std::size_t iterations = 1000;
  fuzz->add_option("mode", fuzz_mode, "generation|mutation")->required();
  fuzz->add_option("-n,--iterations", iterations, "iteration count");
  fuzz->add_option("--findings-dir", findings_dir, "dump finding inputs here");
  fuzz->add_option("--role", fuzz_role, "mutation target role")
      ->check(CLI::IsMember({"host", "accessory"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (keygen->parsed())
      return cmd_keygen(opts, addr_text, provision || overwrite, overwrite);
    if (parse->parsed()) return cmd_parse(hex, file, as_frame);
    if (pair->parsed()) return cmd_pair(opts, acc_keystore, pair_role, listen);
    if (attack->parsed()) return cmd_attack(opts, attack_id);
    if (fuzz->parsed())
      return cmd_fuzz(opts, fuzz_mode, iterations, findings_dir, fuzz_role);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
