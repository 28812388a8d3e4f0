// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Every subcommand runs one experiment stage from a
// JSON config; exit codes: 0 ok, 2 validation error, 3 missing staged input.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmvqe/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitStaged = 3;
constexpr int kExitOther = 1;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  bool quiet = false;
};

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dmvqe::InvalidArgument("cannot read config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw dmvqe::ParseError(path + ": " + e.what(), 0);
  }
}

// key=value; the value is parsed as JSON when it parses, else kept as a string.
void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw dmvqe::InvalidArgument("--set expects key=value, got " + kv);
  std::string key = kv.substr(0, eq);
  for (auto& c : key)
    if (c == '.') c = '/';
  const std::string value = kv.substr(eq + 1);
  nlohmann::json v = nlohmann::json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  j[nlohmann::json::json_pointer("/" + key)] = v;
}

int run(const Globals& g, const std::string& subcommand, const std::vector<std::string>& allowed_kinds) {
  nlohmann::json j = load_config(g.config_path);
  if (!j.is_object()) throw dmvqe::InvalidArgument("config must be a JSON object");
  for (const auto& kv : g.overrides) apply_override(j, kv);
  if (!j.contains("kind")) {
    if (allowed_kinds.size() != 1) throw dmvqe::InvalidArgument(subcommand + " needs \"kind\" in the config");
    j["kind"] = allowed_kinds.front();
  }
  const std::string kind = j["kind"].get<std::string>();
  if (std::find(allowed_kinds.begin(), allowed_kinds.end(), kind) == allowed_kinds.end()) {
    throw dmvqe::InvalidArgument("kind \"" + kind + "\" cannot run under " + subcommand);
  }
  if (g.seed) j["seed"] = *g.seed;
  if (!g.out_dir.empty()) j["out_dir"] = g.out_dir;
  const auto config = dmvqe::experiment_config_from_json(j);
  const auto out = dmvqe::run_experiment(config, [&](const std::string& msg) {
    if (!g.quiet) std::cerr << "[" << kind << "] " << msg << "\n";
  });
  std::cout << nlohmann::json{{"kind", kind}, {"out_dir", config.out_dir}, {"files", out.files}}.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmvqe: diffusion-initialized VQE toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON experiment config");
  auto* seed_opt = app.add_option("--seed", seed, "Seed overriding the config seed");
  app.add_option("--out-dir", g.out_dir, "Output directory overriding the config");
  app.add_option("--set", g.overrides, "Config override key=json (dotted keys for nesting)");
  app.add_flag("-q,--quiet", g.quiet, "No progress on stderr");
  app.fallthrough();

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> kinds;
  };
  const std::vector<Sub> subs = {
      {"gen-dataset", "Generate a labelled dataset (kind dataset-gen)", {"dataset-gen"}},
      {"train-dm", "Train the diffusion model (kind dm-train)", {"dm-train"}},
      {"sample", "Best-of-k grid for one Hamiltonian (kind sample)", {"sample"}},
      {"vqe", "Run RPVQE, NNVQE or DMVQE on one Hamiltonian (kind vqe)", {"vqe"}},
      {"bp-scan", "Gradient-variance scan over depth (kind bp-scan)", {"bp-scan"}},
      {"eval", "Evaluation experiment named by the config kind", {"dm-quality", "dmvqe-eval", "ising-epochs", "hubbard-depth"}},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (*seed_opt) g.seed = seed;

  for (const auto& s : subs) {
    if (!app.got_subcommand(s.name)) continue;
    try {
      return run(g, s.name, s.kinds);
    } catch (const dmvqe::StagedArtifactError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitStaged;
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const dmvqe::ParseError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: config: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitOther;
    }
  }
  return kExitValidation;
}
