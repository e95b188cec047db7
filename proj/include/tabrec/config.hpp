#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tabrec/diagnostics.hpp"
#include "tabrec/mockdata.hpp"
#include "tabrec/sampler.hpp"

namespace tabrec {

// One run's full configuration. Every field has a usable default; a JSON
// config file overrides fields by section, and a few CLI flags override
// individual keys on top of that. Class indices are 1-based in files and
// converted here.
struct RunConfig {
  // paths
  std::string hierarchy_path;
  std::string counts_path;
  std::string truth_path;
  std::string archive_path;
  std::string out_dir = "out";

  // model
  ModelKind model = ModelKind::maxent;
  int focal_class = 0;  // 0-based
  MinimalPerturbConfig perturb;
  HyperPriorConfig hyper;

  // sampler
  ChainConfig sampler;

  // mock
  MockConfig mock;

  // diagnostics
  int n_replicates = 100;
  GapPooling gap_pooling = GapPooling::all_classes;
  CoverageClasses coverage_classes = CoverageClasses::focal_only;
  // Optional (archive dir, truth path) pairs for multi-replicate coverage.
  std::vector<std::pair<std::string, std::string>> coverage_replicates;

  std::uint64_t seed = 1;
  int threads = 0;  // 0 = all available cores

  void validate() const;
  int resolved_threads() const;
};

// Parses a config object; unknown keys are rejected. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Canonical echo of the effective configuration (what manifests embed).
nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace tabrec
