#include "tabrec/config.hpp"

#include <fstream>
#include <thread>

#include "tabrec/errors.hpp"

namespace tabrec {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T* out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "' in " + where);
  }
}

void read_paths(const json& j, RunConfig* cfg) {
  check_keys(j, {"hierarchy", "counts", "truth", "archive", "out"}, "paths");
  read(j, "hierarchy", &cfg->hierarchy_path, "paths");
  read(j, "counts", &cfg->counts_path, "paths");
  read(j, "truth", &cfg->truth_path, "paths");
  read(j, "archive", &cfg->archive_path, "paths");
  read(j, "out", &cfg->out_dir, "paths");
}

void read_model(const json& j, RunConfig* cfg) {
  check_keys(j,
             {"kind", "focal_class", "sigma_err", "suppress_threshold", "hyper"},
             "model");
  if (j.contains("kind")) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "maxent")
      cfg->model = ModelKind::maxent;
    else if (kind == "geostatistical")
      cfg->model = ModelKind::geostatistical;
    else
      throw ConfigError("model.kind must be 'maxent' or 'geostatistical'");
  }
  int focal1 = cfg->focal_class + 1;
  read(j, "focal_class", &focal1, "model");
  cfg->focal_class = focal1 - 1;
  read(j, "sigma_err", &cfg->perturb.sigma_err, "model");
  read(j, "suppress_threshold", &cfg->perturb.suppress_threshold, "model");
  if (j.contains("hyper")) {
    const auto& h = j.at("hyper");
    check_keys(h,
               {"sigma_g2_scale", "sigma_iid2_scale", "rho_min", "rho_max",
                "metropolis_iters", "jitter"},
               "model.hyper");
    read(h, "sigma_g2_scale", &cfg->hyper.sigma_g2_scale, "model.hyper");
    read(h, "sigma_iid2_scale", &cfg->hyper.sigma_iid2_scale, "model.hyper");
    read(h, "rho_min", &cfg->hyper.rho_min, "model.hyper");
    read(h, "rho_max", &cfg->hyper.rho_max, "model.hyper");
    read(h, "metropolis_iters", &cfg->hyper.metropolis_iters, "model.hyper");
    read(h, "jitter", &cfg->hyper.jitter, "model.hyper");
  }
}

void read_sampler(const json& j, RunConfig* cfg) {
  check_keys(j,
             {"n_iterations", "burn_in", "thin", "n_chains", "gibbs_interval",
              "class_proposal_weights", "audit_interval", "checkpoint_interval",
              "checkpoint_path"},
             "sampler");
  read(j, "n_iterations", &cfg->sampler.n_iterations, "sampler");
  read(j, "burn_in", &cfg->sampler.burn_in, "sampler");
  read(j, "thin", &cfg->sampler.thin, "sampler");
  read(j, "n_chains", &cfg->sampler.n_chains, "sampler");
  read(j, "gibbs_interval", &cfg->sampler.gibbs_interval, "sampler");
  read(j, "class_proposal_weights", &cfg->sampler.class_proposal_weights,
       "sampler");
  read(j, "audit_interval", &cfg->sampler.audit_interval, "sampler");
  read(j, "checkpoint_interval", &cfg->sampler.checkpoint_interval, "sampler");
  read(j, "checkpoint_path", &cfg->sampler.checkpoint_path, "sampler");
}

void read_mock(const json& j, RunConfig* cfg) {
  check_keys(j,
             {"scenario", "m", "focal_class", "truth_beta_scale",
              "truth_logit_offset", "truth_sigma_g2", "truth_rho",
              "truth_sigma_iid2", "bb_a", "bb_b", "total_low", "total_high",
              "perturb_source_totals", "geography"},
             "mock");
  if (j.contains("scenario")) {
    const auto s = j.at("scenario").get<std::string>();
    if (s == "well_specified")
      cfg->mock.scenario = Scenario::well_specified;
    else if (s == "misspecified")
      cfg->mock.scenario = Scenario::misspecified;
    else
      throw ConfigError("mock.scenario must be 'well_specified' or 'misspecified'");
  }
  read(j, "m", &cfg->mock.m, "mock");
  int focal1 = cfg->mock.focal_class + 1;
  read(j, "focal_class", &focal1, "mock");
  cfg->mock.focal_class = focal1 - 1;
  read(j, "truth_beta_scale", &cfg->mock.truth_beta_scale, "mock");
  read(j, "truth_logit_offset", &cfg->mock.truth_logit_offset, "mock");
  read(j, "truth_sigma_g2", &cfg->mock.truth_gp.sigma2, "mock");
  read(j, "truth_rho", &cfg->mock.truth_gp.rho, "mock");
  read(j, "truth_sigma_iid2", &cfg->mock.truth_sigma_iid2, "mock");
  read(j, "bb_a", &cfg->mock.bb_a, "mock");
  read(j, "bb_b", &cfg->mock.bb_b, "mock");
  read(j, "total_low", &cfg->mock.total_low, "mock");
  read(j, "total_high", &cfg->mock.total_high, "mock");
  read(j, "perturb_source_totals", &cfg->mock.perturb_source_totals, "mock");
  if (j.contains("geography")) {
    const auto& g = j.at("geography");
    check_keys(g, {"n_level3", "level2_per_level3", "level1_per_level2"},
               "mock.geography");
    read(g, "n_level3", &cfg->mock.geography.n_level3, "mock.geography");
    read(g, "level2_per_level3", &cfg->mock.geography.level2_per_level3,
         "mock.geography");
    read(g, "level1_per_level2", &cfg->mock.geography.level1_per_level2,
         "mock.geography");
  }
}

void read_diagnostics(const json& j, RunConfig* cfg) {
  check_keys(j, {"n_replicates", "gap_pooling", "coverage_classes", "replicates"},
             "diagnostics");
  read(j, "n_replicates", &cfg->n_replicates, "diagnostics");
  if (j.contains("gap_pooling")) {
    const auto s = j.at("gap_pooling").get<std::string>();
    if (s == "all_classes")
      cfg->gap_pooling = GapPooling::all_classes;
    else if (s == "focal_only")
      cfg->gap_pooling = GapPooling::focal_only;
    else
      throw ConfigError("diagnostics.gap_pooling must be 'all_classes' or 'focal_only'");
  }
  if (j.contains("coverage_classes")) {
    const auto s = j.at("coverage_classes").get<std::string>();
    if (s == "focal_only")
      cfg->coverage_classes = CoverageClasses::focal_only;
    else if (s == "all_classes")
      cfg->coverage_classes = CoverageClasses::all_classes;
    else
      throw ConfigError(
          "diagnostics.coverage_classes must be 'focal_only' or 'all_classes'");
  }
  if (j.contains("replicates")) {
    for (const auto& r : j.at("replicates")) {
      check_keys(r, {"archive", "truth"}, "diagnostics.replicates[]");
      cfg->coverage_replicates.emplace_back(r.at("archive").get<std::string>(),
                                            r.at("truth").get<std::string>());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  perturb.validate();
  mock.validate();
  sampler.validate();
  if (focal_class < 0) throw ConfigError("model.focal_class must be >= 1");
  if (n_replicates < 1) throw ConfigError("diagnostics.n_replicates must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  check_keys(j, {"paths", "model", "sampler", "mock", "diagnostics", "seed", "threads"},
             "config root");
  RunConfig cfg;
  if (j.contains("paths")) read_paths(j.at("paths"), &cfg);
  if (j.contains("model")) read_model(j.at("model"), &cfg);
  if (j.contains("sampler")) read_sampler(j.at("sampler"), &cfg);
  if (j.contains("mock")) read_mock(j.at("mock"), &cfg);
  if (j.contains("diagnostics")) read_diagnostics(j.at("diagnostics"), &cfg);
  read(j, "seed", &cfg.seed, "config root");
  read(j, "threads", &cfg.threads, "config root");
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config '" + path + "': " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  json j;
  j["paths"] = {{"hierarchy", cfg.hierarchy_path}, {"counts", cfg.counts_path},
                {"truth", cfg.truth_path},         {"archive", cfg.archive_path},
                {"out", cfg.out_dir}};
  j["model"] = {
      {"kind", cfg.model == ModelKind::maxent ? "maxent" : "geostatistical"},
      {"focal_class", cfg.focal_class + 1},
      {"sigma_err", cfg.perturb.sigma_err},
      {"suppress_threshold", cfg.perturb.suppress_threshold},
      {"hyper",
       {{"sigma_g2_scale", cfg.hyper.sigma_g2_scale},
        {"sigma_iid2_scale", cfg.hyper.sigma_iid2_scale},
        {"rho_min", cfg.hyper.rho_min},
        {"rho_max", cfg.hyper.rho_max},
        {"metropolis_iters", cfg.hyper.metropolis_iters},
        {"jitter", cfg.hyper.jitter}}}};
  j["sampler"] = {{"n_iterations", cfg.sampler.n_iterations},
                  {"burn_in", cfg.sampler.burn_in},
                  {"thin", cfg.sampler.thin},
                  {"n_chains", cfg.sampler.n_chains},
                  {"gibbs_interval", cfg.sampler.gibbs_interval},
                  {"class_proposal_weights", cfg.sampler.class_proposal_weights},
                  {"audit_interval", cfg.sampler.audit_interval},
                  {"checkpoint_interval", cfg.sampler.checkpoint_interval},
                  {"checkpoint_path", cfg.sampler.checkpoint_path}};
  j["mock"] = {
      {"scenario", cfg.mock.scenario == Scenario::well_specified
                       ? "well_specified"
                       : "misspecified"},
      {"m", cfg.mock.m},
      {"focal_class", cfg.mock.focal_class + 1},
      {"truth_beta_scale", cfg.mock.truth_beta_scale},
      {"truth_logit_offset", cfg.mock.truth_logit_offset},
      {"truth_sigma_g2", cfg.mock.truth_gp.sigma2},
      {"truth_rho", cfg.mock.truth_gp.rho},
      {"truth_sigma_iid2", cfg.mock.truth_sigma_iid2},
      {"bb_a", cfg.mock.bb_a},
      {"bb_b", cfg.mock.bb_b},
      {"total_low", cfg.mock.total_low},
      {"total_high", cfg.mock.total_high},
      {"perturb_source_totals", cfg.mock.perturb_source_totals},
      {"geography",
       {{"n_level3", cfg.mock.geography.n_level3},
        {"level2_per_level3", cfg.mock.geography.level2_per_level3},
        {"level1_per_level2", cfg.mock.geography.level1_per_level2}}}};
  json reps = json::array();
  for (const auto& [archive, truth] : cfg.coverage_replicates)
    reps.push_back({{"archive", archive}, {"truth", truth}});
  j["diagnostics"] = {
      {"n_replicates", cfg.n_replicates},
      {"gap_pooling",
       cfg.gap_pooling == GapPooling::all_classes ? "all_classes" : "focal_only"},
      {"coverage_classes", cfg.coverage_classes == CoverageClasses::focal_only
                               ? "focal_only"
                               : "all_classes"},
      {"replicates", reps}};
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

}  // namespace tabrec
