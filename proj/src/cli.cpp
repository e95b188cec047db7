#include "tabrec/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "tabrec/archive_io.hpp"
#include "tabrec/config.hpp"
#include "tabrec/diagnostics.hpp"
#include "tabrec/errors.hpp"
#include "tabrec/mockdata.hpp"

namespace tabrec {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CliOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
};

RunConfig effective_config(const CliOverrides& o) {
  RunConfig cfg =
      o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  cfg.validate();
  return cfg;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const RunConfig& cfg, json extra = json::object()) {
  fs::create_directories(dir);
  json m = std::move(extra);
  m["version"] = kVersionString;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw DataError("cannot write '" + dir + "/manifest.json'");
  out << m.dump(2) << '\n';
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

int cmd_simulate(const RunConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "simulate"));
  MockDataset data = generate_mock(cfg.mock, rng);
  fs::create_directories(cfg.out_dir);
  data.hierarchy->write(cfg.out_dir + "/hierarchy.csv");
  data.truth->write(cfg.out_dir + "/truth.csv");
  data.observation->write(cfg.out_dir + "/observation.csv");

  json extra;
  extra["truth_field"] = {{"beta", vector_to_json(data.beta)},
                          {"sigma_g2", cfg.mock.truth_gp.sigma2},
                          {"rho", cfg.mock.truth_gp.rho},
                          {"sigma_iid2", cfg.mock.truth_sigma_iid2},
                          {"logit_offset", cfg.mock.truth_logit_offset}};
  if (cfg.mock.scenario == Scenario::misspecified)
    extra["record_model"] = {
        {"sigma_err", cfg.mock.perturb.sigma_err},
        {"suppress_threshold", cfg.mock.perturb.suppress_threshold},
        {"top_records", 5},
        {"error_variance", "2 * s * sigma_err^2 / sqrt(5), s ~ U(0,1)"}};
  write_manifest(cfg.out_dir, "simulate", cfg, std::move(extra));
  return 0;
}

SpatialHierarchy load_hierarchy(const RunConfig& cfg) {
  if (cfg.hierarchy_path.empty())
    throw DataError("paths.hierarchy is required for this command");
  return SpatialHierarchy::load(cfg.hierarchy_path);
}

int cmd_fit(const RunConfig& cfg) {
  const SpatialHierarchy h = load_hierarchy(cfg);
  if (cfg.counts_path.empty()) throw DataError("paths.counts is required for fit");
  const CountTable obs = CountTable::load(cfg.counts_path, h, /*perturbed=*/true);

  int max_obs = 0;
  for (int level = 1; level <= 3; ++level)
    max_obs = std::max(max_obs, obs.level_values(level).maxCoeff());
  const int cache_max =
      max_obs + static_cast<int>(std::ceil(12.0 * cfg.perturb.sigma_err)) + 32;
  const CellLikelihoodTable cell(cfg.perturb.sigma_err,
                                 cfg.perturb.suppress_threshold, cache_max);

  ChainConfig sc = cfg.sampler;
  sc.rng_seed = derive_seed(cfg.seed, "fit");
  sc.threads = cfg.resolved_threads();
  sc.focal_class = cfg.focal_class;
  std::optional<GeoPriorModel> geo;
  if (cfg.model == ModelKind::geostatistical) {
    geo.emplace(h, cfg.focal_class, cfg.hyper);
    if (sc.gibbs_interval < 1) sc.gibbs_interval = 1;
  }

  const PosteriorArchive archive =
      run_chains(obs, cfg.model, sc, cell, geo ? &*geo : nullptr);

  const ConvergenceReport conv = convergence_report(archive);
  json extra;
  extra["command"] = "fit";
  extra["seed"] = cfg.seed;
  extra["config"] = config_to_json(cfg);
  extra["aggregation_consistent"] = archive.aggregation_consistent();
  extra["max_rhat"] = conv.max_rhat;
  extra["rhat_ok"] = conv.ok;
  write_archive(cfg.out_dir, archive, extra);
  if (!conv.ok)
    std::cerr << "note: max split-chain rhat " << conv.max_rhat
              << " exceeds 1.05 (advisory)\n";
  return 0;
}

int cmd_ppc(const RunConfig& cfg) {
  const SpatialHierarchy h = load_hierarchy(cfg);
  if (cfg.counts_path.empty()) throw DataError("paths.counts is required for ppc");
  if (cfg.archive_path.empty())
    throw DataError("paths.archive is required for ppc");
  const CountTable obs = CountTable::load(cfg.counts_path, h, /*perturbed=*/true);
  const PosteriorArchive archive = load_archive(cfg.archive_path, h);
  Rng rng(derive_seed(cfg.seed, "ppc"));
  const auto [gap, rowsum] =
      run_ppc(archive, obs, cfg.n_replicates, cfg.perturb, rng, cfg.gap_pooling);

  fs::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/ppc.txt");
  if (!out) throw DataError("cannot write '" + cfg.out_dir + "/ppc.txt'");
  out << format_ppc_report(gap) << '\n' << format_ppc_report(rowsum);
  write_manifest(cfg.out_dir, "ppc", cfg);
  return 0;
}

int cmd_coverage(const RunConfig& cfg) {
  const SpatialHierarchy h = load_hierarchy(cfg);
  std::vector<std::pair<std::string, std::string>> pairs = cfg.coverage_replicates;
  if (pairs.empty()) {
    if (cfg.archive_path.empty() || cfg.truth_path.empty())
      throw DataError(
          "coverage needs paths.archive and paths.truth (or diagnostics.replicates)");
    pairs.emplace_back(cfg.archive_path, cfg.truth_path);
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/coverage.txt");
  if (!out) throw DataError("cannot write '" + cfg.out_dir + "/coverage.txt'");
  std::array<double, 3> mean{};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const CountTable truth = CountTable::load(pairs[i].second, h, false);
    const PosteriorArchive archive = load_archive(pairs[i].first, h);
    CoverageReport rep = score_coverage(archive, truth, cfg.coverage_classes);
    rep.replicate = static_cast<int>(i);
    out << format_coverage_report(rep) << '\n';
    for (std::size_t level = 0; level < 3; ++level)
      mean[level] += rep.fraction[level] / static_cast<double>(pairs.size());

    std::ofstream cells(cfg.out_dir + "/coverage_cells_" + std::to_string(i) +
                        ".csv");
    if (!cells) throw DataError("cannot write coverage cell map");
    cells << "level,unit_id,class_index,hit\n";
    for (int level = 1; level <= 3; ++level) {
      const auto& hits = rep.hits[static_cast<std::size_t>(level - 1)];
      const int per_unit =
          cfg.coverage_classes == CoverageClasses::focal_only ? 1 : archive.m;
      for (std::size_t k = 0; k < hits.size(); ++k) {
        const int unit = static_cast<int>(k) / per_unit;
        const int cls = cfg.coverage_classes == CoverageClasses::focal_only
                            ? archive.focal_class
                            : static_cast<int>(k) % per_unit;
        cells << level << ',' << h.unit_id(level, unit) << ',' << cls + 1 << ','
              << static_cast<int>(hits[k]) << '\n';
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf,
                "mean over %zu replicate(s): %.4f %.4f %.4f (levels 1..3)\n",
                pairs.size(), mean[0], mean[1], mean[2]);
  out << buf;
  write_manifest(cfg.out_dir, "coverage", cfg);
  return 0;
}

int cmd_summarize(const RunConfig& cfg) {
  const SpatialHierarchy h = load_hierarchy(cfg);
  if (cfg.archive_path.empty())
    throw DataError("paths.archive is required for summarize");
  const PosteriorArchive archive = load_archive(cfg.archive_path, h);
  fs::create_directories(cfg.out_dir);
  write_summary_csv(cfg.out_dir + "/summary.csv", summarize(archive));
  write_manifest(cfg.out_dir, "summarize", cfg);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Bayesian reconstruction of latent counts from perturbed"
               " hierarchical frequency tables"};
  app.require_subcommand(1);

  CliOverrides o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON configuration file");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&o](const std::uint64_t& v) { o.seed = v; }, "root RNG seed");
    sub->add_option_function<int>(
        "--threads", [&o](const int& v) { o.threads = v; },
        "worker threads (0 = all cores)");
    sub->add_option_function<std::string>(
        "--out", [&o](const std::string& v) { o.out_dir = v; },
        "output directory");
  };

  CLI::App* sim =
      app.add_subcommand("simulate", "generate mock truth and observation");
  CLI::App* fit = app.add_subcommand("fit", "sample the latent-count posterior");
  CLI::App* ppc = app.add_subcommand("ppc", "posterior predictive checks");
  CLI::App* cov =
      app.add_subcommand("coverage", "score credible intervals against truth");
  CLI::App* summ =
      app.add_subcommand("summarize", "per-cell summaries of an archive");
  for (CLI::App* sub : {sim, fit, ppc, cov, summ}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = effective_config(o);
    if (app.got_subcommand(sim)) return cmd_simulate(cfg);
    if (app.got_subcommand(fit)) return cmd_fit(cfg);
    if (app.got_subcommand(ppc)) return cmd_ppc(cfg);
    if (app.got_subcommand(cov)) return cmd_coverage(cfg);
    return cmd_summarize(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tabrec
