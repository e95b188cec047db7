#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tabrec/cli.hpp"

#include "oracle_helpers.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"tabrec"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return tabrec::run_cli(static_cast<int>(argv.size()), argv.data());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const std::string& path) { return json::parse(read_text(path)); }

// small end-to-end geography: 2 regions, 4 mid units, 8 leaves
json simulate_config(const std::string& out_dir) {
  return json{
      {"paths", {{"out", out_dir}}},
      {"mock",
       {{"m", 3},
        {"total_low", 10},
        {"total_high", 25},
        {"geography",
         {{"n_level3", 2}, {"level2_per_level3", 2}, {"level1_per_level2", 2}}}}},
      {"seed", 5}};
}

json fit_config(const std::string& sim_dir, const std::string& out_dir,
                const std::string& kind = "maxent") {
  json j{{"paths",
          {{"hierarchy", sim_dir + "/hierarchy.csv"},
           {"counts", sim_dir + "/observation.csv"},
           {"out", out_dir}}},
         {"model", {{"kind", kind}}},
         {"sampler",
          {{"n_iterations", 400}, {"burn_in", 100}, {"thin", 3}, {"n_chains", 2}}},
         {"seed", 5},
         {"threads", 1}};
  if (kind == "geostatistical") j["sampler"]["gibbs_interval"] = 2;
  return j;
}

std::string first_unit_id(const std::string& counts_path) {
  std::ifstream in(counts_path);
  std::string line;
  std::getline(in, line);  // M=
  std::getline(in, line);  // header
  std::getline(in, line);
  return line.substr(0, line.find(','));
}

}  // namespace

TEST_CASE("argument handling") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({}) == 2);                     // a subcommand is required
  CHECK(run({"frobnicate"}) == 2);         // unknown subcommand
  CHECK(run({"fit", "--config", "/nonexistent/cfg.json"}) == 2);
  CHECK(run({"fit"}) == 3);                // no hierarchy configured
}

TEST_CASE("config file defects exit with code 2") {
  oracle::ScratchDir dir("cli");
  const auto bad = dir.str("bad.json");
  write_text(bad, "{ not json");
  CHECK(run({"simulate", "--config", bad}) == 2);
  write_text(bad, R"({"bogus": 1})");
  CHECK(run({"simulate", "--config", bad}) == 2);
  write_text(bad, R"({"model": {"kind": "banana"}})");
  CHECK(run({"fit", "--config", bad}) == 2);
  write_text(bad, R"({"sampler": {"n_iterations": 10, "burn_in": 99}})");
  CHECK(run({"fit", "--config", bad}) == 2);
}

TEST_CASE("simulate, fit, summarize, ppc, coverage round trip") {
  oracle::ScratchDir dir("cli");
  const auto sim = dir.str("sim");
  const auto cfg_sim = dir.str("sim.json");
  write_text(cfg_sim, simulate_config(sim).dump());
  REQUIRE(run({"simulate", "--config", cfg_sim}) == 0);
  for (const char* f :
       {"hierarchy.csv", "truth.csv", "observation.csv", "manifest.json"})
    CHECK(fs::exists(sim + "/" + f));
  const json sim_manifest = load_json(sim + "/manifest.json");
  CHECK(sim_manifest.at("version") == "tabrec 0.1.0");
  CHECK(sim_manifest.at("command") == "simulate");
  CHECK(sim_manifest.at("seed") == 5);

  const auto fit = dir.str("fit");
  const auto cfg_fit = dir.str("fit.json");
  write_text(cfg_fit, fit_config(sim, fit).dump());
  REQUIRE(run({"fit", "--config", cfg_fit}) == 0);
  for (const char* f : {"summary.csv", "samples.csv", "acceptance.csv",
                        "convergence.csv", "manifest.json"})
    CHECK(fs::exists(fit + "/" + f));
  const json fit_manifest = load_json(fit + "/manifest.json");
  CHECK(fit_manifest.at("aggregation_consistent") == true);
  CHECK(fit_manifest.at("n_retained") == 200);  // 2 chains x (400-100)/3

  const auto summ = dir.str("summ");
  const auto cfg_summ = dir.str("summ.json");
  write_text(cfg_summ,
             json{{"paths",
                   {{"hierarchy", sim + "/hierarchy.csv"},
                    {"archive", fit},
                    {"out", summ}}}}
                 .dump());
  REQUIRE(run({"summarize", "--config", cfg_summ}) == 0);
  const std::string summary = read_text(summ + "/summary.csv");
  CHECK(summary.rfind("level,unit_id,class_index,mean,q025,median,q975,width,p_zero",
                      0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + (8 + 4 + 2) * 3);

  const auto ppc = dir.str("ppc");
  const auto cfg_ppc = dir.str("ppc.json");
  write_text(cfg_ppc,
             json{{"paths",
                   {{"hierarchy", sim + "/hierarchy.csv"},
                    {"counts", sim + "/observation.csv"},
                    {"archive", fit},
                    {"out", ppc}}},
                  {"diagnostics", {{"n_replicates", 50}}},
                  {"seed", 5}}
                 .dump());
  REQUIRE(run({"ppc", "--config", cfg_ppc}) == 0);
  const std::string ppc_text = read_text(ppc + "/ppc.txt");
  CHECK(ppc_text.find("aggregation-gap") != std::string::npos);
  CHECK(ppc_text.find("rowsum-gap") != std::string::npos);
  CHECK(ppc_text.find("inside") != std::string::npos);

  const auto cov = dir.str("cov");
  const auto cfg_cov = dir.str("cov.json");
  write_text(cfg_cov,
             json{{"paths",
                   {{"hierarchy", sim + "/hierarchy.csv"},
                    {"archive", fit},
                    {"truth", sim + "/truth.csv"},
                    {"out", cov}}}}
                 .dump());
  REQUIRE(run({"coverage", "--config", cfg_cov}) == 0);
  const std::string cov_text = read_text(cov + "/coverage.txt");
  CHECK(cov_text.find("level 1:") != std::string::npos);
  CHECK(cov_text.find("mean over 1 replicate(s)") != std::string::npos);
  CHECK(read_text(cov + "/coverage_cells_0.csv")
            .rfind("level,unit_id,class_index,hit", 0) == 0);

  SUBCASE("rerunning fit with the same seed is byte-identical") {
    const auto fit2 = dir.str("fit2");
    const auto cfg2 = dir.str("fit2.json");
    write_text(cfg2, fit_config(sim, fit2).dump());
    REQUIRE(run({"fit", "--config", cfg2}) == 0);
    CHECK(read_text(fit2 + "/samples.csv") == read_text(fit + "/samples.csv"));
    CHECK(read_text(fit2 + "/summary.csv") == read_text(fit + "/summary.csv"));
  }

  SUBCASE("--seed and --out override the config file") {
    const auto fit3 = dir.str("fit3");
    REQUIRE(run({"fit", "--config", cfg_fit, "--seed", "99", "--out", fit3}) == 0);
    CHECK(load_json(fit3 + "/manifest.json").at("seed") == 99);
    CHECK(read_text(fit3 + "/samples.csv") != read_text(fit + "/samples.csv"));
  }

  SUBCASE("geostatistical fit writes field traces and contrasts") {
    const auto geo = dir.str("geo");
    const auto cfgg = dir.str("geo.json");
    write_text(cfgg, fit_config(sim, geo, "geostatistical").dump());
    REQUIRE(run({"fit", "--config", cfgg}) == 0);
    CHECK(fs::exists(geo + "/traces.csv"));
    const std::string contrasts = read_text(geo + "/beta_contrasts.txt");
    CHECK(contrasts.find("(ref)") != std::string::npos);
  }

  SUBCASE("defective counts files exit with code 3") {
    const auto bad = dir.str("bad_counts.csv");
    const auto cfgb = dir.str("bad.json");
    json j = fit_config(sim, dir.str("badout"));
    j["paths"]["counts"] = bad;
    write_text(cfgb, j.dump());

    write_text(bad, "M=3\nunit_id,class_index,count\nNOPE,1,5\n");
    CHECK(run({"fit", "--config", cfgb}) == 3);

    const std::string id = first_unit_id(sim + "/observation.csv");
    write_text(bad, "M=3\nunit_id,class_index,count\n" + id + ",1,2\n");
    CHECK(run({"fit", "--config", cfgb}) == 3);  // 2 is suppressed, impossible

    write_text(bad, "wrong header\n");
    CHECK(run({"fit", "--config", cfgb}) == 3);
  }
}
