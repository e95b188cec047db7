// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier experiments stream progress to stderr; the verdict table
// goes to stdout.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "tabrec/diagnostics.hpp"
#include "tabrec/mockdata.hpp"
#include "tabrec/sampler.hpp"

#include "oracle_helpers.hpp"

using namespace tabrec;

namespace {

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

double tv_distance(const CountHistogram& h, const std::vector<double>& pmf) {
  double tv = 0;
  for (std::size_t v = 0; v < pmf.size(); ++v)
    tv += std::abs(h.prob_of(static_cast<int>(v)) - pmf[v]);
  for (const auto& [v, n] : h.bins())
    if (v >= static_cast<int>(pmf.size()))
      tv += static_cast<double>(n) / static_cast<double>(h.n());
  return 0.5 * tv;
}

SpatialHierarchy pair_hierarchy() {
  std::vector<SpatialHierarchy::UnitRow> rows;
  rows.push_back({"S2", 3, "", 0, 0, 0, false});
  rows.push_back({"S1", 2, "S2", 0.5, 0.5, 5, true});
  rows.push_back({"mbA", 1, "S1", 0, 0, 0, false});
  rows.push_back({"mbB", 1, "S1", 0, 0, 0, false});
  return SpatialHierarchy::from_rows(rows);
}

SpatialHierarchy chain_hierarchy() {
  std::vector<SpatialHierarchy::UnitRow> rows;
  rows.push_back({"S2", 3, "", 0, 0, 0, false});
  rows.push_back({"S1", 2, "S2", 0.5, 0.5, 5, true});
  rows.push_back({"mb", 1, "S1", 0, 0, 0, false});
  return SpatialHierarchy::from_rows(rows);
}

CountTable pair_obs(const SpatialHierarchy& h, const oracle::TwoCellObs& o) {
  CountTable obs(h, 2, true);
  obs.set_cell(1, h.index_of(1, "mbA"), 0, o.mb1_cls);
  obs.set_cell(1, h.index_of(1, "mbA"), 1, o.mb1_tot);
  obs.set_cell(1, h.index_of(1, "mbB"), 0, o.mb2_cls);
  obs.set_cell(1, h.index_of(1, "mbB"), 1, o.mb2_tot);
  obs.set_cell(2, 0, 0, o.l2_cls);
  obs.set_cell(2, 0, 1, o.l2_tot);
  obs.set_cell(3, 0, 0, o.l3_cls);
  obs.set_cell(3, 0, 1, o.l3_tot);
  return obs;
}

CellLikelihoodTable likelihood_for(const CountTable& obs,
                                   const MinimalPerturbConfig& cfg) {
  int max_obs = 0;
  for (int level = 1; level <= 3; ++level)
    max_obs = std::max(max_obs, obs.level_values(level).maxCoeff());
  const int cache =
      max_obs + static_cast<int>(std::ceil(12.0 * cfg.sigma_err)) + 32;
  return CellLikelihoodTable(cfg.sigma_err, cfg.suppress_threshold, cache);
}

const SummaryRow& find_row(const std::vector<SummaryRow>& rows, int level,
                           const std::string& id, int cls) {
  for (const auto& r : rows)
    if (r.level == level && r.unit_id == id && r.class_index == cls) return r;
  throw std::logic_error("summary row not found: " + id);
}

// Shared desk-scale experiment: five well-specified and five misspecified
// mock realizations, each fitted with the geostatistical model. Feeds the
// coverage criterion (6), the predictive-check criterion (7), and the
// consistency pool for criterion 8.
struct DeskResults {
  std::array<double, 3> well_cov{}, mis_cov{};
  int well_below = 0, mis_below = 0;  // reps with observed q2.5 below the band
  double seconds = 0;
};

DeskResults run_desk(std::vector<bool>* consistency, long* n_samples) {
  DeskResults out;
  const Stopwatch total;
  for (int scenario = 0; scenario < 2; ++scenario) {
    const bool mis = scenario == 1;
    for (int rep = 0; rep < 5; ++rep) {
      const Stopwatch sw;
      const std::uint64_t seed = (mis ? 2000 : 1000) + rep;
      MockConfig mcfg;
      mcfg.scenario = mis ? Scenario::misspecified : Scenario::well_specified;
      mcfg.geography = {20, 20, 5};  // 20 / 400 / 2000 units, coarse to fine
      Rng mrng(seed);
      const MockDataset data = generate_mock(mcfg, mrng);

      const CellLikelihoodTable cell = likelihood_for(*data.observation, mcfg.perturb);
      ChainConfig sc;
      sc.n_iterations = 2000;
      sc.burn_in = 1000;
      sc.thin = 10;
      sc.n_chains = 1;
      sc.gibbs_interval = 1;
      sc.rng_seed = seed + 500000;
      const GeoPriorModel geo(*data.hierarchy, mcfg.focal_class, HyperPriorConfig{});
      const PosteriorArchive archive = run_chains(
          *data.observation, ModelKind::geostatistical, sc, cell, &geo);

      const CoverageReport cov = score_coverage(archive, *data.truth);
      auto& acc = mis ? out.mis_cov : out.well_cov;
      for (int level = 0; level < 3; ++level)
        acc[static_cast<std::size_t>(level)] +=
            cov.fraction[static_cast<std::size_t>(level)] / 5.0;

      Rng prng(seed + 77);
      const auto [gap, rowsum] =
          run_ppc(archive, *data.observation, 100, mcfg.perturb, prng);
      const bool below = gap.rows[0].observed < gap.rows[0].lower;
      (mis ? out.mis_below : out.well_below) += below ? 1 : 0;

      consistency->push_back(archive.aggregation_consistent());
      *n_samples += archive.n_retained();
      std::fprintf(stderr,
                   "  desk %s rep %d: coverage %.4f/%.4f/%.4f  q2.5 %s  (%.0fs)\n",
                   mis ? "mis " : "well", rep, cov.fraction[0], cov.fraction[1],
                   cov.fraction[2], below ? "below" : "inside", sw.seconds());
    }
  }
  out.seconds = total.seconds();
  return out;
}

}  // namespace

int main() {
  std::vector<Verdict> verdicts;
  std::vector<bool> consistency;  // aggregation audit of every archive produced
  long retained_total = 0;

  // 1: forward draws across the suppressed band never emit 1..threshold
  {
    const Stopwatch sw;
    const MinimalPerturbConfig pcfg;
    Rng rng(101);
    const int n = 1000000;
    long band = 0;
    for (int i = 0; i < n; ++i) {
      const int out = perturb_minimal(1 + i % 50, pcfg, rng);
      if (out >= 1 && out <= pcfg.suppress_threshold) ++band;
    }
    const double secs = sw.seconds();
    verdicts.push_back({1, band == 0 && secs < 10.0,
                        fmt("suppressed-band outputs %ld of %d draws", band, n),
                        secs});
  }

  // 2: error scale sigma_err at a large cell; row-sum gap sd near 2 sqrt(M)
  {
    const Stopwatch sw;
    const MinimalPerturbConfig pcfg;
    Rng rng(102);
    const int n = 1000000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double e = perturb_minimal(100, pcfg, rng) - 100;
      s += e;
      s2 += e * e;
    }
    const double sd = std::sqrt((s2 - s * s / n) / (n - 1));

    MockConfig mcfg;
    mcfg.geography = {40, 20, 5};  // 4000 level-1 rows
    mcfg.m = 5;
    mcfg.total_low = 1600;  // keeps every cell far above the band
    mcfg.total_high = 2400;
    Rng mrng(103);
    const MockDataset data = generate_mock(mcfg, mrng);
    const double row_sd = oracle::sd_of(stat_rowsum_gap(*data.observation).values);
    const double want = 2.0 * std::sqrt(5.0);

    verdicts.push_back(
        {2, sd >= 1.9 && sd <= 2.1 && std::abs(row_sd - want) <= 0.05 * want,
         fmt("cell sd %.4f (want 1.9..2.1), rowsum-gap sd %.4f (want %.4f +-5%%)",
             sd, row_sd, want),
         sw.seconds()});
  }

  // 3: per-cell output distribution sums to one for every latent value
  {
    const Stopwatch sw;
    const CellLikelihoodTable cell(2.0, 2, 260);
    double worst = 0;
    for (int c = 0; c <= 200; ++c) {
      long double total = std::exp(static_cast<long double>(
          cell.log_cell_likelihood(0, c)));
      for (int o = 3; o <= c + 60; ++o) {
        const double lp = cell.log_cell_likelihood(o, c);
        if (std::isfinite(lp)) total += std::exp(static_cast<long double>(lp));
      }
      worst = std::max(worst, static_cast<double>(std::fabs(total - 1.0L)));
    }
    verdicts.push_back({3, worst <= 1e-9,
                        fmt("max |sum - 1| = %.3g over c 0..200", worst),
                        sw.seconds()});
  }

  // 4: sampler marginals match brute-force enumeration on the two-cell fixture
  {
    const Stopwatch sw;
    const SpatialHierarchy h = pair_hierarchy();
    const oracle::TwoCellObs o{4, 4, 0, 0, 7, 8, 8, 7};
    const CountTable obs = pair_obs(h, o);
    const auto exact = oracle::enumerate_two_cell_posterior(o, 2.0, 2, 30);

    ChainConfig sc;
    sc.n_iterations = 600000;
    sc.burn_in = 100000;
    sc.thin = 2;
    sc.n_chains = 1;
    sc.rng_seed = 104;
    const CellLikelihoodTable cell(2.0, 2, 64);
    const PosteriorArchive archive =
        run_chains(obs, ModelKind::maxent, sc, cell, nullptr);
    const double tv1 =
        tv_distance(archive.hists[0][static_cast<std::size_t>(
                        h.index_of(1, "mbA")) * 2],
                    exact.mb1);
    const double tv2 =
        tv_distance(archive.hists[0][static_cast<std::size_t>(
                        h.index_of(1, "mbB")) * 2],
                    exact.mb2);
    consistency.push_back(archive.aggregation_consistent());
    retained_total += archive.n_retained();
    const double secs = sw.seconds();
    verdicts.push_back({4, tv1 <= 0.02 && tv2 <= 0.02 && secs < 120.0,
                        fmt("TV vs enumeration %.4f / %.4f (limit 0.02)", tv1, tv2),
                        secs});
  }

  // 5: running delta-accumulated log likelihood vs full recomputation
  {
    const Stopwatch sw;
    MockConfig mcfg;
    mcfg.geography = {5, 5, 5};  // 125 rows x 4 free classes = 500 cells
    mcfg.m = 5;
    Rng mrng(105);
    const MockDataset data = generate_mock(mcfg, mrng);
    const CellLikelihoodTable cell = likelihood_for(*data.observation, mcfg.perturb);

    LatentState latent(*data.hierarchy, mcfg.m);
    latent.set_level1_classes(data.truth->level_values(1).leftCols(mcfg.m - 1));
    double running = table_log_likelihood(*data.observation, latent, cell);
    Rng rng(106);
    MhCounters ctr;
    while (ctr.accepted < 100000)
      mh_step(latent, *data.observation, cell, nullptr, 0, {}, rng, &running, &ctr);
    const double full = table_log_likelihood(*data.observation, latent, cell);
    verdicts.push_back(
        {5, std::abs(running - full) <= 1e-6,
         fmt("|running - full| = %.3g after %lld accepted of %lld proposals",
             std::abs(running - full), static_cast<long long>(ctr.accepted),
             static_cast<long long>(ctr.proposals)),
         sw.seconds()});
  }

  // 6 and 7 share the desk-scale geostatistical fits
  {
    const DeskResults desk = run_desk(&consistency, &retained_total);
    const auto& w = desk.well_cov;
    const auto& m = desk.mis_cov;
    const bool well_ok = w[0] >= 0.90 && w[1] >= 0.90 && w[2] >= 0.90 &&
                         std::abs(w[0] - 0.95) <= 0.03;
    const bool degrade_ok = w[0] - m[0] <= 0.03 && w[1] - m[1] <= 0.03 &&
                            w[2] - m[2] <= 0.03;
    std::string detail =
        fmt("well %.4f/%.4f/%.4f, mis %.4f/%.4f/%.4f (levels 1..3)", w[0], w[1],
            w[2], m[0], m[1], m[2]);
    if (!degrade_ok)
      detail +=
          "; misspecified degradation exceeds 0.03: the record mechanism's "
          "aggregate noise is ~2x the modeled sigma";
    verdicts.push_back(
        {6, well_ok && degrade_ok && desk.seconds < 7200.0, detail, desk.seconds});
    verdicts.push_back({7, desk.mis_below >= 4 && desk.well_below <= 2,
                        fmt("observed q2.5 below predictive band: misspecified "
                            "%d/5 (need >=4), well-specified %d/5 (need <=2)",
                            desk.mis_below, desk.well_below),
                        0.0});
  }

  // 9: structural-zero probabilities (criterion 8 is scored over all runs last)
  {
    const Stopwatch sw;
    // (a) second class observed zero everywhere while the first class and the
    // totals make any positive value for it astronomically implausible
    const SpatialHierarchy h = pair_hierarchy();
    CountTable forced(h, 3, true);
    forced.set_cell(1, h.index_of(1, "mbA"), 0, 40);
    forced.set_cell(1, h.index_of(1, "mbB"), 0, 40);
    forced.set_cell(2, 0, 0, 80);
    forced.set_cell(3, 0, 0, 80);
    // class 2 columns and all total columns stay observed 0

    ChainConfig sc;
    sc.n_iterations = 50000;
    sc.burn_in = 10000;
    sc.thin = 10;
    sc.n_chains = 1;
    sc.rng_seed = 107;
    const CellLikelihoodTable cell(2.0, 2, 256);
    const PosteriorArchive fa =
        run_chains(forced, ModelKind::maxent, sc, cell, nullptr);
    consistency.push_back(fa.aggregation_consistent());
    retained_total += fa.n_retained();
    const auto frows = summarize(fa);
    bool all_emitted = frows.size() == (2 + 1 + 1) * 3;
    for (const auto& r : frows)
      all_emitted = all_emitted && r.p_zero >= 0.0 && r.p_zero <= 1.0;
    const bool forced_one = find_row(frows, 1, "mbA", 2).p_zero == 1.0 &&
                            find_row(frows, 1, "mbB", 2).p_zero == 1.0 &&
                            find_row(frows, 2, "S1", 2).p_zero == 1.0 &&
                            find_row(frows, 3, "S2", 2).p_zero == 1.0;

    // (b) a zero compatible with both a structural zero and suppression
    const SpatialHierarchy hc = chain_hierarchy();
    CountTable redis(hc, 3, true);
    for (int level = 1; level <= 3; ++level) {
      redis.set_cell(level, 0, 0, 12);
      redis.set_cell(level, 0, 2, 15);
    }
    sc.rng_seed = 108;
    sc.thin = 5;
    const PosteriorArchive ra =
        run_chains(redis, ModelKind::maxent, sc, cell, nullptr);
    consistency.push_back(ra.aggregation_consistent());
    retained_total += ra.n_retained();
    const auto rrows = summarize(ra);
    bool open = true;
    for (int level = 1; level <= 3; ++level) {
      const double pz =
          find_row(rrows, level, level == 1 ? "mb" : (level == 2 ? "S1" : "S2"), 2)
              .p_zero;
      open = open && pz > 0.0 && pz < 1.0;
    }
    verdicts.push_back(
        {9, all_emitted && forced_one && open,
         fmt("p_zero emitted for all cells %s, forced cells at 1.0 %s, "
             "redistribution cell in (0,1) %s",
             all_emitted ? "yes" : "NO", forced_one ? "yes" : "NO",
             open ? "yes" : "NO"),
         sw.seconds()});
  }

  // 10: decile-contrast calibration on a strong-signal synthetic run
  {
    const Stopwatch sw;
    MockConfig mcfg;
    mcfg.geography = {20, 20, 5};
    mcfg.total_low = 100;  // large rows sharpen the field signal
    mcfg.total_high = 200;
    Rng mrng(109);
    const MockDataset data = generate_mock(mcfg, mrng);

    const CellLikelihoodTable cell = likelihood_for(*data.observation, mcfg.perturb);
    ChainConfig sc;
    sc.n_iterations = 2000;
    sc.burn_in = 1000;
    sc.thin = 10;
    sc.n_chains = 1;
    sc.gibbs_interval = 1;
    sc.rng_seed = 110;
    const GeoPriorModel geo(*data.hierarchy, mcfg.focal_class, HyperPriorConfig{});
    const PosteriorArchive archive = run_chains(
        *data.observation, ModelKind::geostatistical, sc, cell, &geo);
    consistency.push_back(archive.aggregation_consistent());
    retained_total += archive.n_retained();

    const BetaContrastSummary s = report_beta_contrasts(archive.beta_draws);
    int hits = 0;
    for (int d = 0; d < 10; ++d) {
      const double truth = data.beta(d) - data.beta(9);
      if (truth >= s.lower(d) && truth <= s.upper(d)) ++hits;
    }
    verdicts.push_back({10, hits >= 9,
                        fmt("true decile contrasts inside 95%% intervals: %d/10",
                            hits),
                        sw.seconds()});
  }

  // 8: every retained sample of every archive produced above must aggregate
  {
    bool all = true;
    for (const bool c : consistency) all = all && c;
    verdicts.push_back({8, all && !consistency.empty(),
                        fmt("%zu archives, %ld retained samples, %s",
                            consistency.size(), retained_total,
                            all ? "zero violations" : "VIOLATIONS FOUND"),
                        0.0});
  }

  std::sort(verdicts.begin(), verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  bool all_pass = true;
  for (const auto& v : verdicts) {
    all_pass = all_pass && v.pass;
    std::printf("criterion %2d: %s  %s  (%.1fs)\n", v.id,
                v.pass ? "PASS" : "FAIL", v.detail.c_str(), v.seconds);
  }
  std::printf("%s\n", all_pass ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return all_pass ? 0 : 1;
}
