#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "tabrec/mockdata.hpp"

#include "oracle_helpers.hpp"

using namespace tabrec;

TEST_CASE("synthetic geography has the declared shape") {
  GeographyConfig cfg;
  cfg.n_level3 = 3;
  cfg.level2_per_level3 = 4;
  cfg.level1_per_level2 = 5;
  Rng rng(1);
  const auto h = generate_geography(cfg, rng);
  CHECK(h.n_units(3) == 3);
  CHECK(h.n_units(2) == 12);
  CHECK(h.n_units(1) == 60);
  std::set<std::string> ids;
  for (int level = 1; level <= 3; ++level)
    for (int u = 0; u < h.n_units(level); ++u) {
      ids.insert(h.unit_id(level, u));
      if (level < 3) CHECK(h.parent_of(level, u) >= 0);
    }
  CHECK(ids.size() == 75);
  for (int u = 0; u < 12; ++u) {
    CHECK(h.deciles2()(u) >= 1);
    CHECK(h.deciles2()(u) <= 10);
    CHECK(h.centroids2()(u, 0) >= 0.0);
    CHECK(h.centroids2()(u, 0) <= 1.0);
    CHECK(h.centroids2()(u, 1) >= 0.0);
    CHECK(h.centroids2()(u, 1) <= 1.0);
  }
  CHECK_THROWS_AS(generate_geography(GeographyConfig{0, 2, 2}, rng), ConfigError);
}

TEST_CASE("reconciliation makes totals nest exactly") {
  GeographyConfig gcfg;
  gcfg.n_level3 = 4;
  gcfg.level2_per_level3 = 3;
  gcfg.level1_per_level2 = 4;
  Rng rng(2);
  const auto h = generate_geography(gcfg, rng);
  Eigen::ArrayXi l1(h.n_units(1)), l2(h.n_units(2)), l3(h.n_units(3));
  for (int i = 0; i < l1.size(); ++i) l1(i) = static_cast<int>(rng.uniform_int(0, 40));
  for (int i = 0; i < l2.size(); ++i) l2(i) = static_cast<int>(rng.uniform_int(100, 180));
  for (int i = 0; i < l3.size(); ++i) l3(i) = static_cast<int>(rng.uniform_int(350, 520));
  const auto before_l2 = l2;
  const auto rec = reconcile_totals(l1, l2, l3, h, rng);

  CHECK((rec.level3 == l3).all());  // level-3 totals are authoritative
  for (int k = 0; k < h.n_units(3); ++k) {
    int sum = 0, drift = 0;
    for (int j : h.children_of(3, k)) {
      sum += rec.level2(j);
      drift += std::abs(rec.level2(j) - before_l2(j));
    }
    CHECK(sum == rec.level3(k));
    // every +-1 nudge moves the discrepancy by one: total movement equals it
    int disc = 0;
    for (int j : h.children_of(3, k)) disc += before_l2(j);
    CHECK(drift == std::abs(disc - l3(k)));
  }
  for (int j = 0; j < h.n_units(2); ++j) {
    int sum = 0;
    for (int i : h.children_of(2, j)) sum += rec.level1(i);
    CHECK(sum == rec.level2(j));
  }
  CHECK((rec.level1 >= 0).all());
  CHECK((rec.level2 >= 0).all());
}

TEST_CASE("fiducial truth is consistent and matches its totals") {
  MockConfig cfg;
  cfg.geography = {3, 5, 4};
  cfg.m = 4;
  Rng rng(3);
  const auto data = generate_mock(cfg, rng);
  REQUIRE(data.truth != nullptr);
  CHECK_FALSE(data.truth->perturbed());
  CHECK(data.truth->internally_consistent());
  for (int u = 0; u < data.hierarchy->n_units(1); ++u)
    CHECK(data.truth->cell(1, u, cfg.m - 1) == data.totals.level1(u));
  for (int u = 0; u < data.hierarchy->n_units(3); ++u)
    CHECK(data.truth->cell(3, u, cfg.m - 1) == data.totals.level3(u));
  // the truth field has one entry per level-2 unit, with phi on (0,1)
  REQUIRE(data.phi.size() == data.hierarchy->n_units(2));
  for (int u = 0; u < data.phi.size(); ++u) {
    CHECK(data.phi(u) > 0.0);
    CHECK(data.phi(u) < 1.0);
    const double lambda = cfg.truth_logit_offset +
                          data.beta(data.hierarchy->deciles2()(u) - 1) +
                          data.g(u) + data.eps(u);
    CHECK(data.lambda(u) == doctest::Approx(lambda).epsilon(1e-12));
  }
  REQUIRE(data.beta.size() == 10);
}

TEST_CASE("focal counts follow the spatial field") {
  MockConfig cfg;
  cfg.geography = {4, 10, 3};
  cfg.total_low = 150;
  cfg.total_high = 220;
  cfg.truth_beta_scale = 1.5;
  Rng rng(4);
  const auto data = generate_mock(cfg, rng);
  // empirical focal share per level-2 unit against the generating phi
  double num = 0.0, dp = 0.0, ds = 0.0;
  std::vector<double> share, phi;
  for (int u = 0; u < data.hierarchy->n_units(2); ++u) {
    share.push_back(data.truth->cell(2, u, cfg.focal_class) /
                    static_cast<double>(data.truth->cell(2, u, cfg.m - 1)));
    phi.push_back(data.phi(u));
  }
  const double ms = oracle::mean_of(share), mp = oracle::mean_of(phi);
  for (std::size_t i = 0; i < share.size(); ++i) {
    num += (share[i] - ms) * (phi[i] - mp);
    dp += (phi[i] - mp) * (phi[i] - mp);
    ds += (share[i] - ms) * (share[i] - ms);
  }
  CHECK(num / std::sqrt(dp * ds) > 0.9);
}

TEST_CASE("identical seeds reproduce identical datasets") {
  MockConfig cfg;
  cfg.geography = {2, 3, 3};
  Rng a(5), b(5), c(6);
  const auto da = generate_mock(cfg, a);
  const auto db = generate_mock(cfg, b);
  const auto dc = generate_mock(cfg, c);
  for (int level = 1; level <= 3; ++level) {
    CHECK((da.truth->level_values(level) == db.truth->level_values(level)).all());
    CHECK((da.observation->level_values(level) == db.observation->level_values(level)).all());
  }
  CHECK(da.beta == db.beta);
  bool all_same = true;
  for (int level = 1; level <= 3; ++level)
    all_same = all_same &&
               (da.observation->level_values(level) == dc.observation->level_values(level)).all();
  CHECK_FALSE(all_same);
}

TEST_CASE("scenarios share the truth pipeline and differ in the observation") {
  MockConfig well;
  well.geography = {2, 3, 3};
  MockConfig mis = well;
  mis.scenario = Scenario::misspecified;
  Rng a(7), b(7);
  const auto dw = generate_mock(well, a);
  const auto dm = generate_mock(mis, b);
  for (int level = 1; level <= 3; ++level)
    CHECK((dw.truth->level_values(level) == dm.truth->level_values(level)).all());
  bool differs = false;
  for (int level = 1; level <= 3; ++level)
    differs = differs ||
              !(dw.observation->level_values(level) == dm.observation->level_values(level)).all();
  CHECK(differs);
}

TEST_CASE("observations are valid published tables under both mechanisms") {
  for (auto scenario : {Scenario::well_specified, Scenario::misspecified}) {
    MockConfig cfg;
    cfg.scenario = scenario;
    cfg.geography = {2, 4, 3};
    Rng rng(8);
    const auto data = generate_mock(cfg, rng);
    CHECK(data.observation->perturbed());
    for (int level = 1; level <= 3; ++level) {
      const auto& t = data.truth->level_values(level);
      const auto& o = data.observation->level_values(level);
      for (int u = 0; u < o.rows(); ++u)
        for (int cls = 0; cls < o.cols(); ++cls) {
          REQUIRE((o(u, cls) == 0 || o(u, cls) > cfg.perturb.suppress_threshold));
          if (t(u, cls) == 0) CHECK(o(u, cls) == 0);
        }
    }
  }
}

TEST_CASE("record-mechanism observations are overdispersed upon aggregation") {
  // The characteristic signature picked up by the first predictive check:
  // summing published child values drifts further from the published parent
  // value under the record mechanism than under the minimal one.
  auto gap_sd = [](Scenario s, std::uint64_t seed) {
    MockConfig cfg;
    cfg.scenario = s;
    cfg.geography = {4, 10, 4};
    Rng rng(seed);
    const auto data = generate_mock(cfg, rng);
    std::vector<double> gaps;
    for (int j = 0; j < data.hierarchy->n_units(2); ++j)
      for (int cls = 0; cls < cfg.m; ++cls) {
        int sum = 0;
        for (int i : data.hierarchy->children_of(2, j))
          sum += data.observation->cell(1, i, cls);
        gaps.push_back(sum - data.observation->cell(2, j, cls));
      }
    return oracle::sd_of(gaps);
  };
  double well = 0.0, mis = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    well += gap_sd(Scenario::well_specified, 100 + s);
    mis += gap_sd(Scenario::misspecified, 100 + s);
  }
  CHECK(mis > well * 1.15);
}

TEST_CASE("defective settings are rejected") {
  Rng rng(9);
  MockConfig cfg;
  cfg.m = 1;
  CHECK_THROWS_AS(generate_mock(cfg, rng), ConfigError);
  cfg = MockConfig{};
  cfg.focal_class = 4;  // must be a free class, m - 1 = 4 is the total
  CHECK_THROWS_AS(generate_mock(cfg, rng), ConfigError);
  cfg = MockConfig{};
  cfg.total_low = 50;
  cfg.total_high = 20;
  CHECK_THROWS_AS(generate_mock(cfg, rng), ConfigError);
  cfg = MockConfig{};
  cfg.truth_gp.rho = 0.0;
  CHECK_THROWS_AS(generate_mock(cfg, rng), ConfigError);
}
