#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tabrec/count_table.hpp"
#include "tabrec/latent_state.hpp"
#include "tabrec/likelihood.hpp"
#include "tabrec/rng.hpp"

#include "oracle_helpers.hpp"

using namespace tabrec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SpatialHierarchy grid_hierarchy(int n3, int n2_per, int n1_per) {
  std::vector<SpatialHierarchy::UnitRow> rows;
  for (int k = 0; k < n3; ++k) {
    SpatialHierarchy::UnitRow r3;
    r3.id = "s2_" + std::to_string(k);
    r3.level = 3;
    rows.push_back(r3);
    for (int j = 0; j < n2_per; ++j) {
      SpatialHierarchy::UnitRow r2;
      r2.id = r3.id + "_s1_" + std::to_string(j);
      r2.level = 2;
      r2.parent_id = r3.id;
      r2.cx = k + 0.1 * j;
      r2.cy = 0.3 * j;
      r2.decile = 1 + (k * n2_per + j) % 10;
      r2.has_geo = true;
      rows.push_back(r2);
      for (int i = 0; i < n1_per; ++i) {
        SpatialHierarchy::UnitRow r1;
        r1.id = r2.id + "_mb_" + std::to_string(i);
        r1.level = 1;
        r1.parent_id = r2.id;
        rows.push_back(r1);
      }
    }
  }
  return SpatialHierarchy::from_rows(rows);
}

}  // namespace

TEST_CASE("cell distributions are proper and match the direct model") {
  const CellLikelihoodTable cell(2.0, 2, 64);
  for (int c : {1, 2, 3, 4, 5, 9, 17, 30}) {
    long double total = cell.prob_zero(c);
    for (int o = 3; o <= c + 90; ++o) {
      const double lp = cell.log_cell_likelihood(o, c);
      total += std::exp(lp);
      const double ref =
          static_cast<double>(std::log(oracle::output_pmf(o, c, 2.0, 2)));
      if (o <= 50) CHECK(lp == doctest::Approx(ref).epsilon(1e-10));
    }
    CHECK(static_cast<double>(total) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(cell.prob_zero(c) ==
          doctest::Approx(static_cast<double>(oracle::output_pmf(0, c, 2.0, 2)))
              .epsilon(1e-10));
  }
}

TEST_CASE("a latent zero publishes zero with certainty") {
  const CellLikelihoodTable cell(2.0, 2);
  CHECK(cell.log_cell_likelihood(0, 0) == 0.0);
  CHECK(cell.prob_zero(0) == 1.0);
  CHECK(cell.log_cell_likelihood(5, 0) == -kInf);  // structural conflict signal
}

TEST_CASE("observations inside the suppressed band are rejected") {
  const CellLikelihoodTable cell(2.0, 2);
  CHECK_THROWS_AS(cell.log_cell_likelihood(1, 5), std::domain_error);
  CHECK_THROWS_AS(cell.log_cell_likelihood(2, 0), std::domain_error);
  CHECK_THROWS_AS(cell.log_cell_likelihood(-1, 5), std::domain_error);
}

TEST_CASE("bad construction settings are rejected") {
  CHECK_THROWS_AS(CellLikelihoodTable(0.0, 2), ConfigError);
  CHECK_THROWS_AS(CellLikelihoodTable(-1.0, 2), ConfigError);
  CHECK_THROWS_AS(CellLikelihoodTable(2.0, -1), ConfigError);
  CHECK_THROWS_AS(CellLikelihoodTable(2.0, 2, 0), ConfigError);
}

TEST_CASE("values beyond the cache match the cached path") {
  const CellLikelihoodTable small(2.0, 2, 8);   // forces on-demand beyond 8
  const CellLikelihoodTable large(2.0, 2, 256);
  for (int c : {7, 8, 9, 20, 120}) {
    CHECK(small.prob_zero(c) == large.prob_zero(c));
    for (int o : {0, 3, 5, 10, 40})
      if (o == 0)
        CHECK(small.prob_zero(c) == large.prob_zero(c));
      else
        CHECK(small.log_cell_likelihood(o, c) == large.log_cell_likelihood(o, c));
  }
}

TEST_CASE("suppression mass stays finite for counts far beyond the band") {
  const CellLikelihoodTable cell(2.0, 2);
  const double lp = cell.log_cell_likelihood(0, 500);
  CHECK(std::isfinite(lp));
  CHECK(lp < -1000.0);
}

TEST_CASE("table log-likelihood sums the independent cell terms") {
  const auto h = grid_hierarchy(2, 2, 2);
  const int m = 4;
  Rng rng(31);
  LatentState latent(h, m);
  for (int mb = 0; mb < h.n_units(1); ++mb)
    for (int cls = 0; cls < m - 1; ++cls)
      latent.apply_move(mb, cls, static_cast<int>(rng.uniform_int(0, 9)));
  CountTable obs(h, m, true);
  const CellLikelihoodTable cell(2.0, 2);
  for (int level = 1; level <= 3; ++level)
    for (int u = 0; u < h.n_units(level); ++u)
      for (int cls = 0; cls < m; ++cls) {
        int v = latent.value(level, u, cls) + static_cast<int>(rng.uniform_int(-2, 2));
        if (v < 0 || v == 1 || v == 2) v = 0;
        obs.set_cell(level, u, cls, v);
      }
  double manual = 0.0;
  for (int level = 1; level <= 3; ++level)
    for (int u = 0; u < h.n_units(level); ++u)
      for (int cls = 0; cls < m; ++cls)
        manual += cell.log_cell_likelihood(obs.cell(level, u, cls),
                                           latent.value(level, u, cls));
  CHECK(table_log_likelihood(obs, latent, cell) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("move deltas equal full recomputation differences") {
  const auto h = grid_hierarchy(2, 2, 2);
  const int m = 4;
  Rng rng(32);
  LatentState latent(h, m);
  CountTable obs(h, m, true);
  for (int mb = 0; mb < h.n_units(1); ++mb)
    for (int cls = 0; cls < m - 1; ++cls)
      latent.apply_move(mb, cls, static_cast<int>(rng.uniform_int(1, 8)));
  for (int level = 1; level <= 3; ++level)
    for (int u = 0; u < h.n_units(level); ++u)
      for (int cls = 0; cls < m; ++cls) {
        int v = latent.value(level, u, cls) + static_cast<int>(rng.uniform_int(-2, 2));
        if (v < 0 || v == 1 || v == 2) v = 0;
        obs.set_cell(level, u, cls, v);
      }
  const CellLikelihoodTable cell(2.0, 2);
  for (int trial = 0; trial < 300; ++trial) {
    const int mb = static_cast<int>(rng.uniform_int(0, h.n_units(1) - 1));
    const int cls = static_cast<int>(rng.uniform_int(0, m - 2));
    const int delta = rng.uniform01() < 0.5 ? -1 : 1;
    if (latent.value(1, mb, cls) + delta < 0) continue;
    const double d = delta_log_likelihood(obs, latent, cell, mb, cls, delta);
    const double before = table_log_likelihood(obs, latent, cell);
    latent.apply_move(mb, cls, delta);
    const double after = table_log_likelihood(obs, latent, cell);
    if (std::isinf(after) && after < 0) {
      CHECK(d == -kInf);  // structural conflict created by the move
      latent.apply_move(mb, cls, -delta);  // keep the walk on finite states
      continue;
    }
    CHECK(std::abs(d - (after - before)) < 1e-8);
  }
}

TEST_CASE("deltas that would drive a count negative are rejected") {
  const auto h = grid_hierarchy(1, 1, 2);
  const int m = 3;
  LatentState latent(h, m);
  CountTable obs(h, m, true);
  const CellLikelihoodTable cell(2.0, 2);
  CHECK_THROWS_AS(delta_log_likelihood(obs, latent, cell, 0, 0, -1),
                  std::invalid_argument);
}
