#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>

#include "tabrec/count_table.hpp"
#include "tabrec/geo_prior.hpp"
#include "tabrec/hierarchy.hpp"
#include "tabrec/perturb.hpp"
#include "tabrec/rng.hpp"

namespace tabrec {

// Synthetic three-level geography: level-2 centroids uniform in the unit
// square with covariate deciles assigned uniformly at random. Only level-2
// units carry geometry (they are all the spatial model sees).
struct GeographyConfig {
  int n_level3 = 20;
  int level2_per_level3 = 20;
  int level1_per_level2 = 5;

  void validate() const;
};

SpatialHierarchy generate_geography(const GeographyConfig& cfg, Rng& rng);

enum class Scenario { well_specified, misspecified };

// Mock-dataset settings: truth-field hyper-parameters, the beta-binomial
// split for non-focal classes, source-total generation, and which
// perturbation mechanism produces the observation.
struct MockConfig {
  Scenario scenario = Scenario::well_specified;
  int m = 5;            // class count including the row total
  int focal_class = 0;  // 0-based free class driven by the spatial field

  double truth_beta_scale = 1.0;    // truth decile effects ~ N(0, scale^2)
  double truth_logit_offset = -2.0; // keeps the focal class a minority
  GpParams truth_gp{0.5, 0.3};
  double truth_sigma_iid2 = 0.1;

  double bb_a = 2.0, bb_b = 2.0;  // beta-binomial split of non-focal classes

  int total_low = 20, total_high = 60;  // level-1 pre-release row totals
  // Mimic starting from independently perturbed released totals at each
  // level (reconciled before use) rather than from exact sums.
  bool perturb_source_totals = true;

  MinimalPerturbConfig perturb;
  GeographyConfig geography;

  void validate() const;
};

struct ReconciledTotals {
  Eigen::ArrayXi level1, level2, level3;
};

// Makes possibly inconsistent per-level row totals exactly consistent:
// level-3 totals are authoritative; enclosed level-2 totals are nudged by
// random +-1 steps (never below zero) until sums match, then level-1 totals
// within each level-2 unit likewise. Each step reduces the discrepancy by 1.
ReconciledTotals reconcile_totals(const Eigen::ArrayXi& level1,
                                  const Eigen::ArrayXi& level2,
                                  const Eigen::ArrayXi& level3,
                                  const SpatialHierarchy& h, Rng& rng);

// Ground-truth counts plus the spatial field that generated them.
struct FiducialDraw {
  std::unique_ptr<CountTable> truth;
  Eigen::VectorXd beta;  // 10 truth decile effects (offset excluded)
  Eigen::VectorXd g, eps, lambda, phi;  // per level-2 unit
};

// Draws the truth table on fixed consistent totals: focal-class counts at
// level 2 are Binomial(total, phi) under a logit field
// offset + beta[decile] + g + eps; the remainder is split across the other
// classes by sequential beta-binomial draws; level-1 cells are apportioned
// in proportion to the level-1 totals (largest-remainder with randomized
// rebalancing so both margins hold exactly); level 3 follows by summation.
FiducialDraw generate_fiducial(const MockConfig& mock, const SpatialHierarchy& h,
                               const ReconciledTotals& totals, Rng& rng);

// well_specified: every cell through the minimal mechanism (the likelihood's
// own model). misspecified: every cell answered by the individual-record
// mechanism over one shared record population.
CountTable generate_observation(const CountTable& truth, Scenario scenario,
                                const MinimalPerturbConfig& cfg, Rng& rng);

// Full pipeline: geography, source totals, reconciliation, fiducial truth,
// observation. unique_ptr members keep cross-references address-stable.
struct MockDataset {
  std::unique_ptr<SpatialHierarchy> hierarchy;
  std::unique_ptr<CountTable> truth;
  std::unique_ptr<CountTable> observation;
  ReconciledTotals totals;
  Eigen::VectorXd beta, g, eps, lambda, phi;  // truth field
};

MockDataset generate_mock(const MockConfig& cfg, Rng& rng);

}  // namespace tabrec
