#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "tabrec/count_table.hpp"
#include "tabrec/perturb.hpp"
#include "tabrec/sampler.hpp"

namespace tabrec {

// Quantile probabilities reported by the predictive checks.
inline constexpr std::array<double, 5> kReportQuantiles = {0.025, 0.25, 0.5,
                                                           0.75, 0.975};

// Which class columns the aggregation-gap statistic pools. The row-total
// column counts as a class here.
enum class GapPooling { all_classes, focal_only };

// One discrepancy statistic: the pooled per-unit differences plus their five
// report quantiles (type-7).
struct GapStat {
  std::vector<double> values;
  std::array<double, 5> quantiles;
};

// Statistic 1: for each level-2 unit (and each pooled class), the sum of its
// children's level-1 outputs minus its own level-2 output. Consistent tables
// give all zeros; suppression drags the low quantiles negative.
GapStat stat_aggregation_gap(const CountTable& table,
                             GapPooling pooling = GapPooling::all_classes,
                             int focal_cls = 0);

// Statistic 2: per level-1 unit, the sum of class outputs minus the
// published row total. On tables with no suppression the differences have
// sd close to sigma_err * sqrt(M).
GapStat stat_rowsum_gap(const CountTable& table);

// Posterior predictive check for one statistic: at each report quantile, the
// observed value against the central 95% interval of the replicated value.
struct PpcReport {
  std::string statistic;
  struct Row {
    double prob;
    double observed;
    double lower, upper;
    bool inside;
  };
  std::array<Row, 5> rows;
};

// Re-perturbs n_replicates retained latent samples with the minimal
// mechanism (deliberately, whatever generated the data) and scores both
// statistics. Returns {aggregation-gap, rowsum-gap}.
std::pair<PpcReport, PpcReport> run_ppc(const PosteriorArchive& archive,
                                        const CountTable& obs, int n_replicates,
                                        const MinimalPerturbConfig& cfg, Rng& rng,
                                        GapPooling pooling = GapPooling::all_classes);

// Table layout: columns = quantiles; rows = observed value, bracketed
// replicated 95% interval, inside/outside flag.
std::string format_ppc_report(const PpcReport& report);

enum class CoverageClasses { focal_only, all_classes };

// Per-level fraction of cells whose true count lies inside the central 95%
// credible interval (inclusive), plus the per-cell hit map. hits[level-1] is
// indexed by unit (focal_only) or unit * M + class (all_classes).
struct CoverageReport {
  int replicate = 0;
  CoverageClasses mode = CoverageClasses::focal_only;
  std::array<double, 3> fraction{};
  std::array<std::vector<std::uint8_t>, 3> hits;
};

CoverageReport score_coverage(const PosteriorArchive& archive,
                              const CountTable& truth,
                              CoverageClasses mode = CoverageClasses::focal_only);

std::string format_coverage_report(const CoverageReport& report);

}  // namespace tabrec
