#pragma once

#include <cstdint>
#include <vector>

#include "tabrec/count_table.hpp"
#include "tabrec/rng.hpp"

namespace tabrec {

// Settings for the minimal perturbation mechanism: additive discrete noise on
// positive counts followed by small-count suppression.
struct MinimalPerturbConfig {
  double sigma_err = 2.0;      // noise standard deviation
  int suppress_threshold = 2;  // values <= threshold are published as 0

  void validate() const;
};

// Draws k >= 1 with probability proportional to exp(-(k - mean)^2 / (2 sigma^2))
// over k in {1, 2, 3, ...} (a discrete normal truncated away from zero).
int sample_zero_truncated_discrete_normal(int mean, double sigma, Rng& rng);

// Minimal mechanism for one cell: a true zero is always published as zero;
// a positive count gains truncated discrete-normal noise and is suppressed to
// zero when the noisy value is <= threshold. Never emits 1..threshold.
int perturb_minimal(int c_true, const MinimalPerturbConfig& cfg, Rng& rng);

// Applies perturb_minimal independently to every cell (all classes including
// row totals, all units, all 3 levels). The output is flagged perturbed and
// is NOT mutually consistent across levels or with its own row totals.
CountTable perturb_table_minimal(const CountTable& truth,
                                 const MinimalPerturbConfig& cfg, Rng& rng);

// --- Individual-record mechanism -------------------------------------------
//
// Used only to generate misspecified mock data; it has no tractable
// likelihood. Each underlying record r carries a sensitivity s_r ~ U(0,1) and
// a fixed error e_r ~ Normal(0, (2 s_r) sigma_err^2 / sqrt(5)). Any queried
// cell is answered by adding the e_r of its 5 most sensitive member records
// (all of them if fewer than 5) to the true count, rounding, and suppressing.

// One record's draws; records are immutable once assigned, so repeated
// queries of the same cell give identical answers and overlapping cells give
// correlated answers.
struct RecordDraw {
  double s;  // sensitivity, in (0,1)
  double e;  // error contribution
};

class RecordPopulation {
 public:
  // Creates one record per unit of count in the level-1 class cells (i < M)
  // of `truth`.
  RecordPopulation(const CountTable& truth, const MinimalPerturbConfig& cfg,
                   Rng& rng);

  std::int64_t record_count() const { return n_records_; }

  // Member records of one level-1 class cell, sorted by descending
  // sensitivity. Only the first 5 of each list can ever enter a query answer
  // (the top 5 of any union lies in the union of per-cell top 5s).
  const std::vector<RecordDraw>& cell_records(int mb, int cls) const {
    return cells_[static_cast<std::size_t>(mb) * n_classes_ +
                  static_cast<std::size_t>(cls)];
  }

  int n_free_classes() const { return n_classes_; }

 private:
  std::int64_t n_records_ = 0;
  std::size_t n_classes_ = 0;  // free classes (M - 1)
  std::vector<std::vector<RecordDraw>> cells_;
};

// Builds the record population for a consistent truth table.
RecordPopulation assign_records(const CountTable& truth,
                                const MinimalPerturbConfig& cfg, Rng& rng);

// Record-mechanism answer for one cell: c_true plus the errors of the top 5
// members by sensitivity, rounded half-away-from-zero, negatives clamped to
// 0, then values <= threshold suppressed to 0.
int perturb_cell_records(const std::vector<RecordDraw>& cell_records,
                         int c_true, int threshold);

// Queries every cell of every unit at every level (including row totals)
// through the record mechanism. Aggregate cells take the top 5 over the
// union of their constituent level-1 class cells; row totals take the union
// across classes i < M.
CountTable perturb_table_records(const CountTable& truth,
                                 const RecordPopulation& pop, int threshold);

}  // namespace tabrec
