#pragma once

#include <vector>

#include "tabrec/count_table.hpp"
#include "tabrec/latent_state.hpp"

namespace tabrec {

// Exact cell-wise observation model under the minimal perturbation mechanism.
// For latent count c >= 1 the published value K has
//
//   P(K = 0 | c)  =  sum_{k=1..t} q(k; c) / Z(c)          (suppression mass)
//   P(K = k | c)  =  q(k; c) / Z(c)          for k > t
//   q(k; c)       =  exp(-(k - c)^2 / (2 sigma^2)),  Z(c) = sum_{k>=1} q(k; c)
//
// with t the suppression threshold; a latent zero publishes 0 with
// probability 1. Values 1..t are impossible observations. log Z and
// log P(K=0) are cached for c <= cache_max and computed on demand beyond.
class CellLikelihoodTable {
 public:
  CellLikelihoodTable(double sigma_err, int suppress_threshold,
                      int cache_max = 256);

  double sigma_err() const { return sigma_err_; }
  int suppress_threshold() const { return threshold_; }

  // log P(c_output | c_true). c_output in 1..threshold is a domain error
  // ("impossible observation"); a structural conflict (positive output over a
  // zero latent) returns -infinity rather than throwing, as the sampler uses
  // it as a reject signal.
  double log_cell_likelihood(int c_output, int c_true) const;

  // P(c_output = 0 | c_true), exponentiated from the cached log mass.
  double prob_zero(int c_true) const;

 private:
  double log_z(int c_true) const;
  double log_p0(int c_true) const;
  void compute(int c_true, double* logz, double* logp0) const;

  double sigma_err_;
  int threshold_;
  int cache_max_;
  double inv2s2_;
  std::vector<double> logz_cache_, logp0_cache_;  // index = c_true, from 1
};

// Sum of log_cell_likelihood over all classes (including row totals), all
// units, all 3 levels. -infinity signals a structural conflict somewhere.
double table_log_likelihood(const CountTable& obs, const LatentState& latent,
                            const CellLikelihoodTable& cell);

// Exact change in table_log_likelihood if latent level-1 cell (mb, cls) moved
// by delta, touching only the 6 observation terms the cascade reaches: the
// level-1 cell and row total, and the class cell and row total of both parent
// units. The state itself is not modified. The resulting cell must be >= 0.
double delta_log_likelihood(const CountTable& obs, const LatentState& latent,
                            const CellLikelihoodTable& cell, int mb, int cls,
                            int delta);

}  // namespace tabrec
