#include "tabrec/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tabrec/errors.hpp"

namespace tabrec {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

CellLikelihoodTable::CellLikelihoodTable(double sigma_err, int suppress_threshold,
                                         int cache_max)
    : sigma_err_(sigma_err),
      threshold_(suppress_threshold),
      cache_max_(cache_max),
      inv2s2_(1.0 / (2.0 * sigma_err * sigma_err)) {
  if (!(sigma_err > 0)) throw ConfigError("sigma_err must be positive");
  if (suppress_threshold < 0) throw ConfigError("suppress_threshold must be >= 0");
  if (cache_max < 1) throw ConfigError("likelihood cache size must be >= 1");
  logz_cache_.resize(static_cast<std::size_t>(cache_max_) + 1);
  logp0_cache_.resize(static_cast<std::size_t>(cache_max_) + 1);
  logz_cache_[0] = 0.0;   // unused; a latent zero has no normalizer
  logp0_cache_[0] = 0.0;  // P(0 | 0) = 1
  for (int c = 1; c <= cache_max_; ++c) {
    compute(c, &logz_cache_[static_cast<std::size_t>(c)],
            &logp0_cache_[static_cast<std::size_t>(c)]);
    // Construction-time normalization audit: the retained outcomes
    // {0} u {threshold+1, ...} must carry all the mass.
    const int reach = static_cast<int>(std::ceil(12.0 * sigma_err_));
    double tail = 0.0;
    const double logz = logz_cache_[static_cast<std::size_t>(c)];
    for (int k = threshold_ + 1; k <= c + reach; ++k) {
      const double d = static_cast<double>(k - c);
      tail += std::exp(-d * d * inv2s2_ - logz);
    }
    const double total = std::exp(logp0_cache_[static_cast<std::size_t>(c)]) + tail;
    if (std::abs(total - 1.0) > 1e-9)
      throw NumericalError("likelihood normalization failed at c_true = " +
                           std::to_string(c));
  }
}

void CellLikelihoodTable::compute(int c_true, double* logz, double* logp0) const {
  // Window c +- 12 sigma carries all but ~1e-31 of the normalizer mass.
  const int reach = static_cast<int>(std::ceil(12.0 * sigma_err_));
  const int lo = std::max(1, c_true - reach);
  const int hi = c_true + reach;
  // The largest weight is exp(0) at k = c_true, so the plain sum is already
  // max-shifted and cannot overflow.
  double z = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double d = static_cast<double>(k - c_true);
    z += std::exp(-d * d * inv2s2_);
  }
  *logz = std::log(z);
  // Suppressed mass over k = 1..threshold, max-shifted so that a far-away
  // c_true yields a very negative but finite log rather than exp-underflow.
  const int t_hi = std::min(threshold_, hi);
  double m = kNegInf;
  for (int k = 1; k <= t_hi; ++k) {
    const double d = static_cast<double>(k - c_true);
    m = std::max(m, -d * d * inv2s2_);
  }
  if (!(m > kNegInf)) {
    *logp0 = kNegInf;  // threshold 0: nothing is ever suppressed
    return;
  }
  double s = 0.0;
  for (int k = 1; k <= t_hi; ++k) {
    const double d = static_cast<double>(k - c_true);
    s += std::exp(-d * d * inv2s2_ - m);
  }
  *logp0 = m + std::log(s) - *logz;
}

double CellLikelihoodTable::log_z(int c_true) const {
  if (c_true <= cache_max_) return logz_cache_[static_cast<std::size_t>(c_true)];
  double logz, logp0;
  compute(c_true, &logz, &logp0);
  return logz;
}

double CellLikelihoodTable::log_p0(int c_true) const {
  if (c_true <= cache_max_) return logp0_cache_[static_cast<std::size_t>(c_true)];
  double logz, logp0;
  compute(c_true, &logz, &logp0);
  return logp0;
}

double CellLikelihoodTable::log_cell_likelihood(int c_output, int c_true) const {
  if (c_output < 0)
    throw std::domain_error("impossible observation: published value " +
                            std::to_string(c_output) + " is negative");
  if (c_output > 0 && c_output <= threshold_)
    throw std::domain_error("impossible observation: published value " +
                            std::to_string(c_output) + " is suppressed");
  if (c_true == 0) return c_output == 0 ? 0.0 : kNegInf;
  if (c_output == 0) return log_p0(c_true);
  const double d = static_cast<double>(c_output - c_true);
  return -d * d * inv2s2_ - log_z(c_true);
}

double CellLikelihoodTable::prob_zero(int c_true) const {
  if (c_true == 0) return 1.0;
  return std::exp(log_p0(c_true));
}

double table_log_likelihood(const CountTable& obs, const LatentState& latent,
                            const CellLikelihoodTable& cell) {
  if (obs.m() != latent.m() || &obs.hierarchy() != &latent.hierarchy())
    throw std::invalid_argument("observation and latent state do not match");
  double total = 0.0;
  for (int level = 1; level <= 3; ++level) {
    const auto& o = obs.level_values(level);
    const auto& v = latent.level_values(level);
    for (int u = 0; u < o.rows(); ++u)
      for (int cls = 0; cls < obs.m(); ++cls)
        total += cell.log_cell_likelihood(o(u, cls), v(u, cls));
  }
  return total;
}

double delta_log_likelihood(const CountTable& obs, const LatentState& latent,
                            const CellLikelihoodTable& cell, int mb, int cls,
                            int delta) {
  if (latent.value(1, mb, cls) + delta < 0)
    throw std::invalid_argument("delta_log_likelihood: move would drive a count negative");
  const int tot = latent.total_class();
  const int s1 = latent.hierarchy().parent_of(1, mb);
  const int s2 = latent.hierarchy().parent_of(2, s1);
  const int lv[6] = {1, 1, 2, 2, 3, 3};
  const int un[6] = {mb, mb, s1, s1, s2, s2};
  const int cl[6] = {cls, tot, cls, tot, cls, tot};
  double new_sum = 0.0, old_sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    const int o = obs.cell(lv[i], un[i], cl[i]);
    const int v = latent.value(lv[i], un[i], cl[i]);
    new_sum += cell.log_cell_likelihood(o, v + delta);
    old_sum += cell.log_cell_likelihood(o, v);
  }
  if (std::isinf(new_sum)) return kNegInf;
  if (std::isinf(old_sum)) return std::numeric_limits<double>::infinity();
  return new_sum - old_sum;
}

}  // namespace tabrec
