#include "tabrec/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tabrec/errors.hpp"

namespace tabrec {

void MinimalPerturbConfig::validate() const {
  if (!(sigma_err > 0)) throw ConfigError("sigma_err must be positive");
  if (suppress_threshold < 0) throw ConfigError("suppress_threshold must be >= 0");
}

int sample_zero_truncated_discrete_normal(int mean, double sigma, Rng& rng) {
  if (mean < 1) throw std::invalid_argument("truncated discrete normal: mean must be >= 1");
  if (!(sigma > 0)) throw std::invalid_argument("truncated discrete normal: sigma must be positive");
  // The window mean +- 12 sigma carries all but ~1e-31 of the mass; CDF
  // inversion over it always terminates.
  const int reach = static_cast<int>(std::ceil(12.0 * sigma));
  const int lo = std::max(1, mean - reach);
  const int hi = mean + reach;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double d = static_cast<double>(k - mean);
    total += std::exp(-d * d * inv2s2);
  }
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  for (int k = lo; k <= hi; ++k) {
    const double d = static_cast<double>(k - mean);
    acc += std::exp(-d * d * inv2s2);
    if (u < acc) return k;
  }
  return hi;  // floating-point slop on the last step
}

int perturb_minimal(int c_true, const MinimalPerturbConfig& cfg, Rng& rng) {
  if (c_true < 0) throw std::invalid_argument("perturb_minimal: negative count");
  if (c_true == 0) return 0;  // true zeros are published untouched
  const int noisy = sample_zero_truncated_discrete_normal(c_true, cfg.sigma_err, rng);
  return noisy <= cfg.suppress_threshold ? 0 : noisy;
}

CountTable perturb_table_minimal(const CountTable& truth,
                                 const MinimalPerturbConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& h = truth.hierarchy();
  CountTable out(h, truth.m(), /*perturbed=*/true);
  for (int level = 1; level <= 3; ++level)
    for (int u = 0; u < h.n_units(level); ++u)
      for (int cls = 0; cls < truth.m(); ++cls)
        out.set_cell(level, u, cls, perturb_minimal(truth.cell(level, u, cls), cfg, rng));
  return out;
}

RecordPopulation::RecordPopulation(const CountTable& truth,
                                   const MinimalPerturbConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& h = truth.hierarchy();
  const int n1 = h.n_units(1);
  n_classes_ = static_cast<std::size_t>(truth.m() - 1);
  cells_.assign(static_cast<std::size_t>(n1) * n_classes_, {});
  // One record per unit of count; errors are scaled by the record's own
  // sensitivity: Var(e | s) = (2 s) sigma_err^2 / sqrt(5).
  const double var_base = 2.0 * cfg.sigma_err * cfg.sigma_err / std::sqrt(5.0);
  for (int mb = 0; mb < n1; ++mb) {
    for (std::size_t cls = 0; cls < n_classes_; ++cls) {
      const int c = truth.cell(1, mb, static_cast<int>(cls));
      auto& recs = cells_[static_cast<std::size_t>(mb) * n_classes_ + cls];
      recs.reserve(static_cast<std::size_t>(c));
      for (int r = 0; r < c; ++r) {
        double s;
        do {
          s = rng.uniform01();
        } while (s == 0.0);  // open interval (0, 1)
        const double e = rng.normal(0.0, std::sqrt(var_base * s));
        recs.push_back({s, e});
        ++n_records_;
      }
      std::sort(recs.begin(), recs.end(),
                [](const RecordDraw& a, const RecordDraw& b) { return a.s > b.s; });
    }
  }
}

RecordPopulation assign_records(const CountTable& truth,
                                const MinimalPerturbConfig& cfg, Rng& rng) {
  return RecordPopulation(truth, cfg, rng);
}

int perturb_cell_records(const std::vector<RecordDraw>& cell_records, int c_true,
                         int threshold) {
  // Sum the error terms of the 5 most sensitive members (all if fewer).
  double err = 0.0;
  if (cell_records.size() <= 5) {
    for (const auto& r : cell_records) err += r.e;
  } else {
    std::vector<RecordDraw> top(cell_records);
    std::partial_sort(top.begin(), top.begin() + 5, top.end(),
                      [](const RecordDraw& a, const RecordDraw& b) { return a.s > b.s; });
    for (int i = 0; i < 5; ++i) err += top[static_cast<std::size_t>(i)].e;
  }
  long long rounded = std::llround(static_cast<double>(c_true) + err);
  if (rounded < 0) rounded = 0;
  return rounded <= threshold ? 0 : static_cast<int>(rounded);
}

namespace {

// Gathers the first <=5 records (already the most sensitive) of each
// constituent cell into `scratch`; the query's top 5 lies among them.
void append_candidates(const RecordPopulation& pop, int mb, int cls,
                       std::vector<RecordDraw>& scratch) {
  const auto& recs = pop.cell_records(mb, cls);
  const std::size_t take = std::min<std::size_t>(5, recs.size());
  scratch.insert(scratch.end(), recs.begin(), recs.begin() + static_cast<long>(take));
}

}  // namespace

CountTable perturb_table_records(const CountTable& truth,
                                 const RecordPopulation& pop, int threshold) {
  const auto& h = truth.hierarchy();
  const int m = truth.m();
  if (pop.n_free_classes() != m - 1)
    throw std::invalid_argument("record population does not match table class count");
  CountTable out(h, m, /*perturbed=*/true);
  std::vector<RecordDraw> scratch;

  // Level-1 units under each unit of each level, so every aggregate query
  // re-ranks over the union of its member records.
  for (int level = 1; level <= 3; ++level) {
    for (int u = 0; u < h.n_units(level); ++u) {
      std::vector<int> mbs;
      if (level == 1) {
        mbs.push_back(u);
      } else if (level == 2) {
        mbs = h.children_of(2, u);
      } else {
        for (int s1 : h.children_of(3, u))
          for (int mb : h.children_of(2, s1)) mbs.push_back(mb);
      }
      for (int cls = 0; cls < m; ++cls) {
        scratch.clear();
        if (cls < m - 1) {
          for (int mb : mbs) append_candidates(pop, mb, cls, scratch);
        } else {
          // Row total: all records of the unit across classes i < M.
          for (int mb : mbs)
            for (int c = 0; c < m - 1; ++c) append_candidates(pop, mb, c, scratch);
        }
        out.set_cell(level, u, cls,
                     perturb_cell_records(scratch, truth.cell(level, u, cls), threshold));
      }
    }
  }
  return out;
}

}  // namespace tabrec
