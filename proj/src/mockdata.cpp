#include "tabrec/mockdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "tabrec/errors.hpp"

namespace tabrec {

void GeographyConfig::validate() const {
  if (n_level3 < 1 || level2_per_level3 < 1 || level1_per_level2 < 1)
    throw ConfigError("geography unit counts must be >= 1");
}

void MockConfig::validate() const {
  geography.validate();
  perturb.validate();
  if (m < 2) throw ConfigError("class count must be >= 2");
  if (focal_class < 0 || focal_class >= m - 1)
    throw ConfigError("focal_class must name a non-total class");
  if (!(truth_beta_scale > 0)) throw ConfigError("truth_beta_scale must be > 0");
  if (!(truth_gp.sigma2 > 0) || !(truth_gp.rho > 0))
    throw ConfigError("truth GP parameters must be > 0");
  if (!(truth_sigma_iid2 >= 0)) throw ConfigError("truth_sigma_iid2 must be >= 0");
  if (!(bb_a > 0) || !(bb_b > 0))
    throw ConfigError("beta-binomial parameters must be > 0");
  if (total_low < 0 || total_high < total_low)
    throw ConfigError("need 0 <= total_low <= total_high");
}

SpatialHierarchy generate_geography(const GeographyConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<SpatialHierarchy::UnitRow> rows;
  char buf[32];
  int i2 = 0, i1 = 0;
  for (int k3 = 0; k3 < cfg.n_level3; ++k3) {
    std::snprintf(buf, sizeof buf, "sa2_%03d", k3 + 1);
    const std::string id3 = buf;
    rows.push_back({id3, 3, "", 0.0, 0.0, 0, false});
    for (int k2 = 0; k2 < cfg.level2_per_level3; ++k2, ++i2) {
      std::snprintf(buf, sizeof buf, "sa1_%04d", i2 + 1);
      const std::string id2 = buf;
      const double cx = rng.uniform01();
      const double cy = rng.uniform01();
      const int decile = static_cast<int>(rng.uniform_int(1, 10));
      rows.push_back({id2, 2, id3, cx, cy, decile, true});
      for (int k1 = 0; k1 < cfg.level1_per_level2; ++k1, ++i1) {
        std::snprintf(buf, sizeof buf, "mb_%05d", i1 + 1);
        rows.push_back({buf, 1, id2, 0.0, 0.0, 0, false});
      }
    }
  }
  return SpatialHierarchy::from_rows(rows);
}

namespace {

// Random +-1 steps on `values[children]` until their sum equals target.
// Decrements only pick entries above zero.
void nudge_to_target(Eigen::ArrayXi& values, const std::vector<int>& children,
                     int target, Rng& rng) {
  int sum = 0;
  for (int c : children) sum += values(c);
  while (sum < target) {
    values(children[static_cast<std::size_t>(rng.uniform_int(
        0, static_cast<std::int64_t>(children.size()) - 1))]) += 1;
    ++sum;
  }
  while (sum > target) {
    std::vector<int> positive;
    for (int c : children)
      if (values(c) > 0) positive.push_back(c);
    values(positive[static_cast<std::size_t>(rng.uniform_int(
        0, static_cast<std::int64_t>(positive.size()) - 1))]) -= 1;
    --sum;
  }
}

}  // namespace

ReconciledTotals reconcile_totals(const Eigen::ArrayXi& level1,
                                  const Eigen::ArrayXi& level2,
                                  const Eigen::ArrayXi& level3,
                                  const SpatialHierarchy& h, Rng& rng) {
  if (level1.size() != h.n_units(1) || level2.size() != h.n_units(2) ||
      level3.size() != h.n_units(3))
    throw DataError("totals length does not match the hierarchy");
  if ((level1 < 0).any() || (level2 < 0).any() || (level3 < 0).any())
    throw DataError("totals must be non-negative");
  ReconciledTotals out{level1, level2, level3};
  for (int u3 = 0; u3 < h.n_units(3); ++u3)
    nudge_to_target(out.level2, h.children_of(3, u3), out.level3(u3), rng);
  for (int u2 = 0; u2 < h.n_units(2); ++u2)
    nudge_to_target(out.level1, h.children_of(2, u2), out.level2(u2), rng);
  return out;
}

namespace {

// Splits one level-2 unit's class counts across its level-1 children so both
// margins hold exactly: largest-remainder apportionment per class against
// the children's totals, then residual units moved between children at
// random until every child's class sum equals its total.
Eigen::ArrayXXi apportion_to_children(const Eigen::ArrayXi& child_totals,
                                      const Eigen::ArrayXi& class_counts,
                                      Rng& rng) {
  const auto nj = child_totals.size();
  const auto nc = class_counts.size();
  Eigen::ArrayXXi a = Eigen::ArrayXXi::Zero(nj, nc);
  const long total = child_totals.cast<long>().sum();
  if (total != class_counts.cast<long>().sum())
    throw std::logic_error("margins disagree in apportionment");
  if (total == 0) return a;

  for (Eigen::Index c = 0; c < nc; ++c) {
    int assigned = 0;
    std::vector<std::pair<double, Eigen::Index>> remainders;
    for (Eigen::Index j = 0; j < nj; ++j) {
      const double quota = static_cast<double>(child_totals(j)) *
                           static_cast<double>(class_counts(c)) /
                           static_cast<double>(total);
      const double fl = std::floor(quota);
      a(j, c) = static_cast<int>(fl);
      assigned += a(j, c);
      remainders.emplace_back(quota - fl, j);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (int k = 0; k < class_counts(c) - assigned; ++k)
      a(remainders[static_cast<std::size_t>(k)].second, c) += 1;
  }

  // Column margins now hold; rebalance rows, class by class, until row sums
  // equal the child totals. Each move fixes one unit of surplus and one of
  // deficit, so this terminates.
  while (true) {
    std::vector<Eigen::Index> deficit, surplus;
    for (Eigen::Index j = 0; j < nj; ++j) {
      const int r = child_totals(j) - a.row(j).sum();
      if (r > 0) deficit.push_back(j);
      if (r < 0) surplus.push_back(j);
    }
    if (deficit.empty()) break;
    const Eigen::Index j = deficit[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(deficit.size()) - 1))];
    const Eigen::Index k = surplus[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(surplus.size()) - 1))];
    std::vector<Eigen::Index> classes;
    for (Eigen::Index c = 0; c < nc; ++c)
      if (a(k, c) > 0) classes.push_back(c);
    const Eigen::Index c = classes[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(classes.size()) - 1))];
    a(k, c) -= 1;
    a(j, c) += 1;
  }
  return a;
}

}  // namespace

FiducialDraw generate_fiducial(const MockConfig& mock, const SpatialHierarchy& h,
                               const ReconciledTotals& totals, Rng& rng) {
  mock.validate();
  const int m = mock.m;
  const int freec = m - 1;
  const int n2 = h.n_units(2);

  FiducialDraw fid;
  fid.beta.resize(10);
  for (int d = 0; d < 10; ++d)
    fid.beta(d) = rng.normal(0.0, mock.truth_beta_scale);
  const Eigen::MatrixXd K =
      exp_cov_matrix(h.pairwise_distances2(), mock.truth_gp, 1e-10);
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw NumericalError("truth GP covariance is not positive definite");
  Eigen::VectorXd xi(n2);
  for (int i = 0; i < n2; ++i) xi(i) = rng.normal();
  fid.g = llt.matrixL() * xi;
  fid.eps.resize(n2);
  const double eps_sd = std::sqrt(mock.truth_sigma_iid2);
  for (int i = 0; i < n2; ++i) fid.eps(i) = rng.normal(0.0, eps_sd);
  const Eigen::ArrayXi deciles = h.deciles2();
  fid.lambda.resize(n2);
  for (int i = 0; i < n2; ++i)
    fid.lambda(i) =
        mock.truth_logit_offset + fid.beta(deciles(i) - 1) + fid.g(i) + fid.eps(i);
  fid.phi = (1.0 / (1.0 + (-fid.lambda.array()).exp())).matrix();

  fid.truth = std::make_unique<CountTable>(h, m, /*perturbed=*/false);
  CountTable& truth = *fid.truth;
  for (int u2 = 0; u2 < n2; ++u2) {
    const int n = totals.level2(u2);
    Eigen::ArrayXi classes = Eigen::ArrayXi::Zero(freec);
    classes(mock.focal_class) = static_cast<int>(rng.binomial(n, fid.phi(u2)));
    int remainder = n - classes(mock.focal_class);
    std::vector<int> others;
    for (int c = 0; c < freec; ++c)
      if (c != mock.focal_class) others.push_back(c);
    for (std::size_t k = 0; k + 1 < others.size(); ++k) {
      const int y =
          static_cast<int>(rng.beta_binomial(remainder, mock.bb_a, mock.bb_b));
      classes(others[k]) = y;
      remainder -= y;
    }
    if (!others.empty()) classes(others.back()) = remainder;

    const auto& mbs = h.children_of(2, u2);
    Eigen::ArrayXi child_totals(static_cast<Eigen::Index>(mbs.size()));
    for (std::size_t j = 0; j < mbs.size(); ++j)
      child_totals(static_cast<Eigen::Index>(j)) = totals.level1(mbs[j]);
    const Eigen::ArrayXXi alloc = apportion_to_children(child_totals, classes, rng);
    for (std::size_t j = 0; j < mbs.size(); ++j)
      for (int c = 0; c < freec; ++c)
        truth.set_cell(1, mbs[j], c, alloc(static_cast<Eigen::Index>(j), c));
  }
  truth.derive_aggregates_from_level1();
  return fid;
}

CountTable generate_observation(const CountTable& truth, Scenario scenario,
                                const MinimalPerturbConfig& cfg, Rng& rng) {
  if (scenario == Scenario::well_specified)
    return perturb_table_minimal(truth, cfg, rng);
  const RecordPopulation pop = assign_records(truth, cfg, rng);
  return perturb_table_records(truth, pop, cfg.suppress_threshold);
}

MockDataset generate_mock(const MockConfig& cfg, Rng& rng) {
  cfg.validate();
  MockDataset out;
  out.hierarchy =
      std::make_unique<SpatialHierarchy>(generate_geography(cfg.geography, rng));
  const SpatialHierarchy& h = *out.hierarchy;

  Eigen::ArrayXi l1(h.n_units(1)), l2 = Eigen::ArrayXi::Zero(h.n_units(2)),
                                   l3 = Eigen::ArrayXi::Zero(h.n_units(3));
  for (int u = 0; u < h.n_units(1); ++u)
    l1(u) = static_cast<int>(rng.uniform_int(cfg.total_low, cfg.total_high));
  for (int u2 = 0; u2 < h.n_units(2); ++u2)
    for (int mb : h.children_of(2, u2)) l2(u2) += l1(mb);
  for (int u3 = 0; u3 < h.n_units(3); ++u3)
    for (int s1 : h.children_of(3, u3)) l3(u3) += l2(s1);

  if (cfg.perturb_source_totals) {
    for (int u = 0; u < l1.size(); ++u)
      l1(u) = perturb_minimal(l1(u), cfg.perturb, rng);
    for (int u = 0; u < l2.size(); ++u)
      l2(u) = perturb_minimal(l2(u), cfg.perturb, rng);
    for (int u = 0; u < l3.size(); ++u)
      l3(u) = perturb_minimal(l3(u), cfg.perturb, rng);
  }
  out.totals = reconcile_totals(l1, l2, l3, h, rng);

  FiducialDraw fid = generate_fiducial(cfg, h, out.totals, rng);
  out.truth = std::move(fid.truth);
  out.beta = std::move(fid.beta);
  out.g = std::move(fid.g);
  out.eps = std::move(fid.eps);
  out.lambda = std::move(fid.lambda);
  out.phi = std::move(fid.phi);

  out.observation = std::make_unique<CountTable>(
      generate_observation(*out.truth, cfg.scenario, cfg.perturb, rng));
  return out;
}

}  // namespace tabrec
