#include "tabrec/geo_prior.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "tabrec/errors.hpp"
#include "tabrec/quantile.hpp"

namespace tabrec {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_choose(int n, int y) {
  return std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
}
}  // namespace

double exp_cov(double d, const GpParams& p, double nugget_var) {
  if (!(p.sigma2 > 0) || !(p.rho > 0))
    throw std::invalid_argument("exp_cov: sigma2 and rho must be positive");
  if (d < 0) throw std::invalid_argument("exp_cov: negative distance");
  return p.sigma2 * std::exp(-d / p.rho) + (d == 0.0 ? nugget_var : 0.0);
}

Eigen::MatrixXd exp_cov_matrix(const Eigen::MatrixXd& dist, const GpParams& p,
                               double nugget_var) {
  if (!(p.sigma2 > 0) || !(p.rho > 0))
    throw std::invalid_argument("exp_cov: sigma2 and rho must be positive");
  Eigen::MatrixXd k = (dist.array() * (-1.0 / p.rho)).exp().matrix() * p.sigma2;
  k.diagonal().array() += nugget_var;
  return k;
}

double maxent_log_prior(const LatentState&) {
  // Improper flat prior on the non-negative lattice: constant by definition.
  return 0.0;
}

double binomial_log_pmf(int y, int n, double phi) {
  if (y < 0 || n < 0 || y > n) return kNegInf;
  if (!(phi >= 0.0 && phi <= 1.0)) throw std::invalid_argument("binomial: phi outside [0, 1]");
  if (n == 0) return 0.0;
  double ll = log_choose(n, y);
  if (y > 0) {
    if (phi == 0.0) return kNegInf;
    ll += y * std::log(phi);
  }
  if (n - y > 0) {
    if (phi == 1.0) return kNegInf;
    ll += (n - y) * std::log1p(-phi);
  }
  return ll;
}

double binomial_log_pmf_logit(int y, int n, double lambda) {
  if (y < 0 || n < 0 || y > n) return kNegInf;
  if (n == 0) return 0.0;
  return log_choose(n, y) + y * lambda - n * softplus(lambda);
}

void GeoPriorState::refresh(const Eigen::ArrayXi& deciles) {
  const Eigen::Index n = g.size();
  lambda.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    lambda(i) = beta(deciles(i) - 1) + g(i) + eps(i);
  phi = (1.0 / (1.0 + (-lambda.array()).exp())).matrix();
}

double geo_log_prior_term(const LatentState& latent, const GeoPriorState& geo,
                          int unit2, int focal_cls) {
  const int y = latent.value(2, unit2, focal_cls);
  const int n = latent.value(2, unit2, latent.total_class());
  return binomial_log_pmf_logit(y, n, geo.lambda(unit2));
}

double geo_delta_log_prior(const LatentState& latent, const GeoPriorState& geo,
                           int mb, int cls, int delta, int focal_cls) {
  const int unit2 = latent.hierarchy().parent_of(1, mb);
  const int y = latent.value(2, unit2, focal_cls);
  const int n = latent.value(2, unit2, latent.total_class());
  const int y2 = cls == focal_cls ? y + delta : y;
  const double lam = geo.lambda(unit2);
  return binomial_log_pmf_logit(y2, n + delta, lam) -
         binomial_log_pmf_logit(y, n, lam);
}

EmpiricalLogit empirical_logit(const Eigen::VectorXd& y, const Eigen::VectorXd& n) {
  if (y.size() != n.size()) throw std::invalid_argument("empirical_logit: size mismatch");
  EmpiricalLogit out;
  out.z = ((y.array() + 0.5) / (n.array() - y.array() + 0.5)).log().matrix();
  out.v = (1.0 / (y.array() + 0.5) + 1.0 / (n.array() - y.array() + 0.5)).matrix();
  return out;
}

GeoPriorModel::GeoPriorModel(const SpatialHierarchy& h, int focal_cls,
                             HyperPriorConfig cfg)
    : h_(&h), focal_cls_(focal_cls), cfg_(cfg) {
  if (focal_cls < 0) throw ConfigError("focal class must be non-negative");
  if (cfg_.metropolis_iters < 1)
    throw ConfigError("hyper-parameter sub-chain needs at least 1 iteration");
  if (!(cfg_.sigma_g2_scale > 0) || !(cfg_.sigma_iid2_scale > 0))
    throw ConfigError("half-normal hyper-prior scales must be positive");
  const int n2 = h.n_units(2);
  if (n2 < 2) throw ConfigError("geostatistical model needs at least 2 level-2 units");
  dist_ = h.pairwise_distances2();
  deciles_ = h.deciles2();
  ddt_.resize(n2, n2);
  for (int i = 0; i < n2; ++i)
    for (int j = 0; j < n2; ++j)
      ddt_(i, j) = deciles_(i) == deciles_(j) ? 1.0 : 0.0;

  if (cfg_.rho_min <= 0.0 && cfg_.rho_max <= 0.0) {
    // Scale-aware default: uniform between the 5th percentile and the
    // maximum of the pairwise centroid distances.
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n2) * (n2 - 1) / 2);
    for (int i = 0; i < n2; ++i)
      for (int j = i + 1; j < n2; ++j) d.push_back(dist_(i, j));
    cfg_.rho_max = type7_quantile(d, 1.0);
    cfg_.rho_min = std::max(type7_quantile(d, 0.05), 1e-6 * cfg_.rho_max);
  }
  if (!(cfg_.rho_max > cfg_.rho_min) || !(cfg_.rho_min > 0))
    throw ConfigError("GP range bounds must satisfy 0 < rho_min < rho_max");
}

GeoPriorState GeoPriorModel::prior_draw(Rng& rng) const {
  const int n2 = static_cast<int>(dist_.rows());
  GeoPriorState s;
  s.beta.resize(10);
  for (int d = 0; d < 10; ++d) s.beta(d) = rng.normal();
  s.gp.sigma2 = std::abs(rng.normal()) * cfg_.sigma_g2_scale;
  s.gp.rho = rng.uniform(cfg_.rho_min, cfg_.rho_max);
  s.sigma_iid2 = std::abs(rng.normal()) * cfg_.sigma_iid2_scale;
  Eigen::MatrixXd k = exp_cov_matrix(dist_, s.gp, cfg_.jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success)
    throw NumericalError("GP covariance factorization failed in prior draw");
  Eigen::VectorXd xi(n2);
  for (int i = 0; i < n2; ++i) xi(i) = rng.normal();
  s.g = llt.matrixL() * xi;
  s.eps.resize(n2);
  const double sd_iid = std::sqrt(s.sigma_iid2);
  for (int i = 0; i < n2; ++i) s.eps(i) = rng.normal(0.0, sd_iid);
  s.refresh(deciles_);
  return s;
}

double GeoPriorModel::marginal_loglik(const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& v, double sigma_g2,
                                      double rho, double sigma_iid2,
                                      Eigen::LLT<Eigen::MatrixXd>* llt) const {
  // z ~ N(0, Sigma), Sigma = D D' + K(sigma_g2, rho) + sigma_iid2 I + diag(v).
  Eigen::MatrixXd sigma =
      ddt_ + (dist_.array() * (-1.0 / rho)).exp().matrix() * sigma_g2;
  sigma.diagonal() += v;
  sigma.diagonal().array() += sigma_iid2 + cfg_.jitter;
  llt->compute(sigma);
  if (llt->info() != Eigen::Success) return kNegInf;
  const Eigen::VectorXd sol = llt->solve(z);
  const double logdet =
      2.0 * llt->matrixLLT().diagonal().array().log().sum();
  return -0.5 * z.dot(sol) - 0.5 * logdet -
         0.5 * static_cast<double>(z.size()) * kLog2Pi;
}

GeoPriorState GeoPriorModel::empirical_logit_fit(const LatentState& latent,
                                                 const GeoPriorState& current,
                                                 Rng& rng) const {
  const int n2 = static_cast<int>(dist_.rows());
  const int tot = latent.total_class();
  Eigen::VectorXd y(n2), n(n2);
  for (int i = 0; i < n2; ++i) {
    y(i) = latent.value(2, i, focal_cls_);
    n(i) = latent.value(2, i, tot);
  }
  if (n.maxCoeff() == 0.0) return prior_draw(rng);  // nothing observed yet

  const EmpiricalLogit el = empirical_logit(y, n);

  // Half-normal log-densities on the variance components (up to constants)
  // plus the flat-in-bounds range prior.
  auto log_hyper_prior = [&](double sg2, double rho, double si2) {
    if (!(sg2 > 0) || !(si2 > 0)) return kNegInf;
    if (rho <= cfg_.rho_min || rho >= cfg_.rho_max) return kNegInf;
    const double a = sg2 / cfg_.sigma_g2_scale;
    const double b = si2 / cfg_.sigma_iid2_scale;
    return -0.5 * a * a - 0.5 * b * b;
  };

  double sg2 = std::max(current.gp.sigma2, 1e-12);
  double rho = std::min(std::max(current.gp.rho, cfg_.rho_min * 1.0000001),
                        cfg_.rho_max * 0.9999999);
  double si2 = std::max(current.sigma_iid2, 1e-12);

  Eigen::LLT<Eigen::MatrixXd> llt_cur, llt_prop;
  double ll_cur = marginal_loglik(el.z, el.v, sg2, rho, si2, &llt_cur) +
                  log_hyper_prior(sg2, rho, si2);
  if (!std::isfinite(ll_cur))
    throw NumericalError("hyper-parameter update started from an invalid state");

  // Short Metropolis sub-chain on (sigma_g^2, rho, sigma_iid^2) against the
  // marginal likelihood of z; variances move on the log scale, the range on
  // the logit scale of its bounded support (Jacobians included).
  const double step = 0.35;
  const double span = cfg_.rho_max - cfg_.rho_min;
  for (int it = 0; it < cfg_.metropolis_iters; ++it) {
    const double lg = std::log(sg2) + step * rng.normal();
    const double li = std::log(si2) + step * rng.normal();
    const double p = (rho - cfg_.rho_min) / span;
    const double u = std::log(p / (1.0 - p)) + step * rng.normal();
    const double p2 = 1.0 / (1.0 + std::exp(-u));
    const double sg2p = std::exp(lg);
    const double si2p = std::exp(li);
    const double rhop = cfg_.rho_min + span * p2;
    const double ll_prop = marginal_loglik(el.z, el.v, sg2p, rhop, si2p, &llt_prop) +
                           log_hyper_prior(sg2p, rhop, si2p);
    const double jacobian = std::log(sg2p / sg2) + std::log(si2p / si2) +
                            std::log(p2 * (1.0 - p2)) - std::log(p * (1.0 - p));
    const double log_ratio = ll_prop - ll_cur + jacobian;
    if (std::isfinite(ll_prop) && std::log(1.0 - rng.uniform01()) < log_ratio) {
      sg2 = sg2p;
      rho = rhop;
      si2 = si2p;
      ll_cur = ll_prop;
      llt_cur = llt_prop;
    }
  }

  // Exact joint draw of (beta, g) | z, hypers by the Matheron update: draw
  // from the prior, push through the observation model, and correct by the
  // residual against the cached factor of Sigma.
  GeoPriorState s;
  s.gp = {sg2, rho};
  s.sigma_iid2 = si2;

  Eigen::VectorXd beta_star(10);
  for (int d = 0; d < 10; ++d) beta_star(d) = rng.normal();
  Eigen::MatrixXd k = (dist_.array() * (-1.0 / rho)).exp().matrix() * sg2;
  Eigen::MatrixXd k_chol = k;
  k_chol.diagonal().array() += cfg_.jitter;
  Eigen::LLT<Eigen::MatrixXd> lltk(k_chol);
  if (lltk.info() != Eigen::Success)
    throw NumericalError("GP covariance factorization failed in Gibbs block");
  Eigen::VectorXd xi(n2);
  for (int i = 0; i < n2; ++i) xi(i) = rng.normal();
  const Eigen::VectorXd g_star = lltk.matrixL() * xi;
  Eigen::VectorXd z_star(n2);
  for (int i = 0; i < n2; ++i) {
    const double e_star = rng.normal(0.0, std::sqrt(si2 + el.v(i)));
    z_star(i) = beta_star(deciles_(i) - 1) + g_star(i) + e_star;
  }
  const Eigen::VectorXd alpha = llt_cur.solve(el.z - z_star);
  s.beta = beta_star;
  for (int i = 0; i < n2; ++i) s.beta(deciles_(i) - 1) += alpha(i);
  s.g = g_star + k * alpha;

  // Nugget conditional given (beta, g): the residual r = eps + e with
  // eps ~ N(0, si2) and e ~ N(0, v) splits coordinate-wise.
  s.eps.resize(n2);
  for (int i = 0; i < n2; ++i) {
    const double r = el.z(i) - s.beta(deciles_(i) - 1) - s.g(i);
    const double denom = si2 + el.v(i);
    const double mean = si2 * r / denom;
    const double sd = std::sqrt(si2 * el.v(i) / denom);
    s.eps(i) = rng.normal(mean, sd);
  }
  s.refresh(deciles_);
  return s;
}

BetaContrastSummary report_beta_contrasts(const Eigen::MatrixXd& beta_draws) {
  if (beta_draws.rows() < 1 || beta_draws.cols() != 10)
    throw std::invalid_argument("beta draws must be a (draws x 10) matrix");
  BetaContrastSummary s;
  s.lower.resize(10);
  s.median.resize(10);
  s.upper.resize(10);
  const Eigen::Index n = beta_draws.rows();
  std::vector<double> contrast(static_cast<std::size_t>(n));
  for (int d = 0; d < 10; ++d) {
    for (Eigen::Index i = 0; i < n; ++i)
      contrast[static_cast<std::size_t>(i)] = beta_draws(i, d) - beta_draws(i, 9);
    auto q = type7_quantiles(contrast, {0.025, 0.5, 0.975});
    s.lower(d) = q[0];
    s.median(d) = q[1];
    s.upper(d) = q[2];
  }
  return s;
}

std::string format_beta_contrast_table(const BetaContrastSummary& s) {
  char buf[64];
  std::string out = "decile  ";
  for (int d = 1; d <= 10; ++d) {
    std::snprintf(buf, sizeof buf, "%8d", d);
    out += buf;
  }
  out += "\n";
  const Eigen::ArrayXd* rows[3] = {&s.lower, &s.median, &s.upper};
  const char* names[3] = {"lower ", "median", "upper "};
  for (int r = 0; r < 3; ++r) {
    out += names[r];
    out += "  ";
    for (int d = 0; d < 10; ++d) {
      if (d == 9)
        std::snprintf(buf, sizeof buf, "%8s", "(ref)");
      else
        std::snprintf(buf, sizeof buf, "%8.2f", (*rows[r])(d));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace tabrec
