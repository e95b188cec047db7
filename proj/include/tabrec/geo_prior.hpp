#pragma once

#include <Eigen/Dense>
#include <string>

#include "tabrec/latent_state.hpp"
#include "tabrec/rng.hpp"

namespace tabrec {

// Exponential-covariance Gaussian process parameters (marginal variance and
// range).
struct GpParams {
  double sigma2 = 1.0;
  double rho = 1.0;
};

// sigma_g^2 * exp(-d / rho), plus nugget_var on the diagonal (d = 0).
double exp_cov(double d, const GpParams& p, double nugget_var);
Eigen::MatrixXd exp_cov_matrix(const Eigen::MatrixXd& dist, const GpParams& p,
                               double nugget_var);

// Improper flat prior over non-negative level-1 counts: log-density constant,
// so it contributes nothing to MH ratios. Kept explicit so model wiring reads
// the same for both priors.
double maxent_log_prior(const LatentState& latent);

// log Binomial(y | n, phi); -inf outside the support 0 <= y <= n.
double binomial_log_pmf(int y, int n, double phi);
// Same, parameterized by lambda = logit(phi) for stability at extreme phi.
double binomial_log_pmf_logit(int y, int n, double lambda);

// State of the geostatistical prior on the focal-class proportion at level 2:
// logit(phi_i) = beta[decile_i] + g_i + eps_i, with beta ~ N(0,1) per decile,
// g a GP over level-2 centroids, and eps an iid nugget.
struct GeoPriorState {
  Eigen::VectorXd beta;    // 10 decile effects
  Eigen::VectorXd g;       // GP field, one per level-2 unit
  Eigen::VectorXd eps;     // nugget, one per level-2 unit
  double sigma_iid2 = 1.0; // nugget variance
  GpParams gp;
  Eigen::VectorXd lambda;  // derived: logit(phi)
  Eigen::VectorXd phi;     // derived: focal-class proportion, in (0,1)

  // Recomputes lambda and phi from beta/g/eps given 1-based deciles.
  void refresh(const Eigen::ArrayXi& deciles);
};

// Binomial log-prior of the focal-class count at one level-2 unit given its
// latent row total.
double geo_log_prior_term(const LatentState& latent, const GeoPriorState& geo,
                          int unit2, int focal_cls);

// Exact change in the total geostatistical log-prior when level-1 cell
// (mb, cls) moves by delta; only the parent level-2 unit's binomial term is
// affected (focal moves change y and n; other classes change n only).
double geo_delta_log_prior(const LatentState& latent, const GeoPriorState& geo,
                           int mb, int cls, int delta, int focal_cls);

// Empirical-logit transform of focal counts y against totals n:
// z = log((y + 0.5) / (n - y + 0.5)), working variance
// v = 1/(y + 0.5) + 1/(n - y + 0.5).
struct EmpiricalLogit {
  Eigen::VectorXd z, v;
};
EmpiricalLogit empirical_logit(const Eigen::VectorXd& y, const Eigen::VectorXd& n);

// Hyper-prior settings for the Gibbs block. Variances carry half-normal
// priors; the GP range is uniform between the 5th percentile and the maximum
// of inter-centroid distances (resolved at model construction when the
// bounds are left at 0).
struct HyperPriorConfig {
  double sigma_g2_scale = 1.0;   // half-normal scale on sigma_g^2
  double sigma_iid2_scale = 1.0; // half-normal scale on sigma_iid^2
  double rho_min = 0.0, rho_max = 0.0;
  int metropolis_iters = 10;     // hyper-parameter sub-chain length per block
  double jitter = 1e-8;          // diagonal jitter for GP factorizations
};

// Precomputed geometry (distances, decile design) plus the blocked-Gibbs
// update of the geostatistical prior. Immutable after construction; one
// instance can serve several chains, each owning its own GeoPriorState.
class GeoPriorModel {
 public:
  GeoPriorModel(const SpatialHierarchy& h, int focal_cls,
                HyperPriorConfig cfg = {});

  int focal_class() const { return focal_cls_; }
  const HyperPriorConfig& hyper() const { return cfg_; }
  const Eigen::MatrixXd& distances() const { return dist_; }

  // Draw (beta, g, eps, hypers) from the prior alone.
  GeoPriorState prior_draw(Rng& rng) const;

  // One blocked-Gibbs draw given the latent level-2 focal counts and totals:
  // transforms them to empirical logits z with working variances v, runs a
  // short Metropolis sub-chain on the hyper-parameters under the marginal
  // z ~ N(0, D D' + K + sigma_iid^2 I + diag(v)), then draws (beta, g)
  // exactly from their joint Gaussian conditional (Matheron update) and eps
  // from its closed-form conditional. All totals zero yields a pure prior
  // draw.
  GeoPriorState empirical_logit_fit(const LatentState& latent,
                                    const GeoPriorState& current,
                                    Rng& rng) const;

 private:
  double marginal_loglik(const Eigen::VectorXd& z, const Eigen::VectorXd& v,
                         double sigma_g2, double rho, double sigma_iid2,
                         Eigen::LLT<Eigen::MatrixXd>* llt) const;

  const SpatialHierarchy* h_;
  int focal_cls_;
  HyperPriorConfig cfg_;
  Eigen::MatrixXd dist_;  // level-2 pairwise centroid distances
  Eigen::MatrixXd ddt_;   // D D' for the one-hot decile design D
  Eigen::ArrayXi deciles_;
};

// Per-decile contrasts beta_d - beta_10 over retained draws (rows = draws,
// 10 columns): 2.5% / median / 97.5% each; the reference decile 10 is exactly
// zero in every draw.
struct BetaContrastSummary {
  Eigen::ArrayXd lower, median, upper;  // size 10
};
BetaContrastSummary report_beta_contrasts(const Eigen::MatrixXd& beta_draws);

// Three-row layout (lower / median / upper x deciles 1..10) with the
// reference decile printed as "(ref)".
std::string format_beta_contrast_table(const BetaContrastSummary& s);

}  // namespace tabrec
