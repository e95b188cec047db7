#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tabrec/geo_prior.hpp"
#include "tabrec/latent_state.hpp"
#include "tabrec/likelihood.hpp"

namespace tabrec {

enum class ModelKind { maxent, geostatistical };

// Chain settings. One sweep = N_1 x (M-1) single-cell proposals.
struct ChainConfig {
  int n_iterations = 2000;  // sweeps
  int burn_in = 1000;       // sweeps discarded
  int thin = 10;            // retain every thin-th post-burn-in sweep
  int n_chains = 1;
  std::uint64_t rng_seed = 1;
  // Sweeps between geostatistical block updates; 0 selects the flat
  // maximum-entropy prior (no block updates at all).
  int gibbs_interval = 0;
  // Optional per-class proposal weights (size M-1); empty = uniform.
  std::vector<double> class_proposal_weights;
  int audit_interval = 10000;     // sweeps between full-likelihood audits
  int checkpoint_interval = 0;    // sweeps between checkpoints; 0 = none
  std::string checkpoint_path;    // prefix; per-chain suffix appended
  int threads = 1;                // parallel chains
  int focal_class = 0;            // 0-based focal class (geostatistical)

  void validate() const;
};

struct MhCounters {
  std::int64_t proposals = 0;
  std::int64_t accepted = 0;
  std::int64_t boundary_rejected = 0;  // would-be-negative proposals
  std::int64_t rejected = 0;           // failed the MH coin flip
};

// Integer count histogram over retained samples of one cell; exact type-7
// quantiles and point masses are read straight off the bins.
class CountHistogram {
 public:
  void add(int v) {
    ++bins_[v];
    ++n_;
  }
  std::int64_t n() const { return n_; }
  double mean() const;
  double quantile(double p) const;  // type-7 over the expanded sample
  double prob_of(int v) const;      // fraction of samples equal to v
  const std::map<int, std::int64_t>& bins() const { return bins_; }

 private:
  int value_at(std::int64_t idx) const;
  std::map<int, std::int64_t> bins_;
  std::int64_t n_ = 0;
};

// Retained posterior samples plus running summaries. Level-1 class cells are
// stored sparse-delta encoded (each sample lists only cells that changed
// since the previous retained sample; the first is a delta against zero).
// Level-2/3 values are recorded from the live chain state per sample, so the
// aggregation-consistency audit against re-derived sums is a real check.
struct PosteriorArchive {
  const SpatialHierarchy* hierarchy = nullptr;
  int m = 0;
  int focal_class = 0;
  ModelKind model = ModelKind::maxent;
  std::uint64_t rng_seed = 0;

  struct CellDelta {
    std::int32_t unit;
    std::int32_t cls;
    std::int32_t value;
  };
  std::vector<std::vector<CellDelta>> samples;  // level-1 free cells
  std::vector<Eigen::ArrayXXi> l2_samples, l3_samples;

  // Per-cell histograms, indexed unit * m + cls, one vector per level.
  std::array<std::vector<CountHistogram>, 3> hists;

  Eigen::MatrixXd beta_draws;   // n_retained x 10 (geostatistical runs)
  Eigen::MatrixXd hyper_draws;  // n_retained x 3: sigma_g2, rho, sigma_iid2

  std::vector<double> acceptance_trace;  // per sweep, all chains concatenated
  std::vector<int> chain_start;          // first retained-sample index per chain
  MhCounters counters;
  double audit_max_error = 0.0;

  int n_retained() const { return static_cast<int>(samples.size()); }

  // Replays the delta encoding, calling fn(sample_index, level1_classes)
  // with a dense N1 x (M-1) array for every retained sample.
  void for_each_sample(
      const std::function<void(int, const Eigen::ArrayXXi&)>& fn) const;

  // Dense level-1 class cells of one retained sample.
  Eigen::ArrayXXi sample_level1(int idx) const;

  void append_sample(const LatentState& latent, const GeoPriorState* geo);

  // Appends one sample from already-materialized values (chain merging,
  // checkpoint replay). geo may be null.
  void append_core(const Eigen::ArrayXXi& l1_classes, const Eigen::ArrayXXi& l2,
                   const Eigen::ArrayXXi& l3, const GeoPriorState* geo);

  // Recomputes the histograms and delta work buffer from the stored samples
  // (after loading from a checkpoint).
  void rebuild_from_samples();

  // True when every retained sample's recorded level-2/3 values equal the
  // sums of its level-1 cells and all row totals equal class sums.
  bool aggregation_consistent() const;

 private:
  Eigen::ArrayXXi prev_;  // delta-encoding work buffer
};

// One random-walk proposal: uniformly pick (level-1 unit, free class,
// delta = +-1); reject at the support boundary; otherwise accept with
// probability min(1, exp(delta log-likelihood + delta log-prior)). The
// symmetric kernel needs no Hastings correction. Returns true on acceptance;
// updates running_loglik by the likelihood delta.
bool mh_step(LatentState& latent, const CountTable& obs,
             const CellLikelihoodTable& cell, const GeoPriorState* geo,
             int focal_cls, const std::vector<double>& class_weights, Rng& rng,
             double* running_loglik, MhCounters* counters);

// Runs one chain: initializes level-1 counts at the observed outputs
// (repairing any aggregate observed as positive over a derived zero), then
// alternates MH sweeps with blocked Gibbs prior updates when geostatistical.
// geo_model may be null for maxent. resume_from, when set, restores a
// checkpoint written by an earlier identical configuration.
PosteriorArchive run_chain(const CountTable& obs, ModelKind model,
                           const ChainConfig& cfg,
                           const CellLikelihoodTable& cell,
                           const GeoPriorModel* geo_model,
                           const std::string& checkpoint_file = "",
                           bool resume = false);

// n_chains independent chains (seeds derived per chain), run on up to
// cfg.threads workers, merged into one archive.
PosteriorArchive run_chains(const CountTable& obs, ModelKind model,
                            const ChainConfig& cfg,
                            const CellLikelihoodTable& cell,
                            const GeoPriorModel* geo_model);

struct SummaryRow {
  int level;
  std::string unit_id;
  int class_index;  // 1-based; M = row total
  double mean, q025, median, q975, width, p_zero;
};

// Per-cell posterior summaries at all three levels.
std::vector<SummaryRow> summarize(const PosteriorArchive& archive);

// Split-chain potential-scale-reduction over scalar summaries (level-3 unit
// totals; beta contrasts for geostatistical runs). Advisory threshold 1.05.
struct ConvergenceReport {
  struct Entry {
    std::string name;
    double rhat;
  };
  std::vector<Entry> entries;
  double max_rhat = 0.0;
  bool ok = true;  // max_rhat <= 1.05 (or too few samples to tell)
};
ConvergenceReport convergence_report(const PosteriorArchive& archive);

}  // namespace tabrec
