#include "tabrec/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include "tabrec/errors.hpp"

namespace tabrec {

void ChainConfig::validate() const {
  if (n_iterations < 1) throw ConfigError("n_iterations must be >= 1");
  if (burn_in < 0 || burn_in >= n_iterations)
    throw ConfigError("burn_in must satisfy 0 <= burn_in < n_iterations");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
  if (gibbs_interval < 0) throw ConfigError("gibbs_interval must be >= 0");
  if (audit_interval < 0) throw ConfigError("audit_interval must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (focal_class < 0) throw ConfigError("focal_class must be >= 0");
  for (double w : class_proposal_weights)
    if (!(w > 0)) throw ConfigError("class proposal weights must be positive");
}

// ---------------------------------------------------------------------------
// CountHistogram

double CountHistogram::mean() const {
  if (n_ == 0) throw std::logic_error("histogram is empty");
  double s = 0.0;
  for (const auto& [v, c] : bins_) s += static_cast<double>(v) * static_cast<double>(c);
  return s / static_cast<double>(n_);
}

int CountHistogram::value_at(std::int64_t idx) const {
  std::int64_t seen = 0;
  for (const auto& [v, c] : bins_) {
    seen += c;
    if (idx < seen) return v;
  }
  return bins_.rbegin()->first;
}

double CountHistogram::quantile(double p) const {
  if (n_ == 0) throw std::logic_error("histogram is empty");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile p outside [0, 1]");
  const double h = static_cast<double>(n_ - 1) * p;
  const auto lo = static_cast<std::int64_t>(std::floor(h));
  const double frac = h - std::floor(h);
  const int v1 = value_at(lo);
  if (frac == 0.0) return v1;
  const int v2 = value_at(std::min(lo + 1, n_ - 1));
  return v1 + frac * (v2 - v1);
}

double CountHistogram::prob_of(int v) const {
  if (n_ == 0) throw std::logic_error("histogram is empty");
  auto it = bins_.find(v);
  if (it == bins_.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(n_);
}

// ---------------------------------------------------------------------------
// PosteriorArchive

namespace {

void add_level_hists(std::vector<CountHistogram>& hists, const Eigen::ArrayXXi& values,
                     int m) {
  for (Eigen::Index u = 0; u < values.rows(); ++u)
    for (int cls = 0; cls < m; ++cls)
      hists[static_cast<std::size_t>(u) * m + cls].add(values(u, cls));
}

}  // namespace

void PosteriorArchive::append_sample(const LatentState& latent,
                                     const GeoPriorState* geo) {
  const Eigen::ArrayXXi l1 = latent.level_values(1).leftCols(m - 1);
  append_core(l1, latent.level_values(2), latent.level_values(3), geo);
}

void PosteriorArchive::append_core(const Eigen::ArrayXXi& l1_classes,
                                   const Eigen::ArrayXXi& l2,
                                   const Eigen::ArrayXXi& l3,
                                   const GeoPriorState* geo) {
  const int freec = m - 1;
  if (prev_.size() == 0) prev_ = Eigen::ArrayXXi::Zero(l1_classes.rows(), freec);
  std::vector<CellDelta> delta;
  for (Eigen::Index u = 0; u < l1_classes.rows(); ++u)
    for (int cls = 0; cls < freec; ++cls)
      if (l1_classes(u, cls) != prev_(u, cls)) {
        delta.push_back({static_cast<std::int32_t>(u), cls, l1_classes(u, cls)});
        prev_(u, cls) = l1_classes(u, cls);
      }
  samples.push_back(std::move(delta));
  l2_samples.push_back(l2);
  l3_samples.push_back(l3);

  if (hists[0].empty()) {
    for (int level = 1; level <= 3; ++level)
      hists[static_cast<std::size_t>(level - 1)].resize(
          static_cast<std::size_t>(hierarchy->n_units(level)) * m);
  }
  Eigen::ArrayXXi l1_full(l1_classes.rows(), m);
  l1_full.leftCols(freec) = l1_classes;
  l1_full.col(freec) = l1_classes.rowwise().sum();
  add_level_hists(hists[0], l1_full, m);
  add_level_hists(hists[1], l2, m);
  add_level_hists(hists[2], l3, m);

  if (geo != nullptr) {
    const Eigen::Index r = beta_draws.rows();
    beta_draws.conservativeResize(r + 1, 10);
    beta_draws.row(r) = geo->beta.transpose();
    hyper_draws.conservativeResize(r + 1, 3);
    hyper_draws(r, 0) = geo->gp.sigma2;
    hyper_draws(r, 1) = geo->gp.rho;
    hyper_draws(r, 2) = geo->sigma_iid2;
  }
}

void PosteriorArchive::rebuild_from_samples() {
  for (auto& level : hists) level.clear();
  for (int level = 1; level <= 3; ++level)
    hists[static_cast<std::size_t>(level - 1)].resize(
        static_cast<std::size_t>(hierarchy->n_units(level)) * m);
  const int freec = m - 1;
  Eigen::ArrayXXi l1_full(hierarchy->n_units(1), m);
  for_each_sample([&](int i, const Eigen::ArrayXXi& dense) {
    l1_full.leftCols(freec) = dense;
    l1_full.col(freec) = dense.rowwise().sum();
    add_level_hists(hists[0], l1_full, m);
    add_level_hists(hists[1], l2_samples[static_cast<std::size_t>(i)], m);
    add_level_hists(hists[2], l3_samples[static_cast<std::size_t>(i)], m);
    if (i + 1 == n_retained()) prev_ = dense;
  });
}

void PosteriorArchive::for_each_sample(
    const std::function<void(int, const Eigen::ArrayXXi&)>& fn) const {
  Eigen::ArrayXXi dense =
      Eigen::ArrayXXi::Zero(hierarchy->n_units(1), m - 1);
  for (int i = 0; i < n_retained(); ++i) {
    for (const auto& d : samples[static_cast<std::size_t>(i)])
      dense(d.unit, d.cls) = d.value;
    fn(i, dense);
  }
}

Eigen::ArrayXXi PosteriorArchive::sample_level1(int idx) const {
  Eigen::ArrayXXi out;
  for_each_sample([&](int i, const Eigen::ArrayXXi& dense) {
    if (i == idx) out = dense;
  });
  if (out.size() == 0) throw std::out_of_range("sample index out of range");
  return out;
}

bool PosteriorArchive::aggregation_consistent() const {
  bool ok = true;
  LatentState scratch(*hierarchy, m);
  for_each_sample([&](int i, const Eigen::ArrayXXi& dense) {
    if (!ok) return;
    scratch.set_level1_classes(dense);
    if ((scratch.level_values(2) != l2_samples[static_cast<std::size_t>(i)]).any() ||
        (scratch.level_values(3) != l3_samples[static_cast<std::size_t>(i)]).any())
      ok = false;
    // Row-total columns of the recorded aggregates must equal class sums.
    for (int level = 2; level <= 3; ++level) {
      const auto& v = level == 2 ? l2_samples[static_cast<std::size_t>(i)]
                                 : l3_samples[static_cast<std::size_t>(i)];
      if ((v.col(m - 1) != v.leftCols(m - 1).rowwise().sum()).any()) ok = false;
    }
  });
  return ok;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings step

bool mh_step(LatentState& latent, const CountTable& obs,
             const CellLikelihoodTable& cell, const GeoPriorState* geo,
             int focal_cls, const std::vector<double>& class_weights, Rng& rng,
             double* running_loglik, MhCounters* counters) {
  ++counters->proposals;
  const int n1 = latent.hierarchy().n_units(1);
  const int freec = latent.m() - 1;
  const int mb = static_cast<int>(rng.uniform_int(0, n1 - 1));
  int cls;
  if (class_weights.empty()) {
    cls = static_cast<int>(rng.uniform_int(0, freec - 1));
  } else {
    double total = 0.0;
    for (double w : class_weights) total += w;
    double u = rng.uniform01() * total;
    cls = freec - 1;
    for (int c = 0; c < freec; ++c) {
      u -= class_weights[static_cast<std::size_t>(c)];
      if (u < 0.0) {
        cls = c;
        break;
      }
    }
  }
  const int delta = rng.uniform_int(0, 1) == 0 ? 1 : -1;
  if (latent.value(1, mb, cls) + delta < 0) {
    ++counters->boundary_rejected;
    return false;
  }
  const double dll = delta_log_likelihood(obs, latent, cell, mb, cls, delta);
  const double dlp =
      geo ? geo_delta_log_prior(latent, *geo, mb, cls, delta, focal_cls) : 0.0;
  const double log_acc = dll + dlp;
  const bool accept =
      log_acc >= 0.0 || std::log(1.0 - rng.uniform01()) < log_acc;
  if (!accept) {
    ++counters->rejected;
    return false;
  }
  latent.apply_move(mb, cls, delta);
  *running_loglik += dll;
  ++counters->accepted;
  return true;
}

// ---------------------------------------------------------------------------
// Initialization repair
//
// Starting at the observed level-1 outputs makes every level-1 class term
// finite, but suppression can leave an aggregate observed positive while all
// its constituents start at zero (a -inf term). Repair adds single counts to
// random constituent cells until no positive observation sits over a derived
// zero; additions never create new conflicts, so this terminates.

namespace {

bool has_zero_conflict(const LatentState& lat, const CountTable& obs) {
  for (int level = 1; level <= 3; ++level) {
    const auto& o = obs.level_values(level);
    const auto& v = lat.level_values(level);
    for (Eigen::Index u = 0; u < o.rows(); ++u)
      for (int cls = 0; cls < obs.m(); ++cls)
        if (o(u, cls) > 0 && v(u, cls) == 0) return true;
  }
  return false;
}

int random_descendant_mb(const SpatialHierarchy& h, int level, int unit, Rng& rng) {
  if (level == 2) {
    const auto& mbs = h.children_of(2, unit);
    return mbs[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(mbs.size()) - 1))];
  }
  const auto& s1s = h.children_of(3, unit);
  const int s1 = s1s[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(s1s.size()) - 1))];
  const auto& mbs = h.children_of(2, s1);
  return mbs[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(mbs.size()) - 1))];
}

void repair_initialization(LatentState& lat, const CountTable& obs, Rng& rng) {
  const int m = lat.m();
  const int tot = m - 1;
  const auto& h = lat.hierarchy();
  for (int pass = 0; pass < 64; ++pass) {
    // Level-1 row totals observed positive over an empty row.
    for (int u = 0; u < h.n_units(1); ++u)
      if (obs.cell(1, u, tot) > 0 && lat.value(1, u, tot) == 0)
        lat.apply_move(u, static_cast<int>(rng.uniform_int(0, tot - 1)), +1);
    // Aggregate cells observed positive over a derived zero.
    for (int level = 2; level <= 3; ++level)
      for (int u = 0; u < h.n_units(level); ++u)
        for (int cls = 0; cls < m; ++cls)
          if (obs.cell(level, u, cls) > 0 && lat.value(level, u, cls) == 0) {
            const int mb = random_descendant_mb(h, level, u, rng);
            const int c =
                cls < tot ? cls : static_cast<int>(rng.uniform_int(0, tot - 1));
            lat.apply_move(mb, c, +1);
          }
    if (!has_zero_conflict(lat, obs)) return;
  }
  throw NumericalError(
      "initialization repair failed: observations conflict with every start");
}

// ---------------------------------------------------------------------------
// Checkpointing

using nlohmann::json;

json array2i_to_json(const Eigen::ArrayXXi& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::ArrayXXi array2i_from_json(const json& j) {
  const auto nr = static_cast<Eigen::Index>(j.size());
  const auto nc = nr > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::ArrayXXi a(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index jj = 0; jj < nc; ++jj)
      a(i, jj) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(jj)).get<int>();
  return a;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

struct ChainCheckpoint {
  int sweep = 0;
  std::string rng_state;
  double running_loglik = 0.0;
  Eigen::ArrayXXi level1_classes;
  bool has_geo = false;
  GeoPriorState geo;
};

void write_checkpoint(const std::string& path, const ChainCheckpoint& ck,
                      const ChainConfig& cfg, const PosteriorArchive& a) {
  json j;
  j["sweep"] = ck.sweep;
  j["rng_state"] = ck.rng_state;
  j["running_loglik"] = ck.running_loglik;
  j["level1"] = array2i_to_json(ck.level1_classes);
  j["fingerprint"] = {{"rng_seed", cfg.rng_seed},
                      {"burn_in", cfg.burn_in},
                      {"thin", cfg.thin},
                      {"gibbs_interval", cfg.gibbs_interval},
                      {"m", a.m}};
  if (ck.has_geo) {
    j["geo"] = {{"beta", vec_to_json(ck.geo.beta)},
                {"g", vec_to_json(ck.geo.g)},
                {"eps", vec_to_json(ck.geo.eps)},
                {"sigma_iid2", ck.geo.sigma_iid2},
                {"sigma_g2", ck.geo.gp.sigma2},
                {"rho", ck.geo.gp.rho}};
  }
  json samples = json::array();
  for (const auto& s : a.samples) {
    json triplets = json::array();
    for (const auto& d : s) triplets.push_back({d.unit, d.cls, d.value});
    samples.push_back(std::move(triplets));
  }
  j["samples"] = std::move(samples);
  json l2 = json::array(), l3 = json::array();
  for (const auto& s : a.l2_samples) l2.push_back(array2i_to_json(s));
  for (const auto& s : a.l3_samples) l3.push_back(array2i_to_json(s));
  j["l2_samples"] = std::move(l2);
  j["l3_samples"] = std::move(l3);
  json beta = json::array(), hyper = json::array();
  for (Eigen::Index i = 0; i < a.beta_draws.rows(); ++i) {
    json r = json::array();
    for (int d = 0; d < 10; ++d) r.push_back(a.beta_draws(i, d));
    beta.push_back(std::move(r));
  }
  for (Eigen::Index i = 0; i < a.hyper_draws.rows(); ++i)
    hyper.push_back({a.hyper_draws(i, 0), a.hyper_draws(i, 1), a.hyper_draws(i, 2)});
  j["beta_draws"] = std::move(beta);
  j["hyper_draws"] = std::move(hyper);
  j["acceptance_trace"] = a.acceptance_trace;
  j["counters"] = {{"proposals", a.counters.proposals},
                   {"accepted", a.counters.accepted},
                   {"boundary_rejected", a.counters.boundary_rejected},
                   {"rejected", a.counters.rejected}};
  j["audit_max_error"] = a.audit_max_error;

  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint '" + tmp + "'");
    out << j.dump();
    if (!out) throw DataError("write failed for checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot move checkpoint into place at '" + path + "'");
}

ChainCheckpoint load_checkpoint(const std::string& path, const ChainConfig& cfg,
                                PosteriorArchive& a) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint '" + path + "': " + e.what());
  }
  const auto& fp = j.at("fingerprint");
  if (fp.at("rng_seed").get<std::uint64_t>() != cfg.rng_seed ||
      fp.at("burn_in").get<int>() != cfg.burn_in ||
      fp.at("thin").get<int>() != cfg.thin ||
      fp.at("gibbs_interval").get<int>() != cfg.gibbs_interval ||
      fp.at("m").get<int>() != a.m)
    throw ConfigError("checkpoint '" + path + "' was written by a different configuration");

  ChainCheckpoint ck;
  ck.sweep = j.at("sweep").get<int>();
  ck.rng_state = j.at("rng_state").get<std::string>();
  ck.running_loglik = j.at("running_loglik").get<double>();
  ck.level1_classes = array2i_from_json(j.at("level1"));
  if (j.contains("geo")) {
    ck.has_geo = true;
    const auto& g = j.at("geo");
    ck.geo.beta = vec_from_json(g.at("beta"));
    ck.geo.g = vec_from_json(g.at("g"));
    ck.geo.eps = vec_from_json(g.at("eps"));
    ck.geo.sigma_iid2 = g.at("sigma_iid2").get<double>();
    ck.geo.gp.sigma2 = g.at("sigma_g2").get<double>();
    ck.geo.gp.rho = g.at("rho").get<double>();
  }
  for (const auto& s : j.at("samples")) {
    std::vector<PosteriorArchive::CellDelta> delta;
    for (const auto& t : s)
      delta.push_back({t.at(0).get<std::int32_t>(), t.at(1).get<std::int32_t>(),
                       t.at(2).get<std::int32_t>()});
    a.samples.push_back(std::move(delta));
  }
  for (const auto& s : j.at("l2_samples")) a.l2_samples.push_back(array2i_from_json(s));
  for (const auto& s : j.at("l3_samples")) a.l3_samples.push_back(array2i_from_json(s));
  const auto& beta = j.at("beta_draws");
  a.beta_draws.resize(static_cast<Eigen::Index>(beta.size()), 10);
  for (Eigen::Index i = 0; i < a.beta_draws.rows(); ++i)
    for (int d = 0; d < 10; ++d)
      a.beta_draws(i, d) = beta.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(d)).get<double>();
  const auto& hyper = j.at("hyper_draws");
  a.hyper_draws.resize(static_cast<Eigen::Index>(hyper.size()), 3);
  for (Eigen::Index i = 0; i < a.hyper_draws.rows(); ++i)
    for (int d = 0; d < 3; ++d)
      a.hyper_draws(i, d) = hyper.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(d)).get<double>();
  a.acceptance_trace = j.at("acceptance_trace").get<std::vector<double>>();
  a.counters.proposals = j.at("counters").at("proposals").get<std::int64_t>();
  a.counters.accepted = j.at("counters").at("accepted").get<std::int64_t>();
  a.counters.boundary_rejected = j.at("counters").at("boundary_rejected").get<std::int64_t>();
  a.counters.rejected = j.at("counters").at("rejected").get<std::int64_t>();
  a.audit_max_error = j.at("audit_max_error").get<double>();
  return ck;
}

}  // namespace

// ---------------------------------------------------------------------------
// Chain runner

PosteriorArchive run_chain(const CountTable& obs, ModelKind model,
                           const ChainConfig& cfg, const CellLikelihoodTable& cell,
                           const GeoPriorModel* geo_model,
                           const std::string& checkpoint_file, bool resume) {
  cfg.validate();
  const auto& h = obs.hierarchy();
  const int m = obs.m();
  if (!obs.perturbed())
    throw DataError("run_chain expects a perturbed observation table");
  if (model == ModelKind::geostatistical) {
    if (geo_model == nullptr)
      throw ConfigError("geostatistical run needs a prior model");
    if (cfg.gibbs_interval < 1)
      throw ConfigError("geostatistical runs need gibbs_interval >= 1");
    if (cfg.focal_class >= m - 1)
      throw ConfigError("focal_class must name a non-total class");
  }
  if (!cfg.class_proposal_weights.empty() &&
      static_cast<int>(cfg.class_proposal_weights.size()) != m - 1)
    throw ConfigError("class proposal weights must have M-1 entries");

  Rng rng(cfg.rng_seed);
  PosteriorArchive archive;
  archive.hierarchy = &h;
  archive.m = m;
  archive.focal_class = cfg.focal_class;
  archive.model = model;
  archive.rng_seed = cfg.rng_seed;
  archive.chain_start = {0};

  LatentState latent(h, m);
  GeoPriorState geo;
  bool use_geo = model == ModelKind::geostatistical;
  double running_ll = 0.0;
  int start_sweep = 0;

  if (resume) {
    if (checkpoint_file.empty())
      throw ConfigError("resume requested without a checkpoint path");
    ChainCheckpoint ck = load_checkpoint(checkpoint_file, cfg, archive);
    archive.rebuild_from_samples();
    latent.set_level1_classes(ck.level1_classes);
    if (ck.has_geo != use_geo)
      throw ConfigError("checkpoint model kind does not match the run");
    if (use_geo) {
      geo = ck.geo;
      geo.refresh(h.deciles2());
    }
    rng.restore_state(ck.rng_state);
    running_ll = ck.running_loglik;
    start_sweep = ck.sweep;
  } else {
    latent = LatentState::from_observed(obs);
    repair_initialization(latent, obs, rng);
    if (use_geo) geo = geo_model->prior_draw(rng);
    running_ll = table_log_likelihood(obs, latent, cell);
    if (!std::isfinite(running_ll))
      throw NumericalError("non-finite log-likelihood after initialization repair");
  }

  const std::int64_t proposals_per_sweep =
      static_cast<std::int64_t>(h.n_units(1)) * (m - 1);
  for (int sweep = start_sweep + 1; sweep <= cfg.n_iterations; ++sweep) {
    if (use_geo && (sweep - 1) % cfg.gibbs_interval == 0)
      geo = geo_model->empirical_logit_fit(latent, geo, rng);
    const std::int64_t acc_before = archive.counters.accepted;
    for (std::int64_t p = 0; p < proposals_per_sweep; ++p)
      mh_step(latent, obs, cell, use_geo ? &geo : nullptr, cfg.focal_class,
              cfg.class_proposal_weights, rng, &running_ll, &archive.counters);
    archive.acceptance_trace.push_back(
        static_cast<double>(archive.counters.accepted - acc_before) /
        static_cast<double>(proposals_per_sweep));

    if (cfg.audit_interval > 0 && sweep % cfg.audit_interval == 0) {
      const double full = table_log_likelihood(obs, latent, cell);
      if (!std::isfinite(full))
        throw NumericalError("non-finite log-likelihood during audit");
      archive.audit_max_error =
          std::max(archive.audit_max_error, std::abs(full - running_ll));
    }

    if (sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0)
      archive.append_sample(latent, use_geo ? &geo : nullptr);

    if (cfg.checkpoint_interval > 0 && !checkpoint_file.empty() &&
        sweep % cfg.checkpoint_interval == 0) {
      ChainCheckpoint ck;
      ck.sweep = sweep;
      ck.rng_state = rng.save_state();
      ck.running_loglik = running_ll;
      ck.level1_classes = latent.level_values(1).leftCols(m - 1);
      ck.has_geo = use_geo;
      if (use_geo) ck.geo = geo;
      write_checkpoint(checkpoint_file, ck, cfg, archive);
    }
  }

  // Final drift audit.
  const double full = table_log_likelihood(obs, latent, cell);
  archive.audit_max_error =
      std::max(archive.audit_max_error, std::abs(full - running_ll));
  return archive;
}

PosteriorArchive run_chains(const CountTable& obs, ModelKind model,
                            const ChainConfig& cfg, const CellLikelihoodTable& cell,
                            const GeoPriorModel* geo_model) {
  cfg.validate();
  std::vector<PosteriorArchive> results(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.n_chains));

  auto worker = [&](int k) {
    try {
      ChainConfig c = cfg;
      c.rng_seed = derive_seed(cfg.rng_seed, "chain-" + std::to_string(k));
      std::string ckpath;
      if (!cfg.checkpoint_path.empty())
        ckpath = cfg.checkpoint_path + ".chain-" + std::to_string(k) + ".json";
      bool resume = false;
      if (!ckpath.empty() && cfg.checkpoint_interval > 0) {
        std::ifstream probe(ckpath);
        resume = probe.good();
      }
      results[static_cast<std::size_t>(k)] =
          run_chain(obs, model, c, cell, geo_model, ckpath, resume);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  };

  if (cfg.threads <= 1 || cfg.n_chains == 1) {
    for (int k = 0; k < cfg.n_chains; ++k) worker(k);
  } else {
    for (int k0 = 0; k0 < cfg.n_chains; k0 += cfg.threads) {
      std::vector<std::thread> pool;
      for (int k = k0; k < std::min(cfg.n_chains, k0 + cfg.threads); ++k)
        pool.emplace_back(worker, k);
      for (auto& t : pool) t.join();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorArchive merged = std::move(results[0]);
  merged.rng_seed = cfg.rng_seed;
  for (int k = 1; k < cfg.n_chains; ++k) {
    PosteriorArchive& src = results[static_cast<std::size_t>(k)];
    merged.chain_start.push_back(merged.n_retained());
    const bool has_geo = src.beta_draws.rows() > 0;
    GeoPriorState tmp;
    src.for_each_sample([&](int i, const Eigen::ArrayXXi& dense) {
      const GeoPriorState* gp = nullptr;
      if (has_geo) {
        tmp.beta = src.beta_draws.row(i).transpose();
        tmp.gp.sigma2 = src.hyper_draws(i, 0);
        tmp.gp.rho = src.hyper_draws(i, 1);
        tmp.sigma_iid2 = src.hyper_draws(i, 2);
        gp = &tmp;
      }
      merged.append_core(dense, src.l2_samples[static_cast<std::size_t>(i)],
                         src.l3_samples[static_cast<std::size_t>(i)], gp);
    });
    merged.acceptance_trace.insert(merged.acceptance_trace.end(),
                                   src.acceptance_trace.begin(),
                                   src.acceptance_trace.end());
    merged.counters.proposals += src.counters.proposals;
    merged.counters.accepted += src.counters.accepted;
    merged.counters.boundary_rejected += src.counters.boundary_rejected;
    merged.counters.rejected += src.counters.rejected;
    merged.audit_max_error = std::max(merged.audit_max_error, src.audit_max_error);
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Summaries

std::vector<SummaryRow> summarize(const PosteriorArchive& archive) {
  if (archive.n_retained() < 1)
    throw std::invalid_argument("summarize: archive has no retained samples");
  std::vector<SummaryRow> rows;
  for (int level = 1; level <= 3; ++level) {
    const auto& hists = archive.hists[static_cast<std::size_t>(level - 1)];
    for (int u = 0; u < archive.hierarchy->n_units(level); ++u)
      for (int cls = 0; cls < archive.m; ++cls) {
        const auto& hist = hists[static_cast<std::size_t>(u) * archive.m + cls];
        SummaryRow r;
        r.level = level;
        r.unit_id = archive.hierarchy->unit_id(level, u);
        r.class_index = cls + 1;
        r.mean = hist.mean();
        r.q025 = hist.quantile(0.025);
        r.median = hist.quantile(0.5);
        r.q975 = hist.quantile(0.975);
        r.width = r.q975 - r.q025;
        r.p_zero = hist.prob_of(0);
        rows.push_back(std::move(r));
      }
  }
  return rows;
}

namespace {

// Split-chain potential scale reduction over one scalar trace per chain.
double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> groups;
  for (const auto& c : chains) {
    if (c.size() < 4) continue;
    const std::size_t half = c.size() / 2;
    groups.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    groups.emplace_back(c.begin() + static_cast<long>(c.size() - half), c.end());
  }
  if (groups.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  std::size_t len = groups[0].size();
  for (auto& g : groups) len = std::min(len, g.size());
  const double L = static_cast<double>(len);
  std::vector<double> means;
  double w = 0.0;
  for (auto& g : groups) {
    g.resize(len);
    double mu = 0.0;
    for (double x : g) mu += x;
    mu /= L;
    means.push_back(mu);
    double s2 = 0.0;
    for (double x : g) s2 += (x - mu) * (x - mu);
    w += s2 / (L - 1.0);
  }
  w /= static_cast<double>(groups.size());
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(means.size());
  double b_over_l = 0.0;
  for (double mu : means) b_over_l += (mu - grand) * (mu - grand);
  b_over_l /= static_cast<double>(means.size() - 1);
  if (w == 0.0) return b_over_l == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (L - 1.0) / L * w + b_over_l;
  return std::sqrt(var_plus / w);
}

}  // namespace

ConvergenceReport convergence_report(const PosteriorArchive& archive) {
  ConvergenceReport rep;
  const int n = archive.n_retained();
  const int n_chains = static_cast<int>(archive.chain_start.size());
  auto per_chain =
      [&](const std::function<double(int)>& scalar) {
        std::vector<std::vector<double>> chains(static_cast<std::size_t>(n_chains));
        for (int c = 0; c < n_chains; ++c) {
          const int lo = archive.chain_start[static_cast<std::size_t>(c)];
          const int hi =
              c + 1 < n_chains ? archive.chain_start[static_cast<std::size_t>(c) + 1] : n;
          for (int i = lo; i < hi; ++i)
            chains[static_cast<std::size_t>(c)].push_back(scalar(i));
        }
        return chains;
      };

  for (int u = 0; u < archive.hierarchy->n_units(3); ++u) {
    const double r = split_rhat(per_chain([&](int i) {
      return static_cast<double>(
          archive.l3_samples[static_cast<std::size_t>(i)](u, archive.m - 1));
    }));
    rep.entries.push_back({"level3_total_" + archive.hierarchy->unit_id(3, u), r});
  }
  if (archive.beta_draws.rows() == n && n > 0) {
    for (int d = 0; d < 9; ++d) {
      const double r = split_rhat(per_chain([&](int i) {
        return archive.beta_draws(i, d) - archive.beta_draws(i, 9);
      }));
      rep.entries.push_back({"beta_contrast_" + std::to_string(d + 1), r});
    }
  }
  for (const auto& e : rep.entries)
    if (!std::isnan(e.rhat)) rep.max_rhat = std::max(rep.max_rhat, e.rhat);
  rep.ok = rep.max_rhat <= 1.05;
  return rep;
}

}  // namespace tabrec
