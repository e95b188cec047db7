#include "tabrec/diagnostics.hpp"

#include <cmath>
#include <cstdio>

#include "tabrec/errors.hpp"
#include "tabrec/quantile.hpp"

namespace tabrec {

namespace {

std::array<double, 5> report_quantiles(const std::vector<double>& values) {
  std::array<double, 5> q{};
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = type7_quantile(values, kReportQuantiles[i]);
  return q;
}

}  // namespace

GapStat stat_aggregation_gap(const CountTable& table, GapPooling pooling,
                             int focal_cls) {
  if (!table.perturbed())
    throw DataError("aggregation-gap statistic expects a perturbed table");
  if (focal_cls < 0 || focal_cls >= table.m() - 1)
    throw std::invalid_argument("focal class outside the non-total classes");
  const auto& h = table.hierarchy();
  GapStat out;
  for (int u2 = 0; u2 < h.n_units(2); ++u2) {
    const int cls_lo = pooling == GapPooling::focal_only ? focal_cls : 0;
    const int cls_hi = pooling == GapPooling::focal_only ? focal_cls + 1 : table.m();
    for (int cls = cls_lo; cls < cls_hi; ++cls) {
      long child_sum = 0;
      for (int mb : h.children_of(2, u2)) child_sum += table.cell(1, mb, cls);
      out.values.push_back(static_cast<double>(child_sum) -
                           static_cast<double>(table.cell(2, u2, cls)));
    }
  }
  out.quantiles = report_quantiles(out.values);
  return out;
}

GapStat stat_rowsum_gap(const CountTable& table) {
  if (!table.perturbed())
    throw DataError("row-sum-gap statistic expects a perturbed table");
  const auto& h = table.hierarchy();
  GapStat out;
  for (int u = 0; u < h.n_units(1); ++u) {
    long class_sum = 0;
    for (int cls = 0; cls < table.m() - 1; ++cls) class_sum += table.cell(1, u, cls);
    out.values.push_back(static_cast<double>(class_sum) -
                         static_cast<double>(table.cell(1, u, table.m() - 1)));
  }
  out.quantiles = report_quantiles(out.values);
  return out;
}

std::pair<PpcReport, PpcReport> run_ppc(const PosteriorArchive& archive,
                                        const CountTable& obs, int n_replicates,
                                        const MinimalPerturbConfig& cfg, Rng& rng,
                                        GapPooling pooling) {
  if (n_replicates < 1) throw ConfigError("replicate count must be >= 1");
  if (archive.n_retained() < n_replicates)
    throw DataError("archive has fewer retained samples than replicates");
  if (archive.hierarchy != &obs.hierarchy() || archive.m != obs.m())
    throw DataError("archive and observation disagree on hierarchy or classes");

  const int n = archive.n_retained();
  std::vector<bool> selected(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n_replicates; ++i)
    selected[static_cast<std::size_t>(
        (static_cast<std::int64_t>(i) * n) / n_replicates)] = true;

  std::vector<std::array<double, 5>> rep1, rep2;
  LatentState scratch(*archive.hierarchy, archive.m);
  archive.for_each_sample([&](int i, const Eigen::ArrayXXi& dense) {
    if (!selected[static_cast<std::size_t>(i)]) return;
    scratch.set_level1_classes(dense);
    const CountTable replicated =
        perturb_table_minimal(scratch.to_table(), cfg, rng);
    rep1.push_back(
        stat_aggregation_gap(replicated, pooling, archive.focal_class).quantiles);
    rep2.push_back(stat_rowsum_gap(replicated).quantiles);
  });

  const GapStat obs1 = stat_aggregation_gap(obs, pooling, archive.focal_class);
  const GapStat obs2 = stat_rowsum_gap(obs);

  auto build = [](const std::string& name,
                  const std::vector<std::array<double, 5>>& reps,
                  const std::array<double, 5>& observed) {
    PpcReport rep;
    rep.statistic = name;
    for (std::size_t q = 0; q < 5; ++q) {
      std::vector<double> col;
      col.reserve(reps.size());
      for (const auto& r : reps) col.push_back(r[q]);
      auto& row = rep.rows[q];
      row.prob = kReportQuantiles[q];
      row.observed = observed[q];
      row.lower = type7_quantile(col, 0.025);
      row.upper = type7_quantile(col, 0.975);
      row.inside = row.observed >= row.lower && row.observed <= row.upper;
    }
    return rep;
  };
  return {build("aggregation-gap", rep1, obs1.quantiles),
          build("rowsum-gap", rep2, obs2.quantiles)};
}

std::string format_ppc_report(const PpcReport& report) {
  char buf[128];
  std::string out = report.statistic + "\n";
  std::snprintf(buf, sizeof buf, "%-14s", "quantile");
  out += buf;
  for (double p : kReportQuantiles) {
    std::snprintf(buf, sizeof buf, " %14.1f%%", 100.0 * p);
    out += buf;
  }
  out += '\n';
  std::snprintf(buf, sizeof buf, "%-14s", "observed");
  out += buf;
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, " %15.1f", row.observed);
    out += buf;
  }
  out += '\n';
  std::snprintf(buf, sizeof buf, "%-14s", "replicated");
  out += buf;
  for (const auto& row : report.rows) {
    char iv[64];
    std::snprintf(iv, sizeof iv, "[%.1f, %.1f]", row.lower, row.upper);
    std::snprintf(buf, sizeof buf, " %15s", iv);
    out += buf;
  }
  out += '\n';
  std::snprintf(buf, sizeof buf, "%-14s", "inside");
  out += buf;
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, " %15s", row.inside ? "yes" : "no");
    out += buf;
  }
  out += '\n';
  return out;
}

CoverageReport score_coverage(const PosteriorArchive& archive,
                              const CountTable& truth, CoverageClasses mode) {
  if (archive.n_retained() < 1) throw DataError("archive has no retained samples");
  if (archive.hierarchy != &truth.hierarchy() || archive.m != truth.m())
    throw DataError("archive and truth disagree on hierarchy or classes");
  if (truth.perturbed())
    throw DataError("coverage must be scored against an unperturbed truth table");

  CoverageReport rep;
  rep.mode = mode;
  for (int level = 1; level <= 3; ++level) {
    const auto& hists = archive.hists[static_cast<std::size_t>(level - 1)];
    auto& hits = rep.hits[static_cast<std::size_t>(level - 1)];
    long hit_count = 0;
    for (int u = 0; u < archive.hierarchy->n_units(level); ++u) {
      const int cls_lo = mode == CoverageClasses::focal_only ? archive.focal_class
                                                             : 0;
      const int cls_hi =
          mode == CoverageClasses::focal_only ? archive.focal_class + 1 : archive.m;
      for (int cls = cls_lo; cls < cls_hi; ++cls) {
        const auto& hist = hists[static_cast<std::size_t>(u) * archive.m + cls];
        const double lo = hist.quantile(0.025);
        const double hi = hist.quantile(0.975);
        const int t = truth.cell(level, u, cls);
        const bool hit = t >= lo - 1e-9 && t <= hi + 1e-9;
        hits.push_back(hit ? 1 : 0);
        hit_count += hit ? 1 : 0;
      }
    }
    rep.fraction[static_cast<std::size_t>(level - 1)] =
        static_cast<double>(hit_count) / static_cast<double>(hits.size());
  }
  return rep;
}

std::string format_coverage_report(const CoverageReport& report) {
  char buf[128];
  std::string out = "95% credible-interval coverage (replicate " +
                    std::to_string(report.replicate) + ")\n";
  for (int level = 1; level <= 3; ++level) {
    const auto& hits = report.hits[static_cast<std::size_t>(level - 1)];
    std::snprintf(buf, sizeof buf, "level %d: %.4f  (%zu cells)\n", level,
                  report.fraction[static_cast<std::size_t>(level - 1)],
                  hits.size());
    out += buf;
  }
  return out;
}

}  // namespace tabrec
