#include "tabrec/archive_io.hpp"

#include <filesystem>
#include <fstream>
#include <vector>

#include "tabrec/errors.hpp"
#include "text_util.hpp"

namespace tabrec {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "level,unit_id,class_index,mean,q025,median,q975,width,p_zero\n";
  for (const auto& r : rows)
    out << r.level << ',' << r.unit_id << ',' << r.class_index << ','
        << text::format_double(r.mean) << ',' << text::format_double(r.q025)
        << ',' << text::format_double(r.median) << ','
        << text::format_double(r.q975) << ',' << text::format_double(r.width)
        << ',' << text::format_double(r.p_zero) << '\n';
}

void write_archive(const std::string& dir, const PosteriorArchive& archive,
                   const json& extra_manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  write_summary_csv(dir + "/summary.csv", summarize(archive));

  {
    auto out = open_out(dir + "/samples.csv");
    out << "sample,unit_id,class_index,count\n";
    for (int i = 0; i < archive.n_retained(); ++i)
      for (const auto& d : archive.samples[static_cast<std::size_t>(i)])
        out << i << ',' << archive.hierarchy->unit_id(1, d.unit) << ','
            << d.cls + 1 << ',' << d.value << '\n';
  }

  if (archive.beta_draws.rows() > 0) {
    auto out = open_out(dir + "/traces.csv");
    out << "sample";
    for (int d = 1; d <= 10; ++d) out << ",beta" << d;
    out << ",sigma_g2,rho,sigma_iid2\n";
    for (Eigen::Index i = 0; i < archive.beta_draws.rows(); ++i) {
      out << i;
      for (int d = 0; d < 10; ++d)
        out << ',' << text::format_double(archive.beta_draws(i, d));
      for (int d = 0; d < 3; ++d)
        out << ',' << text::format_double(archive.hyper_draws(i, d));
      out << '\n';
    }

    auto txt = open_out(dir + "/beta_contrasts.txt");
    txt << format_beta_contrast_table(report_beta_contrasts(archive.beta_draws));
  }

  {
    auto out = open_out(dir + "/acceptance.csv");
    out << "sweep,acceptance_rate\n";
    for (std::size_t i = 0; i < archive.acceptance_trace.size(); ++i)
      out << i + 1 << ',' << text::format_double(archive.acceptance_trace[i])
          << '\n';
  }

  {
    auto out = open_out(dir + "/convergence.csv");
    out << "name,rhat\n";
    for (const auto& e : convergence_report(archive).entries)
      out << e.name << ',' << text::format_double(e.rhat) << '\n';
  }

  {
    json manifest = extra_manifest;
    manifest["version"] = kVersionString;
    manifest["model"] =
        archive.model == ModelKind::maxent ? "maxent" : "geostatistical";
    manifest["m"] = archive.m;
    manifest["focal_class"] = archive.focal_class + 1;  // 1-based in files
    manifest["rng_seed"] = archive.rng_seed;
    manifest["n_retained"] = archive.n_retained();
    manifest["chain_start"] = archive.chain_start;
    manifest["n_units"] = {archive.hierarchy->n_units(1),
                           archive.hierarchy->n_units(2),
                           archive.hierarchy->n_units(3)};
    manifest["counters"] = {
        {"proposals", archive.counters.proposals},
        {"accepted", archive.counters.accepted},
        {"boundary_rejected", archive.counters.boundary_rejected},
        {"rejected", archive.counters.rejected}};
    manifest["audit_max_error"] = archive.audit_max_error;
    auto out = open_out(dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
  }
}

PosteriorArchive load_archive(const std::string& dir,
                              const SpatialHierarchy& hierarchy) {
  json manifest;
  {
    auto in = open_in(dir + "/manifest.json");
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw DataError("malformed manifest in '" + dir + "': " + e.what());
    }
  }

  PosteriorArchive archive;
  archive.hierarchy = &hierarchy;
  archive.m = manifest.at("m").get<int>();
  archive.focal_class = manifest.at("focal_class").get<int>() - 1;
  archive.model = manifest.at("model").get<std::string>() == "geostatistical"
                      ? ModelKind::geostatistical
                      : ModelKind::maxent;
  archive.rng_seed = manifest.at("rng_seed").get<std::uint64_t>();
  const auto units = manifest.at("n_units").get<std::vector<int>>();
  if (units.size() != 3 || units[0] != hierarchy.n_units(1) ||
      units[1] != hierarchy.n_units(2) || units[2] != hierarchy.n_units(3))
    throw DataError("archive in '" + dir + "' was fit on a different hierarchy");

  // Replay the delta-encoded samples, re-deriving aggregates per sample.
  struct Triplet {
    int sample, unit, cls, value;
  };
  std::vector<Triplet> triplets;
  int n_samples = 0;
  {
    auto in = open_in(dir + "/samples.csv");
    std::string line;
    std::getline(in, line);  // header
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      if (f.size() != 4)
        throw DataError("samples.csv line " + std::to_string(lineno) +
                        ": expected 4 fields");
      Triplet t;
      t.sample = static_cast<int>(text::parse_int(f[0], "sample index"));
      const auto [level, index] = hierarchy.locate(std::string(f[1]));
      if (level != 1)
        throw DataError("samples.csv line " + std::to_string(lineno) + ": '" +
                        std::string(f[1]) + "' is not a level-1 unit");
      t.unit = index;
      t.cls = static_cast<int>(text::parse_int(f[2], "class index")) - 1;
      if (t.cls < 0 || t.cls >= archive.m - 1)
        throw DataError("samples.csv line " + std::to_string(lineno) +
                        ": class index outside 1.." + std::to_string(archive.m - 1));
      t.value = static_cast<int>(text::parse_int(f[3], "count"));
      if (t.value < 0)
        throw DataError("samples.csv line " + std::to_string(lineno) +
                        ": negative count");
      if (t.sample < 0 || (n_samples > 0 && t.sample < n_samples - 1))
        throw DataError("samples.csv line " + std::to_string(lineno) +
                        ": sample indices must be non-decreasing");
      n_samples = std::max(n_samples, t.sample + 1);
      triplets.push_back(t);
    }
  }

  Eigen::MatrixXd beta, hyper;
  if (std::filesystem::exists(dir + "/traces.csv")) {
    auto in = open_in(dir + "/traces.csv");
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::array<double, 13>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      if (f.size() != 14)
        throw DataError("traces.csv line " + std::to_string(lineno) +
                        ": expected 14 fields");
      std::array<double, 13> row;
      for (int d = 0; d < 13; ++d)
        row[static_cast<std::size_t>(d)] =
            text::parse_double(f[static_cast<std::size_t>(d) + 1], "trace value");
      rows.push_back(row);
    }
    if (static_cast<int>(rows.size()) != n_samples)
      throw DataError("traces.csv row count does not match samples.csv");
    beta.resize(static_cast<Eigen::Index>(rows.size()), 10);
    hyper.resize(static_cast<Eigen::Index>(rows.size()), 3);
    for (Eigen::Index i = 0; i < beta.rows(); ++i) {
      for (int d = 0; d < 10; ++d)
        beta(i, d) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
      for (int d = 0; d < 3; ++d)
        hyper(i, d) =
            rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d) + 10];
    }
  }

  LatentState scratch(hierarchy, archive.m);
  Eigen::ArrayXXi dense =
      Eigen::ArrayXXi::Zero(hierarchy.n_units(1), archive.m - 1);
  std::size_t pos = 0;
  GeoPriorState tmp;
  for (int i = 0; i < n_samples; ++i) {
    while (pos < triplets.size() && triplets[pos].sample == i) {
      dense(triplets[pos].unit, triplets[pos].cls) = triplets[pos].value;
      ++pos;
    }
    scratch.set_level1_classes(dense);
    const GeoPriorState* gp = nullptr;
    if (beta.rows() > 0) {
      tmp.beta = beta.row(i).transpose();
      tmp.gp.sigma2 = hyper(i, 0);
      tmp.gp.rho = hyper(i, 1);
      tmp.sigma_iid2 = hyper(i, 2);
      gp = &tmp;
    }
    archive.append_core(dense, scratch.level_values(2), scratch.level_values(3),
                        gp);
  }

  archive.chain_start = manifest.at("chain_start").get<std::vector<int>>();
  archive.counters.proposals = manifest.at("counters").at("proposals").get<std::int64_t>();
  archive.counters.accepted = manifest.at("counters").at("accepted").get<std::int64_t>();
  archive.counters.boundary_rejected =
      manifest.at("counters").at("boundary_rejected").get<std::int64_t>();
  archive.counters.rejected = manifest.at("counters").at("rejected").get<std::int64_t>();
  archive.audit_max_error = manifest.at("audit_max_error").get<double>();
  if (std::filesystem::exists(dir + "/acceptance.csv")) {
    auto in = open_in(dir + "/acceptance.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      if (f.size() == 2)
        archive.acceptance_trace.push_back(
            text::parse_double(f[1], "acceptance rate"));
    }
  }
  return archive;
}

}  // namespace tabrec
