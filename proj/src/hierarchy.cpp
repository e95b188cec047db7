#include "tabrec/hierarchy.hpp"

#include <cmath>
#include <fstream>

#include "text_util.hpp"

namespace tabrec {

namespace {
constexpr const char* kHeader =
    "unit_id,level,parent_id,centroid_x,centroid_y,covariate_decile";
}

SpatialHierarchy SpatialHierarchy::from_rows(const std::vector<UnitRow>& rows) {
  SpatialHierarchy h;

  // Pass 1: register units per level; ids are globally unique so that count
  // files can reference a unit without restating its level.
  for (const auto& r : rows) {
    if (r.level < 1 || r.level > 3)
      throw ValidationError("unit '" + r.id + "': level must be 1, 2 or 3");
    if (r.id.empty()) throw ValidationError("unit with empty id");
    if (h.index_.count(r.id))
      throw StructuralError("duplicate unit id '" + r.id + "'");
    if (r.level == 2) {
      if (!r.has_geo)
        throw ValidationError("level-2 unit '" + r.id + "': missing centroid or decile");
      if (!std::isfinite(r.cx) || !std::isfinite(r.cy))
        throw ValidationError("level-2 unit '" + r.id + "': non-finite centroid");
      if (r.decile < 1 || r.decile > 10)
        throw ValidationError("level-2 unit '" + r.id + "': decile outside 1..10");
    } else if (r.has_geo) {
      throw ValidationError("unit '" + r.id + "': centroid/decile only allowed on level-2 rows");
    }
    auto& ids = r.level == 1 ? h.ids1_ : r.level == 2 ? h.ids2_ : h.ids3_;
    h.index_.emplace(r.id, std::make_pair(r.level, static_cast<int>(ids.size())));
    ids.push_back(r.id);
  }

  h.parent1_.assign(h.ids1_.size(), -1);
  h.parent2_.assign(h.ids2_.size(), -1);
  h.children2_.assign(h.ids2_.size(), {});
  h.children3_.assign(h.ids3_.size(), {});
  h.centroids2_.resize(static_cast<Eigen::Index>(h.ids2_.size()), 2);
  h.deciles2_.resize(static_cast<Eigen::Index>(h.ids2_.size()));

  // Pass 2: resolve parent links; each must name a declared unit exactly one
  // level up.
  for (const auto& r : rows) {
    const int idx = h.index_.at(r.id).second;
    if (r.level == 3) {
      if (!r.parent_id.empty())
        throw StructuralError("level-3 unit '" + r.id + "' must not declare a parent");
      continue;
    }
    if (r.parent_id.empty())
      throw StructuralError("unit '" + r.id + "': missing parent id");
    auto it = h.index_.find(r.parent_id);
    if (it == h.index_.end())
      throw StructuralError("unit '" + r.id + "': unknown parent '" + r.parent_id + "'");
    if (it->second.first != r.level + 1)
      throw StructuralError("unit '" + r.id + "': parent '" + r.parent_id +
                            "' is not one level up");
    const int pidx = it->second.second;
    if (r.level == 1) {
      h.parent1_[idx] = pidx;
      h.children2_[pidx].push_back(idx);
    } else {
      h.parent2_[idx] = pidx;
      h.children3_[pidx].push_back(idx);
      h.centroids2_(idx, 0) = r.cx;
      h.centroids2_(idx, 1) = r.cy;
      h.deciles2_(idx) = r.decile;
    }
  }

  // No childless interior units: every declared level-2/3 unit must actually
  // receive contributions from below, otherwise aggregation is ill-defined.
  for (std::size_t i = 0; i < h.children2_.size(); ++i)
    if (h.children2_[i].empty())
      throw StructuralError("level-2 unit '" + h.ids2_[i] + "' has no level-1 children");
  for (std::size_t i = 0; i < h.children3_.size(); ++i)
    if (h.children3_[i].empty())
      throw StructuralError("level-3 unit '" + h.ids3_[i] + "' has no level-2 children");
  if (h.ids3_.empty()) throw StructuralError("hierarchy has no level-3 units");

  return h;
}

SpatialHierarchy SpatialHierarchy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open units file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || std::string(text::trim(line)) != kHeader)
    throw DataError("units file '" + path + "': bad or missing header");

  std::vector<UnitRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line);
    if (f.size() != 6)
      throw DataError("units file '" + path + "' line " + std::to_string(lineno) +
                      ": expected 6 fields");
    UnitRow r;
    r.id = std::string(f[0]);
    r.level = static_cast<int>(text::parse_int(f[1], "level"));
    r.parent_id = std::string(f[2]);
    const bool any_geo = !f[3].empty() || !f[4].empty() || !f[5].empty();
    if (any_geo) {
      if (f[3].empty() || f[4].empty() || f[5].empty())
        throw ValidationError("unit '" + r.id + "': partial centroid/decile fields");
      r.cx = text::parse_double(f[3], "centroid_x");
      r.cy = text::parse_double(f[4], "centroid_y");
      r.decile = static_cast<int>(text::parse_int(f[5], "covariate_decile"));
      r.has_geo = true;
    }
    rows.push_back(std::move(r));
  }
  return from_rows(rows);
}

void SpatialHierarchy::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write units file '" + path + "'");
  out << kHeader << "\n";
  for (std::size_t i = 0; i < ids3_.size(); ++i)
    out << ids3_[i] << ",3,,,,\n";
  for (std::size_t i = 0; i < ids2_.size(); ++i)
    out << ids2_[i] << ",2," << ids3_[parent2_[i]] << ","
        << text::format_double(centroids2_(static_cast<Eigen::Index>(i), 0)) << ","
        << text::format_double(centroids2_(static_cast<Eigen::Index>(i), 1)) << ","
        << deciles2_(static_cast<Eigen::Index>(i)) << "\n";
  for (std::size_t i = 0; i < ids1_.size(); ++i)
    out << ids1_[i] << ",1," << ids2_[parent1_[i]] << ",,,\n";
  if (!out) throw DataError("write failed for units file '" + path + "'");
}

int SpatialHierarchy::parent_of(int level, int idx) const {
  if (level == 1) return parent1_[static_cast<std::size_t>(idx)];
  if (level == 2) return parent2_[static_cast<std::size_t>(idx)];
  return -1;
}

const std::vector<int>& SpatialHierarchy::children_of(int level, int idx) const {
  if (level == 2) return children2_[static_cast<std::size_t>(idx)];
  if (level == 3) return children3_[static_cast<std::size_t>(idx)];
  throw std::invalid_argument("children_of: level-1 units have no children");
}

int SpatialHierarchy::index_of(int level, const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end() || it->second.first != level) return -1;
  return it->second.second;
}

std::pair<int, int> SpatialHierarchy::locate(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return {0, -1};
  return it->second;
}

const std::vector<std::string>& SpatialHierarchy::ids(int level) const {
  if (level == 1) return ids1_;
  if (level == 2) return ids2_;
  if (level == 3) return ids3_;
  throw std::invalid_argument("level must be 1, 2 or 3");
}

Eigen::MatrixXd SpatialHierarchy::pairwise_distances2() const {
  const Eigen::Index n = centroids2_.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dist = (centroids2_.row(i) - centroids2_.row(j)).norm();
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

}  // namespace tabrec
