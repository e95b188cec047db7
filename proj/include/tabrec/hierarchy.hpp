#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabrec/errors.hpp"

namespace tabrec {

// Three-level nested areal hierarchy. Level 1 is the finest partition; every
// level-1 unit has exactly one level-2 parent and every level-2 unit exactly
// one level-3 parent. Level-2 units carry a planar centroid and a 1..10
// socio-economic decile used by the geostatistical prior.
//
// Units are addressed by dense 0-based indices per level; external string ids
// appear only at the I/O boundary.
class SpatialHierarchy {
 public:
  // One parsed row of a units file.
  struct UnitRow {
    std::string id;
    int level = 0;
    std::string parent_id;  // empty for level 3
    double cx = 0.0, cy = 0.0;
    int decile = 0;
    bool has_geo = false;  // centroid/decile fields present (level-2 rows)
  };

  // Validates and wires the hierarchy; throws StructuralError or
  // ValidationError without constructing on any defect.
  static SpatialHierarchy from_rows(const std::vector<UnitRow>& rows);

  // File format: header "unit_id,level,parent_id,centroid_x,centroid_y,covariate_decile"
  // followed by one row per unit; centroid/decile cells are non-empty only on
  // level-2 rows, parent_id is empty on level-3 rows.
  static SpatialHierarchy load(const std::string& path);
  void write(const std::string& path) const;

  int n_units(int level) const { return static_cast<int>(ids(level).size()); }

  // Parent index one level up; -1 for level 3.
  int parent_of(int level, int idx) const;

  // Child indices one level down; valid for levels 2 and 3.
  const std::vector<int>& children_of(int level, int idx) const;

  const std::string& unit_id(int level, int idx) const { return ids(level)[idx]; }

  // Dense index for an id at a level, or -1 if unknown.
  int index_of(int level, const std::string& id) const;

  // Level and index for an id appearing anywhere in the hierarchy; returns
  // {0, -1} if unknown.
  std::pair<int, int> locate(const std::string& id) const;

  const Eigen::MatrixX2d& centroids2() const { return centroids2_; }
  const Eigen::ArrayXi& deciles2() const { return deciles2_; }

  // Euclidean distances between level-2 centroids (coordinates are assumed
  // already projected to a plane).
  Eigen::MatrixXd pairwise_distances2() const;

 private:
  SpatialHierarchy() = default;

  const std::vector<std::string>& ids(int level) const;

  std::vector<std::string> ids1_, ids2_, ids3_;
  std::vector<int> parent1_, parent2_;           // level1 -> level2, level2 -> level3
  std::vector<std::vector<int>> children2_, children3_;
  std::unordered_map<std::string, std::pair<int, int>> index_;  // id -> {level, idx}
  Eigen::MatrixX2d centroids2_;
  Eigen::ArrayXi deciles2_;
};

}  // namespace tabrec
