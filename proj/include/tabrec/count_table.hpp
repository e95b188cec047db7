#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "tabrec/hierarchy.hpp"

namespace tabrec {

// Counts for every unit at every level of a hierarchy, over M classes per
// unit. Class columns 0..M-2 are the substantive categories; column M-1 is
// the published row total, stored explicitly because perturbed tables break
// the row-sum identity. External files use 1-based class indices (class M is
// the total); internally everything is 0-based.
//
// A table is either `perturbed` (published values; aggregation identities are
// not expected to hold, small positive values 1..2 are impossible) or not
// (latent/true values; identities hold exactly).
class CountTable {
 public:
  CountTable(const SpatialHierarchy& h, int m, bool perturbed);

  int m() const { return m_; }
  int total_class() const { return m_ - 1; }
  bool perturbed() const { return perturbed_; }
  const SpatialHierarchy& hierarchy() const { return *h_; }

  int cell(int level, int unit, int cls) const {
    return values_[static_cast<std::size_t>(level - 1)](unit, cls);
  }
  void set_cell(int level, int unit, int cls, int v) {
    values_[static_cast<std::size_t>(level - 1)](unit, cls) = v;
  }

  const Eigen::ArrayXXi& level_values(int level) const {
    return values_[static_cast<std::size_t>(level - 1)];
  }
  Eigen::ArrayXXi& mutable_level_values(int level) {
    return values_[static_cast<std::size_t>(level - 1)];
  }

  // Recomputes level-1 totals as class sums and levels 2 and 3 by summation
  // over children. Only meaningful for unperturbed tables.
  void derive_aggregates_from_level1();

  // True when every row total equals its class sum and every aggregate cell
  // equals the sum over its children.
  bool internally_consistent() const;

  // File format: line 1 "M=<int>", line 2 "unit_id,class_index,count", then
  // sparse rows; absent cells are zero. Perturbed tables reject counts of 1
  // or 2, which the suppression rule makes impossible.
  static CountTable load(const std::string& path, const SpatialHierarchy& h,
                         bool perturbed);
  void write(const std::string& path) const;

 private:
  const SpatialHierarchy* h_;
  int m_;
  bool perturbed_;
  std::array<Eigen::ArrayXXi, 3> values_;  // per level: n_units x m
};

}  // namespace tabrec
