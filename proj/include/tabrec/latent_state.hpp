#pragma once

#include <Eigen/Dense>
#include <array>

#include "tabrec/count_table.hpp"
#include "tabrec/hierarchy.hpp"

namespace tabrec {

// Latent true counts. The free parameters are the level-1 class cells
// (classes 0..M-2); row totals and both coarser levels are derived by
// summation and can only change through apply_move, so every reachable state
// satisfies the aggregation identities exactly.
class LatentState {
 public:
  LatentState(const SpatialHierarchy& h, int m);

  // Starts at the observed level-1 class outputs (aggregates derived).
  static LatentState from_observed(const CountTable& obs);

  int m() const { return m_; }
  int total_class() const { return m_ - 1; }
  const SpatialHierarchy& hierarchy() const { return *h_; }

  int value(int level, int unit, int cls) const {
    return v_[static_cast<std::size_t>(level - 1)](unit, cls);
  }

  // Adds delta to a level-1 free cell and cascades it through the row total
  // and both parent units. cls must be a free class; the result must stay
  // non-negative (checked by the caller via value()).
  void apply_move(int mb, int cls, int delta);

  const Eigen::ArrayXXi& level_values(int level) const {
    return v_[static_cast<std::size_t>(level - 1)];
  }

  // Copies all level-1 class cells of a sample into this state (aggregates
  // re-derived); used when replaying archived samples.
  void set_level1_classes(const Eigen::ArrayXXi& classes);

  // Rebuilds every derived cell from the free cells; true when the stored
  // derived values already match (used by drift audits).
  bool aggregates_consistent() const;

  // Counts as a table (copies values; not flagged perturbed).
  CountTable to_table() const;

 private:
  void derive();

  const SpatialHierarchy* h_;
  int m_;
  std::array<Eigen::ArrayXXi, 3> v_;
};

}  // namespace tabrec
