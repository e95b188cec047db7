#include "tabrec/latent_state.hpp"

#include <stdexcept>

namespace tabrec {

LatentState::LatentState(const SpatialHierarchy& h, int m) : h_(&h), m_(m) {
  if (m < 2) throw std::invalid_argument("latent state needs M >= 2");
  for (int level = 1; level <= 3; ++level)
    v_[static_cast<std::size_t>(level - 1)] =
        Eigen::ArrayXXi::Zero(h.n_units(level), m);
}

LatentState LatentState::from_observed(const CountTable& obs) {
  LatentState s(obs.hierarchy(), obs.m());
  s.v_[0].leftCols(obs.m() - 1) = obs.level_values(1).leftCols(obs.m() - 1);
  s.derive();
  return s;
}

void LatentState::apply_move(int mb, int cls, int delta) {
  const int tot = m_ - 1;
  v_[0](mb, cls) += delta;
  v_[0](mb, tot) += delta;
  const int s1 = h_->parent_of(1, mb);
  v_[1](s1, cls) += delta;
  v_[1](s1, tot) += delta;
  const int s2 = h_->parent_of(2, s1);
  v_[2](s2, cls) += delta;
  v_[2](s2, tot) += delta;
}

void LatentState::set_level1_classes(const Eigen::ArrayXXi& classes) {
  if (classes.rows() != v_[0].rows() || classes.cols() != m_ - 1)
    throw std::invalid_argument("sample shape does not match latent state");
  v_[0].leftCols(m_ - 1) = classes;
  derive();
}

void LatentState::derive() {
  v_[0].col(m_ - 1) = v_[0].leftCols(m_ - 1).rowwise().sum();
  for (int level = 2; level <= 3; ++level) {
    auto& up = v_[static_cast<std::size_t>(level - 1)];
    const auto& down = v_[static_cast<std::size_t>(level - 2)];
    up.setZero();
    for (int u = 0; u < h_->n_units(level); ++u)
      for (int c : h_->children_of(level, u)) up.row(u) += down.row(c);
  }
}

bool LatentState::aggregates_consistent() const {
  LatentState fresh(*h_, m_);
  fresh.v_[0].leftCols(m_ - 1) = v_[0].leftCols(m_ - 1);
  fresh.derive();
  for (int level = 1; level <= 3; ++level) {
    const auto i = static_cast<std::size_t>(level - 1);
    if ((v_[i] != fresh.v_[i]).any()) return false;
  }
  return true;
}

CountTable LatentState::to_table() const {
  CountTable t(*h_, m_, /*perturbed=*/false);
  for (int level = 1; level <= 3; ++level)
    t.mutable_level_values(level) = v_[static_cast<std::size_t>(level - 1)];
  return t;
}

}  // namespace tabrec
