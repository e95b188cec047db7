#include "tabrec/count_table.hpp"

#include <fstream>
#include <set>

#include "text_util.hpp"

namespace tabrec {

namespace {
constexpr const char* kHeader = "unit_id,class_index,count";
}

CountTable::CountTable(const SpatialHierarchy& h, int m, bool perturbed)
    : h_(&h), m_(m), perturbed_(perturbed) {
  if (m < 2) throw ValidationError("count table needs M >= 2 classes");
  for (int level = 1; level <= 3; ++level)
    values_[static_cast<std::size_t>(level - 1)] =
        Eigen::ArrayXXi::Zero(h.n_units(level), m);
}

void CountTable::derive_aggregates_from_level1() {
  auto& l1 = values_[0];
  l1.col(m_ - 1) = l1.leftCols(m_ - 1).rowwise().sum();
  for (int level = 2; level <= 3; ++level) {
    auto& up = values_[static_cast<std::size_t>(level - 1)];
    const auto& down = values_[static_cast<std::size_t>(level - 2)];
    up.setZero();
    for (int u = 0; u < h_->n_units(level); ++u)
      for (int c : h_->children_of(level, u)) up.row(u) += down.row(c);
  }
}

bool CountTable::internally_consistent() const {
  for (int level = 1; level <= 3; ++level) {
    const auto& v = values_[static_cast<std::size_t>(level - 1)];
    if ((v.col(m_ - 1) != v.leftCols(m_ - 1).rowwise().sum()).any()) return false;
  }
  for (int level = 2; level <= 3; ++level) {
    const auto& up = values_[static_cast<std::size_t>(level - 1)];
    const auto& down = values_[static_cast<std::size_t>(level - 2)];
    for (int u = 0; u < h_->n_units(level); ++u) {
      Eigen::ArrayXi sum = Eigen::ArrayXi::Zero(m_);
      for (int c : h_->children_of(level, u)) sum += down.row(c).transpose();
      if ((up.row(u).transpose() != sum).any()) return false;
    }
  }
  return true;
}

CountTable CountTable::load(const std::string& path, const SpatialHierarchy& h,
                            bool perturbed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open counts file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("counts file '" + path + "': empty");
  auto tl = text::trim(line);
  if (tl.size() < 3 || tl.substr(0, 2) != "M=")
    throw DataError("counts file '" + path + "': first line must be M=<int>");
  const int m = static_cast<int>(text::parse_int(tl.substr(2), "M"));
  if (m < 2) throw ValidationError("counts file '" + path + "': M must be >= 2");
  if (!std::getline(in, line) || std::string(text::trim(line)) != kHeader)
    throw DataError("counts file '" + path + "': bad or missing column header");

  CountTable t(h, m, perturbed);
  std::set<std::pair<std::pair<int, int>, int>> seen;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line);
    const std::string where =
        "counts file '" + path + "' line " + std::to_string(lineno);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    const std::string id(f[0]);
    auto [level, idx] = h.locate(id);
    if (idx < 0) throw DataError(where + ": unknown unit id '" + id + "'");
    const int cls = static_cast<int>(text::parse_int(f[1], "class_index"));
    if (cls < 1 || cls > m)
      throw ValidationError(where + ": class_index outside 1.." + std::to_string(m));
    const std::int64_t count = text::parse_int(f[2], "count");
    if (count < 0) throw ValidationError(where + ": negative count");
    if (count > INT32_MAX) throw ValidationError(where + ": count too large");
    if (perturbed && (count == 1 || count == 2))
      throw ValidationError(where + ": count of " + std::to_string(count) +
                            " is impossible in a perturbed table (suppression)");
    if (!seen.insert({{level, idx}, cls}).second)
      throw DataError(where + ": duplicate cell for unit '" + id + "' class " +
                      std::to_string(cls));
    t.set_cell(level, idx, cls - 1, static_cast<int>(count));
  }
  return t;
}

void CountTable::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write counts file '" + path + "'");
  out << "M=" << m_ << "\n" << kHeader << "\n";
  for (int level = 3; level >= 1; --level) {
    const auto& v = values_[static_cast<std::size_t>(level - 1)];
    for (int u = 0; u < h_->n_units(level); ++u)
      for (int cls = 0; cls < m_; ++cls)
        if (v(u, cls) != 0)
          out << h_->unit_id(level, u) << "," << cls + 1 << "," << v(u, cls) << "\n";
  }
  if (!out) throw DataError("write failed for counts file '" + path + "'");
}

}  // namespace tabrec
