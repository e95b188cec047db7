#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace tabrec {

// Derives a child seed from a root seed and a stream name (FNV-1a mix), so
// that pipeline stages (simulate / fit / ppc / ...) consume independent,
// reproducible streams.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

// Deterministic random source. All distribution transforms are implemented
// here on top of the raw mt19937_64 output so that sequences are bitwise
// reproducible across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01();
  double uniform(double lo, double hi);

  // Uniform integer on the inclusive range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();
  double normal(double mean, double sd);

  // Gamma(shape, 1) via Marsaglia-Tsang squeeze, with the boost trick for
  // shape < 1.
  double gamma(double shape);
  double beta(double a, double b);

  // Binomial(n, p) by CDF inversion; exact and adequate for the n used here.
  std::int64_t binomial(std::int64_t n, double p);
  std::int64_t beta_binomial(std::int64_t n, double a, double b);

  // Fisher-Yates shuffle of an index range, driven by uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Engine state round-trip for checkpointing.
  std::string save_state() const;
  void restore_state(const std::string& state);

 private:
  std::mt19937_64 eng_;
};

}  // namespace tabrec
