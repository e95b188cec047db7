#include "tabrec/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tabrec {

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  // FNV-1a over the stream name, seeded by folding in the root seed first.
  std::uint64_t h = 14695981039346656037ull;
  for (int i = 0; i < 8; ++i) {
    h ^= (root >> (8 * i)) & 0xffull;
    h *= 1099511628211ull;
  }
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ull;
  }
  // Final avalanche (splitmix64 finalizer) so near-identical names diverge.
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

double Rng::uniform01() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::int64_t>(eng_());  // full 64-bit range
  // Rejection sampling to remove modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = eng_();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

double Rng::normal() {
  // Box-Muller; u1 shifted into (0, 1] to keep the log finite.
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

double Rng::gamma(double shape) {
  if (!(shape > 0)) throw std::invalid_argument("gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^{1/a}
    const double u = 1.0 - uniform01();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::int64_t Rng::binomial(std::int64_t n, double p) {
  if (n < 0) throw std::invalid_argument("binomial: n must be non-negative");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: p outside [0, 1]");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  // Work on the cheap side of the distribution and mirror back.
  if (p > 0.5) return n - binomial(n, 1.0 - p);
  // Count successes by geometric waiting times between them; unlike CDF
  // inversion from zero this never underflows, whatever the size of n.
  const double log_q = std::log1p(-p);
  double trials = 0.0;
  std::int64_t k = 0;
  for (;;) {
    trials += std::floor(std::log1p(-uniform01()) / log_q) + 1.0;
    if (trials > static_cast<double>(n)) return k;
    ++k;
  }
}

std::int64_t Rng::beta_binomial(std::int64_t n, double a, double b) {
  return binomial(n, beta(a, b));
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rng::restore_state(const std::string& state) {
  std::istringstream is(state);
  is >> eng_;
  if (is.fail()) throw std::invalid_argument("rng: malformed engine state");
}

}  // namespace tabrec
