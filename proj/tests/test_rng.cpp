#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "tabrec/rng.hpp"

#include "oracle_helpers.hpp"

using tabrec::Rng;
using tabrec::derive_seed;

TEST_CASE("identical seeds reproduce identical streams") {
  Rng a(7), b(7);
  for (int i = 0; i < 200; ++i) {
    CHECK(a.uniform01() == b.uniform01());
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform_int(-5, 17) == b.uniform_int(-5, 17));
    CHECK(a.gamma(1.7) == b.gamma(1.7));
    CHECK(a.binomial(30, 0.4) == b.binomial(30, 0.4));
  }
}

TEST_CASE("uniform01 is the 53-bit transform of the raw engine") {
  // Pins the output construction so archives stay reproducible across
  // standard-library versions: mt19937_64 output is specified bit-for-bit.
  std::mt19937_64 eng(42);
  Rng r(42);
  for (int i = 0; i < 50; ++i) {
    const double expect = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    CHECK(r.uniform01() == expect);
  }
}

TEST_CASE("derive_seed separates pipeline streams") {
  std::set<std::uint64_t> seen{
      derive_seed(1, "simulate"), derive_seed(1, "fit"),  derive_seed(1, "ppc"),
      derive_seed(2, "simulate"), derive_seed(1, "chain-0"),
      derive_seed(1, "chain-1"),
  };
  CHECK(seen.size() == 6);
  // Frozen values: checkpoints and manifests depend on these staying put.
  CHECK(derive_seed(1, "simulate") == 16372216949663326863ull);
  CHECK(derive_seed(1, "fit") == 7174092133259706577ull);
  CHECK(derive_seed(7, "chain-0") == 12328166190578041717ull);
}

TEST_CASE("uniform_int covers its inclusive range") {
  Rng r(11);
  std::vector<int> hits(8, 0);
  for (int i = 0; i < 40000; ++i) {
    const auto v = r.uniform_int(-3, 4);
    REQUIRE(v >= -3);
    REQUIRE(v <= 4);
    ++hits[static_cast<std::size_t>(v + 3)];
  }
  for (int h : hits) CHECK(h > 4000);  // each of 8 values expects 5000
  CHECK(r.uniform_int(5, 5) == 5);
}

TEST_CASE("normal moments") {
  Rng r(3);
  std::vector<double> draws(200000);
  for (double& d : draws) d = r.normal();
  CHECK(std::abs(oracle::mean_of(draws)) < 0.012);  // se ~ 0.0022
  CHECK(std::abs(oracle::sd_of(draws) - 1.0) < 0.012);
  for (double& d : draws) d = r.normal(3.0, 0.5);
  CHECK(std::abs(oracle::mean_of(draws) - 3.0) < 0.01);
  CHECK(std::abs(oracle::sd_of(draws) - 0.5) < 0.01);
}

TEST_CASE("gamma and beta moments and support") {
  Rng r(5);
  std::vector<double> g(100000), b(100000);
  for (double& x : g) {
    x = r.gamma(2.5);
    REQUIRE(x > 0.0);
  }
  CHECK(std::abs(oracle::mean_of(g) - 2.5) < 0.05);  // se ~ 0.005
  for (double& x : b) {
    x = r.beta(2.0, 5.0);
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
  CHECK(std::abs(oracle::mean_of(b) - 2.0 / 7.0) < 0.01);
  // shape < 1 exercises the boost branch
  double small = r.gamma(0.3);
  CHECK(small > 0.0);
}

TEST_CASE("binomial bounds and mean") {
  Rng r(9);
  std::vector<double> d(50000);
  for (double& x : d) {
    const auto v = r.binomial(20, 0.3);
    REQUIRE(v >= 0);
    REQUIRE(v <= 20);
    x = static_cast<double>(v);
  }
  CHECK(std::abs(oracle::mean_of(d) - 6.0) < 0.1);
  CHECK(r.binomial(15, 0.0) == 0);
  CHECK(r.binomial(15, 1.0) == 15);
  CHECK(r.binomial(0, 0.5) == 0);
}

TEST_CASE("beta_binomial support and mean") {
  Rng r(13);
  std::vector<double> d(50000);
  for (double& x : d) {
    const auto v = r.beta_binomial(10, 2.0, 2.0);
    REQUIRE(v >= 0);
    REQUIRE(v <= 10);
    x = static_cast<double>(v);
  }
  CHECK(std::abs(oracle::mean_of(d) - 5.0) < 0.1);  // mean n*a/(a+b)
}

TEST_CASE("state save/restore resumes the identical stream") {
  Rng r(21);
  for (int i = 0; i < 37; ++i) r.normal();
  const std::string state = r.save_state();
  std::vector<double> first(100);
  for (double& d : first) d = r.uniform01();
  r.restore_state(state);
  for (double d : first) CHECK(r.uniform01() == d);
}

TEST_CASE("shuffle permutes") {
  Rng r(17);
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
  auto w = v;
  r.shuffle(w);
  CHECK(w != v);  // astronomically unlikely to be identity
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}
