// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "lcgen/error.hpp"
#include "lcgen/ldpe.hpp"

using namespace lcgen;

namespace {

// Independent scalar reference: angle = x * 10000^(-2i/d).
double reference_pe(double x, std::size_t k, std::size_t d) {
  const double i2 = static_cast<double>(k - k % 2);
  const double angle = x / std::pow(10000.0, i2 / static_cast<double>(d));
  return k % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

}  // namespace

TEST_CASE("ldpe at pos = len is the zero-offset pattern") {
  for (std::size_t d : {2, 4, 8, 64})
    for (double len : {0.0, 5.0, 34.0, 7.25})
      for (std::size_t k = 0; k < d; ++k) CHECK(ldpe_value(len, len, k, d) == (k % 2 == 0 ? 0.0 : 1.0));
}

TEST_CASE("ldpe scalar value") {
  CHECK(ldpe_value(0, 1, 0, 4) == doctest::Approx(0.841471).epsilon(1e-6));
  CHECK(ldpe_value(0, 1, 0, 4) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(ldpe_value(0, 1, 3, 4) == doctest::Approx(std::cos(0.01)).epsilon(1e-15));
}

TEST_CASE("ldpe equals sinusoidal PE of the remaining length") {
  for (std::size_t d : {8, 64})
    for (int len : {0, 5, 34})
      for (int pos = 0; pos <= len + 10; ++pos) {
        const auto pe = sinusoidal_pe(len - pos, d);
        for (std::size_t k = 0; k < d; ++k) {
          CHECK(std::abs(ldpe_value(pos, len, k, d) - pe[k]) <= 1e-12);
          CHECK(std::abs(pe[k] - reference_pe(len - pos, k, d)) <= 1e-12);
        }
      }
}

TEST_CASE("sinusoidal_pe basics") {
  const auto zero = sinusoidal_pe(0, 6);
  for (std::size_t k = 0; k < 6; ++k) CHECK(zero[k] == (k % 2 == 0 ? 0.0 : 1.0));
  const auto one = sinusoidal_pe(1, 2);
  CHECK(one[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(one[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  const auto neg = sinusoidal_pe(-3, 16);
  for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(neg[k] - ldpe_value(10 + 3, 10, k, 16)) <= 1e-12);
  const Mat table = sinusoidal_table(5, 8);
  CHECK(table.rows() == 5);
  for (std::size_t k = 0; k < 8; ++k) CHECK(table(3, static_cast<Eigen::Index>(k)) == doctest::Approx(sinusoidal_pe(3, 8)[k]));
}

TEST_CASE("ldpe_matrix shape and rows") {
  const LdpeMatrix m = ldpe_matrix(5, 3, 8);
  CHECK(m.values.rows() == 3);
  CHECK(m.values.cols() == 8);
  CHECK(m.len == 5.0);
  CHECK(m.d == 8);
  const LdpeMatrix z = ldpe_matrix(0, 1, 8);
  const auto pe0 = sinusoidal_pe(0, 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(z.values(0, static_cast<Eigen::Index>(k)) == pe0[k]);
  for (int p = 0; p < 3; ++p)
    for (std::size_t k = 0; k < 8; ++k)
      CHECK(std::abs(m.values(p, static_cast<Eigen::Index>(k)) - sinusoidal_pe(5 - p, 8)[k]) <= 1e-12);
}

TEST_CASE("ldpe entries lie in [-1, 1] and are shift invariant") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-80.0, 80.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double pos = std::floor(u(gen));
    const double len = u(gen);
    const int c = static_cast<int>(u(gen));
    const std::size_t d = 2 * (1 + static_cast<std::size_t>(trial % 16));
    const std::size_t k = static_cast<std::size_t>(trial * 7) % d;
    const double v = ldpe_value(pos, len, k, d);
    CHECK(std::abs(v) <= 1.0);
    CHECK(std::abs(ldpe_value(pos + c, len + c, k, d) - v) <= 1e-9);
  }
}

TEST_CASE("ldpe derivative in len matches central differences") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  const double h = 1e-3;
  for (int trial = 0; trial < 300; ++trial) {
    const double pos = std::floor(u(gen));
    const double len = u(gen);
    const std::size_t d = 16;
    const std::size_t k = static_cast<std::size_t>(trial) % d;
    const double fd = (ldpe_value(pos, len + h, k, d) - ldpe_value(pos, len - h, k, d)) / (2 * h);
    CHECK(std::abs(ldpe_dlen(pos, len, k, d) - fd) <= 1e-5);
  }
  const Mat dm = ldpe_matrix_dlen(12.5, 4, 8);
  for (int p = 0; p < 4; ++p)
    for (std::size_t k = 0; k < 8; ++k) CHECK(dm(p, static_cast<Eigen::Index>(k)) == ldpe_dlen(p, 12.5, k, 8));
}

TEST_CASE("ldpe argument errors") {
  CHECK_THROWS_AS(ldpe_value(0, 1, 0, 5), Error);
  CHECK_THROWS_AS(ldpe_value(0, 1, 4, 4), Error);
  CHECK_THROWS_AS(ldpe_matrix(3, 2, 7), Error);
}
