// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/ldpe.hpp"

#include <cmath>

#include "lcgen/error.hpp"

namespace lcgen {

namespace {

void check_dim(std::size_t d) {
  if (d == 0 || d % 2 != 0) throw Error("positional encoding dimension must be even and positive");
}

double denominator(std::size_t k, std::size_t d) {
  const double two_i = static_cast<double>(k - k % 2);
  return std::pow(10000.0, two_i / static_cast<double>(d));
}

}  // namespace

double ldpe_value(double pos, double len, std::size_t k, std::size_t d) {
  check_dim(d);
  if (k >= d) throw Error("ldpe dimension index out of range");
  const double angle = (len - pos) / denominator(k, d);
  return k % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

double ldpe_dlen(double pos, double len, std::size_t k, std::size_t d) {
  check_dim(d);
  if (k >= d) throw Error("ldpe dimension index out of range");
  const double denom = denominator(k, d);
  const double angle = (len - pos) / denom;
  return k % 2 == 0 ? std::cos(angle) / denom : -std::sin(angle) / denom;
}

LdpeMatrix ldpe_matrix(double len, std::size_t max_pos, std::size_t d) {
  check_dim(d);
  if (max_pos < 1) throw Error("ldpe_matrix needs max_pos >= 1");
  LdpeMatrix m{Mat(max_pos, d), len, d};
  for (std::size_t k = 0; k < d; k += 2) {
    const double denom = denominator(k, d);
    for (std::size_t p = 0; p < max_pos; ++p) {
      const double angle = (len - static_cast<double>(p)) / denom;
      m.values(p, k) = std::sin(angle);
      m.values(p, k + 1) = std::cos(angle);
    }
  }
  return m;
}

Mat ldpe_matrix_dlen(double len, std::size_t max_pos, std::size_t d) {
  check_dim(d);
  Mat m(max_pos, d);
  for (std::size_t k = 0; k < d; k += 2) {
    const double denom = denominator(k, d);
    for (std::size_t p = 0; p < max_pos; ++p) {
      const double angle = (len - static_cast<double>(p)) / denom;
      m(p, k) = std::cos(angle) / denom;
      m(p, k + 1) = -std::sin(angle) / denom;
    }
  }
  return m;
}

std::vector<double> sinusoidal_pe(long pos, std::size_t d) {
  check_dim(d);
  std::vector<double> pe(d);
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double rate = std::exp(-std::log(10000.0) * static_cast<double>(2 * i) / static_cast<double>(d));
    const double angle = static_cast<double>(pos) * rate;
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

Mat sinusoidal_table(std::size_t max_pos, std::size_t d) {
  Mat t(max_pos, d);
  for (std::size_t p = 0; p < max_pos; ++p) {
    const auto row = sinusoidal_pe(static_cast<long>(p), d);
    for (std::size_t k = 0; k < d; ++k) t(p, k) = row[k];
  }
  return t;
}

}  // namespace lcgen
