// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "lcgen/tensor.hpp"

namespace lcgen {

// Length-difference positional encoding. Row `pos` encodes the remaining
// budget len - pos with interleaved sin/cos:
//
//   LDPE(pos, len, 2i)   = sin((len - pos) / 10000^(2i/d))
//   LDPE(pos, len, 2i+1) = cos((len - pos) / 10000^(2i/d))
//
// `len` may be fractional (training through a predicted length) and pos may
// exceed len (the generation overran its budget).
double ldpe_value(double pos, double len, std::size_t k, std::size_t d);

// d/d(len) of ldpe_value.
double ldpe_dlen(double pos, double len, std::size_t k, std::size_t d);

struct LdpeMatrix {
  Mat values;  // max_pos x d
  double len = 0.0;
  std::size_t d = 0;
};

LdpeMatrix ldpe_matrix(double len, std::size_t max_pos, std::size_t d);
Mat ldpe_matrix_dlen(double len, std::size_t max_pos, std::size_t d);

// Standard transformer sinusoidal encoding at a signed position.
std::vector<double> sinusoidal_pe(long pos, std::size_t d);
Mat sinusoidal_table(std::size_t max_pos, std::size_t d);

}  // namespace lcgen
