// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lcgen {

std::uint64_t fnv1a64(std::string_view bytes);

std::uint64_t splitmix64(std::uint64_t x);

// Named sub-stream of a root seed. Streams with different names are
// independent; the same (root, name) always yields the same sequence.
std::mt19937_64 make_stream(std::uint64_t root_seed, std::string_view name);

// Uniform index in [0, n) from a 64-bit word (multiply-shift reduction).
inline std::size_t bounded(std::uint64_t word, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(word) * n) >> 64);
}

// Uniform double in [0, 1) from a 64-bit generator.
inline double unit_uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace lcgen
