// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lcgen/corpus.hpp"

namespace lcgen {

enum class EstimatorKind { average, citation_marks, citing_paper, random, oracle };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view text);

// Rounds to nearest, halves up, and clamps to >= 1. Every control length handed
// to the decoder at inference goes through this.
int round_length(double value);

std::size_t mark_count(const CitationExample& ex);

// A fitted statistical length estimate. Only the statistics the kind needs are
// populated. The random kind draws from the training multiset with a
// counter-indexed stream, so copies and concurrent callers never reuse a
// stream position.
class LengthEstimator {
 public:
  LengthEstimator() = default;
  LengthEstimator(const LengthEstimator& other);
  LengthEstimator& operator=(const LengthEstimator& other);

  static LengthEstimator fit(EstimatorKind kind, const Corpus& train, std::uint64_t seed);
  static LengthEstimator fit(EstimatorKind kind, const Corpus& train, const Vocab& vocab,
                             std::uint64_t seed);

  bool fitted() const { return fitted_; }
  EstimatorKind kind() const { return kind_; }
  double global_mean() const { return global_mean_; }
  const std::map<std::size_t, double>& by_mark_count() const { return by_mark_count_; }
  const std::map<std::string, double>& by_paper() const { return by_paper_; }
  const std::vector<std::size_t>& empirical_lengths() const { return empirical_lengths_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  std::size_t max_length() const { return max_length_; }

  // Advances the draw counter for the random kind.
  int estimate(const CitationExample& ex) const;
  // Pure variant: the random kind uses stream position `draw`.
  int estimate_at(const CitationExample& ex, std::uint64_t draw) const;
  std::uint64_t draws() const { return counter_.load(); }

  std::string to_json() const;
  static LengthEstimator from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static LengthEstimator load(const std::filesystem::path& path);

  // Value equality over kind, statistics and seed (not the draw counter).
  bool operator==(const LengthEstimator& other) const;

 private:
  bool fitted_ = false;
  EstimatorKind kind_ = EstimatorKind::average;
  double global_mean_ = 0.0;
  std::map<std::size_t, double> by_mark_count_;
  std::map<std::string, double> by_paper_;
  std::vector<std::size_t> empirical_lengths_;
  std::uint64_t rng_seed_ = 0;
  std::size_t max_length_ = 0;
  mutable std::atomic<std::uint64_t> counter_{0};
};

}  // namespace lcgen
