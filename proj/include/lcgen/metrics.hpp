// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lcgen/corpus.hpp"
#include "lcgen/model.hpp"

namespace lcgen {

struct Rouge {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Clipped n-gram overlap. Either side shorter than n scores zero.
Rouge rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference, int n);
// Longest-common-subsequence ROUGE.
Rouge rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

// Lowercased tokenizer output, the unit both ROUGE variants score on.
std::vector<std::string> rouge_tokens(std::string_view text);

using LengthPair = std::pair<double, double>;

// mean |a - b| over (predicted, true) pairs.
double mae(const std::vector<LengthPair>& pairs);
// 0.001 * mean |generated - desired|^2.
double control_variance(const std::vector<LengthPair>& pairs);
// Bins of (generated - target).
std::vector<HistogramBin> length_diff_histogram(const std::vector<std::pair<long, long>>& pairs, long bin_width);

struct MetricsReport {
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  std::optional<double> mae;  // only when predictions carry predicted_len
  double control_variance = 0.0;
  std::size_t n = 0;
  std::vector<HistogramBin> length_diff_histogram;

  std::string to_json() const;
  void write_histogram_csv(std::ostream& out) const;
};

// Results and references are matched by example_id and must cover each other
// exactly. ROUGE is the unweighted mean of per-example F1.
MetricsReport evaluate_run(const std::vector<GenerationResult>& results, const Corpus& references,
                           const Vocab& vocab, long bin_width = 5);
MetricsReport evaluate_run(const std::vector<GenerationResult>& results, const Corpus& references,
                           long bin_width = 5);

std::string result_to_json(const GenerationResult& r);
GenerationResult result_from_json(std::string_view line);
void write_results(std::ostream& out, const std::vector<GenerationResult>& results);
std::vector<GenerationResult> read_results(std::istream& in);

std::vector<HistogramBin> read_histogram_csv(std::istream& in);

}  // namespace lcgen
