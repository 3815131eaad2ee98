// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "lcgen/error.hpp"

namespace lcgen {

namespace {

Rouge from_counts(double overlap, double cand_total, double ref_total) {
  Rouge r;
  if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return r;
  r.precision = overlap / cand_total;
  r.recall = overlap / ref_total;
  r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace

Rouge rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference, int n) {
  if (n < 1) throw Error("rouge_n: n must be >= 1");
  const auto order = static_cast<std::size_t>(n);
  if (candidate.size() < order || reference.size() < order) return {};
  const auto cand = ngram_counts(candidate, order);
  const auto ref = ngram_counts(reference, order);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand)
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  return from_counts(static_cast<double>(overlap), static_cast<double>(candidate.size() - order + 1),
                     static_cast<double>(reference.size() - order + 1));
}

Rouge rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return {};
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (std::size_t i = 1; i <= candidate.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j)
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return from_counts(static_cast<double>(prev[reference.size()]), static_cast<double>(candidate.size()),
                     static_cast<double>(reference.size()));
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  auto toks = tokenize(text);
  for (auto& t : toks)
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return toks;
}

double mae(const std::vector<LengthPair>& pairs) {
  if (pairs.empty()) throw Error("mae: no pairs");
  double sum = 0.0;
  for (const auto& [a, b] : pairs) sum += std::abs(a - b);
  return sum / static_cast<double>(pairs.size());
}

double control_variance(const std::vector<LengthPair>& pairs) {
  if (pairs.empty()) throw Error("control_variance: no pairs");
  double sum = 0.0;
  for (const auto& [generated, desired] : pairs) sum += (generated - desired) * (generated - desired);
  return 0.001 * sum / static_cast<double>(pairs.size());
}

std::vector<HistogramBin> length_diff_histogram(const std::vector<std::pair<long, long>>& pairs, long bin_width) {
  if (bin_width < 1) throw Error("length_diff_histogram: bin width must be >= 1");
  std::vector<long> diffs;
  diffs.reserve(pairs.size());
  for (const auto& [generated, target] : pairs) diffs.push_back(generated - target);
  return histogram(diffs, bin_width);
}

// ---------------------------------------------------------------------------

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["rouge1_f"] = rouge1_f;
  j["rouge2_f"] = rouge2_f;
  j["rougeL_f"] = rougeL_f;
  j["mae"] = mae ? nlohmann::ordered_json(*mae) : nlohmann::ordered_json(nullptr);
  j["control_variance"] = control_variance;
  nlohmann::ordered_json bins = nlohmann::ordered_json::array();
  for (const auto& b : length_diff_histogram) bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  j["length_diff_histogram"] = bins;
  return j.dump(2);
}

void MetricsReport::write_histogram_csv(std::ostream& out) const {
  out << "bin_lower,bin_upper,count\n";
  for (const auto& b : length_diff_histogram) out << b.lower << ',' << b.upper << ',' << b.count << '\n';
}

MetricsReport evaluate_run(const std::vector<GenerationResult>& results, const Corpus& references, long bin_width) {
  if (results.empty()) throw Error("evaluate_run: no results");
  std::unordered_map<std::string, const CitationExample*> by_id;
  for (const auto& ex : references.examples) by_id.emplace(ex.example_id, &ex);
  if (results.size() != references.size())
    throw Error("evaluate_run: " + std::to_string(results.size()) + " results for " +
                std::to_string(references.size()) + " references");

  MetricsReport report;
  report.n = results.size();
  std::vector<LengthPair> predicted, control;
  std::vector<std::pair<long, long>> diffs;
  std::unordered_map<std::string, bool> seen;
  for (const auto& r : results) {
    auto it = by_id.find(r.example_id);
    if (it == by_id.end()) throw Error("evaluate_run: result '" + r.example_id + "' has no reference");
    if (!seen.emplace(r.example_id, true).second)
      throw Error("evaluate_run: duplicate result for '" + r.example_id + "'");
    const CitationExample& ref = *it->second;
    const auto cand_toks = rouge_tokens(r.text);
    const auto ref_toks = rouge_tokens(ref.target_span);
    report.rouge1_f += rouge_n(cand_toks, ref_toks, 1).f1;
    report.rouge2_f += rouge_n(cand_toks, ref_toks, 2).f1;
    report.rougeL_f += rouge_l(cand_toks, ref_toks).f1;
    const auto target_len = static_cast<double>(target_length(ref));
    if (r.predicted_len) predicted.emplace_back(*r.predicted_len, target_len);
    control.emplace_back(static_cast<double>(r.generated_len), static_cast<double>(r.desired_len));
    diffs.emplace_back(static_cast<long>(r.generated_len), static_cast<long>(target_len));
  }
  const auto n = static_cast<double>(report.n);
  report.rouge1_f /= n;
  report.rouge2_f /= n;
  report.rougeL_f /= n;
  if (!predicted.empty()) report.mae = mae(predicted);
  report.control_variance = control_variance(control);
  report.length_diff_histogram = length_diff_histogram(diffs, bin_width);
  return report;
}

MetricsReport evaluate_run(const std::vector<GenerationResult>& results, const Corpus& references,
                           const Vocab&, long bin_width) {
  return evaluate_run(results, references, bin_width);
}

// ---------------------------------------------------------------------------

std::string result_to_json(const GenerationResult& r) {
  nlohmann::ordered_json j;
  j["example_id"] = r.example_id;
  j["text"] = r.text;
  j["tokens"] = r.tokens.ids;
  j["desired_len"] = r.desired_len;
  j["generated_len"] = r.generated_len;
  if (r.predicted_len) j["predicted_len"] = *r.predicted_len;
  return j.dump();
}

GenerationResult result_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  GenerationResult r;
  r.example_id = j.at("example_id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.tokens.ids = j.value("tokens", std::vector<TokenId>{});
  r.desired_len = j.at("desired_len").get<int>();
  r.generated_len = j.at("generated_len").get<std::size_t>();
  if (j.contains("predicted_len") && !j.at("predicted_len").is_null()) r.predicted_len = j.at("predicted_len").get<double>();
  return r;
}

void write_results(std::ostream& out, const std::vector<GenerationResult>& results) {
  for (const auto& r : results) out << result_to_json(r) << '\n';
}

std::vector<GenerationResult> read_results(std::istream& in) {
  std::vector<GenerationResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(result_from_json(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error("results line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<HistogramBin> read_histogram_csv(std::istream& in) {
  std::vector<HistogramBin> bins;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("bin_lower", 0) == 0) continue;
    std::istringstream row(line);
    HistogramBin b;
    char c1 = 0, c2 = 0;
    long long count = -1;
    if (!(row >> b.lower >> c1 >> b.upper >> c2 >> count) || c1 != ',' || c2 != ',' || count < 0 ||
        b.upper <= b.lower || !(row >> std::ws).eof())
      throw Error("malformed histogram CSV at line " + std::to_string(line_no));
    b.count = static_cast<std::size_t>(count);
    bins.push_back(b);
  }
  if (bins.empty()) throw Error("histogram CSV has no bins");
  return bins;
}

}  // namespace lcgen
