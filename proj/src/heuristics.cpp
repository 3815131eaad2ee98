// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lcgen/error.hpp"
#include "lcgen/rng.hpp"

namespace lcgen {

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::average: return "average";
    case EstimatorKind::citation_marks: return "citation_marks";
    case EstimatorKind::citing_paper: return "citing_paper";
    case EstimatorKind::random: return "random";
    case EstimatorKind::oracle: return "oracle";
  }
  return "average";
}

EstimatorKind parse_estimator_kind(std::string_view text) {
  for (auto k : {EstimatorKind::average, EstimatorKind::citation_marks, EstimatorKind::citing_paper,
                 EstimatorKind::random, EstimatorKind::oracle})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown estimator kind '" + std::string(text) + "'");
}

int round_length(double value) {
  if (!std::isfinite(value)) return 1;
  const double r = std::floor(value + 0.5);
  if (r < 1.0) return 1;
  if (r > 1e9) return 1000000000;
  return static_cast<int>(r);
}

std::size_t mark_count(const CitationExample& ex) { return ex.citation_marks.size(); }

LengthEstimator::LengthEstimator(const LengthEstimator& other)
    : fitted_(other.fitted_),
      kind_(other.kind_),
      global_mean_(other.global_mean_),
      by_mark_count_(other.by_mark_count_),
      by_paper_(other.by_paper_),
      empirical_lengths_(other.empirical_lengths_),
      rng_seed_(other.rng_seed_),
      max_length_(other.max_length_),
      counter_(other.counter_.load()) {}

LengthEstimator& LengthEstimator::operator=(const LengthEstimator& other) {
  if (this != &other) {
    fitted_ = other.fitted_;
    kind_ = other.kind_;
    global_mean_ = other.global_mean_;
    by_mark_count_ = other.by_mark_count_;
    by_paper_ = other.by_paper_;
    empirical_lengths_ = other.empirical_lengths_;
    rng_seed_ = other.rng_seed_;
    max_length_ = other.max_length_;
    counter_.store(other.counter_.load());
  }
  return *this;
}

LengthEstimator LengthEstimator::fit(EstimatorKind kind, const Corpus& train, std::uint64_t seed) {
  if (train.empty()) throw Error("cannot fit a length estimator on an empty corpus");
  LengthEstimator est;
  est.kind_ = kind;
  est.rng_seed_ = seed;

  double sum = 0.0;
  std::map<std::size_t, std::pair<double, std::size_t>> marks;
  std::map<std::string, std::pair<double, std::size_t>> papers;
  for (const auto& ex : train.examples) {
    const std::size_t len = target_length(ex);
    sum += static_cast<double>(len);
    est.max_length_ = std::max(est.max_length_, len);
    if (kind == EstimatorKind::citation_marks) {
      auto& acc = marks[mark_count(ex)];
      acc.first += static_cast<double>(len);
      ++acc.second;
    } else if (kind == EstimatorKind::citing_paper) {
      auto& acc = papers[ex.citing_paper_id];
      acc.first += static_cast<double>(len);
      ++acc.second;
    } else if (kind == EstimatorKind::random) {
      est.empirical_lengths_.push_back(len);
    }
  }
  est.global_mean_ = sum / static_cast<double>(train.size());
  for (const auto& [k, acc] : marks) est.by_mark_count_[k] = acc.first / static_cast<double>(acc.second);
  for (const auto& [k, acc] : papers) est.by_paper_[k] = acc.first / static_cast<double>(acc.second);
  est.fitted_ = true;
  return est;
}

LengthEstimator LengthEstimator::fit(EstimatorKind kind, const Corpus& train, const Vocab&,
                                     std::uint64_t seed) {
  return fit(kind, train, seed);
}

int LengthEstimator::estimate_at(const CitationExample& ex, std::uint64_t draw) const {
  if (!fitted_) throw Error("length estimator used before fitting");
  switch (kind_) {
    case EstimatorKind::average:
      return round_length(global_mean_);
    case EstimatorKind::citation_marks: {
      auto it = by_mark_count_.find(mark_count(ex));
      return round_length(it == by_mark_count_.end() ? global_mean_ : it->second);
    }
    case EstimatorKind::citing_paper: {
      auto it = by_paper_.find(ex.citing_paper_id);
      return round_length(it == by_paper_.end() ? global_mean_ : it->second);
    }
    case EstimatorKind::random: {
      const std::uint64_t word = splitmix64(splitmix64(rng_seed_) ^ (draw * 0x9e3779b97f4a7c15ULL + 1));
      return round_length(static_cast<double>(empirical_lengths_[bounded(word, empirical_lengths_.size())]));
    }
    case EstimatorKind::oracle:
      return round_length(static_cast<double>(target_length(ex)));
  }
  return round_length(global_mean_);
}

int LengthEstimator::estimate(const CitationExample& ex) const {
  if (!fitted_) throw Error("length estimator used before fitting");
  const std::uint64_t draw = kind_ == EstimatorKind::random ? counter_.fetch_add(1) : 0;
  return estimate_at(ex, draw);
}

bool LengthEstimator::operator==(const LengthEstimator& o) const {
  return fitted_ == o.fitted_ && kind_ == o.kind_ && global_mean_ == o.global_mean_ &&
         by_mark_count_ == o.by_mark_count_ && by_paper_ == o.by_paper_ &&
         empirical_lengths_ == o.empirical_lengths_ && rng_seed_ == o.rng_seed_ &&
         max_length_ == o.max_length_;
}

std::string LengthEstimator::to_json() const {
  if (!fitted_) throw Error("cannot serialize an unfitted estimator");
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(kind_));
  j["global_mean"] = global_mean_;
  j["max_length"] = max_length_;
  j["rng_seed"] = rng_seed_;
  nlohmann::ordered_json marks = nlohmann::ordered_json::object();
  for (const auto& [k, v] : by_mark_count_) marks[std::to_string(k)] = v;
  j["by_mark_count"] = marks;
  nlohmann::ordered_json papers = nlohmann::ordered_json::object();
  for (const auto& [k, v] : by_paper_) papers[k] = v;
  j["by_paper"] = papers;
  j["empirical_lengths"] = empirical_lengths_;
  return j.dump(2);
}

LengthEstimator LengthEstimator::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed estimator JSON: ") + e.what());
  }
  LengthEstimator est;
  try {
    est.kind_ = parse_estimator_kind(j.at("kind").get<std::string>());
    est.global_mean_ = j.at("global_mean").get<double>();
    est.max_length_ = j.at("max_length").get<std::size_t>();
    est.rng_seed_ = j.at("rng_seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("by_mark_count").items())
      est.by_mark_count_[static_cast<std::size_t>(std::stoul(k))] = v.get<double>();
    for (const auto& [k, v] : j.at("by_paper").items()) est.by_paper_[k] = v.get<double>();
    est.empirical_lengths_ = j.at("empirical_lengths").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid estimator JSON: ") + e.what());
  }
  if (est.kind_ == EstimatorKind::random && est.empirical_lengths_.empty())
    throw Error("random estimator without empirical lengths");
  est.fitted_ = true;
  return est;
}

void LengthEstimator::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write estimator " + path.string());
  out << to_json() << '\n';
}

LengthEstimator LengthEstimator::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read estimator " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace lcgen
