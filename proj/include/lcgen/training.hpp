// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcgen/corpus.hpp"
#include "lcgen/heuristics.hpp"
#include "lcgen/model.hpp"

namespace lcgen {

enum class Strategy {
  vanilla_multitask,         // predicted length always drives LDPE; L_all
  scheduled_sampling,        // ground truth with decaying probability p; L_all
  teacher_forcing_pipeline,  // separate regressor; generator sees ground truth only
  oracle_control,            // ground truth at train and test time
  heuristic_control,         // ground truth at train time, a fitted estimator at test time
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct TrainConfig {
  Strategy strategy = Strategy::oracle_control;
  double lambda_g = 0.3;
  double p0 = 0.99;
  double k = 0.98;
  int epoch_origin = 0;  // value of `epoch` in the decay for the first epoch
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  double clip_norm = 5.0;  // per-tensor gradient norm cap; 0 disables
  std::uint64_t seed = 1;
  std::optional<EstimatorKind> heuristic_kind;
  bool generation_loss = true;  // ablation switch; off trains only the length path

  void validate() const;
};

struct TrainRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::optional<double> gen;
  std::optional<double> len;
  std::optional<double> all;
  std::optional<double> p;
  std::size_t truth_controls = 0;  // examples in the step driven by ground truth

  bool operator==(const TrainRecord&) const = default;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::size_t steps_per_epoch = 0;

  // `epoch,step,L_gen,L_len,L_all,p`; absent values are empty fields.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
  // Mean L_gen over the records of one epoch.
  double epoch_mean_gen(std::size_t epoch) const;
};

// Token-level cross-entropy. PAD targets contribute neither loss nor gradient.
struct CrossEntropy {
  double sum = 0.0;
  std::size_t tokens = 0;
};
// When d_logits is non-null it receives softmax - onehot (unscaled).
CrossEntropy cross_entropy(const Mat& logits, const TokenSequence& gold, Mat* d_logits = nullptr);
// Mean cross-entropy over non-PAD positions.
double gen_loss(const Mat& logits, const TokenSequence& gold);

// Root mean square error over a batch.
double len_loss(std::span<const double> pred, std::span<const double> truth);
std::vector<double> len_loss_grad(std::span<const double> pred, std::span<const double> truth);

// lambda_g * L_gen + (1 - lambda_g) * L_len.
double combined_loss(double gen, double len, double lambda_g);

// p0 * k^(epoch + (step + 1) / total_steps).
double sampling_prob(double p0, double k, double epoch, std::size_t step, std::size_t total_steps);

struct TrainItem {
  std::string example_id;
  TokenSequence input;
  DecoderIo io;
  double truth_len = 0.0;
};

// Targets longer than max_tgt_len - 1 tokens are cut to fit.
std::vector<TrainItem> prepare_items(const Corpus& corpus, const Vocab& vocab, const ModelConfig& config);

struct Objective {
  double gen_weight = 1.0;
  double len_weight = 0.0;
};

Objective objective_for(const TrainConfig& config);

struct BatchLoss {
  std::optional<double> gen;
  std::optional<double> len;
  double total = 0.0;
  std::vector<double> predicted;
};

// gen_weight * L_gen + len_weight * L_len on one batch. With `backward`,
// gradients are accumulated into params (caller zeroes them).
BatchLoss batch_objective(ModelParams& params, std::span<const TrainItem* const> batch,
                          std::span<const ControlSource> sources, const Objective& objective, bool backward,
                          const DropoutContext& gen_dropout = {}, const DropoutContext& len_dropout = {});

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const std::vector<Param*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, v_;
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
  std::optional<LengthEstimator> estimator;  // heuristic_control only
};

using EpochCallback = std::function<void(std::size_t epoch, const ModelParams& params, const TrainLog& log)>;

TrainResult train(const TrainConfig& config, const Corpus& corpus, const Vocab& vocab,
                  const ModelConfig& model_config, const EpochCallback& on_epoch = {});

}  // namespace lcgen
