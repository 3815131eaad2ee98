// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lcgen/error.hpp"
#include "lcgen/rng.hpp"

namespace lcgen {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::vanilla_multitask: return "vanilla_multitask";
    case Strategy::scheduled_sampling: return "scheduled_sampling";
    case Strategy::teacher_forcing_pipeline: return "teacher_forcing_pipeline";
    case Strategy::oracle_control: return "oracle_control";
    case Strategy::heuristic_control: return "heuristic_control";
  }
  return "oracle_control";
}

Strategy parse_strategy(std::string_view text) {
  for (auto s : {Strategy::vanilla_multitask, Strategy::scheduled_sampling, Strategy::teacher_forcing_pipeline,
                 Strategy::oracle_control, Strategy::heuristic_control})
    if (to_string(s) == text) return s;
  throw ConfigError("strategy: unknown value '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lambda_g >= 0.0 && lambda_g <= 1.0)) throw ConfigError("lambda_g: must lie in [0, 1]");
  if (!(k > 0.0 && k < 1.0)) throw ConfigError("k: must lie in (0, 1)");
  if (!(p0 > 0.0 && p0 <= 1.0)) throw ConfigError("p0: must lie in (0, 1]");
  if (epochs == 0) throw ConfigError("epochs: must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size: must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr: must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm: must be >= 0");
  if (strategy == Strategy::heuristic_control && !heuristic_kind)
    throw ConfigError("heuristic_kind: required by strategy heuristic_control");
  if (strategy != Strategy::heuristic_control && heuristic_kind)
    throw ConfigError("heuristic_kind: only valid with strategy heuristic_control");
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

}  // namespace

void TrainLog::write_csv(std::ostream& out) const {
  out << "epoch,step,L_gen,L_len,L_all,p\n";
  for (const auto& r : records)
    out << r.epoch << ',' << r.step << ',' << fmt(r.gen) << ',' << fmt(r.len) << ',' << fmt(r.all) << ','
        << fmt(r.p) << '\n';
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

double TrainLog::epoch_mean_gen(std::size_t epoch) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (r.epoch == epoch && r.gen) {
      sum += *r.gen;
      ++n;
    }
  if (n == 0) throw Error("no generation loss recorded for epoch " + std::to_string(epoch));
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------

CrossEntropy cross_entropy(const Mat& logits, const TokenSequence& gold, Mat* d_logits) {
  if (static_cast<std::size_t>(logits.rows()) != gold.length())
    throw Error("cross_entropy: logits have " + std::to_string(logits.rows()) + " rows but target has " +
                std::to_string(gold.length()) + " tokens");
  CrossEntropy ce;
  if (d_logits) d_logits->setZero(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const TokenId y = gold.ids[static_cast<std::size_t>(t)];
    if (y == Vocab::kPad) continue;
    if (y < 0 || y >= logits.cols()) throw Error("cross_entropy: target id out of range");
    const double mx = logits.row(t).maxCoeff();
    const auto shifted = (logits.row(t).array() - mx).exp();
    const double z = shifted.sum();
    ce.sum += std::log(z) - (logits(t, y) - mx);
    ++ce.tokens;
    if (d_logits) {
      d_logits->row(t) = shifted / z;
      (*d_logits)(t, y) -= 1.0;
    }
  }
  return ce;
}

double gen_loss(const Mat& logits, const TokenSequence& gold) {
  const CrossEntropy ce = cross_entropy(logits, gold);
  if (ce.tokens == 0) throw Error("gen_loss: no non-PAD target positions");
  return ce.sum / static_cast<double>(ce.tokens);
}

double len_loss(std::span<const double> pred, std::span<const double> truth) {
  if (pred.empty()) throw Error("len_loss: empty batch");
  if (pred.size() != truth.size()) throw Error("len_loss: size mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) ss += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

std::vector<double> len_loss_grad(std::span<const double> pred, std::span<const double> truth) {
  const double rmse = len_loss(pred, truth);
  std::vector<double> g(pred.size(), 0.0);
  if (rmse == 0.0) return g;
  const double scale = 1.0 / (static_cast<double>(pred.size()) * rmse);
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = (pred[i] - truth[i]) * scale;
  return g;
}

double combined_loss(double gen, double len, double lambda_g) {
  if (!(lambda_g >= 0.0 && lambda_g <= 1.0)) throw Error("combined_loss: lambda_g must lie in [0, 1]");
  return lambda_g * gen + (1.0 - lambda_g) * len;
}

double sampling_prob(double p0, double k, double epoch, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw Error("sampling_prob: total_steps must be >= 1");
  if (step >= total_steps) throw Error("sampling_prob: step must be < total_steps");
  const double exponent = epoch + static_cast<double>(step + 1) / static_cast<double>(total_steps);
  return p0 * std::pow(k, exponent);
}

// ---------------------------------------------------------------------------

std::vector<TrainItem> prepare_items(const Corpus& corpus, const Vocab& vocab, const ModelConfig& config) {
  std::vector<TrainItem> items;
  items.reserve(corpus.size());
  const std::size_t max_target = config.max_tgt_len - 1;
  for (const auto& ex : corpus.examples) {
    TrainItem item;
    item.example_id = ex.example_id;
    item.input = build_model_input(ex, vocab, config.max_src_len).tokens;
    TokenSequence target = vocab.encode(ex.target_span);
    if (target.length() == 0) throw Error("example '" + ex.example_id + "' has an empty target_span");
    if (target.ids.size() > max_target) target.ids.resize(max_target);
    item.truth_len = static_cast<double>(target.length());
    item.io = make_decoder_io(target);
    items.push_back(std::move(item));
  }
  return items;
}

Objective objective_for(const TrainConfig& c) {
  Objective o;
  switch (c.strategy) {
    case Strategy::vanilla_multitask:
    case Strategy::scheduled_sampling:
      o = {c.lambda_g, 1.0 - c.lambda_g};
      break;
    case Strategy::teacher_forcing_pipeline:
      o = {1.0, 1.0};  // disjoint parameter sets: each loss trains only its own model
      break;
    case Strategy::oracle_control:
    case Strategy::heuristic_control:
      o = {1.0, 0.0};
      break;
  }
  if (!c.generation_loss) o.gen_weight = 0.0;
  return o;
}

BatchLoss batch_objective(ModelParams& params, std::span<const TrainItem* const> batch,
                          std::span<const ControlSource> sources, const Objective& objective, bool backward,
                          const DropoutContext& gen_dropout, const DropoutContext& len_dropout) {
  if (batch.empty()) throw Error("batch_objective: empty batch");
  if (sources.size() != batch.size()) throw Error("batch_objective: one control source per example required");

  const bool use_gen = objective.gen_weight != 0.0;
  const bool use_len = objective.len_weight != 0.0;
  std::vector<ExampleTrace> traces;
  traces.reserve(batch.size());
  std::vector<double> truth(batch.size());
  BatchLoss out;
  out.predicted.resize(batch.size());

  CrossEntropy total_ce;
  std::vector<Mat> d_logits(use_gen ? batch.size() : 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    TraceOptions opts;
    opts.source = sources[i];
    opts.run_decoder = use_gen;
    opts.gen_dropout = gen_dropout;
    opts.len_dropout = len_dropout;
    traces.push_back(forward_example(params, batch[i]->input, batch[i]->io.input, batch[i]->truth_len, opts));
    truth[i] = batch[i]->truth_len;
    out.predicted[i] = traces.back().predicted_len;
    if (use_gen) {
      const CrossEntropy ce = cross_entropy(traces.back().logits, batch[i]->io.output, backward ? &d_logits[i] : nullptr);
      total_ce.sum += ce.sum;
      total_ce.tokens += ce.tokens;
    }
  }

  if (use_gen) {
    if (total_ce.tokens == 0) throw Error("batch_objective: no target tokens");
    out.gen = total_ce.sum / static_cast<double>(total_ce.tokens);
    out.total += objective.gen_weight * *out.gen;
  }
  std::vector<double> d_len(batch.size(), 0.0);
  if (use_len) {
    out.len = len_loss(out.predicted, truth);
    out.total += objective.len_weight * *out.len;
    if (backward) {
      d_len = len_loss_grad(out.predicted, truth);
      for (double& g : d_len) g *= objective.len_weight;
    }
  }

  if (backward) {
    const double gen_scale = use_gen ? objective.gen_weight / static_cast<double>(total_ce.tokens) : 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (use_gen) d_logits[i] *= gen_scale;
      backward_example(params, traces[i], use_gen ? &d_logits[i] : nullptr, d_len[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& config, const Corpus& corpus, const Vocab& vocab,
                  const ModelConfig& model_config, const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.split != Split::train) throw ConfigError("train: corpus must be the train split");
  if (corpus.empty()) throw ConfigError("train: corpus is empty");
  ModelConfig mc = model_config;
  mc.vocab_size = vocab.size();
  mc.validate();

  const std::vector<TrainItem> items = prepare_items(corpus, vocab, mc);
  const bool separate = config.strategy == Strategy::teacher_forcing_pipeline;
  TrainResult result{ModelParams::init(mc, config.seed, separate), {}, std::nullopt};
  ModelParams& params = result.params;

  // The regressor starts at the mean training length so it need not learn the
  // offset from scratch.
  const double mean_len =
      std::accumulate(items.begin(), items.end(), 0.0, [](double a, const TrainItem& it) { return a + it.truth_len; }) /
      static_cast<double>(items.size());
  params.length_head.l2.b.value(0, 0) = mean_len;

  if (config.strategy == Strategy::heuristic_control)
    result.estimator = LengthEstimator::fit(*config.heuristic_kind, corpus, vocab, config.seed);

  const Objective objective = objective_for(config);
  auto data_gen = make_stream(config.seed, "data");
  auto sampling_gen = make_stream(config.seed, "sampling");
  auto gen_drop_gen = make_stream(config.seed, "dropout.generation");
  auto len_drop_gen = make_stream(config.seed, "dropout.length");
  const DropoutContext gen_drop{mc.dropout, &gen_drop_gen};
  const DropoutContext len_drop{mc.dropout, &len_drop_gen};

  const std::vector<Param*> list = params.parameters();
  Adam adam(config.lr);
  const std::size_t total_steps = (items.size() + config.batch_size - 1) / config.batch_size;
  result.log.steps_per_epoch = total_steps;

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(data_gen(), i)]);
    const double epoch_index = static_cast<double>(epoch) + config.epoch_origin;
    for (std::size_t step = 0; step < total_steps; ++step) {
      const std::size_t begin = step * config.batch_size;
      const std::size_t end = std::min(items.size(), begin + config.batch_size);
      std::vector<const TrainItem*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&items[order[i]]);

      TrainRecord rec;
      rec.epoch = static_cast<std::size_t>(epoch_index);
      rec.step = step;
      std::vector<ControlSource> sources(batch.size(), ControlSource::truth);
      if (config.strategy == Strategy::vanilla_multitask) {
        std::fill(sources.begin(), sources.end(), ControlSource::predicted);
      } else if (config.strategy == Strategy::scheduled_sampling) {
        const double p = sampling_prob(config.p0, config.k, epoch_index, step, total_steps);
        rec.p = p;
        for (auto& s : sources) s = unit_uniform(sampling_gen) < p ? ControlSource::truth : ControlSource::predicted;
      }
      rec.truth_controls =
          static_cast<std::size_t>(std::count(sources.begin(), sources.end(), ControlSource::truth));

      params.zero_grad();
      const BatchLoss loss = batch_objective(params, batch, sources, objective, true, gen_drop, len_drop);
      rec.gen = loss.gen;
      rec.len = loss.len;
      switch (config.strategy) {
        case Strategy::vanilla_multitask:
        case Strategy::scheduled_sampling:
          if (loss.gen && loss.len) rec.all = combined_loss(*loss.gen, *loss.len, config.lambda_g);
          break;
        case Strategy::oracle_control:
        case Strategy::heuristic_control:
          rec.all = loss.gen;
          break;
        case Strategy::teacher_forcing_pipeline:
          break;
      }
      if (config.clip_norm > 0.0)
        for (Param* p : list) {
          const double norm = p->grad.norm();
          if (norm > config.clip_norm) p->grad *= config.clip_norm / norm;
        }
      adam.step(list);
      result.log.records.push_back(rec);
    }
    if (!params.all_finite()) throw Error("training diverged: non-finite parameters");
    if (on_epoch) on_epoch(epoch, params, result.log);
  }
  return result;
}

}  // namespace lcgen
