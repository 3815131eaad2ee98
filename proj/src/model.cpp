// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lcgen/error.hpp"
#include "lcgen/heuristics.hpp"
#include "lcgen/ldpe.hpp"
#include "lcgen/rng.hpp"

namespace lcgen {

void ModelConfig::validate() const {
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("d_model must be even and positive");
  if (n_heads == 0 || d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (n_layers == 0) throw ConfigError("n_layers must be >= 1");
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be >= 1");
  if (length_hidden == 0) throw ConfigError("length_hidden must be >= 1");
  if (vocab_size <= Vocab::kNumReserved) throw ConfigError("vocab_size must exceed the reserved tokens");
  if (max_src_len < 8) throw ConfigError("max_src_len must be >= 8");
  if (max_tgt_len < 2) throw ConfigError("max_tgt_len must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

// ---------------------------------------------------------------------------

TokenEmbedding::TokenEmbedding(const std::string& name, std::size_t vocab, std::size_t d_model) {
  table.name = name + ".table";
  table.value = Mat::Zero(static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(d_model));
  table.zero_grad();
}

void TokenEmbedding::init(std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(table.value.cols())));
  for (Eigen::Index i = 0; i < table.value.size(); ++i) table.value.data()[i] = dist(gen);
}

Mat TokenEmbedding::forward(const std::vector<TokenId>& ids) const {
  const double scale = std::sqrt(static_cast<double>(table.value.cols()));
  Mat x(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) throw Error("token id out of vocabulary range");
    x.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]) * scale;
  }
  return x;
}

void TokenEmbedding::backward(const std::vector<TokenId>& ids, const Mat& dy) {
  const double scale = std::sqrt(static_cast<double>(table.value.cols()));
  for (std::size_t i = 0; i < ids.size(); ++i) table.grad.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i)) * scale;
}

void TokenEmbedding::collect(std::vector<Param*>& out) { out.push_back(&table); }

// ---------------------------------------------------------------------------

Encoder::Encoder(const std::string& name, const ModelConfig& cfg)
    : embed(name + ".embed", cfg.vocab_size, cfg.d_model),
      final_ln(name + ".final_ln", cfg.d_model),
      positions(sinusoidal_table(cfg.max_src_len, cfg.d_model)) {
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    layers.emplace_back(name + ".layer" + std::to_string(l), cfg.d_model, cfg.n_heads, cfg.ffn_dim);
}

void Encoder::init(std::mt19937_64& gen) {
  embed.init(gen);
  for (auto& layer : layers) layer.init(gen);
}

Mat Encoder::forward(const TokenSequence& input, Cache& cache, const DropoutContext& drop) const {
  if (input.length() == 0) throw Error("encoder input is empty");
  if (input.length() > static_cast<std::size_t>(positions.rows()))
    throw Error("encoder input of " + std::to_string(input.length()) + " tokens exceeds max_src_len");
  if (input.ids[0] != Vocab::kCls) throw Error("encoder input must start with CLS");
  cache.ids = input.ids;
  Mat x = embed.forward(input.ids) + positions.topRows(static_cast<Eigen::Index>(input.length()));
  x = dropout_forward(x, drop, cache.drop_in);
  cache.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) x = layers[l].forward(x, cache.layers[l], drop);
  return final_ln.forward(x, cache.final_ln);
}

void Encoder::backward(const Mat& d_states, const Cache& cache) {
  Mat dx = final_ln.backward(d_states, cache.final_ln);
  for (std::size_t l = layers.size(); l-- > 0;) dx = layers[l].backward(dx, cache.layers[l]);
  embed.backward(cache.ids, dropout_backward(dx, cache.drop_in));
}

void Encoder::collect(std::vector<Param*>& out) {
  embed.collect(out);
  for (auto& layer : layers) layer.collect(out);
  final_ln.collect(out);
}

// ---------------------------------------------------------------------------

Decoder::Decoder(const std::string& name, const ModelConfig& cfg)
    : embed(name + ".embed", cfg.vocab_size, cfg.d_model),
      final_ln(name + ".final_ln", cfg.d_model),
      out(name + ".out", cfg.d_model, cfg.vocab_size) {
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    layers.emplace_back(name + ".layer" + std::to_string(l), cfg.d_model, cfg.n_heads, cfg.ffn_dim);
}

void Decoder::init(std::mt19937_64& gen) {
  embed.init(gen);
  for (auto& layer : layers) layer.init(gen);
  out.init(gen);
}

Mat Decoder::forward(const TokenSequence& dec_input, const Mat& memory, double control_len, Cache& cache,
                     const DropoutContext& drop) const {
  const auto t = static_cast<std::size_t>(dec_input.length());
  if (t == 0) throw Error("decoder input is empty");
  cache.ids = dec_input.ids;
  cache.control_len = control_len;
  Mat x = embed.forward(dec_input.ids) + ldpe_matrix(control_len, t, static_cast<std::size_t>(memory.cols())).values;
  x = dropout_forward(x, drop, cache.drop_in);
  cache.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) x = layers[l].forward(x, memory, cache.layers[l], drop);
  cache.normed = final_ln.forward(x, cache.final_ln);
  return out.forward(cache.normed);
}

double Decoder::backward(const Mat& d_logits, const Cache& cache, Mat& d_memory) {
  Mat dx = final_ln.backward(out.backward(cache.normed, d_logits), cache.final_ln);
  for (std::size_t l = layers.size(); l-- > 0;) dx = layers[l].backward(dx, cache.layers[l], d_memory);
  dx = dropout_backward(dx, cache.drop_in);
  embed.backward(cache.ids, dx);
  const Mat dl = ldpe_matrix_dlen(cache.control_len, static_cast<std::size_t>(dx.rows()),
                                  static_cast<std::size_t>(dx.cols()));
  return dx.cwiseProduct(dl).sum();
}

void Decoder::collect(std::vector<Param*>& out_params) {
  embed.collect(out_params);
  for (auto& layer : layers) layer.collect(out_params);
  final_ln.collect(out_params);
  out.collect(out_params);
}

Decoder::State Decoder::start(const Mat& memory, double control_len) const {
  State s;
  for (const auto& layer : layers) s.layers.push_back(layer.start(memory));
  s.control_len = control_len;
  s.position = 0;
  return s;
}

Mat Decoder::step(State& s, TokenId token) const {
  const auto d = static_cast<std::size_t>(embed.table.value.cols());
  Mat x = embed.forward({token});
  for (std::size_t k = 0; k < d; ++k)
    x(0, static_cast<Eigen::Index>(k)) += ldpe_value(static_cast<double>(s.position), s.control_len, k, d);
  for (std::size_t l = 0; l < layers.size(); ++l) x = layers[l].step(x, s.layers[l]);
  LayerNorm::Cache tmp;
  ++s.position;
  return out.forward(final_ln.forward(x, tmp));
}

// ---------------------------------------------------------------------------

LengthHead::LengthHead(const std::string& name, std::size_t d_model, std::size_t hidden)
    : l1(name + ".l1", d_model, hidden), l2(name + ".l2", hidden, 1) {}

void LengthHead::init(std::mt19937_64& gen) {
  l1.init(gen);
  l2.init(gen);
}

double LengthHead::forward(const Mat& h_cls, Cache& cache) const {
  cache.h_cls = h_cls;
  cache.hidden = l1.forward(h_cls).array().tanh();
  return l2.forward(cache.hidden)(0, 0);
}

Mat LengthHead::backward(double d_pred, const Cache& cache) {
  Mat dy(1, 1);
  dy(0, 0) = d_pred;
  const Mat dh = l2.backward(cache.hidden, dy);
  const Mat dpre = dh.cwiseProduct((1.0 - cache.hidden.array().square()).matrix());
  return l1.backward(cache.h_cls, dpre);
}

void LengthHead::collect(std::vector<Param*>& out) {
  l1.collect(out);
  l2.collect(out);
}

// ---------------------------------------------------------------------------

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed, bool separate_length_encoder) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.encoder = Encoder("encoder", config);
  p.decoder = Decoder("decoder", config);
  p.length_head = LengthHead("length_head", config.d_model, config.length_hidden);
  auto gen = make_stream(seed, "init.generation");
  p.encoder.init(gen);
  p.decoder.init(gen);
  auto len_gen = make_stream(seed, "init.length");
  p.length_head.init(len_gen);
  if (separate_length_encoder) {
    p.length_encoder = Encoder("length_encoder", config);
    p.length_encoder->init(len_gen);
  }
  return p;
}

std::vector<Param*> ModelParams::generation_parameters() {
  std::vector<Param*> out;
  encoder.collect(out);
  decoder.collect(out);
  return out;
}

std::vector<Param*> ModelParams::length_parameters() {
  std::vector<Param*> out;
  if (length_encoder) length_encoder->collect(out);
  length_head.collect(out);
  return out;
}

std::vector<Param*> ModelParams::parameters() {
  std::vector<Param*> out = generation_parameters();
  for (Param* p : length_parameters()) out.push_back(p);
  return out;
}

void ModelParams::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

bool ModelParams::all_finite() {
  for (Param* p : parameters())
    if (!p->value.allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------

Mat encode(const ModelParams& params, const TokenSequence& input) {
  Encoder::Cache cache;
  return params.encoder.forward(input, cache, {});
}

Mat length_states(const ModelParams& params, const TokenSequence& input) {
  if (!params.length_encoder) return encode(params, input);
  Encoder::Cache cache;
  return params.length_encoder->forward(input, cache, {});
}

double predict_length(const ModelParams& params, const Mat& states) {
  if (states.rows() == 0) throw Error("predict_length needs at least the CLS row");
  LengthHead::Cache cache;
  return params.length_head.forward(states.topRows(1), cache);
}

Mat decode_train(const ModelParams& params, const Mat& states, const TokenSequence& dec_input,
                 double control_len) {
  if (dec_input.length() > params.config.max_tgt_len)
    throw Error("decoder input of " + std::to_string(dec_input.length()) + " tokens exceeds max_tgt_len");
  Decoder::Cache cache;
  return params.decoder.forward(dec_input, states, control_len, cache, {});
}

DecoderIo make_decoder_io(const TokenSequence& target) {
  DecoderIo io;
  io.input.ids.reserve(target.length() + 1);
  io.input.ids.push_back(Vocab::kBos);
  io.input.ids.insert(io.input.ids.end(), target.ids.begin(), target.ids.end());
  io.output.ids = target.ids;
  io.output.ids.push_back(Vocab::kEos);
  return io;
}

namespace {

// Tokens the decoder may never emit.
void mask_reserved(Mat& logits) {
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  for (TokenId id : {Vocab::kPad, Vocab::kBos, Vocab::kCls, Vocab::kMask, Vocab::kSep}) logits(0, id) = kNeg;
}

Mat log_softmax_row(const Mat& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

std::vector<TokenId> greedy_decode(const Decoder& dec, const Mat& memory, int control_len, std::size_t max_steps) {
  auto state = dec.start(memory, static_cast<double>(control_len));
  std::vector<TokenId> out;
  TokenId prev = Vocab::kBos;
  while (out.size() < max_steps) {
    Mat logits = dec.step(state, prev);
    mask_reserved(logits);
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    const auto tok = static_cast<TokenId>(best);
    if (tok == Vocab::kEos) break;
    out.push_back(tok);
    prev = tok;
  }
  return out;
}

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
  Decoder::State state;
  bool finished = false;
};

std::vector<TokenId> beam_decode(const Decoder& dec, const Mat& memory, int control_len, std::size_t max_steps,
                                 std::size_t beam_size) {
  std::vector<Hypothesis> beams(1);
  beams[0].state = dec.start(memory, static_cast<double>(control_len));
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step <= max_steps && !beams.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (auto& hyp : beams) {
      const TokenId prev = hyp.tokens.empty() ? Vocab::kBos : hyp.tokens.back();
      Decoder::State state = hyp.state;
      Mat logits = dec.step(state, prev);
      mask_reserved(logits);
      const Mat logp = log_softmax_row(logits);
      std::vector<Eigen::Index> order(static_cast<std::size_t>(logp.cols()));
      for (Eigen::Index i = 0; i < logp.cols(); ++i) order[static_cast<std::size_t>(i)] = i;
      const std::size_t keep = std::min(beam_size, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          return logp(0, a) > logp(0, b) || (logp(0, a) == logp(0, b) && a < b);
                        });
      for (std::size_t r = 0; r < keep; ++r) {
        const auto tok = static_cast<TokenId>(order[r]);
        if (!std::isfinite(logp(0, order[r]))) continue;
        Hypothesis next{hyp.tokens, hyp.score + logp(0, order[r]), {}, false};
        if (tok == Vocab::kEos || step == max_steps) {
          next.finished = true;
        } else {
          next.tokens.push_back(tok);
          next.state = state;
        }
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    beams.clear();
    for (auto& c : candidates) {
      if (beams.size() >= beam_size) break;
      if (c.finished)
        finished.push_back(std::move(c));
      else
        beams.push_back(std::move(c));
    }
    // Scores only decrease with length, so a finished hypothesis that beats
    // every live beam is final.
    double best_done = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) best_done = std::max(best_done, f.score);
    if (beams.empty() || best_done >= beams.front().score) {
      beams.clear();
      break;
    }
  }
  for (auto& b : beams) finished.push_back(std::move(b));
  const auto best = std::max_element(finished.begin(), finished.end(),
                                     [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
  return best == finished.end() ? std::vector<TokenId>{} : best->tokens;
}

}  // namespace

GenerationResult generate(const ModelParams& params, const Vocab& vocab, const TokenSequence& input,
                          int control_len, std::size_t max_steps, const DecodeMode& mode) {
  if (control_len < 1) throw Error("control length must be >= 1");
  const Mat memory = encode(params, input);
  GenerationResult r;
  r.desired_len = control_len;
  if (mode.kind == DecodeMode::Kind::beam && mode.beam_size > 1)
    r.tokens.ids = beam_decode(params.decoder, memory, control_len, max_steps, mode.beam_size);
  else
    r.tokens.ids = greedy_decode(params.decoder, memory, control_len, max_steps);
  r.generated_len = r.tokens.length();
  r.text = vocab.decode(r.tokens);
  return r;
}

GenerationResult predict_and_generate(const ModelParams& params, const Vocab& vocab, const TokenSequence& input,
                                      std::size_t max_steps, const DecodeMode& mode) {
  const double predicted = predict_length(params, length_states(params, input));
  const int limit = static_cast<int>(std::max<std::size_t>(params.config.max_tgt_len, 2) - 1);
  const int desired = std::min(round_length(predicted), limit);
  GenerationResult r = generate(params, vocab, input, desired, max_steps, mode);
  r.predicted_len = predicted;
  return r;
}

// ---------------------------------------------------------------------------

ExampleTrace forward_example(const ModelParams& params, const TokenSequence& input, const TokenSequence& dec_input,
                             double truth_len, const TraceOptions& opts) {
  ExampleTrace t;
  t.source = opts.source;
  t.states = params.encoder.forward(input, t.enc, opts.gen_dropout);
  if (params.length_encoder) {
    t.len_enc.emplace();
    const Mat len_states = params.length_encoder->forward(input, *t.len_enc, opts.len_dropout);
    t.predicted_len = params.length_head.forward(len_states.topRows(1), t.head);
  } else {
    t.predicted_len = params.length_head.forward(t.states.topRows(1), t.head);
  }
  t.control_len = opts.source == ControlSource::predicted ? t.predicted_len : truth_len;
  if (opts.run_decoder) {
    if (dec_input.length() > params.config.max_tgt_len)
      throw Error("decoder input of " + std::to_string(dec_input.length()) + " tokens exceeds max_tgt_len");
    t.logits = params.decoder.forward(dec_input, t.states, t.control_len, t.dec, opts.gen_dropout);
    t.decoded = true;
  }
  return t;
}

void backward_example(ModelParams& params, const ExampleTrace& t, const Mat* d_logits, double d_predicted_len) {
  Mat d_states = Mat::Zero(t.states.rows(), t.states.cols());
  bool encoder_touched = false;
  double d_pred = d_predicted_len;
  if (d_logits && t.decoded) {
    const double d_control = params.decoder.backward(*d_logits, t.dec, d_states);
    encoder_touched = true;
    if (t.source == ControlSource::predicted) d_pred += d_control;
  }
  if (d_pred != 0.0) {
    const Mat d_cls = params.length_head.backward(d_pred, t.head);
    if (params.length_encoder) {
      Mat d_len_states = Mat::Zero(t.states.rows(), t.states.cols());
      d_len_states.row(0) = d_cls.row(0);
      params.length_encoder->backward(d_len_states, *t.len_enc);
    } else {
      d_states.row(0) += d_cls.row(0);
      encoder_touched = true;
    }
  }
  if (encoder_touched) params.encoder.backward(d_states, t.enc);
}

}  // namespace lcgen
