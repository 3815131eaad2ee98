// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcgen/corpus.hpp"
#include "lcgen/nn.hpp"
#include "lcgen/tensor.hpp"

namespace lcgen {

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 1;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 0;
  std::size_t max_src_len = 96;
  std::size_t max_tgt_len = 72;  // decoder positions, BOS/EOS included
  double dropout = 0.0;
  std::size_t length_hidden = 32;  // width of the length head's hidden layer

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

class TokenEmbedding {
 public:
  TokenEmbedding() = default;
  TokenEmbedding(const std::string& name, std::size_t vocab, std::size_t d_model);

  void init(std::mt19937_64& gen);
  // Rows are table[id] * sqrt(d_model).
  Mat forward(const std::vector<TokenId>& ids) const;
  void backward(const std::vector<TokenId>& ids, const Mat& dy);
  void collect(std::vector<Param*>& out);

  Param table;  // vocab x d_model
};

// Token embeddings plus sinusoidal positions, pre-norm layers, final norm.
class Encoder {
 public:
  struct Cache {
    std::vector<TokenId> ids;
    std::vector<EncoderLayer::Cache> layers;
    LayerNorm::Cache final_ln;
    Mat drop_in;
  };

  Encoder() = default;
  Encoder(const std::string& name, const ModelConfig& cfg);

  void init(std::mt19937_64& gen);
  Mat forward(const TokenSequence& input, Cache& cache, const DropoutContext& drop) const;
  void backward(const Mat& d_states, const Cache& cache);
  void collect(std::vector<Param*>& out);

  TokenEmbedding embed;
  std::vector<EncoderLayer> layers;
  LayerNorm final_ln;
  Mat positions;  // max_src_len x d_model, fixed
};

// Causal decoder whose positional encoding is LDPE(control_len): row p of the
// input carries the remaining budget control_len - p.
class Decoder {
 public:
  struct Cache {
    std::vector<TokenId> ids;
    double control_len = 0.0;
    std::vector<DecoderLayer::Cache> layers;
    LayerNorm::Cache final_ln;
    Mat normed;
    Mat drop_in;
  };

  struct State {
    std::vector<DecoderLayer::Step> layers;
    double control_len = 0.0;
    std::size_t position = 0;
  };

  Decoder() = default;
  Decoder(const std::string& name, const ModelConfig& cfg);

  void init(std::mt19937_64& gen);
  Mat forward(const TokenSequence& dec_input, const Mat& memory, double control_len, Cache& cache,
              const DropoutContext& drop) const;
  // Adds dL/d(memory) into d_memory and returns dL/d(control_len).
  double backward(const Mat& d_logits, const Cache& cache, Mat& d_memory);
  void collect(std::vector<Param*>& out);

  State start(const Mat& memory, double control_len) const;
  // Feeds one token at state.position and returns its next-token logits (1 x V).
  Mat step(State& state, TokenId token) const;

  TokenEmbedding embed;
  std::vector<DecoderLayer> layers;
  LayerNorm final_ln;
  Linear out;
};

// Two-layer tanh network from the CLS encoding to a scalar length.
class LengthHead {
 public:
  struct Cache {
    Mat h_cls;  // 1 x d
    Mat hidden;  // 1 x hidden, post-activation
  };

  LengthHead() = default;
  LengthHead(const std::string& name, std::size_t d_model, std::size_t hidden);

  void init(std::mt19937_64& gen);
  double forward(const Mat& h_cls, Cache& cache) const;
  Mat backward(double d_pred, const Cache& cache);
  void collect(std::vector<Param*>& out);

  Linear l1, l2;
};

struct ModelParams {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;
  LengthHead length_head;
  // Present when the length regressor owns a separate encoder (pipeline
  // training keeps it disjoint from the generation model).
  std::optional<Encoder> length_encoder;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed, bool separate_length_encoder);

  std::vector<Param*> parameters();
  std::vector<Param*> generation_parameters();
  std::vector<Param*> length_parameters();  // head, plus the length encoder if present
  void zero_grad();
  bool all_finite();
};

struct DecodeMode {
  enum class Kind { greedy, beam };
  Kind kind = Kind::greedy;
  std::size_t beam_size = 1;

  static DecodeMode greedy() { return {}; }
  static DecodeMode beam(std::size_t k) { return {Kind::beam, k}; }
};

struct GenerationResult {
  std::string example_id;
  TokenSequence tokens;  // generated tokens, BOS/EOS excluded
  std::string text;
  int desired_len = 0;
  std::size_t generated_len = 0;
  std::optional<double> predicted_len;
};

// Generation encoder states H (src_len x d_model). Eval mode.
Mat encode(const ModelParams& params, const TokenSequence& input);
// States the length head reads: H itself, or the separate length encoder's.
Mat length_states(const ModelParams& params, const TokenSequence& input);
// Reads only row 0 (the CLS position) of `states`.
double predict_length(const ModelParams& params, const Mat& states);
// Teacher-forced logits (rows(dec_input) x vocab) under LDPE(control_len).
Mat decode_train(const ModelParams& params, const Mat& states, const TokenSequence& dec_input,
                 double control_len);

GenerationResult generate(const ModelParams& params, const Vocab& vocab, const TokenSequence& input,
                          int control_len, std::size_t max_steps, const DecodeMode& mode = {});
GenerationResult predict_and_generate(const ModelParams& params, const Vocab& vocab,
                                      const TokenSequence& input, std::size_t max_steps,
                                      const DecodeMode& mode = {});

// Decoder input/output pair for a target: BOS + y and y + EOS.
struct DecoderIo {
  TokenSequence input;
  TokenSequence output;
};
DecoderIo make_decoder_io(const TokenSequence& target);

// ---------------------------------------------------------------------------
// Training-time forward/backward for one example.

enum class ControlSource { truth, predicted };

struct ExampleTrace {
  Encoder::Cache enc;
  Mat states;
  std::optional<Encoder::Cache> len_enc;
  LengthHead::Cache head;
  double predicted_len = 0.0;
  bool decoded = false;
  Decoder::Cache dec;
  Mat logits;
  double control_len = 0.0;
  ControlSource source = ControlSource::truth;
};

struct TraceOptions {
  ControlSource source = ControlSource::truth;
  bool run_decoder = true;
  DropoutContext gen_dropout;
  DropoutContext len_dropout;
};

ExampleTrace forward_example(const ModelParams& params, const TokenSequence& input,
                             const TokenSequence& dec_input, double truth_len, const TraceOptions& opts);

// Backpropagates d_logits (may be null) and a direct gradient on the predicted
// length. Generation gradient reaches the length head only when the trace's
// control length came from the prediction.
void backward_example(ModelParams& params, const ExampleTrace& trace, const Mat* d_logits,
                      double d_predicted_len);

}  // namespace lcgen
