// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

// Transformer building blocks with explicit backward passes. Layers hold only
// parameters; every forward writes the activations it needs into a caller-owned
// Cache, so a frozen layer can serve concurrent forwards.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "lcgen/tensor.hpp"

namespace lcgen {

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* gen = nullptr;

  bool active() const { return gen != nullptr && rate > 0.0; }
};

// Inverted dropout. `mask` is left empty when inactive.
Mat dropout_forward(const Mat& x, const DropoutContext& ctx, Mat& mask);
Mat dropout_backward(const Mat& dy, const Mat& mask);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  void init(std::mt19937_64& gen);
  Mat forward(const Mat& x) const;
  // Accumulates dW, db and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy);
  void collect(std::vector<Param*>& out);

  std::size_t in() const { return static_cast<std::size_t>(w.value.rows()); }
  std::size_t out() const { return static_cast<std::size_t>(w.value.cols()); }

  Param w;  // in x out
  Param b;  // 1 x out
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    ColVec inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(std::vector<Param*>& out);

  Param gain;
  Param bias;
  static constexpr double kEps = 1e-5;
};

// Scaled dot-product attention over pre-projected Q, K, V split into `heads`
// column blocks. With `causal`, query i sees keys j <= i + (rows(K) - rows(Q)),
// which covers both teacher forcing and incremental decoding.
struct AttentionCache {
  Mat q, k, v;
  std::vector<Mat> probs;  // one rows(Q) x rows(K) matrix per head
};

Mat attention_forward(const Mat& q, const Mat& k, const Mat& v, std::size_t heads, bool causal,
                      std::vector<Mat>* probs);
void attention_backward(const Mat& d_out, const AttentionCache& cache, std::size_t heads, Mat& dq,
                        Mat& dk, Mat& dv);

class MultiHeadAttention {
 public:
  struct Cache {
    Mat q_in;
    Mat kv_in;
    AttentionCache attn;
    Mat concat;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t heads);

  void init(std::mt19937_64& gen);
  Mat forward(const Mat& q_in, const Mat& kv_in, bool causal, Cache& cache) const;
  // Assigns dL/d(q_in) and dL/d(kv_in).
  void backward(const Mat& dy, const Cache& cache, Mat& dq_in, Mat& dkv_in);
  void collect(std::vector<Param*>& out);

  std::size_t heads = 1;
  Linear wq, wk, wv, wo;
};

class FeedForward {
 public:
  struct Cache {
    Mat x;
    Mat pre;
  };

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t d_model, std::size_t hidden);

  void init(std::mt19937_64& gen);
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(std::vector<Param*>& out);

  Linear l1, l2;
};

// Pre-norm encoder block: x + Attn(LN x), then + FFN(LN x).
class EncoderLayer {
 public:
  struct Cache {
    LayerNorm::Cache ln1, ln2;
    MultiHeadAttention::Cache attn;
    FeedForward::Cache ffn;
    Mat drop_attn, drop_ffn;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t d_model, std::size_t heads, std::size_t ffn_dim);

  void init(std::mt19937_64& gen);
  Mat forward(const Mat& x, Cache& cache, const DropoutContext& drop) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(std::vector<Param*>& out);

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;
};

// Pre-norm decoder block: causal self-attention, cross-attention over the
// encoder states, feed-forward.
class DecoderLayer {
 public:
  struct Cache {
    LayerNorm::Cache ln1, ln2, ln3;
    MultiHeadAttention::Cache self_attn, cross_attn;
    FeedForward::Cache ffn;
    Mat drop_self, drop_cross, drop_ffn;
  };

  // Incremental decoding state for one layer.
  struct Step {
    Mat self_k, self_v;    // grows one row per generated position
    Mat cross_k, cross_v;  // projected encoder states
  };

  DecoderLayer() = default;
  DecoderLayer(const std::string& name, std::size_t d_model, std::size_t heads, std::size_t ffn_dim);

  void init(std::mt19937_64& gen);
  Mat forward(const Mat& x, const Mat& memory, Cache& cache, const DropoutContext& drop) const;
  // Returns dL/dx and adds dL/d(memory) into d_memory.
  Mat backward(const Mat& dy, const Cache& cache, Mat& d_memory);
  void collect(std::vector<Param*>& out);

  Step start(const Mat& memory) const;
  // One position (1 x d) through the block, appending to the self-attention cache.
  Mat step(const Mat& x_row, Step& state) const;

  LayerNorm ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
};

}  // namespace lcgen
