// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lcgen/nn.hpp"

#include <cmath>
#include <limits>

#include "lcgen/error.hpp"
#include "lcgen/rng.hpp"

namespace lcgen {

Mat dropout_forward(const Mat& x, const DropoutContext& ctx, Mat& mask) {
  if (!ctx.active()) {
    mask.resize(0, 0);
    return x;
  }
  const double keep = 1.0 - ctx.rate;
  mask.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = unit_uniform(*ctx.gen) < keep ? 1.0 / keep : 0.0;
  return x.cwiseProduct(mask);
}

Mat dropout_backward(const Mat& dy, const Mat& mask) {
  if (mask.size() == 0) return dy;
  return dy.cwiseProduct(mask);
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, std::size_t in, std::size_t out) {
  w.name = name + ".w";
  b.name = name + ".b";
  w.value = Mat::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  b.value = Mat::Zero(1, static_cast<Eigen::Index>(out));
  w.zero_grad();
  b.zero_grad();
}

void Linear::init(std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in())));
  for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = dist(gen);
  b.value.setZero();
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w.value;
  y.rowwise() += b.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  w.grad.noalias() += x.transpose() * dy;
  b.grad.row(0) += dy.colwise().sum();
  return dy * w.value.transpose();
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t dim) {
  gain.name = name + ".gain";
  bias.name = name + ".bias";
  gain.value = Mat::Ones(1, static_cast<Eigen::Index>(dim));
  bias.value = Mat::Zero(1, static_cast<Eigen::Index>(dim));
  gain.zero_grad();
  bias.zero_grad();
}

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
  const auto n = x.rows();
  const double d = static_cast<double>(x.cols());
  cache.xhat.resize(n, x.cols());
  cache.inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).sum() / d;
    const auto centered = x.row(r).array() - mean;
    const double var = centered.square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kEps);
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = centered * inv;
  }
  Mat y = cache.xhat.array().rowwise() * gain.value.row(0).array();
  y.rowwise() += bias.value.row(0);
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache) {
  gain.grad.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
  bias.grad.row(0) += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gain.value.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).sum() / d;
    const double m2 = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

void LayerNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------

Mat attention_forward(const Mat& q, const Mat& k, const Mat& v, std::size_t heads, bool causal,
                      std::vector<Mat>* probs) {
  const auto tq = q.rows();
  const auto tk = k.rows();
  const auto dh = q.cols() / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index offset = tk - tq;
  Mat out(tq, q.cols());
  if (probs) probs->resize(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    Mat s = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index visible = causal ? std::min(tk, i + offset + 1) : tk;
      const double mx = s.row(i).head(visible).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < visible; ++j) {
        s(i, j) = std::exp(s(i, j) - mx);
        z += s(i, j);
      }
      for (Eigen::Index j = 0; j < visible; ++j) s(i, j) /= z;
      for (Eigen::Index j = visible; j < tk; ++j) s(i, j) = 0.0;
    }
    out.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
    if (probs) (*probs)[h] = std::move(s);
  }
  return out;
}

void attention_backward(const Mat& d_out, const AttentionCache& cache, std::size_t heads, Mat& dq,
                        Mat& dk, Mat& dv) {
  const auto dh = cache.q.cols() / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq.resize(cache.q.rows(), cache.q.cols());
  dk.resize(cache.k.rows(), cache.k.cols());
  dv.resize(cache.v.rows(), cache.v.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    const Mat& p = cache.probs[h];
    const auto d_head = d_out.middleCols(c0, dh);
    dv.middleCols(c0, dh).noalias() = p.transpose() * d_head;
    Mat dp = d_head * cache.v.middleCols(c0, dh).transpose();
    const ColVec row_dot = dp.cwiseProduct(p).rowwise().sum();
    Mat ds = p.cwiseProduct(dp.colwise() - row_dot);
    dq.middleCols(c0, dh).noalias() = (ds * cache.k.middleCols(c0, dh)) * scale;
    dk.middleCols(c0, dh).noalias() = (ds.transpose() * cache.q.middleCols(c0, dh)) * scale;
  }
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t d_model, std::size_t heads_)
    : heads(heads_),
      wq(name + ".q", d_model, d_model),
      wk(name + ".k", d_model, d_model),
      wv(name + ".v", d_model, d_model),
      wo(name + ".o", d_model, d_model) {
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

void MultiHeadAttention::init(std::mt19937_64& gen) {
  wq.init(gen);
  wk.init(gen);
  wv.init(gen);
  wo.init(gen);
}

Mat MultiHeadAttention::forward(const Mat& q_in, const Mat& kv_in, bool causal, Cache& cache) const {
  cache.q_in = q_in;
  cache.kv_in = kv_in;
  cache.attn.q = wq.forward(q_in);
  cache.attn.k = wk.forward(kv_in);
  cache.attn.v = wv.forward(kv_in);
  cache.concat = attention_forward(cache.attn.q, cache.attn.k, cache.attn.v, heads, causal, &cache.attn.probs);
  return wo.forward(cache.concat);
}

void MultiHeadAttention::backward(const Mat& dy, const Cache& cache, Mat& dq_in, Mat& dkv_in) {
  const Mat d_concat = wo.backward(cache.concat, dy);
  Mat dq, dk, dv;
  attention_backward(d_concat, cache.attn, heads, dq, dk, dv);
  dq_in = wq.backward(cache.q_in, dq);
  dkv_in = wk.backward(cache.kv_in, dk);
  dkv_in += wv.backward(cache.kv_in, dv);
}

void MultiHeadAttention::collect(std::vector<Param*>& out) {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
}

// ---------------------------------------------------------------------------

FeedForward::FeedForward(const std::string& name, std::size_t d_model, std::size_t hidden)
    : l1(name + ".l1", d_model, hidden), l2(name + ".l2", hidden, d_model) {}

void FeedForward::init(std::mt19937_64& gen) {
  l1.init(gen);
  l2.init(gen);
}

Mat FeedForward::forward(const Mat& x, Cache& cache) const {
  cache.x = x;
  cache.pre = l1.forward(x);
  return l2.forward(cache.pre.cwiseMax(0.0));
}

Mat FeedForward::backward(const Mat& dy, const Cache& cache) {
  const Mat dh = l2.backward(cache.pre.cwiseMax(0.0), dy);
  const Mat dpre = (cache.pre.array() > 0.0).select(dh, 0.0);
  return l1.backward(cache.x, dpre);
}

void FeedForward::collect(std::vector<Param*>& out) {
  l1.collect(out);
  l2.collect(out);
}

// ---------------------------------------------------------------------------

EncoderLayer::EncoderLayer(const std::string& name, std::size_t d_model, std::size_t heads,
                           std::size_t ffn_dim)
    : ln1(name + ".ln1", d_model),
      ln2(name + ".ln2", d_model),
      attn(name + ".attn", d_model, heads),
      ffn(name + ".ffn", d_model, ffn_dim) {}

void EncoderLayer::init(std::mt19937_64& gen) {
  attn.init(gen);
  ffn.init(gen);
}

Mat EncoderLayer::forward(const Mat& x, Cache& c, const DropoutContext& drop) const {
  const Mat a = ln1.forward(x, c.ln1);
  const Mat x1 = x + dropout_forward(attn.forward(a, a, false, c.attn), drop, c.drop_attn);
  const Mat b = ln2.forward(x1, c.ln2);
  return x1 + dropout_forward(ffn.forward(b, c.ffn), drop, c.drop_ffn);
}

Mat EncoderLayer::backward(const Mat& dy, const Cache& c) {
  Mat dx1 = dy + ln2.backward(ffn.backward(dropout_backward(dy, c.drop_ffn), c.ffn), c.ln2);
  Mat dq, dkv;
  attn.backward(dropout_backward(dx1, c.drop_attn), c.attn, dq, dkv);
  dq += dkv;
  return dx1 + ln1.backward(dq, c.ln1);
}

void EncoderLayer::collect(std::vector<Param*>& out) {
  ln1.collect(out);
  attn.collect(out);
  ln2.collect(out);
  ffn.collect(out);
}

// ---------------------------------------------------------------------------

DecoderLayer::DecoderLayer(const std::string& name, std::size_t d_model, std::size_t heads,
                           std::size_t ffn_dim)
    : ln1(name + ".ln1", d_model),
      ln2(name + ".ln2", d_model),
      ln3(name + ".ln3", d_model),
      self_attn(name + ".self", d_model, heads),
      cross_attn(name + ".cross", d_model, heads),
      ffn(name + ".ffn", d_model, ffn_dim) {}

void DecoderLayer::init(std::mt19937_64& gen) {
  self_attn.init(gen);
  cross_attn.init(gen);
  ffn.init(gen);
}

Mat DecoderLayer::forward(const Mat& x, const Mat& memory, Cache& c, const DropoutContext& drop) const {
  const Mat a = ln1.forward(x, c.ln1);
  const Mat x1 = x + dropout_forward(self_attn.forward(a, a, true, c.self_attn), drop, c.drop_self);
  const Mat b = ln2.forward(x1, c.ln2);
  const Mat x2 = x1 + dropout_forward(cross_attn.forward(b, memory, false, c.cross_attn), drop, c.drop_cross);
  const Mat e = ln3.forward(x2, c.ln3);
  return x2 + dropout_forward(ffn.forward(e, c.ffn), drop, c.drop_ffn);
}

Mat DecoderLayer::backward(const Mat& dy, const Cache& c, Mat& d_memory) {
  Mat dx2 = dy + ln3.backward(ffn.backward(dropout_backward(dy, c.drop_ffn), c.ffn), c.ln3);
  Mat dq, dkv;
  cross_attn.backward(dropout_backward(dx2, c.drop_cross), c.cross_attn, dq, dkv);
  d_memory += dkv;
  Mat dx1 = dx2 + ln2.backward(dq, c.ln2);
  self_attn.backward(dropout_backward(dx1, c.drop_self), c.self_attn, dq, dkv);
  dq += dkv;
  return dx1 + ln1.backward(dq, c.ln1);
}

void DecoderLayer::collect(std::vector<Param*>& out) {
  ln1.collect(out);
  self_attn.collect(out);
  ln2.collect(out);
  cross_attn.collect(out);
  ln3.collect(out);
  ffn.collect(out);
}

DecoderLayer::Step DecoderLayer::start(const Mat& memory) const {
  Step s;
  s.self_k.resize(0, static_cast<Eigen::Index>(self_attn.wk.out()));
  s.self_v.resize(0, static_cast<Eigen::Index>(self_attn.wv.out()));
  s.cross_k = cross_attn.wk.forward(memory);
  s.cross_v = cross_attn.wv.forward(memory);
  return s;
}

namespace {

void append_row(Mat& m, const Mat& row) {
  m.conservativeResize(m.rows() + 1, Eigen::NoChange);
  m.row(m.rows() - 1) = row.row(0);
}

}  // namespace

Mat DecoderLayer::step(const Mat& x_row, Step& s) const {
  LayerNorm::Cache tmp;
  const Mat a = ln1.forward(x_row, tmp);
  append_row(s.self_k, self_attn.wk.forward(a));
  append_row(s.self_v, self_attn.wv.forward(a));
  const Mat q = self_attn.wq.forward(a);
  const Mat x1 = x_row + self_attn.wo.forward(attention_forward(q, s.self_k, s.self_v, self_attn.heads, true, nullptr));
  const Mat b = ln2.forward(x1, tmp);
  const Mat qc = cross_attn.wq.forward(b);
  const Mat x2 =
      x1 + cross_attn.wo.forward(attention_forward(qc, s.cross_k, s.cross_v, cross_attn.heads, false, nullptr));
  const Mat e = ln3.forward(x2, tmp);
  FeedForward::Cache fc;
  return x2 + ffn.forward(e, fc);
}

}  // namespace lcgen
