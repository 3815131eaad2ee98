// Copyright 2026 The lcgen Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "lcgen/error.hpp"
#include "lcgen/rng.hpp"
#include "lcgen/training.hpp"

using namespace lcgen;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.ffn_dim = 32;
  c.length_hidden = 16;
  return c;
}

struct Fixture {
  Corpus corpus = synth_corpus(50, 4);
  Vocab vocab = build_vocab(corpus, 400);
};

TrainConfig quick(Strategy s, std::size_t epochs = 2) {
  TrainConfig c;
  c.strategy = s;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 11;
  if (s == Strategy::heuristic_control) c.heuristic_kind = EstimatorKind::citing_paper;
  return c;
}

bool same_values(ModelParams& a, ModelParams& b, bool length_side) {
  auto pa = length_side ? a.length_parameters() : a.generation_parameters();
  auto pb = length_side ? b.length_parameters() : b.generation_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value.size() != pb[i]->value.size() ||
        std::memcmp(pa[i]->value.data(), pb[i]->value.data(), sizeof(double) * pa[i]->size()) != 0)
      return false;
  return true;
}

}  // namespace

TEST_CASE("cross-entropy oracles") {
  Mat logits(2, 3);
  logits << 1, 2, 3, 0, 0, 0;
  TokenSequence gold{{2, 0}};
  // Row 0: -log(e^3 / (e + e^2 + e^3)); row 1: ln 3. PAD (id 0) is excluded, so only row 0 counts.
  const double row0 = -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  CHECK(gen_loss(logits, gold) == doctest::Approx(row0).epsilon(1e-14));
  TokenSequence both{{2, 1}};
  const double row1 = -0.0 + std::log(3.0);
  CHECK(gen_loss(logits, both) == doctest::Approx((row0 + row1) / 2).epsilon(1e-14));

  Mat uniform = Mat::Zero(4, 20);
  CHECK(gen_loss(uniform, TokenSequence{{5, 6, 7, 8}}) == doctest::Approx(std::log(20.0)).epsilon(1e-14));
  Mat sharp = Mat::Constant(2, 5, -50.0);
  sharp(0, 3) = 50.0;
  sharp(1, 4) = 50.0;
  CHECK(gen_loss(sharp, TokenSequence{{3, 4}}) < 1e-30);

  Mat d;
  cross_entropy(logits, both, &d);
  CHECK(d.row(0).sum() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(d(1, 1) == doctest::Approx(1.0 / 3.0 - 1.0));
  CHECK_THROWS_AS(gen_loss(logits, TokenSequence{{1}}), Error);
}

TEST_CASE("RMSE length loss oracles") {
  const std::vector<double> p = {1.5, 7.0}, t = {1.5, 7.0};
  CHECK(len_loss(p, t) == 0.0);
  CHECK(len_loss(std::vector<double>{10.0}, std::vector<double>{13.0}) == 3.0);
  CHECK(len_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK_THROWS_AS(len_loss(std::vector<double>{}, std::vector<double>{}), Error);

  // Analytic gradient against central differences.
  std::vector<double> pred = {3.0, -1.0, 12.5}, truth = {4.0, 2.0, 10.0};
  const auto g = len_loss_grad(pred, truth);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto up = pred, down = pred;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((len_loss(up, truth) - len_loss(down, truth)) / 2e-6).epsilon(1e-6));
  }
  for (double v : len_loss_grad(p, t)) CHECK(v == 0.0);
}

TEST_CASE("combined loss is the affine mix") {
  CHECK(combined_loss(2.0, 4.0, 1.0) == 2.0);
  CHECK(combined_loss(2.0, 4.0, 0.0) == 4.0);
  CHECK(combined_loss(2.0, 4.0, 0.3) == doctest::Approx(3.4).epsilon(1e-15));
  // Affine in each argument.
  for (double lam : {0.0, 0.3, 0.77, 1.0}) {
    const double a = combined_loss(1.0, 5.0, lam), b = combined_loss(3.0, 5.0, lam), c = combined_loss(5.0, 5.0, lam);
    CHECK(b - a == doctest::Approx(c - b).epsilon(1e-14));
    const double x = combined_loss(2.0, 1.0, lam), y = combined_loss(2.0, 2.0, lam), z = combined_loss(2.0, 3.0, lam);
    CHECK(y - x == doctest::Approx(z - y).epsilon(1e-14));
  }
  CHECK_THROWS_AS(combined_loss(1.0, 1.0, 1.5), Error);
  CHECK_THROWS_AS(combined_loss(1.0, 1.0, -0.1), Error);
}

TEST_CASE("sampling probability decay") {
  CHECK(sampling_prob(0.99, 0.98, 0, 9, 10) == doctest::Approx(0.9702).epsilon(1e-15));
  for (std::size_t s = 0; s < 5; ++s) CHECK(sampling_prob(0.7, 1.0, 3, s, 5) == 0.7);
  double prev = 1.0;
  for (int e = 0; e < 4; ++e)
    for (std::size_t s = 0; s < 7; ++s) {
      const double p = sampling_prob(0.99, 0.98, e, s, 7);
      CHECK(p <= prev);
      prev = p;
    }
  CHECK_THROWS_AS(sampling_prob(0.99, 0.98, 0, 0, 0), Error);
}

TEST_CASE("config validation names the field") {
  auto expect_field = [](TrainConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL("expected config error for " << field);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  TrainConfig c;
  c.lambda_g = 1.5;
  expect_field(c, "lambda_g");
  c = {};
  c.k = 1.0;
  expect_field(c, "k");
  c = {};
  c.p0 = 0.0;
  expect_field(c, "p0");
  c = {};
  c.strategy = Strategy::heuristic_control;
  expect_field(c, "heuristic_kind");
  c = {};
  c.heuristic_kind = EstimatorKind::average;
  expect_field(c, "heuristic_kind");
  c = {};
  c.batch_size = 0;
  expect_field(c, "batch_size");
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("objectives per strategy") {
  auto obj = [](Strategy s, bool gen = true) {
    TrainConfig c = quick(s);
    c.generation_loss = gen;
    return objective_for(c);
  };
  CHECK(obj(Strategy::vanilla_multitask).gen_weight == 0.3);
  CHECK(obj(Strategy::vanilla_multitask).len_weight == 0.7);
  CHECK(obj(Strategy::teacher_forcing_pipeline).gen_weight == 1.0);
  CHECK(obj(Strategy::teacher_forcing_pipeline).len_weight == 1.0);
  CHECK(obj(Strategy::oracle_control).len_weight == 0.0);
  CHECK(obj(Strategy::teacher_forcing_pipeline, false).gen_weight == 0.0);
}

TEST_CASE("smoke training for every strategy") {
  Fixture f;
  for (Strategy s : {Strategy::vanilla_multitask, Strategy::scheduled_sampling, Strategy::teacher_forcing_pipeline,
                     Strategy::oracle_control, Strategy::heuristic_control}) {
    INFO(to_string(s));
    std::size_t callbacks = 0;
    TrainResult r = train(quick(s), f.corpus, f.vocab, small_model(),
                          [&](std::size_t, const ModelParams&, const TrainLog&) { ++callbacks; });
    CHECK(callbacks == 2);
    CHECK(r.params.all_finite());
    CHECK(r.log.steps_per_epoch == 7);
    CHECK(r.log.records.size() == 14);
    for (const auto& rec : r.log.records) {
      REQUIRE(rec.gen.has_value());
      CHECK(std::isfinite(*rec.gen));
      const bool has_len = s == Strategy::vanilla_multitask || s == Strategy::scheduled_sampling ||
                           s == Strategy::teacher_forcing_pipeline;
      CHECK(rec.len.has_value() == has_len);
      CHECK(rec.p.has_value() == (s == Strategy::scheduled_sampling));
      if (s == Strategy::oracle_control) CHECK(rec.all == rec.gen);
      if (s == Strategy::vanilla_multitask) CHECK(*rec.all == combined_loss(*rec.gen, *rec.len, 0.3));
    }
    CHECK(r.estimator.has_value() == (s == Strategy::heuristic_control));
  }
  Corpus test_split = f.corpus;
  test_split.split = Split::test;
  CHECK_THROWS_AS(train(quick(Strategy::oracle_control), test_split, f.vocab, small_model()), Error);
}

TEST_CASE("oracle training leaves the length head untouched") {
  Fixture f;
  TrainResult r = train(quick(Strategy::oracle_control), f.corpus, f.vocab, small_model());
  ModelConfig mc = small_model();
  mc.vocab_size = f.vocab.size();
  ModelParams init = ModelParams::init(mc, 11, false);
  // Only the output bias moves: it is set to the mean training length before the first step.
  init.length_head.l2.b.value = r.params.length_head.l2.b.value;
  CHECK(same_values(r.params, init, true));
  CHECK_FALSE(same_values(r.params, init, false));
}

TEST_CASE("scheduled sampling log replays the decay and the coin flips") {
  Fixture f;
  TrainConfig c = quick(Strategy::scheduled_sampling, 3);
  c.p0 = 0.9;
  c.k = 0.5;  // fast decay so both sources occur
  const TrainResult r = train(c, f.corpus, f.vocab, small_model());
  auto coins = make_stream(c.seed, "sampling");
  std::size_t truth_total = 0, total = 0;
  for (const auto& rec : r.log.records) {
    const double p = sampling_prob(c.p0, c.k, static_cast<double>(rec.epoch), rec.step, r.log.steps_per_epoch);
    REQUIRE(rec.p.has_value());
    CHECK(std::abs(*rec.p - p) <= 1e-12);
    const std::size_t begin = rec.step * c.batch_size;
    const std::size_t n = std::min(f.corpus.size(), begin + c.batch_size) - begin;
    std::size_t truth = 0;
    for (std::size_t i = 0; i < n; ++i) truth += unit_uniform(coins) < p ? 1 : 0;
    CHECK(rec.truth_controls == truth);
    truth_total += truth;
    total += n;
  }
  CHECK(truth_total > 0);
  CHECK(truth_total < total);
}

TEST_CASE("epoch origin shifts the decay exponent") {
  Fixture f;
  TrainConfig c = quick(Strategy::scheduled_sampling, 1);
  c.epoch_origin = 1;
  const TrainResult r = train(c, f.corpus, f.vocab, small_model());
  CHECK(r.log.records.front().epoch == 1);
  CHECK(*r.log.records.back().p == doctest::Approx(0.99 * 0.98 * 0.98).epsilon(1e-14));
}

TEST_CASE("pipeline length head is independent of the generation loss") {
  Fixture f;
  TrainConfig with = quick(Strategy::teacher_forcing_pipeline);
  TrainConfig without = with;
  without.generation_loss = false;
  TrainResult a = train(with, f.corpus, f.vocab, small_model());
  TrainResult b = train(without, f.corpus, f.vocab, small_model());
  CHECK(same_values(a.params, b.params, true));
  CHECK_FALSE(same_values(a.params, b.params, false));
}

TEST_CASE("training is deterministic under the seed") {
  Fixture f;
  for (Strategy s : {Strategy::vanilla_multitask, Strategy::scheduled_sampling}) {
    TrainResult a = train(quick(s), f.corpus, f.vocab, small_model());
    TrainResult b = train(quick(s), f.corpus, f.vocab, small_model());
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK(same_values(a.params, b.params, true));
    CHECK(same_values(a.params, b.params, false));
  }
  TrainConfig other = quick(Strategy::vanilla_multitask);
  other.seed = 12;
  CHECK(train(other, f.corpus, f.vocab, small_model()).log.to_csv() !=
        train(quick(Strategy::vanilla_multitask), f.corpus, f.vocab, small_model()).log.to_csv());
}

TEST_CASE("epoch-mean generation loss decreases for every strategy") {
  const Corpus corpus = synth_corpus(160, 21);
  const Vocab vocab = build_vocab(corpus, 600);
  for (Strategy s : {Strategy::vanilla_multitask, Strategy::scheduled_sampling, Strategy::teacher_forcing_pipeline,
                     Strategy::oracle_control, Strategy::heuristic_control}) {
    TrainConfig c = quick(s, 3);
    c.batch_size = 16;
    const TrainResult r = train(c, corpus, vocab, small_model());
    INFO(to_string(s));
    CHECK(r.log.epoch_mean_gen(2) < r.log.epoch_mean_gen(0));
  }
}

TEST_CASE("train log CSV layout") {
  TrainLog log;
  TrainRecord a;
  a.epoch = 0;
  a.step = 1;
  a.gen = 0.5;
  a.all = 0.5;
  TrainRecord b;
  b.epoch = 1;
  b.step = 0;
  b.gen = 0.25;
  b.len = 2.0;
  b.all = 0.3 * 0.25 + 0.7 * 2.0;
  b.p = 0.97;
  log.records = {a, b};
  const std::string csv = log.to_csv();
  std::istringstream in(csv);
  std::string header, l1, l2;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(header == "epoch,step,L_gen,L_len,L_all,p");
  CHECK(l1 == "0,1,0.5,,0.5,");
  CHECK(l2.rfind("1,0,0.25,2,", 0) == 0);
  CHECK(l2.substr(l2.rfind(',') + 1) == "0.96999999999999997");
}
