#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "abc/errors.hpp"
#include "abc/training.hpp"

using namespace abc;

namespace {

AbcConfig small_config(CompatForm form) {
  AbcConfig c;
  c.latent_dim = 8;
  c.heads = 2;
  c.compat_embed = c.compat_sim = form;
  return c;
}

std::vector<Tensor> snapshot(ModelParams& p) {
  std::vector<Tensor> out;
  for (Tensor* t : parameter_list(p)) out.push_back(*t);
  return out;
}

std::vector<Tensor> constant_grads(ModelParams& p, double g) {
  std::vector<Tensor> out;
  for (Tensor* t : parameter_list(p)) out.emplace_back(t->rows(), t->cols(), g);
  return out;
}

data::CirclesConfig small_circles() {
  data::CirclesConfig c;
  c.n_points = 10;
  return c;
}

const CompatForm kForms[] = {CompatForm::Multiplicative, CompatForm::Additive};

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 1);
  auto before = snapshot(p);
  AdamState s = AdamState::zeros_like(p);
  for (int i = 0; i < 5; ++i) adam_step(p, constant_grads(p, 0.0), s, {});
  EXPECT_EQ(snapshot(p), before);
  EXPECT_EQ(s.step, 5u);
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  ModelParams p = init_model(small_config(CompatForm::Multiplicative), 2);
  TrainConfig cfg;
  for (double g : {0.3, -2.0}) {
    // Fresh moments: the second one forgets an older gradient only over ~1/(1 - beta2) steps.
    AdamState s = AdamState::zeros_like(p);
    for (int i = 0; i < 200; ++i) adam_step(p, constant_grads(p, g), s, cfg);
    auto before = snapshot(p);
    adam_step(p, constant_grads(p, g), s, cfg);
    auto after = snapshot(p);
    for (std::size_t i = 0; i < before.size(); ++i)
      for (std::size_t e = 0; e < before[i].size(); ++e) {
        const double delta = after[i][e] - before[i][e];
        EXPECT_NEAR(std::abs(delta), cfg.learning_rate, 1e-3 * cfg.learning_rate);
        EXPECT_LT(delta * g, 0.0);
      }
  }
}

TEST(Adam, FirstStepIsBiasCorrected) {
  ModelParams p = init_model(small_config(CompatForm::Multiplicative), 3);
  AdamState s = AdamState::zeros_like(p);
  auto before = snapshot(p);
  adam_step(p, constant_grads(p, 5.0), s, {});
  auto after = snapshot(p);
  EXPECT_NEAR(before[0][0] - after[0][0], 1e-3 * 5.0 / (5.0 + 1e-8), 1e-15);
}

TEST(Adam, NonFiniteGradientRejected) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 4);
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, constant_grads(p, 0.1), s, {});
  auto params = snapshot(p);
  auto m = s.m;
  auto g = constant_grads(p, 0.1);
  g.back()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(p, g, s, {}), NumericalError);
  EXPECT_EQ(snapshot(p), params);
  EXPECT_EQ(s.m, m);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ClipScalesGlobalNorm) {
  ModelParams a = init_model(small_config(CompatForm::Multiplicative), 5);
  ModelParams b = a;
  AdamState sa = AdamState::zeros_like(a), sb = AdamState::zeros_like(b);
  TrainConfig clipped;
  clipped.clip_norm = 1e-3;
  // Adam is invariant to a uniform gradient scale up to epsilon, so compare moments.
  adam_step(a, constant_grads(a, 2.0), sa, clipped);
  adam_step(b, constant_grads(b, 2.0), sb, {});
  double norm = 0.0;
  for (const Tensor& m : sa.m)
    for (double v : m.values()) norm += v * v;
  EXPECT_NEAR(std::sqrt(norm) / (1.0 - clipped.beta1), 1e-3, 1e-12);
  EXPECT_GT(sb.m[0][0], sa.m[0][0]);
}

TEST(Gradient, BatchIsMeanOfInstances) {
  for (CompatForm f : kForms) {
    ModelParams p = init_model(small_config(f), 6);
    auto src = circles_source(small_circles(), 7);
    std::vector<data::Instance> batch;
    for (std::size_t i = 0; i < 5; ++i) batch.push_back(src(i));
    LossAndGrad total = batch_gradient(p, batch);
    double loss = 0.0;
    std::vector<Tensor> sum;
    for (const auto& inst : batch) {
      LossAndGrad one = instance_gradient(p, inst);
      loss += one.loss;
      if (sum.empty()) sum = one.grads;
      else
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += one.grads[i];
    }
    EXPECT_NEAR(total.loss, loss / 5, 1e-12);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] *= 1.0 / 5;
      EXPECT_LE(max_abs_diff(sum[i], total.grads[i]), 1e-12);
    }
  }
}

TEST(Gradient, ThreadCountDoesNotChangeResult) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 8);
  auto src = circles_source(small_circles(), 9);
  std::vector<data::Instance> batch;
  for (std::size_t i = 0; i < 7; ++i) batch.push_back(src(i));
  LossAndGrad a = batch_gradient(p, batch, 1);
  LossAndGrad b = batch_gradient(p, batch, 3);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(Gradient, EmptyBatch) {
  ModelParams p = init_model(small_config(CompatForm::Additive), 8);
  EXPECT_THROW(batch_gradient(p, {}), DataError);
}

TEST(Train, BitwiseReproducible) {
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.batch_size = 2;
  auto run = [&] {
    TrainState s = fresh_state(small_config(CompatForm::Multiplicative), 10);
    train(s, circles_source(small_circles(), 11), cfg);
    return s;
  };
  TrainState a = run(), b = run();
  EXPECT_EQ(snapshot(a.params), snapshot(b.params));
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.loss_trace.size(), 100u);
}

TEST(Train, InitialLossNearLn2) {
  for (CompatForm f : kForms)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      AbcConfig c;
      c.compat_embed = c.compat_sim = f;
      TrainState s = fresh_state(c, seed);
      TrainConfig cfg;
      cfg.steps = 1;
      train(s, circles_source(data::CirclesConfig{}, seed + 100), cfg);
      EXPECT_GE(s.loss_trace[0], 0.6) << to_string(f) << " seed " << seed;
      EXPECT_LE(s.loss_trace[0], 0.8) << to_string(f) << " seed " << seed;
    }
}

TEST(Train, OverfitsSingleInstance) {
  for (CompatForm f : kForms) {
    data::CirclesConfig cc = small_circles();
    cc.n_circles = 2;
    cc.seed = 12;
    AbcConfig c;
    c.compat_embed = c.compat_sim = f;
    TrainState s = fresh_state(c, 13);
    TrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 1;
    train(s, list_source({data::gen_circles(cc)}), cfg);
    EXPECT_LT(s.loss_trace.back(), 0.05) << to_string(f);
    EXPECT_LT(s.loss_trace.back(), s.loss_trace.front());
  }
}

TEST(Train, ResumeMatchesUninterrupted) {
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 3;
  cfg.checkpoint_every = 10;
  auto src = circles_source(small_circles(), 14);
  TrainState full = fresh_state(small_config(CompatForm::Additive), 15);
  std::vector<Json> saved;
  train(full, src, cfg, [&](const TrainState& s) { saved.push_back(train_state_to_json(s)); });
  ASSERT_EQ(saved.size(), 2u);
  TrainState resumed = train_state_from_json(saved[0]);
  EXPECT_EQ(resumed.adam.step, 10u);
  train(resumed, src, cfg);
  ASSERT_EQ(resumed.loss_trace.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(resumed.loss_trace[i], full.loss_trace[i], 1e-12);
  auto a = snapshot(full.params), b = snapshot(resumed.params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(max_abs_diff(a[i], b[i]), 1e-12);
}

TEST(Train, EmptyStream) {
  TrainState s = fresh_state(small_config(CompatForm::Additive), 1);
  EXPECT_THROW(train(s, InstanceSource{}, {}), DataError);
  EXPECT_THROW(list_source({}), DataError);
}

TEST(Config, UnknownKeysAllListed) {
  Json j = {{"latent_dim", 16}, {"learning_rate", 0.01}, {"bogus", 1}, {"other", true}};
  try {
    run_config_from_json(j);
    FAIL() << "accepted unknown keys";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bogus"), std::string::npos);
    EXPECT_NE(msg.find("other"), std::string::npos);
  }
}

TEST(Config, RoundTrip) {
  RunConfig c;
  c.model.latent_dim = 16;
  c.model.compat_sim = CompatForm::Additive;
  c.train.steps = 77;
  c.train.learning_rate = 0.002;
  RunConfig d = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(d.model, c.model);
  EXPECT_EQ(d.train.steps, 77u);
  EXPECT_EQ(d.train.learning_rate, 0.002);
}

TEST(Config, InvalidValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(run_config_from_json(Json{{"steps", "many"}}), ConfigError);
}

TEST(LossTrace, Csv) { EXPECT_EQ(loss_trace_csv({0.5, 0.25}), "step,loss\n0,0.5\n1,0.25\n"); }
