#include "abc/training.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "abc/errors.hpp"
#include "abc/io.hpp"
#include "abc/rng.hpp"

namespace abc {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (instance_length == 0) throw ConfigError("instance_length must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {"learning_rate", "batch_size",      "steps",
                                                "beta1",         "beta2",           "epsilon",
                                                "seed",          "instance_length", "clip_norm",
                                                "checkpoint_every", "threads"};
  return keys;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},     {"batch_size", c.batch_size}, {"steps", c.steps},
          {"beta1", c.beta1},                     {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"seed", c.seed},                       {"instance_length", c.instance_length},
          {"clip_norm", c.clip_norm},             {"checkpoint_every", c.checkpoint_every},
          {"threads", c.threads}};
}

namespace {

std::vector<std::string> unknown_keys(const Json& j, const std::vector<std::vector<std::string>>& accepted) {
  std::vector<std::string> bad;
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const auto& list : accepted) ok = ok || std::find(list.begin(), list.end(), k) != list.end();
    if (!ok) bad.push_back(k);
  }
  return bad;
}

void reject(const std::vector<std::string>& bad, const std::string& what) {
  if (bad.empty()) return;
  std::string msg = "unknown " + what + " keys:";
  for (const auto& k : bad) msg += " " + k;
  throw ConfigError(msg);
}

template <typename T>
void read_key(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const Json& j, bool reject_unknown, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  if (reject_unknown) reject(unknown_keys(j, {train_config_keys()}), "training config");
  try {
    read_key(j, "learning_rate", c.learning_rate);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "steps", c.steps);
    read_key(j, "beta1", c.beta1);
    read_key(j, "beta2", c.beta2);
    read_key(j, "epsilon", c.epsilon);
    read_key(j, "seed", c.seed);
    read_key(j, "instance_length", c.instance_length);
    read_key(j, "clip_norm", c.clip_norm);
    read_key(j, "checkpoint_every", c.checkpoint_every);
    read_key(j, "threads", c.threads);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid training config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject(unknown_keys(j, {config_keys(), train_config_keys()}), "config");
  Json model = Json::object(), train = Json::object();
  for (const auto& [k, v] : j.items()) {
    const auto& mk = config_keys();
    (std::find(mk.begin(), mk.end(), k) != mk.end() ? model : train)[k] = v;
  }
  return {config_from_json(model), train_config_from_json(train)};
}

Json run_config_to_json(const RunConfig& c) {
  Json j = config_to_json(c.model);
  j.update(train_config_to_json(c.train));
  return j;
}

// ---- Adam ---------------------------------------------------------------------

AdamState AdamState::zeros_like(const ModelParams& p) {
  AdamState s;
  for (const Tensor* t : parameter_list(p)) {
    s.m.emplace_back(t->rows(), t->cols());
    s.v.emplace_back(t->rows(), t->cols());
  }
  return s;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, const TrainConfig& cfg) {
  auto plist = parameter_list(params);
  if (grads.size() != plist.size() || state.m.size() != plist.size() || state.v.size() != plist.size())
    throw ShapeError("adam_step: " + std::to_string(plist.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) + " moments");
  for (std::size_t i = 0; i < plist.size(); ++i) {
    if (!grads[i].same_shape(*plist[i]) || !state.m[i].same_shape(*plist[i]) || !state.v[i].same_shape(*plist[i]))
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    if (!grads[i].all_finite())
      throw NumericalError("adam_step: non-finite gradient in parameter " + std::to_string(i) + " at step " +
                           std::to_string(state.step) + "; step rejected");
  }

  double scale = 1.0;
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Tensor& g : grads)
      for (double x : g.values()) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < plist.size(); ++i) {
    auto p = plist[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    const auto g = grads[i].values();
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double ge = g[e] * scale;
      m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * ge;
      v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * ge * ge;
      const double mhat = m[e] / c1;
      const double vhat = v[e] / c2;
      p[e] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

// ---- gradients -----------------------------------------------------------------

LossAndGrad instance_gradient(const ModelParams& params, const data::Instance& inst) {
  Graph g;
  Var loss = bce_loss(abc_forward(g.constant(inst.x), params), inst.kernel);
  g.backward(loss);
  LossAndGrad out;
  out.loss = loss.value()(0, 0);
  for (const Tensor* t : parameter_list(params)) out.grads.push_back(g.grad_of(*t));
  return out;
}

LossAndGrad batch_gradient(const ModelParams& params, const std::vector<data::Instance>& batch,
                           std::size_t threads) {
  if (batch.empty()) throw DataError("batch_gradient: empty batch");
  std::vector<LossAndGrad> parts(batch.size());
  threads = std::clamp<std::size_t>(threads, 1, batch.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) parts[i] = instance_gradient(params, batch[i]);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += threads) parts[i] = instance_gradient(params, batch[i]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  LossAndGrad out = std::move(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out.loss += parts[i].loss;
    for (std::size_t p = 0; p < out.grads.size(); ++p) out.grads[p] += parts[i].grads[p];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (Tensor& g : out.grads) g *= inv;
  return out;
}

// ---- sources --------------------------------------------------------------------

InstanceSource circles_source(const data::CirclesConfig& base, std::uint64_t seed) {
  base.validate();
  return [base, seed](std::size_t index) {
    data::CirclesConfig c = base;
    c.seed = derive_seed(seed, index);
    return data::gen_circles(c);
  };
}

InstanceSource pool_source(const data::Pool& pool, std::size_t length, std::uint64_t seed) {
  return [pool, length, seed](std::size_t index) { return data::gen_instance(pool, length, derive_seed(seed, index)); };
}

InstanceSource list_source(std::vector<data::Instance> instances) {
  if (instances.empty()) throw DataError("training data is empty");
  return [list = std::move(instances)](std::size_t index) { return list[index % list.size()]; };
}

// ---- training loop ------------------------------------------------------------

TrainState fresh_state(const AbcConfig& config, std::uint64_t seed) {
  TrainState s{init_model(config, seed), {}, {}};
  s.adam = AdamState::zeros_like(s.params);
  return s;
}

void train(TrainState& state, const InstanceSource& source, const TrainConfig& cfg, const CheckpointFn& on_checkpoint) {
  cfg.validate();
  if (!source) throw DataError("training data stream is empty");
  if (state.adam.m.empty()) state.adam = AdamState::zeros_like(state.params);
  if (state.loss_trace.size() != state.adam.step)
    throw DataError("train state has " + std::to_string(state.loss_trace.size()) + " losses for " +
                    std::to_string(state.adam.step) + " completed steps");

  std::vector<data::Instance> batch(cfg.batch_size);
  while (state.adam.step < cfg.steps) {
    const std::size_t s = state.adam.step;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) batch[b] = source(s * cfg.batch_size + b);
    LossAndGrad lg = batch_gradient(state.params, batch, cfg.threads);
    if (!std::isfinite(lg.loss)) throw NumericalError("non-finite loss at step " + std::to_string(s));
    adam_step(state.params, lg.grads, state.adam, cfg);
    state.loss_trace.push_back(lg.loss);
    const bool last = state.adam.step == cfg.steps;
    if (on_checkpoint && (last || (cfg.checkpoint_every > 0 && state.adam.step % cfg.checkpoint_every == 0)))
      on_checkpoint(state);
  }
}

Json train_state_to_json(const TrainState& s) {
  Json j = model_to_json(s.params);
  Json m = Json::object(), v = Json::object();
  std::size_t i = 0;
  visit_parameters(s.params, [&](const std::string& name, const Tensor&) {
    m[name] = tensor_to_json(s.adam.m.at(i));
    v[name] = tensor_to_json(s.adam.v.at(i));
    ++i;
  });
  j["optimizer"] = {{"step", s.adam.step}, {"m", std::move(m)}, {"v", std::move(v)}};
  j["loss_trace"] = s.loss_trace;
  return j;
}

TrainState train_state_from_json(const Json& j) {
  Json model = j;
  model.erase("optimizer");
  model.erase("loss_trace");
  TrainState s;
  s.params = model_from_json(model);
  if (!j.contains("optimizer")) {
    s.adam = AdamState::zeros_like(s.params);
    return s;
  }
  try {
    const Json& opt = j.at("optimizer");
    s.adam.step = opt.at("step").get<std::size_t>();
    visit_parameters(s.params, [&](const std::string& name, const Tensor& t) {
      Tensor m = tensor_from_json(opt.at("m").at(name));
      Tensor v = tensor_from_json(opt.at("v").at(name));
      if (!m.same_shape(t) || !v.same_shape(t)) throw DataError("optimizer moments for '" + name + "' misshapen");
      s.adam.m.push_back(std::move(m));
      s.adam.v.push_back(std::move(v));
    });
    s.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed optimizer state: ") + e.what());
  }
  return s;
}

std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "step,loss\n";
  for (std::size_t s = 0; s < trace.size(); ++s) out += std::to_string(s) + "," + format_double(trace[s]) + "\n";
  return out;
}

}  // namespace abc
