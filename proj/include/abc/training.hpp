#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "abc/checkpoint.hpp"
#include "abc/datasets.hpp"
#include "abc/model.hpp"

namespace abc {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t instance_length = 50;
  // Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  // Steps between checkpoint callbacks; 0 means only at the end.
  std::size_t checkpoint_every = 0;
  // Worker threads for the per-instance passes of a batch.
  std::size_t threads = 1;

  void validate() const;
};

const std::vector<std::string>& train_config_keys();
Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, bool reject_unknown = true, TrainConfig base = {});

// Flat JSON object holding AbcConfig and TrainConfig keys side by side.
// Any other key is rejected, and every offending key is listed.
struct RunConfig {
  AbcConfig model;
  TrainConfig train;
};
RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& c);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState zeros_like(const ModelParams& p);
};

// One bias-corrected Adam update over parameter_list(params) order.
// Throws NumericalError, leaving params and state untouched, if any gradient
// entry is not finite.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, const TrainConfig& cfg);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;  // parameter_list order
};

// BCE of abc_forward on one instance (which reduces to the pairwise model
// when the config has no SABs) and its gradient.
LossAndGrad instance_gradient(const ModelParams& params, const data::Instance& inst);

// Mean loss and mean gradient over the batch. Per-instance results are
// reduced in batch order whatever the thread count.
LossAndGrad batch_gradient(const ModelParams& params, const std::vector<data::Instance>& batch,
                           std::size_t threads = 1);

// Produces the training instance with the given global index. Step s of
// training consumes indices s·B … s·B + B − 1.
using InstanceSource = std::function<data::Instance(std::size_t index)>;

InstanceSource circles_source(const data::CirclesConfig& base, std::uint64_t seed);
InstanceSource pool_source(const data::Pool& pool, std::size_t length, std::uint64_t seed);
// Cycles through a fixed list of instances.
InstanceSource list_source(std::vector<data::Instance> instances);

struct TrainState {
  ModelParams params;
  AdamState adam;
  std::vector<double> loss_trace;  // loss_trace[s] is the loss of step s
};

TrainState fresh_state(const AbcConfig& config, std::uint64_t seed);

using CheckpointFn = std::function<void(const TrainState&)>;

// Runs steps state.adam.step … cfg.steps − 1 in place, so a state restored
// from a checkpoint continues with the same step numbering and data.
void train(TrainState& state, const InstanceSource& source, const TrainConfig& cfg,
           const CheckpointFn& on_checkpoint = {});

// Model JSON plus the optimizer moments and the loss trace.
Json train_state_to_json(const TrainState& s);
TrainState train_state_from_json(const Json& j);

std::string loss_trace_csv(const std::vector<double>& trace);

}  // namespace abc
