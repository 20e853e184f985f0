#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "abc/attention.hpp"
#include "abc/autodiff.hpp"
#include "abc/tensor.hpp"

namespace abc {

struct AbcConfig {
  std::size_t input_dim = 2;
  std::size_t latent_dim = 32;
  // Number of stacked SABs; 0 drops the embedding stack (pairwise ablation).
  std::size_t sab_count = 2;
  std::size_t heads = 4;
  CompatForm compat_embed = CompatForm::Multiplicative;
  CompatForm compat_sim = CompatForm::Multiplicative;
  // Activation used by additive compatibilities.
  Activation activation = Activation::Tanh;
  // Affine map input_dim → latent_dim ahead of the first SAB. When off,
  // input_dim must equal latent_dim.
  bool input_affine = true;

  void validate() const;
  friend bool operator==(const AbcConfig&, const AbcConfig&) = default;
};

struct ModelParams {
  AbcConfig config;
  Tensor input_w;  // input_dim × latent_dim
  Tensor input_b;  // 1 × latent_dim
  std::vector<MabParams> blocks;
  CompatKind sim;

  std::size_t parameter_count() const;
  void validate() const;
};

ModelParams init_model(const AbcConfig& config, std::uint64_t seed);

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, ModelParams>
void visit_parameters(P& p, F&& f) {
  if (p.config.input_affine) {
    f(std::string("input.w"), p.input_w);
    f(std::string("input.b"), p.input_b);
  }
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    visit_parameters(p.blocks[i], "sab" + std::to_string(i) + ".", f);
  if (p.sim.form == CompatForm::Additive) f(std::string("sim.w"), p.sim.w);
}

// Pointers to every learnable tensor in visit order.
std::vector<Tensor*> parameter_list(ModelParams& p);
std::vector<const Tensor*> parameter_list(const ModelParams& p);

// n×n matrix of pairwise same-cluster probabilities; symmetric by construction.
struct SimilarityMatrix {
  Tensor entries;
  std::size_t n() const { return entries.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return entries(i, j); }
};

// ---- graph forms ------------------------------------------------------------

// Input affine (if configured) followed by the SAB stack.
Var embed(Var x, const ModelParams& p);
// S(i, j) = ½ [σ(compat(z_i, z_j)) + σ(compat(z_j, z_i))]
Var similarity(Var z, const CompatKind& sim);
Var abc_forward(Var x, const ModelParams& p);
// Similarity of the affinely projected inputs, skipping every SAB.
Var pairwise_forward(Var x, const ModelParams& p);
// Mean BCE over all n² cells, diagonal included.
Var bce_loss(Var s, const Tensor& ground_truth);

// ---- eager forms ------------------------------------------------------------

Tensor embed(const Tensor& x, const ModelParams& p);
SimilarityMatrix similarity(const Tensor& z, const CompatKind& sim);
SimilarityMatrix abc_forward(const Tensor& x, const ModelParams& p);
SimilarityMatrix pairwise_forward(const Tensor& x, const ModelParams& p);
double bce_loss(const SimilarityMatrix& s, const Tensor& ground_truth);

inline constexpr double kProbabilityClamp = 1e-7;
// Init of the last block's output layer-norm gain under a multiplicative
// similarity, and scale of the additive similarity weight relative to Xavier.
inline constexpr double kFinalGainInit = 0.25;
inline constexpr double kSimWeightInitScale = 0.25;

// Throws DataError unless g is a binary, symmetric matrix with unit diagonal.
void validate_ground_truth(const Tensor& g);

}  // namespace abc
