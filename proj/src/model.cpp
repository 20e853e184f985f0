#include "abc/model.hpp"

#include "abc/errors.hpp"
#include "abc/rng.hpp"

namespace abc {

void AbcConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (heads == 0) throw ConfigError("heads must be positive");
  if (latent_dim % heads != 0)
    throw ConfigError("latent_dim " + std::to_string(latent_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  if (!input_affine && input_dim != latent_dim)
    throw ConfigError("input_affine=false requires input_dim == latent_dim");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  visit_parameters(*this, [&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

void ModelParams::validate() const {
  config.validate();
  const std::size_t dx = config.input_dim, dz = config.latent_dim;
  if (config.input_affine) {
    if (input_w.rows() != dx || input_w.cols() != dz || input_b.rows() != 1 || input_b.cols() != dz)
      throw ConfigError("input affine has shapes " + input_w.shape_string() + " / " + input_b.shape_string());
  }
  if (blocks.size() != config.sab_count)
    throw ConfigError("model holds " + std::to_string(blocks.size()) + " blocks, config says " +
                      std::to_string(config.sab_count));
  for (const auto& b : blocks) {
    b.validate();
    if (b.dim() != dz) throw ConfigError("block width differs from latent_dim");
  }
  if (sim.form != config.compat_sim) throw ConfigError("similarity compatibility differs from config");
  sim.validate(dz);
}

ModelParams init_model(const AbcConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  if (config.input_affine) {
    p.input_w = xavier_uniform(config.input_dim, config.latent_dim, rng);
    p.input_b = Tensor(1, config.latent_dim);
  }
  for (std::size_t i = 0; i < config.sab_count; ++i)
    p.blocks.push_back(init_mab(config.latent_dim, config.heads, config.compat_embed, config.activation, rng));
  // Unit-gain embeddings push every similarity towards 1 at init. The dot
  // product grows with the gain squared, so shrink the last gain there; the
  // additive head only needs its own weight shrunk and learns faster without
  // the smaller gain.
  if (!p.blocks.empty() && config.compat_sim == CompatForm::Multiplicative)
    p.blocks.back().ln2_gain.fill(kFinalGainInit);
  p.sim.form = config.compat_sim;
  p.sim.act = config.activation;
  if (config.compat_sim == CompatForm::Additive) {
    p.sim.w = xavier_uniform(1, config.latent_dim, rng);
    p.sim.w *= kSimWeightInitScale;
  }
  return p;
}

std::vector<Tensor*> parameter_list(ModelParams& p) {
  std::vector<Tensor*> out;
  visit_parameters(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> parameter_list(const ModelParams& p) {
  std::vector<const Tensor*> out;
  visit_parameters(p, [&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

namespace {

Var project_input(Var x, const ModelParams& p) {
  if (x.rows() == 0) throw ShapeError("model input has no rows");
  if (x.cols() != p.config.input_dim)
    throw ShapeError("model input has width " + std::to_string(x.cols()) + ", config expects " +
                     std::to_string(p.config.input_dim));
  if (!p.config.input_affine) return x;
  Graph& g = *x.graph;
  return add_row(matmul(x, g.parameter(p.input_w)), g.parameter(p.input_b));
}

}  // namespace

Var embed(Var x, const ModelParams& p) {
  Var z = project_input(x, p);
  for (const auto& block : p.blocks) z = sab(z, block);
  return z;
}

Var similarity(Var z, const CompatKind& sim) {
  if (z.rows() == 0) throw ShapeError("similarity: empty set");
  return symmetrize(sigmoid(compat(z, z, sim)));
}

Var abc_forward(Var x, const ModelParams& p) { return similarity(embed(x, p), p.sim); }

Var pairwise_forward(Var x, const ModelParams& p) { return similarity(project_input(x, p), p.sim); }

void validate_ground_truth(const Tensor& g) {
  if (g.rows() != g.cols()) throw DataError("ground truth kernel is not square: " + g.shape_string());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (g(i, i) != 1.0) throw DataError("ground truth kernel diagonal must be 1");
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double v = g(i, j);
      if (v != 0.0 && v != 1.0) throw DataError("ground truth kernel must be binary");
      if (v != g(j, i)) throw DataError("ground truth kernel must be symmetric");
    }
  }
}

Var bce_loss(Var s, const Tensor& ground_truth) {
  if (!s.value().same_shape(ground_truth))
    throw ShapeError("bce_loss: similarity " + s.value().shape_string() + " vs ground truth " +
                     ground_truth.shape_string());
  validate_ground_truth(ground_truth);
  return bce(s, ground_truth, kProbabilityClamp);
}

Tensor embed(const Tensor& x, const ModelParams& p) {
  Graph g(false);
  return embed(g.constant(x), p).value();
}

SimilarityMatrix similarity(const Tensor& z, const CompatKind& sim) {
  Graph g(false);
  return {similarity(g.constant(z), sim).value()};
}

SimilarityMatrix abc_forward(const Tensor& x, const ModelParams& p) {
  Graph g(false);
  return {abc_forward(g.constant(x), p).value()};
}

SimilarityMatrix pairwise_forward(const Tensor& x, const ModelParams& p) {
  Graph g(false);
  return {pairwise_forward(g.constant(x), p).value()};
}

double bce_loss(const SimilarityMatrix& s, const Tensor& ground_truth) {
  Graph g(false);
  return bce_loss(g.constant(s.entries), ground_truth).value()(0, 0);
}

}  // namespace abc
