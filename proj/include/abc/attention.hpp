#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "abc/autodiff.hpp"
#include "abc/rng.hpp"
#include "abc/tensor.hpp"

namespace abc {

enum class CompatForm { Multiplicative, Additive };

const char* to_string(CompatForm f);
CompatForm compat_form_from_string(const std::string& s);

// Compatibility between query and key rows.
//   Multiplicative: q·k / √d          (no parameters)
//   Additive:       act(q + k)ᵀ w     (w is 1×d)
struct CompatKind {
  CompatForm form = CompatForm::Multiplicative;
  Activation act = Activation::Tanh;
  Tensor w;

  static CompatKind multiplicative() { return {}; }
  static CompatKind additive(Tensor w, Activation act = Activation::Tanh) {
    return {CompatForm::Additive, act, std::move(w)};
  }

  // Throws ConfigError unless the parameters fit rows of width d.
  void validate(std::size_t d) const;
};

struct AttentionHead {
  Tensor wq;  // d × d'
  Tensor wk;  // d × d'
  Tensor wv;  // d × d'
  CompatKind compat;
};

struct MhaParams {
  std::vector<AttentionHead> heads;
  Tensor wo;  // h·d' × d

  std::size_t model_dim() const { return wo.cols(); }
  std::size_t head_dim() const { return heads.empty() ? 0 : heads.front().wq.cols(); }
  void validate() const;
};

// Multi-head attention followed by the two residual + layer norm stages.
// The feed-forward map is d → 2d → d with a ReLU in between, applied per row.
struct MabParams {
  MhaParams mha;
  Tensor ff1_w, ff1_b;  // d × 2d, 1 × 2d
  Tensor ff2_w, ff2_b;  // 2d × d, 1 × d
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;

  std::size_t dim() const { return mha.model_dim(); }
  void validate() const;
};

inline constexpr double kLayerNormEps = 1e-5;

// Uniform in ±√(6 / (rows + cols)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Throws ConfigError when d is not divisible by heads.
MhaParams init_mha(std::size_t d, std::size_t heads, CompatForm form, Activation act, Rng& rng);
MabParams init_mab(std::size_t d, std::size_t heads, CompatForm form, Activation act, Rng& rng);

// ---- graph-building forms ---------------------------------------------------

Var compat(Var q, Var k, const CompatKind& c);
// row_softmax(compat(q, k)) · v
Var attention(Var q, Var k, Var v, const CompatKind& c);
// concat(head_1, …, head_h) · W_O with head_j = attention(q Wq_j, k Wk_j, v Wv_j)
Var mha(Var q, Var k, Var v, const MhaParams& p);
// H = LayerNorm(q + MHA(q, k, v)); out = LayerNorm(H + FF(H))
Var mab(Var q, Var k, Var v, const MabParams& p);
Var sab(Var x, const MabParams& p);

// ---- eager forms (no gradient tracking) -----------------------------------

Tensor compat(const Tensor& q, const Tensor& k, const CompatKind& c);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const CompatKind& c);
// Softmax weights only.
Tensor attention_weights(const Tensor& q, const Tensor& k, const CompatKind& c);
Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& p);
Tensor mab(const Tensor& q, const Tensor& k, const Tensor& v, const MabParams& p);
Tensor sab(const Tensor& x, const MabParams& p);

// Calls f(name, tensor) for every learnable tensor of the block, in a fixed order.
template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, MhaParams>
void visit_parameters(P& p, const std::string& prefix, F&& f) {
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    auto& head = p.heads[h];
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    f(hp + "wq", head.wq);
    f(hp + "wk", head.wk);
    f(hp + "wv", head.wv);
    if (head.compat.form == CompatForm::Additive) f(hp + "compat_w", head.compat.w);
  }
  f(prefix + "wo", p.wo);
}

template <typename P, typename F>
  requires std::is_same_v<std::remove_const_t<P>, MabParams>
void visit_parameters(P& p, const std::string& prefix, F&& f) {
  visit_parameters(p.mha, prefix + "mha.", f);
  f(prefix + "ff1_w", p.ff1_w);
  f(prefix + "ff1_b", p.ff1_b);
  f(prefix + "ff2_w", p.ff2_w);
  f(prefix + "ff2_b", p.ff2_b);
  f(prefix + "ln1_gain", p.ln1_gain);
  f(prefix + "ln1_bias", p.ln1_bias);
  f(prefix + "ln2_gain", p.ln2_gain);
  f(prefix + "ln2_bias", p.ln2_bias);
}

}  // namespace abc
