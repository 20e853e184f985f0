#include "abc/attention.hpp"

#include <cmath>

#include "abc/errors.hpp"

namespace abc {

const char* to_string(CompatForm f) {
  return f == CompatForm::Multiplicative ? "multiplicative" : "additive";
}

CompatForm compat_form_from_string(const std::string& s) {
  if (s == "multiplicative" || s == "mul") return CompatForm::Multiplicative;
  if (s == "additive" || s == "add") return CompatForm::Additive;
  throw ConfigError("unknown compatibility '" + s + "' (expected multiplicative or additive)");
}

void CompatKind::validate(std::size_t d) const {
  if (form == CompatForm::Multiplicative) {
    if (!w.empty()) throw ConfigError("multiplicative compatibility carries no parameters");
    return;
  }
  if (w.rows() != 1 || w.cols() != d)
    throw ConfigError("additive compatibility weight has shape " + w.shape_string() + ", expected 1x" +
                      std::to_string(d));
}

void MhaParams::validate() const {
  if (heads.empty()) throw ConfigError("multi-head attention needs at least one head");
  const std::size_t d = wo.cols();
  const std::size_t dh = head_dim();
  if (dh * heads.size() != d || wo.rows() != d)
    throw ConfigError("multi-head attention: W_O is " + wo.shape_string() + " for " +
                      std::to_string(heads.size()) + " heads of width " + std::to_string(dh));
  for (const auto& h : heads) {
    for (const Tensor* w : {&h.wq, &h.wk, &h.wv})
      if (w->rows() != d || w->cols() != dh)
        throw ConfigError("multi-head attention: projection is " + w->shape_string() + ", expected " +
                          std::to_string(d) + "x" + std::to_string(dh));
    h.compat.validate(dh);
  }
}

void MabParams::validate() const {
  mha.validate();
  const std::size_t d = dim();
  auto expect = [](const Tensor& t, std::size_t r, std::size_t c, const char* name) {
    if (t.rows() != r || t.cols() != c)
      throw ConfigError(std::string("attention block: ") + name + " is " + t.shape_string() + ", expected " +
                        std::to_string(r) + "x" + std::to_string(c));
  };
  expect(ff1_w, d, 2 * d, "ff1_w");
  expect(ff1_b, 1, 2 * d, "ff1_b");
  expect(ff2_w, 2 * d, d, "ff2_w");
  expect(ff2_b, 1, d, "ff2_b");
  expect(ln1_gain, 1, d, "ln1_gain");
  expect(ln1_bias, 1, d, "ln1_bias");
  expect(ln2_gain, 1, d, "ln2_gain");
  expect(ln2_bias, 1, d, "ln2_bias");
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

MhaParams init_mha(std::size_t d, std::size_t heads, CompatForm form, Activation act, Rng& rng) {
  if (heads == 0 || d % heads != 0)
    throw ConfigError("dimension " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  const std::size_t dh = d / heads;
  MhaParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    AttentionHead head;
    head.wq = xavier_uniform(d, dh, rng);
    head.wk = xavier_uniform(d, dh, rng);
    head.wv = xavier_uniform(d, dh, rng);
    head.compat.form = form;
    head.compat.act = act;
    if (form == CompatForm::Additive) head.compat.w = xavier_uniform(1, dh, rng);
    p.heads.push_back(std::move(head));
  }
  p.wo = xavier_uniform(d, d, rng);
  return p;
}

MabParams init_mab(std::size_t d, std::size_t heads, CompatForm form, Activation act, Rng& rng) {
  MabParams p;
  p.mha = init_mha(d, heads, form, act, rng);
  p.ff1_w = xavier_uniform(d, 2 * d, rng);
  p.ff1_b = Tensor(1, 2 * d);
  p.ff2_w = xavier_uniform(2 * d, d, rng);
  p.ff2_b = Tensor(1, d);
  p.ln1_gain = Tensor(1, d, 1.0);
  p.ln1_bias = Tensor(1, d);
  p.ln2_gain = Tensor(1, d, 1.0);
  p.ln2_bias = Tensor(1, d);
  return p;
}

// ---- graph forms ------------------------------------------------------------

Var compat(Var q, Var k, const CompatKind& c) {
  if (q.cols() != k.cols())
    throw ShapeError("compat: query width " + std::to_string(q.cols()) + " differs from key width " +
                     std::to_string(k.cols()));
  c.validate(q.cols());
  if (c.form == CompatForm::Multiplicative)
    return scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  return additive_compat(q, k, q.graph->parameter(c.w), c.act);
}

Var attention(Var q, Var k, Var v, const CompatKind& c) {
  if (k.rows() == 0) throw ShapeError("attention: empty key/value set");
  if (k.rows() != v.rows())
    throw ShapeError("attention: " + std::to_string(k.rows()) + " keys but " + std::to_string(v.rows()) +
                     " values");
  return matmul(row_softmax(compat(q, k, c)), v);
}

Var mha(Var q, Var k, Var v, const MhaParams& p) {
  p.validate();
  const std::size_t d = p.model_dim();
  if (q.cols() != d || k.cols() != d || v.cols() != d)
    throw ShapeError("mha: inputs must have width " + std::to_string(d));
  Graph& g = *q.graph;
  std::vector<Var> outs;
  outs.reserve(p.heads.size());
  for (const auto& head : p.heads) {
    Var qh = matmul(q, g.parameter(head.wq));
    Var kh = matmul(k, g.parameter(head.wk));
    Var vh = matmul(v, g.parameter(head.wv));
    outs.push_back(attention(qh, kh, vh, head.compat));
  }
  Var cat = outs.size() == 1 ? outs.front() : concat_cols(outs);
  return matmul(cat, g.parameter(p.wo));
}

Var mab(Var q, Var k, Var v, const MabParams& p) {
  p.validate();
  Graph& g = *q.graph;
  Var h = layer_norm(add(q, mha(q, k, v, p.mha)), g.parameter(p.ln1_gain), g.parameter(p.ln1_bias), kLayerNormEps);
  Var hidden = relu(add_row(matmul(h, g.parameter(p.ff1_w)), g.parameter(p.ff1_b)));
  Var ff = add_row(matmul(hidden, g.parameter(p.ff2_w)), g.parameter(p.ff2_b));
  return layer_norm(add(h, ff), g.parameter(p.ln2_gain), g.parameter(p.ln2_bias), kLayerNormEps);
}

Var sab(Var x, const MabParams& p) { return mab(x, x, x, p); }

// ---- eager forms ------------------------------------------------------------

Tensor compat(const Tensor& q, const Tensor& k, const CompatKind& c) {
  Graph g(false);
  return compat(g.constant(q), g.constant(k), c).value();
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const CompatKind& c) {
  Graph g(false);
  return attention(g.constant(q), g.constant(k), g.constant(v), c).value();
}

Tensor attention_weights(const Tensor& q, const Tensor& k, const CompatKind& c) {
  Graph g(false);
  return row_softmax(compat(g.constant(q), g.constant(k), c)).value();
}

Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& p) {
  Graph g(false);
  return mha(g.constant(q), g.constant(k), g.constant(v), p).value();
}

Tensor mab(const Tensor& q, const Tensor& k, const Tensor& v, const MabParams& p) {
  Graph g(false);
  return mab(g.constant(q), g.constant(k), g.constant(v), p).value();
}

Tensor sab(const Tensor& x, const MabParams& p) {
  Graph g(false);
  return sab(g.constant(x), p).value();
}

}  // namespace abc
