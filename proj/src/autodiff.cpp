#include "abc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "abc/errors.hpp"

namespace abc {

namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw Error("Var is not attached to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw Error("operands belong to different graphs");
  return graph_of(a);
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Vectorized in-place activation. tanh is evaluated as an odd function of
// exp(−2|x|), sigmoid through exp(−|x|).
void activate_inplace(Activation a, double* p, std::size_t n) {
  Eigen::Map<Eigen::ArrayXd> x(p, static_cast<Eigen::Index>(n));
  switch (a) {
    case Activation::Relu:
      x = x.max(0.0);
      break;
    case Activation::Tanh: {
      const Eigen::ArrayXd e = (-2.0 * x.abs()).exp();
      x = x.sign() * (1.0 - e) / (1.0 + e);
      break;
    }
    case Activation::Sigmoid: {
      const Eigen::ArrayXd e = (-x.abs()).exp();
      x = (x >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      break;
    }
  }
}

// Derivative of the activation expressed through its output y.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::Relu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh:
      return 1.0 - y * y;
    case Activation::Sigmoid:
      return y * (1.0 - y);
  }
  return 0.0;
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Tanh: {
      const double e = std::exp(-2.0 * std::abs(x));
      return std::copysign((1.0 - e) / (1.0 + e), x);
    }
    case Activation::Sigmoid:
      return stable_sigmoid(x);
  }
  return x;
}

const Tensor& Var::value() const { return graph_of(*this).value(id); }

// ---- Graph ------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("constant: non-finite input");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return {this, it->second};
  Var v = variable(p);
  bound_.emplace(&p, v.id);
  return v;
}

Var Graph::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_[v.id].needs_grad = track_;
  return v;
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, Rule rule) {
  if (!value.all_finite()) throw NumericalError("operation produced a non-finite value");
  Node n;
  n.value = std::move(value);
  n.needs_grad =
      track_ && std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) {
    n.inputs = std::move(inputs);
    n.rule = std::move(rule);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor Graph::grad_of(const Tensor& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return Tensor(p.rows(), p.cols());
  return grad({const_cast<Graph*>(this), it->second});
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  grad_buffer(id) += g;
}

void Graph::backward(Var out) {
  if (out.graph != this) throw Error("backward: variable from another graph");
  if (!track_) throw Error("backward: graph was built without gradient tracking");
  const Tensor& v = value(out.id);
  if (v.rows() != 1 || v.cols() != 1)
    throw ShapeError("backward: output must be 1x1, got " + v.shape_string());
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(out.id)(0, 0) = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty() || !n.rule) continue;
    n.rule(*this, i);
  }
}

// ---- operations -------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  return g.record(abc::matmul(av, bv), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dc = g.upstream(self);
    if (g.needs_grad(a)) matmul_nt_acc(dc, g.value(b), g.grad_buffer(a));
    if (g.needs_grad(b)) matmul_tn_acc(g.value(a), dc, g.grad_buffer(b));
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  return g.record(abc::matmul_nt(av, bv), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dc = g.upstream(self);
    if (g.needs_grad(a)) matmul_acc(dc, g.value(b), g.grad_buffer(a));
    if (g.needs_grad(b)) matmul_tn_acc(dc, g.value(a), g.grad_buffer(b));
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  out += bv;
  return g.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    g.accumulate(a, g.upstream(self));
    g.accumulate(b, g.upstream(self));
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    g.accumulate(a, g.upstream(self));
    if (g.needs_grad(b)) {
      Tensor neg = g.upstream(self);
      neg *= -1.0;
      g.accumulate(b, neg);
    }
  });
}

Var hadamard(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("hadamard", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dc = g.upstream(self);
    if (g.needs_grad(a)) {
      Tensor& da = g.grad_buffer(a);
      const Tensor& bv = g.value(b);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * bv[i];
    }
    if (g.needs_grad(b)) {
      Tensor& db = g.grad_buffer(b);
      const Tensor& av = g.value(a);
      for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * av[i];
    }
  });
}

Var add_row(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_error("add_row", xv, bv);
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  return g.record(std::move(out), {x.id, bias.id}, [x = x.id, b = bias.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    g.accumulate(x, dy);
    if (g.needs_grad(b)) {
      Tensor& db = g.grad_buffer(b);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) db(0, c) += dy(r, c);
    }
  });
}

Var scale(Var x, double s) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  out *= s;
  return g.record(std::move(out), {x.id}, [x = x.id, s](Graph& g, std::size_t self) {
    Tensor d = g.upstream(self);
    d *= s;
    g.accumulate(x, d);
  });
}

Var transpose(Var x) {
  Graph& g = graph_of(x);
  return g.record(x.value().transposed(), {x.id}, [x = x.id](Graph& g, std::size_t self) {
    g.accumulate(x, g.upstream(self).transposed());
  });
}

Var row_softmax(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (double& v : o) v /= total;
  }
  return g.record(std::move(out), {x.id}, [x = x.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    const Tensor& y = g.value(self);
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) += y(r, c) * (dy(r, c) - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x, gain);
  graph_of(x, bias);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (d == 0) throw ShapeError("layer_norm: zero-width input");
  if (gain.value().rows() != 1 || gain.value().cols() != d) shape_error("layer_norm gain", xv, gain.value());
  if (bias.value().rows() != 1 || bias.value().cols() != d) shape_error("layer_norm bias", xv, bias.value());

  auto normalized = std::make_shared<Tensor>(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(n, d);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    auto in = xv.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (in[c] - mu) * is;
      (*normalized)(r, c) = xh;
      out(r, c) = xh * gv(0, c) + bv(0, c);
    }
  }
  return g.record(std::move(out), {x.id, gain.id, bias.id},
                  [x = x.id, gn = gain.id, b = bias.id, normalized, inv_std](Graph& g, std::size_t self) {
                    const Tensor& dy = g.upstream(self);
                    const Tensor& xh = *normalized;
                    const std::size_t n = dy.rows(), d = dy.cols();
                    if (g.needs_grad(gn)) {
                      Tensor& dg = g.grad_buffer(gn);
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) dg(0, c) += dy(r, c) * xh(r, c);
                    }
                    if (g.needs_grad(b)) {
                      Tensor& db = g.grad_buffer(b);
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) db(0, c) += dy(r, c);
                    }
                    if (g.needs_grad(x)) {
                      const Tensor& gv = g.value(gn);
                      Tensor& dx = g.grad_buffer(x);
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t r = 0; r < n; ++r) {
                        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                        for (std::size_t c = 0; c < d; ++c) {
                          const double dxh = dy(r, c) * gv(0, c);
                          mean_dxh += dxh;
                          mean_dxh_xh += dxh * xh(r, c);
                        }
                        mean_dxh *= inv_d;
                        mean_dxh_xh *= inv_d;
                        const double is = (*inv_std)[r];
                        for (std::size_t c = 0; c < d; ++c) {
                          const double dxh = dy(r, c) * gv(0, c);
                          dx(r, c) += is * (dxh - mean_dxh - xh(r, c) * mean_dxh_xh);
                        }
                      }
                    }
                  });
}

Var activate(Var x, Activation a) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  activate_inplace(a, out.data(), out.size());
  return g.record(std::move(out), {x.id}, [x = x.id, a](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    const Tensor& y = g.value(self);
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * activation_slope(a, y[i]);
  });
}

Var relu(Var x) { return activate(x, Activation::Relu); }
Var tanh(Var x) { return activate(x, Activation::Tanh); }
Var sigmoid(Var x) { return activate(x, Activation::Sigmoid); }

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (begin + count > xv.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + xv.shape_string());
  Tensor out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  return g.record(std::move(out), {x.id}, [x = x.id, begin](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    Tensor& dx = g.grad_buffer(x);
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) dx(r, begin + c) += dy(r, c);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    graph_of(parts[0], p);
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    ids.push_back(p.id);
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  std::vector<std::size_t> inputs = ids;
  return g.record(std::move(out), std::move(inputs), [ids](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t w = g.value(id).cols();
      if (g.needs_grad(id)) {
        Tensor& dx = g.grad_buffer(id);
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) dx(r, c) += dy(r, offset + c);
      }
      offset += w;
    }
  });
}

Var additive_compat(Var q, Var k, Var w, Activation act) {
  Graph& g = graph_of(q, k);
  graph_of(q, w);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& wv = w.value();
  if (qv.cols() != kv.cols()) shape_error("additive_compat", qv, kv);
  if (wv.rows() != 1 || wv.cols() != qv.cols()) shape_error("additive_compat weights", qv, wv);
  const std::size_t m = qv.rows(), n = kv.rows(), d = qv.cols();

  const bool keep = g.tracking() && (g.needs_grad(q.id) || g.needs_grad(k.id) || g.needs_grad(w.id));
  auto acts = std::make_shared<std::vector<double>>(keep ? m * n * d : 0);
  Tensor out(m, n);
  std::vector<double> scratch(keep ? 0 : n * d);
  for (std::size_t i = 0; i < m; ++i) {
    const double* qi = qv.data() + i * d;
    double* a = keep ? acts->data() + i * n * d : scratch.data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = kv.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) a[j * d + c] = qi[c] + kj[c];
    }
    activate_inplace(act, a, n * d);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += a[j * d + c] * wv[c];
      out(i, j) = s;
    }
  }
  return g.record(std::move(out), {q.id, k.id, w.id},
                  [q = q.id, k = k.id, w = w.id, act, acts, m, n, d](Graph& g, std::size_t self) {
                    const Tensor& dc = g.upstream(self);
                    const Tensor& wv = g.value(w);
                    const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gw = g.needs_grad(w);
                    Tensor* dq = gq ? &g.grad_buffer(q) : nullptr;
                    Tensor* dk = gk ? &g.grad_buffer(k) : nullptr;
                    Tensor* dw = gw ? &g.grad_buffer(w) : nullptr;
                    auto run = [&](auto slope) {
                      std::vector<double> t(d);
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < n; ++j) {
                          const double up = dc(i, j);
                          if (up == 0.0) continue;
                          const double* a = acts->data() + (i * n + j) * d;
                          if (dw)
                            for (std::size_t c = 0; c < d; ++c) (*dw)[c] += up * a[c];
                          for (std::size_t c = 0; c < d; ++c) t[c] = up * wv[c] * slope(a[c]);
                          if (dq)
                            for (std::size_t c = 0; c < d; ++c) (*dq)(i, c) += t[c];
                          if (dk)
                            for (std::size_t c = 0; c < d; ++c) (*dk)(j, c) += t[c];
                        }
                      }
                    };
                    switch (act) {
                      case Activation::Relu:
                        run([](double y) { return y > 0.0 ? 1.0 : 0.0; });
                        break;
                      case Activation::Tanh:
                        run([](double y) { return 1.0 - y * y; });
                        break;
                      case Activation::Sigmoid:
                        run([](double y) { return y * (1.0 - y); });
                        break;
                    }
                  });
}

Var symmetrize(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (xv.rows() != xv.cols()) throw ShapeError("symmetrize: non-square " + xv.shape_string());
  const std::size_t n = xv.rows();
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = 0.5 * (xv(i, j) + xv(j, i));
  return g.record(std::move(out), {x.id}, [x = x.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.upstream(self);
    Tensor& dx = g.grad_buffer(x);
    const std::size_t n = dy.rows();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dx(i, j) += 0.5 * (dy(i, j) + dy(j, i));
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return g.record(Tensor(1, 1, s), {x.id}, [x = x.id](Graph& g, std::size_t self) {
    const double up = g.upstream(self)(0, 0);
    Tensor& dx = g.grad_buffer(x);
    for (double& v : dx.values()) v += up;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var bce(Var probs, const Tensor& target, double clamp) {
  Graph& g = graph_of(probs);
  const Tensor& p = probs.value();
  if (!p.same_shape(target)) shape_error("bce", p, target);
  if (p.empty()) throw ShapeError("bce: empty input");
  for (double t : target.values())
    if (t != 0.0 && t != 1.0) throw DataError("bce: target matrix must be binary");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = std::clamp(p[i], clamp, 1.0 - clamp);
    loss -= target[i] * std::log(s) + (1.0 - target[i]) * std::log(1.0 - s);
  }
  loss *= inv_n;
  return g.record(Tensor(1, 1, loss), {probs.id},
                  [pid = probs.id, target, clamp, inv_n](Graph& g, std::size_t self) {
                    const double up = g.upstream(self)(0, 0);
                    const Tensor& p = g.value(pid);
                    Tensor& dp = g.grad_buffer(pid);
                    for (std::size_t i = 0; i < p.size(); ++i) {
                      const double s = p[i];
                      if (s <= clamp || s >= 1.0 - clamp) continue;
                      dp[i] -= up * inv_n * (target[i] / s - (1.0 - target[i]) / (1.0 - s));
                    }
                  });
}

// ---- finite differences --------------------------------------------------

GradCheckResult grad_check(const GraphFn& f, std::span<Tensor* const> params, double step) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");

  auto evaluate = [&](bool track, std::vector<Tensor>* grads) {
    Graph g(track);
    Var out = f(g);
    const Tensor& v = out.value();
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("grad_check: f must return a 1x1 value");
    if (!std::isfinite(v(0, 0))) throw NumericalError("grad_check: non-finite loss");
    if (grads) {
      g.backward(out);
      for (const Tensor* p : params) grads->push_back(g.grad_of(*p));
    }
    return v(0, 0);
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double orig = p[e];
      p[e] = orig + step;
      const double fp = evaluate(false, nullptr);
      p[e] = orig - step;
      const double fm = evaluate(false, nullptr);
      p[e] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[pi][e];
      const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      res.max_abs_error = std::max(res.max_abs_error, std::abs(a - numeric));
      if (err > res.max_rel_error || (pi == 0 && e == 0)) {
        res.max_rel_error = err;
        res.worst_param = pi;
        res.worst_index = e;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor>& params, double step) {
  std::vector<Tensor*> ptrs;
  for (Tensor& p : params) ptrs.push_back(&p);
  return grad_check(
      [&](Graph& g) {
        std::vector<Var> vars;
        for (const Tensor& p : params) vars.push_back(g.parameter(p));
        return f(g, vars);
      },
      ptrs, step);
}

}  // namespace abc
