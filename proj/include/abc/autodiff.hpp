#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "abc/tensor.hpp"

namespace abc {

enum class Activation { Relu, Tanh, Sigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

double apply_activation(Activation a, double x);

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Tape of operations for reverse-mode differentiation. Nodes are appended in
// evaluation order, so inputs always precede their consumers and backward()
// simply walks the tape in reverse.
//
// A graph is a single-threaded unit of work. Distinct graphs are independent.
class Graph {
 public:
  // Local gradient rule: reads the node's accumulated gradient and adds the
  // contributions of its inputs through Graph::accumulate.
  using Rule = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return track_; }

  // Input that never receives a gradient.
  Var constant(Tensor value);
  // Leaf bound to an external parameter tensor. Binding the same tensor twice
  // returns the same node, so its gradient accumulates over every use.
  Var parameter(const Tensor& p);
  // Free-standing leaf that receives a gradient (no external binding).
  Var variable(Tensor value);

  Var record(Tensor value, std::vector<std::size_t> inputs, Rule rule);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient of a node after backward(); an all-zero tensor if unreached.
  Tensor grad(Var v) const;
  // Gradient w.r.t. a tensor previously bound by parameter().
  Tensor grad_of(const Tensor& p) const;
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  // Adds g into the gradient buffer of node id, if that node needs one.
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_buffer(std::size_t id);

  // Seeds d(out)/d(out) = 1 for a 1×1 output and propagates.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    Rule rule;
  };

  bool track_;
  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_;
};

// ---- differentiable operations -------------------------------------------

Var matmul(Var a, Var b);
// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
// x (n×d) + bias (1×d) broadcast over rows.
Var add_row(Var x, Var bias);
Var scale(Var x, double s);
Var transpose(Var x);
// Row-wise softmax, stabilized by each row's maximum.
Var row_softmax(Var x);
// Per-row normalization to zero mean and unit variance, then gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var activate(Var x, Activation a);
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
// Columns [begin, begin + count).
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
// C(i, j) = Σ_k w_k · act(q(i, k) + k(j, k)); q is m×d, k is n×d, w is 1×d.
Var additive_compat(Var q, Var k, Var w, Activation act);
// ½ (x + xᵀ) for square x.
Var symmetrize(Var x);
Var sum(Var x);
Var mean(Var x);
// Mean binary cross entropy of every cell with probabilities clamped to
// [clamp, 1 - clamp]. target must be a 0/1 matrix of the same shape.
Var bce(Var probs, const Tensor& target, double clamp = 1e-7);

// ---- finite-difference oracle -------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_abs_error = 0.0;  // largest |a - n|, for diagnostics
};

using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

// Compares reverse-mode gradients of f against central differences with the
// given step, over every entry of every parameter. The relative error of one
// entry is |a - n| / max(1e-12, |a| + |n|). Throws NumericalError if f is not
// finite at any evaluation point.
GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor>& params, double step = 1e-5);

// Same check for graphs that bind their parameters themselves through
// Graph::parameter; the pointed-to tensors are perturbed in place.
using GraphFn = std::function<Var(Graph&)>;
GradCheckResult grad_check(const GraphFn& f, std::span<Tensor* const> params, double step = 1e-5);

}  // namespace abc
