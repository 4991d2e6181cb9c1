#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dcreg/tensor.hpp"
#include "dcreg/types.hpp"

namespace dcreg {

/// Elementwise activation. Every kind except `identity` is convex and
/// non-decreasing, which is what input-convexity needs.
struct Activation {
  enum class Kind { identity, relu, leaky_relu, softplus, squared_hinge };

  Kind kind = Kind::relu;
  double param = 0.0;  // slope for leaky_relu, beta for softplus

  static Activation identity() { return {Kind::identity, 0.0}; }
  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double slope);
  static Activation softplus(double beta = 1.0);
  static Activation squared_hinge() { return {Kind::squared_hinge, 0.0}; }

  double value(double x) const;
  /// Derivative; at the ReLU kink this picks the left slope (0 for relu).
  double derivative(double x) const;
  double second_derivative(double x) const;
  bool smooth() const { return kind == Kind::softplus || kind == Kind::identity; }

  bool operator==(const Activation&) const = default;
};

using NodeId = std::size_t;

/// Reverse-mode differentiation over a static graph of tensor ops.
///
/// The graph is declared once from placeholders (named leaves), then
/// `forward` binds tensors to the placeholders and evaluates a root while
/// caching every intermediate; `backward` propagates a seed from that root
/// and returns the gradient for every placeholder. Node ids increase in
/// creation order, so creation order is a topological order.
///
/// A tape is single-threaded; distinct tapes share nothing.
class Tape {
 public:
  enum class Op {
    placeholder,
    constant,
    matmul,      // a(m,k) . b(k,n) or b(k) -> (m,n) or (m)
    matmul_t,    // a(m,k) . b(n,k)^T -> (m,n)
    add,
    add_bias,    // a(m,n) + b(n) broadcast over rows
    mul,         // elementwise
    scale,
    activation,
    activation_grad,  // sigma'(a) elementwise
    reduce_sum,
    concat,      // along the leading axis
  };

  NodeId placeholder(const std::string& name);
  NodeId constant(Tensor value);
  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_t(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_bias(NodeId a, NodeId bias);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId activation(NodeId a, Activation act);
  NodeId activation_grad(NodeId a, Activation act);
  NodeId reduce_sum(NodeId a);
  NodeId concat(NodeId a, NodeId b);

  /// Evaluates `root` with the given placeholder bindings. Throws ShapeError
  /// naming the op and shapes on mismatch, ContractError on unbound inputs.
  const Tensor& forward(NodeId root, const std::map<std::string, Tensor>& inputs);

  /// Gradients of <seed, root> with respect to every placeholder bound in
  /// the last forward pass. Placeholders that do not influence the root get
  /// zero tensors. Throws ContractError if `root` was not evaluated.
  std::map<std::string, Tensor> backward(NodeId root, const Tensor& seed) const;

  const Tensor& value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    NodeId a = 0;
    NodeId b = 0;
    double scalar = 0.0;
    Activation act;
    std::string name;
    Tensor constant;
  };

  NodeId push(Node n);
  void check_id(NodeId id) const;
  void eval_node(NodeId id, const std::map<std::string, Tensor>& inputs);

  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<bool> evaluated_;
  std::map<std::string, NodeId> placeholders_;
};

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h);

}  // namespace dcreg
