#include "dcreg/tape.hpp"

#include <algorithm>
#include <cmath>

#include "dcreg/error.hpp"

namespace dcreg {

namespace {

using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::placeholder: return "placeholder";
    case Tape::Op::constant: return "constant";
    case Tape::Op::matmul: return "matmul";
    case Tape::Op::matmul_t: return "matmul_t";
    case Tape::Op::add: return "add";
    case Tape::Op::add_bias: return "add_bias";
    case Tape::Op::mul: return "mul";
    case Tape::Op::scale: return "scale";
    case Tape::Op::activation: return "activation";
    case Tape::Op::activation_grad: return "activation_grad";
    case Tape::Op::reduce_sum: return "reduce_sum";
    case Tape::Op::concat: return "concat";
  }
  return "?";
}

[[noreturn]] void shape_fail(Tape::Op op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Activation Activation::leaky_relu(double slope) {
  if (!(slope > 0.0 && slope <= 1.0)) {
    throw ContractError("leaky_relu: slope must lie in (0, 1] to stay convex and non-decreasing");
  }
  return {Kind::leaky_relu, slope};
}

Activation Activation::softplus(double beta) {
  if (!(beta > 0.0)) throw ContractError("softplus: beta must be positive");
  return {Kind::softplus, beta};
}

double Activation::value(double x) const {
  switch (kind) {
    case Kind::identity: return x;
    case Kind::relu: return x > 0 ? x : 0.0;
    case Kind::leaky_relu: return x > 0 ? x : param * x;
    case Kind::softplus: {
      double z = param * x;
      // log1p(exp(z)) without overflow
      return (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / param;
    }
    case Kind::squared_hinge: return x > 0 ? x * x : 0.0;
  }
  return 0.0;
}

double Activation::derivative(double x) const {
  switch (kind) {
    case Kind::identity: return 1.0;
    case Kind::relu: return x > 0 ? 1.0 : 0.0;
    case Kind::leaky_relu: return x > 0 ? 1.0 : param;
    case Kind::softplus: return sigmoid(param * x);
    case Kind::squared_hinge: return x > 0 ? 2.0 * x : 0.0;
  }
  return 0.0;
}

double Activation::second_derivative(double x) const {
  switch (kind) {
    case Kind::softplus: {
      double s = sigmoid(param * x);
      return param * s * (1.0 - s);
    }
    case Kind::squared_hinge: return x > 0 ? 2.0 : 0.0;
    default: return 0.0;
  }
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  values_.emplace_back();
  evaluated_.push_back(false);
  return nodes_.size() - 1;
}

void Tape::check_id(NodeId id) const {
  if (id >= nodes_.size()) throw ContractError("tape: unknown node id " + std::to_string(id));
}

NodeId Tape::placeholder(const std::string& name) {
  if (placeholders_.count(name)) throw ContractError("tape: duplicate placeholder '" + name + "'");
  Node n{Op::placeholder};
  n.name = name;
  auto id = push(std::move(n));
  placeholders_[name] = id;
  return id;
}

NodeId Tape::constant(Tensor value) {
  Node n{Op::constant};
  n.constant = std::move(value);
  return push(std::move(n));
}

#define DCREG_BINARY(fn, opk)          \
  NodeId Tape::fn(NodeId a, NodeId b) { \
    check_id(a);                        \
    check_id(b);                        \
    Node n{Op::opk};                    \
    n.a = a;                            \
    n.b = b;                            \
    return push(std::move(n));          \
  }

DCREG_BINARY(matmul, matmul)
DCREG_BINARY(matmul_t, matmul_t)
DCREG_BINARY(add, add)
DCREG_BINARY(add_bias, add_bias)
DCREG_BINARY(mul, mul)
DCREG_BINARY(concat, concat)
#undef DCREG_BINARY

NodeId Tape::scale(NodeId a, double c) {
  check_id(a);
  Node n{Op::scale};
  n.a = a;
  n.scalar = c;
  return push(std::move(n));
}

NodeId Tape::activation(NodeId a, Activation act) {
  check_id(a);
  Node n{Op::activation};
  n.a = a;
  n.act = act;
  return push(std::move(n));
}

NodeId Tape::activation_grad(NodeId a, Activation act) {
  check_id(a);
  Node n{Op::activation_grad};
  n.a = a;
  n.act = act;
  return push(std::move(n));
}

NodeId Tape::reduce_sum(NodeId a) {
  check_id(a);
  Node n{Op::reduce_sum};
  n.a = a;
  return push(std::move(n));
}

const Tensor& Tape::value(NodeId id) const {
  check_id(id);
  if (!evaluated_[id]) throw ContractError("tape: node " + std::to_string(id) + " has not been evaluated");
  return values_[id];
}

void Tape::eval_node(NodeId id, const std::map<std::string, Tensor>& inputs) {
  const Node& n = nodes_[id];
  Tensor& out = values_[id];
  switch (n.op) {
    case Op::placeholder: {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) throw ContractError("tape: input '" + n.name + "' is not bound");
      out = it->second;
      break;
    }
    case Op::constant: out = n.constant; break;
    case Op::matmul: {
      const Tensor& a = values_[n.a];
      const Tensor& b = values_[n.b];
      if (a.rank() != 2 || b.rank() < 1 || b.rank() > 2 || a.cols() != b.rows()) shape_fail(n.op, a, b);
      if (b.rank() == 1) {
        out = Tensor::zeros({a.rows()});
      } else {
        out = Tensor::zeros({a.rows(), b.cols()});
      }
      as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
      break;
    }
    case Op::matmul_t: {
      const Tensor& a = values_[n.a];
      const Tensor& b = values_[n.b];
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) shape_fail(n.op, a, b);
      out = Tensor::zeros({a.rows(), b.rows()});
      as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
      break;
    }
    case Op::add:
    case Op::mul: {
      const Tensor& a = values_[n.a];
      const Tensor& b = values_[n.b];
      if (a.shape != b.shape) shape_fail(n.op, a, b);
      out = a;
      if (n.op == Op::add) {
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
      }
      break;
    }
    case Op::add_bias: {
      const Tensor& a = values_[n.a];
      const Tensor& b = values_[n.b];
      std::size_t width = a.rank() == 2 ? a.cols() : a.size();
      if (a.rank() < 1 || a.rank() > 2 || b.rank() != 1 || b.size() != width) shape_fail(n.op, a, b);
      out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i % width];
      break;
    }
    case Op::scale: {
      out = values_[n.a];
      for (double& v : out.data) v *= n.scalar;
      break;
    }
    case Op::activation:
    case Op::activation_grad: {
      out = values_[n.a];
      if (n.op == Op::activation) {
        for (double& v : out.data) v = n.act.value(v);
      } else {
        for (double& v : out.data) v = n.act.derivative(v);
      }
      break;
    }
    case Op::reduce_sum: {
      double s = 0.0;
      for (double v : values_[n.a].data) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Op::concat: {
      const Tensor& a = values_[n.a];
      const Tensor& b = values_[n.b];
      if (a.rank() == 0 || a.rank() != b.rank() ||
          !std::equal(a.shape.begin() + 1, a.shape.end(), b.shape.begin() + 1)) {
        shape_fail(n.op, a, b);
      }
      auto shape = a.shape;
      shape[0] += b.shape[0];
      std::vector<double> data(a.data);
      data.insert(data.end(), b.data.begin(), b.data.end());
      out = Tensor(std::move(shape), std::move(data));
      break;
    }
  }
  evaluated_[id] = true;
}

const Tensor& Tape::forward(NodeId root, const std::map<std::string, Tensor>& inputs) {
  check_id(root);
  std::vector<bool> needed(nodes_.size(), false);
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (needed[id]) continue;
    needed[id] = true;
    const Node& n = nodes_[id];
    switch (n.op) {
      case Op::placeholder:
      case Op::constant: break;
      case Op::scale:
      case Op::activation:
      case Op::activation_grad:
      case Op::reduce_sum: stack.push_back(n.a); break;
      default:
        stack.push_back(n.a);
        stack.push_back(n.b);
    }
  }
  std::fill(evaluated_.begin(), evaluated_.end(), false);
  for (NodeId id = 0; id <= root; ++id) {
    if (needed[id]) eval_node(id, inputs);
  }
  // Bound leaves outside the root's cone still report (zero) gradients.
  for (const auto& [name, id] : placeholders_) {
    if (!evaluated_[id] && inputs.count(name)) eval_node(id, inputs);
  }
  return values_[root];
}

std::map<std::string, Tensor> Tape::backward(NodeId root, const Tensor& seed) const {
  check_id(root);
  if (!evaluated_[root]) throw ContractError("tape: backward called before forward on this root");
  if (seed.shape != values_[root].shape) {
    throw ShapeError("backward: seed shape " + seed.shape_string() + " does not match root shape " +
                     values_[root].shape_string());
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  auto accumulate = [&](NodeId id, Tensor g) {
    if (!has[id]) {
      grads[id] = std::move(g);
      has[id] = true;
    } else {
      auto& dst = grads[id].data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
    }
  };
  grads[root] = seed;
  has[root] = true;

  for (NodeId id = root + 1; id-- > 0;) {
    if (!has[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grads[id];
    switch (n.op) {
      case Op::placeholder:
      case Op::constant: break;
      case Op::matmul: {
        const Tensor& a = values_[n.a];
        const Tensor& b = values_[n.b];
        Tensor ga = Tensor::zeros(a.shape);
        Tensor gb = Tensor::zeros(b.shape);
        auto gm = ConstMap(g.data.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.cols()));
        as_matrix(ga).noalias() = gm * as_matrix(b).transpose();
        as_matrix(gb).noalias() = as_matrix(a).transpose() * gm;
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
      case Op::matmul_t: {
        const Tensor& a = values_[n.a];
        const Tensor& b = values_[n.b];
        Tensor ga = Tensor::zeros(a.shape);
        Tensor gb = Tensor::zeros(b.shape);
        as_matrix(ga).noalias() = as_matrix(g) * as_matrix(b);
        as_matrix(gb).noalias() = as_matrix(g).transpose() * as_matrix(a);
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
      case Op::add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::add_bias: {
        const Tensor& b = values_[n.b];
        Tensor gb = Tensor::zeros(b.shape);
        for (std::size_t i = 0; i < g.size(); ++i) gb.data[i % b.size()] += g.data[i];
        accumulate(n.a, g);
        accumulate(n.b, std::move(gb));
        break;
      }
      case Op::mul: {
        Tensor ga = g;
        Tensor gb = g;
        const auto& av = values_[n.a].data;
        const auto& bv = values_[n.b].data;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] *= bv[i];
          gb.data[i] *= av[i];
        }
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
      case Op::scale: {
        Tensor ga = g;
        for (double& v : ga.data) v *= n.scalar;
        accumulate(n.a, std::move(ga));
        break;
      }
      case Op::activation:
      case Op::activation_grad: {
        Tensor ga = g;
        const auto& pre = values_[n.a].data;
        if (n.op == Op::activation) {
          for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] *= n.act.derivative(pre[i]);
        } else {
          for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] *= n.act.second_derivative(pre[i]);
        }
        accumulate(n.a, std::move(ga));
        break;
      }
      case Op::reduce_sum:
        accumulate(n.a, Tensor::filled(values_[n.a].shape, g.item()));
        break;
      case Op::concat: {
        const Tensor& a = values_[n.a];
        const Tensor& b = values_[n.b];
        Tensor ga(a.shape, std::vector<double>(g.data.begin(), g.data.begin() + static_cast<long>(a.size())));
        Tensor gb(b.shape, std::vector<double>(g.data.begin() + static_cast<long>(a.size()), g.data.end()));
        accumulate(n.a, std::move(ga));
        accumulate(n.b, std::move(gb));
        break;
      }
    }
  }

  std::map<std::string, Tensor> result;
  for (const auto& [name, id] : placeholders_) {
    if (!evaluated_[id]) continue;
    result[name] = has[id] ? grads[id] : Tensor::zeros(values_[id].shape);
  }
  return result;
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_gradient: step must be positive");
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    double fp = f(probe);
    probe[i] = x[i] - h;
    double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace dcreg
