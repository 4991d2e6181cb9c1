#include "dcreg/icnn.hpp"

#include <cmath>
#include <random>

#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg {

namespace {

constexpr std::string_view kCkptMagic = "DCRGICNN";
constexpr std::uint32_t kCkptVersion = 1;

void check_input(const IcnnParams& p, Eigen::Index n) {
  if (n != p.input_dim) {
    throw ShapeError("icnn: input length " + std::to_string(n) + " does not match input dim " +
                     std::to_string(p.input_dim));
  }
  if (p.layers.empty()) throw ContractError("icnn: network has no layers");
}

Mat apply_act(const Mat& a, const Activation& act) {
  return a.unaryExpr([&](double v) { return act.value(v); });
}

Mat apply_deriv(const Mat& a, const Activation& act) {
  return a.unaryExpr([&](double v) { return act.derivative(v); });
}

// Pre-activations of every layer for a batch.
std::vector<Mat> pre_activations(const IcnnParams& p, const Mat& xs, Mat* last_z) {
  std::vector<Mat> pre;
  pre.reserve(p.layers.size());
  Mat z;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& L = p.layers[i];
    Mat a = xs * L.wx.transpose();
    a.rowwise() += L.b.transpose();
    if (i > 0) a.noalias() += z * L.w.transpose();
    z = apply_act(a, L.act);
    pre.push_back(std::move(a));
  }
  if (last_z) *last_z = std::move(z);
  return pre;
}

template <class F>
void for_each_block(IcnnParams& p, F&& f) {
  for (auto& L : p.layers) {
    f(L.w.data(), L.w.size());
    f(L.wx.data(), L.wx.size());
    f(L.b.data(), L.b.size());
  }
  f(p.head.data(), p.head.size());
}

template <class F>
void for_each_block(const IcnnParams& p, F&& f) {
  for (const auto& L : p.layers) {
    f(L.w.data(), L.w.size());
    f(L.wx.data(), L.wx.size());
    f(L.b.data(), L.b.size());
  }
  f(p.head.data(), p.head.size());
}

std::string layer_name(const std::string& prefix, std::size_t i, const char* what) {
  return prefix + ".L" + std::to_string(i) + "." + what;
}

}  // namespace

std::vector<int> IcnnParams::widths() const {
  std::vector<int> w;
  for (const auto& L : layers) w.push_back(static_cast<int>(L.b.size()));
  return w;
}

std::size_t IcnnParams::param_count() const {
  std::size_t n = 0;
  for_each_block(*this, [&](const double*, Eigen::Index k) { n += static_cast<std::size_t>(k); });
  return n;
}

bool IcnnParams::nonneg() const {
  for (const auto& L : layers) {
    if (L.w.size() && L.w.minCoeff() < 0.0) return false;
  }
  return head.size() == 0 || head.minCoeff() >= 0.0;
}

IcnnParams IcnnParams::init(int input_dim, const std::vector<int>& widths, Activation act, std::uint64_t seed) {
  if (input_dim <= 0 || widths.empty()) throw ContractError("icnn init: need input_dim > 0 and at least one layer");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  IcnnParams p;
  p.input_dim = input_dim;
  int prev = 0;
  for (int w : widths) {
    if (w <= 0) throw ContractError("icnn init: widths must be positive");
    IcnnLayer L;
    L.act = act;
    const double s = 1.0 / std::sqrt(static_cast<double>(input_dim + prev));
    L.w = Mat(prev > 0 ? w : 0, prev);
    for (Eigen::Index k = 0; k < L.w.size(); ++k) L.w.data()[k] = std::abs(unif(rng)) * s;
    L.wx = Mat(w, input_dim);
    for (Eigen::Index k = 0; k < L.wx.size(); ++k) L.wx.data()[k] = unif(rng) * s;
    L.b = Vec(w);
    for (auto& v : L.b) v = unif(rng) * s;
    p.layers.push_back(std::move(L));
    prev = w;
  }
  p.head = Vec(prev);
  const double s = 1.0 / std::sqrt(static_cast<double>(prev));
  for (auto& v : p.head) v = std::abs(unif(rng)) * s;
  return p;
}

int seed_difference_stencils(IcnnParams& p, int rows, int cols) {
  if (p.layers.empty() || rows < 1 || cols < 1 || rows * cols != p.input_dim) {
    throw ShapeError("seed_difference_stencils: image shape does not match the input dimension");
  }
  IcnnLayer& L = p.layers.front();
  const Eigen::Index width = L.wx.rows();
  Eigen::Index k = 0;
  auto put = [&](int a, int c) {
    for (double sign : {1.0, -1.0}) {
      if (k >= width) return;
      L.wx.row(k).setZero();
      L.wx(k, c) = sign;
      L.wx(k, a) = -sign;
      L.b[k] = 0.0;
      ++k;
    }
  };
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      if (j + 1 < cols) put(i * cols + j, i * cols + j + 1);
      if (i + 1 < rows) put(i * cols + j, (i + 1) * cols + j);
    }
  return static_cast<int>(k);
}

Vec IcnnParams::flatten() const {
  Vec out(static_cast<Eigen::Index>(param_count()));
  Eigen::Index pos = 0;
  for_each_block(*this, [&](const double* d, Eigen::Index k) {
    out.segment(pos, k) = Eigen::Map<const Vec>(d, k);
    pos += k;
  });
  return out;
}

void IcnnParams::unflatten(const Vec& flat) {
  if (static_cast<std::size_t>(flat.size()) != param_count()) throw ShapeError("icnn unflatten: size mismatch");
  Eigen::Index pos = 0;
  for_each_block(*this, [&](double* d, Eigen::Index k) {
    Eigen::Map<Vec>(d, k) = flat.segment(pos, k);
    pos += k;
  });
}

double icnn_eval(const IcnnParams& p, const Vec& x) {
  check_input(p, x.size());
  return icnn_eval_batch(p, x.transpose())[0];
}

Vec icnn_eval_batch(const IcnnParams& p, const Mat& xs) {
  check_input(p, xs.cols());
  Mat z;
  pre_activations(p, xs, &z);
  return z * p.head;
}

Vec icnn_grad_x(const IcnnParams& p, const Vec& x) {
  check_input(p, x.size());
  Mat xs = x.transpose();
  auto pre = pre_activations(p, xs, nullptr);
  Vec g = Vec::Zero(p.input_dim);
  Vec delta = p.head;
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    const auto& L = p.layers[i];
    Vec d = apply_deriv(pre[i], L.act).transpose();
    delta = delta.cwiseProduct(d);
    g.noalias() += L.wx.transpose() * delta;
    if (i > 0) delta = L.w.transpose() * delta;
  }
  return g;
}

Mat icnn_grad_batch(const IcnnParams& p, const Mat& xs) {
  check_input(p, xs.cols());
  auto pre = pre_activations(p, xs, nullptr);
  Mat g = Mat::Zero(xs.rows(), p.input_dim);
  Mat delta = Mat::Ones(xs.rows(), 1) * p.head.transpose();
  for (std::size_t i = p.layers.size(); i-- > 0;) {
    const auto& L = p.layers[i];
    delta = delta.cwiseProduct(apply_deriv(pre[i], L.act));
    g.noalias() += delta * L.wx;
    if (i > 0) delta = delta * L.w;
  }
  return g;
}

void project_nonneg_inplace(IcnnParams& p) {
  for (auto& L : p.layers) L.w = L.w.cwiseMax(0.0);
  p.head = p.head.cwiseMax(0.0);
}

IcnnParams project_nonneg(IcnnParams p) {
  project_nonneg_inplace(p);
  return p;
}

SmoothnessEstimate estimate_smoothness(const IcnnParams& p, double lo, double hi, int pairs, std::uint64_t seed) {
  if (pairs < 1) throw ContractError("estimate_smoothness: pairs must be >= 1");
  if (!(hi > lo)) throw ContractError("estimate_smoothness: empty box");
  for (const auto& L : p.layers) {
    auto k = L.act.kind;
    if (k != Activation::Kind::softplus && k != Activation::Kind::identity && k != Activation::Kind::squared_hinge) {
      throw ContractError("estimate_smoothness: activations are not smooth; build the network in softplus mode");
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SmoothnessEstimate est;
  const double width = hi - lo;
  for (int k = 0; k < pairs; ++k) {
    Vec x(p.input_dim);
    for (auto& v : x) v = lo + width * unif(rng);
    Vec dir(p.input_dim);
    for (auto& v : dir) v = unif(rng) - 0.5;
    const double radius = width * std::pow(10.0, -3.0 * unif(rng));
    Vec x2 = (x + radius * dir.normalized()).cwiseMax(lo).cwiseMin(hi);
    const double dist = (x2 - x).norm();
    if (dist > 0.0) {
      double ratio = (icnn_grad_x(p, x) - icnn_grad_x(p, x2)).norm() / dist;
      est.l_hat = std::max(est.l_hat, ratio);
    }
    est.pairs = k + 1;
  }
  return est;
}

std::size_t DcRegularizer::param_count() const {
  return r1.param_count() + (mode == DcMode::dc ? r2.param_count() : 0);
}

Vec DcRegularizer::flatten() const {
  Vec a = r1.flatten();
  if (mode != DcMode::dc) return a;
  Vec b = r2.flatten();
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

void DcRegularizer::unflatten(const Vec& flat) {
  const auto n1 = static_cast<Eigen::Index>(r1.param_count());
  if (static_cast<std::size_t>(flat.size()) != param_count()) throw ShapeError("dc unflatten: size mismatch");
  r1.unflatten(flat.head(n1));
  if (mode == DcMode::dc) r2.unflatten(flat.tail(flat.size() - n1));
}

double r2_eval(const DcRegularizer& r, const Vec& x) {
  switch (r.mode) {
    case DcMode::dc: return icnn_eval(r.r2, x);
    case DcMode::convex_only: check_input(r.r1, x.size()); return 0.0;
    case DcMode::weakly_convex: check_input(r.r1, x.size()); return 0.5 * r.rho * x.squaredNorm();
  }
  return 0.0;
}

Vec r2_grad(const DcRegularizer& r, const Vec& x) {
  switch (r.mode) {
    case DcMode::dc: return icnn_grad_x(r.r2, x);
    case DcMode::convex_only: return Vec::Zero(x.size());
    case DcMode::weakly_convex: return r.rho * x;
  }
  return Vec::Zero(x.size());
}

double dc_eval(const DcRegularizer& r, const Vec& x) { return icnn_eval(r.r1, x) - r2_eval(r, x); }

DcGradient dc_grad(const DcRegularizer& r, const Vec& x) { return {icnn_grad_x(r.r1, x), r2_grad(r, x)}; }

void project_nonneg_inplace(DcRegularizer& r) {
  project_nonneg_inplace(r.r1);
  if (r.mode == DcMode::dc) project_nonneg_inplace(r.r2);
}

Tensor to_tensor(const Mat& m) {
  return Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                        std::vector<double>(m.data(), m.data() + m.size()));
}

Tensor to_tensor(const Vec& v) { return Tensor::vector(std::vector<double>(v.data(), v.data() + v.size())); }

IcnnGraph build_icnn_graph(Tape& tape, const std::string& prefix, const IcnnParams& shape, NodeId xs, NodeId dirs) {
  IcnnGraph g;
  NodeId z = 0;
  NodeId zdot = 0;
  for (std::size_t i = 0; i < shape.layers.size(); ++i) {
    const auto& L = shape.layers[i];
    auto wx_name = layer_name(prefix, i, "wx");
    auto b_name = layer_name(prefix, i, "b");
    NodeId wx = tape.placeholder(wx_name);
    NodeId b = tape.placeholder(b_name);
    NodeId a = tape.add_bias(tape.matmul_t(xs, wx), b);
    NodeId adot = tape.matmul_t(dirs, wx);
    if (i > 0) {
      auto w_name = layer_name(prefix, i, "w");
      NodeId w = tape.placeholder(w_name);
      a = tape.add(a, tape.matmul_t(z, w));
      adot = tape.add(adot, tape.matmul_t(zdot, w));
      g.param_names.push_back(w_name);
    }
    g.param_names.push_back(wx_name);
    g.param_names.push_back(b_name);
    z = tape.activation(a, L.act);
    zdot = tape.mul(tape.activation_grad(a, L.act), adot);
  }
  NodeId head = tape.placeholder(prefix + ".head");
  g.param_names.push_back(prefix + ".head");
  g.value = tape.matmul(z, head);
  g.tangent = tape.matmul(zdot, head);
  return g;
}

void bind_params(const std::string& prefix, const IcnnParams& p, std::map<std::string, Tensor>& inputs) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& L = p.layers[i];
    if (i > 0) inputs[layer_name(prefix, i, "w")] = to_tensor(L.w);
    inputs[layer_name(prefix, i, "wx")] = to_tensor(L.wx);
    inputs[layer_name(prefix, i, "b")] = to_tensor(L.b);
  }
  inputs[prefix + ".head"] = to_tensor(p.head);
}

Vec gather_grads(const std::string& prefix, const IcnnParams& p, const std::map<std::string, Tensor>& grads) {
  Vec out(static_cast<Eigen::Index>(p.param_count()));
  Eigen::Index pos = 0;
  auto take = [&](const std::string& name, Eigen::Index n) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("gather_grads: missing gradient for " + name);
    if (static_cast<Eigen::Index>(it->second.size()) != n) throw ShapeError("gather_grads: size mismatch for " + name);
    out.segment(pos, n) = Eigen::Map<const Vec>(it->second.data.data(), n);
    pos += n;
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& L = p.layers[i];
    if (i > 0) take(layer_name(prefix, i, "w"), L.w.size());
    take(layer_name(prefix, i, "wx"), L.wx.size());
    take(layer_name(prefix, i, "b"), L.b.size());
  }
  take(prefix + ".head", p.head.size());
  return out;
}

std::string serialize(const DcRegularizer& r) {
  io::ByteWriter w;
  w.bytes(kCkptMagic);
  w.u32(kCkptVersion);
  w.u32(static_cast<std::uint32_t>(r.mode));
  w.f64(r.rho);
  const std::uint32_t nets = r.mode == DcMode::dc ? 2 : 1;
  w.u32(nets);
  auto header = [&](const IcnnParams& p) {
    w.u64(static_cast<std::uint64_t>(p.input_dim));
    w.u64(p.layers.size());
    for (const auto& L : p.layers) {
      w.u64(static_cast<std::uint64_t>(L.b.size()));
      w.u32(static_cast<std::uint32_t>(L.act.kind));
      w.f64(L.act.param);
    }
  };
  header(r.r1);
  if (nets == 2) header(r.r2);
  for (double v : r.flatten()) w.f64(v);
  std::string out = w.str();
  io::ByteWriter tail;
  tail.u64(io::fnv1a(out));
  return out + tail.str();
}

DcRegularizer deserialize(const std::string& bytes) {
  if (bytes.size() < 16) throw Error("checkpoint: truncated");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  io::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.u64() != io::fnv1a(body)) throw Error("checkpoint: checksum mismatch");
  io::ByteReader r(body);
  if (r.bytes(8) != kCkptMagic) throw Error("checkpoint: bad magic");
  if (r.u32() != kCkptVersion) throw Error("checkpoint: unsupported version");
  DcRegularizer reg;
  auto mode = r.u32();
  if (mode > 2) throw Error("checkpoint: bad mode");
  reg.mode = static_cast<DcMode>(mode);
  reg.rho = r.f64();
  auto nets = r.u32();
  if (nets != (reg.mode == DcMode::dc ? 2u : 1u)) throw Error("checkpoint: network count does not match mode");
  auto header = [&](IcnnParams& p) {
    p.input_dim = static_cast<int>(r.u64());
    auto depth = r.u64();
    if (depth == 0 || depth > 1000) throw Error("checkpoint: bad depth");
    int prev = 0;
    for (std::uint64_t i = 0; i < depth; ++i) {
      IcnnLayer L;
      int width = static_cast<int>(r.u64());
      auto kind = r.u32();
      double param = r.f64();
      if (kind > static_cast<std::uint32_t>(Activation::Kind::squared_hinge)) throw Error("checkpoint: bad activation tag");
      L.act = Activation{static_cast<Activation::Kind>(kind), param};
      L.w = Mat::Zero(prev > 0 ? width : 0, prev);
      L.wx = Mat::Zero(width, p.input_dim);
      L.b = Vec::Zero(width);
      p.layers.push_back(std::move(L));
      prev = width;
    }
    p.head = Vec::Zero(prev);
  };
  header(reg.r1);
  if (nets == 2) header(reg.r2);
  Vec flat(static_cast<Eigen::Index>(reg.param_count()));
  if (r.remaining() != static_cast<std::size_t>(flat.size()) * 8) throw Error("checkpoint: parameter block size mismatch");
  for (auto& v : flat) v = r.f64();
  reg.unflatten(flat);
  return reg;
}

void save_checkpoint(const std::filesystem::path& path, const DcRegularizer& r) { io::write_text(path, serialize(r)); }

DcRegularizer load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
  return deserialize(io::read_text(path));
}

}  // namespace dcreg
