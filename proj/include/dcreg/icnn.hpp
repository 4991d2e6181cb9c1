#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcreg/tape.hpp"
#include "dcreg/types.hpp"

namespace dcreg {

/// One ICNN layer: z_i = act(W z_{i-1} + Wx x + b).
struct IcnnLayer {
  Mat w;   // width_i x width_{i-1}, entries >= 0; empty (0x0) for the first layer
  Mat wx;  // width_i x d, unconstrained
  Vec b;   // width_i
  Activation act = Activation::leaky_relu(0.2);
};

/// Parameters of an input-convex network R : R^d -> R.
///
/// The scalar output is head . z_D with a non-negative head, so convexity
/// in x holds whenever every `w` and the head are entrywise non-negative and
/// every activation is convex and non-decreasing.
struct IcnnParams {
  int input_dim = 0;
  std::vector<IcnnLayer> layers;
  Vec head;

  int depth() const { return static_cast<int>(layers.size()); }
  std::vector<int> widths() const;
  std::size_t param_count() const;
  bool nonneg() const;

  /// Fresh network: Wx and b uniform in +-1/sqrt(fan_in), W and head the
  /// absolute value of the same law, so the network starts convex.
  static IcnnParams init(int input_dim, const std::vector<int>& widths, Activation act, std::uint64_t seed);

  /// Flat parameter vector in layer order (w, wx, b per layer, then head).
  Vec flatten() const;
  void unflatten(const Vec& flat);
};

/// Overwrites leading rows of the first layer with +-(x[q] - x[p]) for
/// horizontally and vertically adjacent pixels of a rows x cols image, bias
/// 0. Returns the number of rows written (at most the layer width).
int seed_difference_stencils(IcnnParams& p, int rows, int cols);

/// Smoothness constant estimate from sampled gradient differences.
struct SmoothnessEstimate {
  double l_hat = 0.0;
  int pairs = 0;
};

double icnn_eval(const IcnnParams& p, const Vec& x);
/// One subgradient of R at x (ReLU derivative 0 at the kink).
Vec icnn_grad_x(const IcnnParams& p, const Vec& x);
/// Row-wise evaluation of a batch (one sample per row).
Vec icnn_eval_batch(const IcnnParams& p, const Mat& xs);
/// Row-wise input gradients of a batch.
Mat icnn_grad_batch(const IcnnParams& p, const Mat& xs);
/// Clamps every W and the head to be >= 0; Wx and b are untouched.
IcnnParams project_nonneg(IcnnParams p);
/// In-place variant used by the training loop.
void project_nonneg_inplace(IcnnParams& p);

/// max over sampled pairs in [lo, hi]^d of |grad R(x) - grad R(x')| / |x - x'|.
/// Needs activations with Lipschitz derivative (softplus, identity, squared hinge).
SmoothnessEstimate estimate_smoothness(const IcnnParams& p, double lo, double hi, int pairs, std::uint64_t seed);

enum class DcMode : std::uint32_t { dc = 0, convex_only = 1, weakly_convex = 2 };

/// R(x) = R1(x) - R2(x). In convex_only mode R2 is identically 0, in
/// weakly_convex mode R2 is (rho/2)|x|^2 and `r2` is unused.
struct DcRegularizer {
  IcnnParams r1;
  IcnnParams r2;
  DcMode mode = DcMode::dc;
  double rho = 0.0;

  int input_dim() const { return r1.input_dim; }
  std::size_t param_count() const;
  Vec flatten() const;
  void unflatten(const Vec& flat);
};

struct DcGradient {
  Vec g1;  // element of dR1(x)
  Vec g2;  // element of dR2(x)
};

double r2_eval(const DcRegularizer& r, const Vec& x);
Vec r2_grad(const DcRegularizer& r, const Vec& x);
double dc_eval(const DcRegularizer& r, const Vec& x);
DcGradient dc_grad(const DcRegularizer& r, const Vec& x);
void project_nonneg_inplace(DcRegularizer& r);

/// Placeholder names and output nodes of an ICNN laid out on a tape.
struct IcnnGraph {
  NodeId value;    // per-row R(x), shape (B)
  NodeId tangent;  // per-row directional derivative <grad R(x), v>, shape (B)
  std::vector<std::string> param_names;
};

/// Declares the network on `tape` with parameters as placeholders named
/// `prefix.*`. The tangent output is the forward-mode derivative of the
/// network along the per-row directions `dirs`; reverse-mode through it
/// yields parameter gradients of directional derivatives.
IcnnGraph build_icnn_graph(Tape& tape, const std::string& prefix, const IcnnParams& shape, NodeId xs, NodeId dirs);
/// Bindings for the placeholders declared by build_icnn_graph.
void bind_params(const std::string& prefix, const IcnnParams& p, std::map<std::string, Tensor>& inputs);
/// Flat gradient (IcnnParams::flatten order) from a backward() result.
Vec gather_grads(const std::string& prefix, const IcnnParams& p, const std::map<std::string, Tensor>& grads);

Tensor to_tensor(const Mat& m);
Tensor to_tensor(const Vec& v);

/// Checkpoint: magic, version, mode, rho, per-network dims / depth /
/// widths / activation tags, little-endian f64 parameter block, then a
/// 64-bit FNV-1a checksum of all preceding bytes.
std::string serialize(const DcRegularizer& r);
DcRegularizer deserialize(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const DcRegularizer& r);
DcRegularizer load_checkpoint(const std::filesystem::path& path);

}  // namespace dcreg
