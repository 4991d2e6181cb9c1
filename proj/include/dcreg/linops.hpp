#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Sparse>

#include "dcreg/types.hpp"

namespace dcreg {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Forward operator A : R^d -> R^m with an exact adjoint.
///
/// Immutable after construction and cheap to copy (the representation is
/// shared), so one operator can back many concurrent solves.
class LinearOp {
 public:
  enum class Kind { dense, radon, convolution, identity };

  static LinearOp dense(Mat a);
  static LinearOp identity(int dim, double scale = 1.0);
  static LinearOp sparse(Kind kind, SparseMat a);
  /// Zero-padded "same" 2-D convolution of a rows x cols image with an odd-sized kernel.
  static LinearOp convolution(int rows, int cols, Mat kernel);

  Vec apply(const Vec& x) const;
  Vec adjoint(const Vec& y) const;

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  Kind kind() const { return kind_; }

  /// Matrix of the operator, column by column. Meant for tests and small sizes.
  Mat to_dense() const;

 private:
  struct Impl;
  LinearOp(Kind kind, int in_dim, int out_dim, std::shared_ptr<const Impl> impl);

  Kind kind_;
  int in_dim_;
  int out_dim_;
  std::shared_ptr<const Impl> impl_;
};

/// Observed data y = A x + noise.
struct Measurement {
  Vec y;
  double sigma = 0.0;
  LinearOp op;
};

/// Desk-scale parallel-beam geometry over an n x n pixel grid of unit pixels.
struct RadonGeometry {
  int n = 32;
  int num_angles = 30;
  int rays_per_angle = 32;
  double missing_wedge_deg = 0.0;  // 0 for sparse-view

  /// Kept projection angles in degrees: k * 180 / num_angles, minus the
  /// wedge [180 - missing_wedge, 180).
  std::vector<double> angles_deg() const;
};

/// Line-integral operator: entry (ray, pixel) is the exact length of the ray
/// inside the pixel. Rays are evenly spaced across the image diagonal.
LinearOp build_radon(const RadonGeometry& geom);

struct OpNormEstimate {
  double norm = 0.0;      // estimate of the largest singular value
  double rayleigh = 0.0;  // final Rayleigh quotient of A^T A
  /// Estimate inflated by 1.01 for use in step-size rules.
  double safeguarded() const { return 1.01 * norm; }
};

/// Power iteration on A^T A from a fixed start vector.
OpNormEstimate op_norm(const LinearOp& a, int iters = 200);

/// y = A x + sigma * g with g standard normal drawn from a generator seeded by `seed`.
Measurement simulate(const LinearOp& a, const Vec& x, double sigma, std::uint64_t seed);

struct CgResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Solves (A^T A + ridge I) x = A^T y by conjugate gradients. When the
/// tolerance is not met, the best iterate is returned with converged=false.
CgResult pseudo_inverse_init(const LinearOp& a, const Vec& y, double ridge, double tol = 1e-8,
                             int max_iter = 5000);

}  // namespace dcreg
