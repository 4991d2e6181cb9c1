#include "dcreg/linops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <variant>

#include "dcreg/error.hpp"

namespace dcreg {

namespace {

struct DenseRep {
  Mat a;
};
struct SparseRep {
  SparseMat a;
};
struct IdentityRep {
  double scale;
};
struct ConvRep {
  int rows;
  int cols;
  Mat kernel;
};

Vec convolve(const ConvRep& c, const Vec& x, bool flip) {
  const int kr = static_cast<int>(c.kernel.rows());
  const int kc = static_cast<int>(c.kernel.cols());
  const int hr = kr / 2;
  const int hc = kc / 2;
  Vec out = Vec::Zero(x.size());
  for (int r = 0; r < c.rows; ++r) {
    for (int col = 0; col < c.cols; ++col) {
      double acc = 0.0;
      for (int u = 0; u < kr; ++u) {
        for (int v = 0; v < kc; ++v) {
          int rr = flip ? r + hr - u : r + u - hr;
          int cc = flip ? col + hc - v : col + v - hc;
          if (rr < 0 || rr >= c.rows || cc < 0 || cc >= c.cols) continue;
          acc += c.kernel(u, v) * x[rr * c.cols + cc];
        }
      }
      out[r * c.cols + col] = acc;
    }
  }
  return out;
}

// Length of the line {p + t d : t in R} (|d| = 1) inside [x0,x1) x [y0,y1).
double clip_length(double px, double py, double dx, double dy, double x0, double x1, double y0, double y1) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  auto slab = [&](double p, double d, double a, double b) {
    if (std::abs(d) < 1e-15) {
      if (p < a || p >= b) hi = lo - 1.0;
      return;
    }
    double ta = (a - p) / d;
    double tb = (b - p) / d;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  };
  slab(px, dx, x0, x1);
  slab(py, dy, y0, y1);
  return hi > lo ? hi - lo : 0.0;
}

}  // namespace

struct LinearOp::Impl {
  std::variant<DenseRep, SparseRep, IdentityRep, ConvRep> rep;
};

LinearOp::LinearOp(Kind kind, int in_dim, int out_dim, std::shared_ptr<const Impl> impl)
    : kind_(kind), in_dim_(in_dim), out_dim_(out_dim), impl_(std::move(impl)) {}

LinearOp LinearOp::dense(Mat a) {
  int m = static_cast<int>(a.rows());
  int d = static_cast<int>(a.cols());
  return LinearOp(Kind::dense, d, m, std::make_shared<const Impl>(Impl{DenseRep{std::move(a)}}));
}

LinearOp LinearOp::identity(int dim, double scale) {
  if (dim <= 0) throw ContractError("identity operator needs a positive dimension");
  return LinearOp(Kind::identity, dim, dim, std::make_shared<const Impl>(Impl{IdentityRep{scale}}));
}

LinearOp LinearOp::sparse(Kind kind, SparseMat a) {
  int m = static_cast<int>(a.rows());
  int d = static_cast<int>(a.cols());
  a.makeCompressed();
  return LinearOp(kind, d, m, std::make_shared<const Impl>(Impl{SparseRep{std::move(a)}}));
}

LinearOp LinearOp::convolution(int rows, int cols, Mat kernel) {
  if (kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0) throw ContractError("convolution kernel sides must be odd");
  int d = rows * cols;
  return LinearOp(Kind::convolution, d, d, std::make_shared<const Impl>(Impl{ConvRep{rows, cols, std::move(kernel)}}));
}

Vec LinearOp::apply(const Vec& x) const {
  if (x.size() != in_dim_) {
    throw ShapeError("LinearOp::apply: expected length " + std::to_string(in_dim_) + ", got " +
                     std::to_string(x.size()));
  }
  return std::visit(
      [&](const auto& r) -> Vec {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, DenseRep> || std::is_same_v<R, SparseRep>) {
          return r.a * x;
        } else if constexpr (std::is_same_v<R, IdentityRep>) {
          return r.scale * x;
        } else {
          return convolve(r, x, false);
        }
      },
      impl_->rep);
}

Vec LinearOp::adjoint(const Vec& y) const {
  if (y.size() != out_dim_) {
    throw ShapeError("LinearOp::adjoint: expected length " + std::to_string(out_dim_) + ", got " +
                     std::to_string(y.size()));
  }
  return std::visit(
      [&](const auto& r) -> Vec {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, DenseRep> || std::is_same_v<R, SparseRep>) {
          return r.a.transpose() * y;
        } else if constexpr (std::is_same_v<R, IdentityRep>) {
          return r.scale * y;
        } else {
          return convolve(r, y, true);
        }
      },
      impl_->rep);
}

Mat LinearOp::to_dense() const {
  Mat out(out_dim_, in_dim_);
  Vec e = Vec::Zero(in_dim_);
  for (int j = 0; j < in_dim_; ++j) {
    e[j] = 1.0;
    out.col(j) = apply(e);
    e[j] = 0.0;
  }
  return out;
}

std::vector<double> RadonGeometry::angles_deg() const {
  std::vector<double> out;
  for (int k = 0; k < num_angles; ++k) {
    double a = 180.0 * k / num_angles;
    if (a < 180.0 - missing_wedge_deg) out.push_back(a);
  }
  return out;
}

LinearOp build_radon(const RadonGeometry& g) {
  if (g.n < 1 || g.n > 128) throw ConfigError("radon: image side must lie in [1, 128]");
  if (g.num_angles < 1) throw ConfigError("radon: need at least one angle");
  if (!(g.missing_wedge_deg >= 0.0 && g.missing_wedge_deg < 180.0)) {
    throw ConfigError("radon: missing wedge must lie in [0, 180)");
  }
  const auto angles = g.angles_deg();
  if (angles.empty() || g.rays_per_angle < 1) throw ConfigError("radon: geometry produces zero rays");

  const double half = g.n / 2.0;
  const double extent = g.n * std::numbers::sqrt2;
  const double spacing = extent / g.rays_per_angle;
  const int rays = static_cast<int>(angles.size()) * g.rays_per_angle;

  std::vector<Eigen::Triplet<double>> entries;
  int ray = 0;
  for (double deg : angles) {
    const double th = deg * std::numbers::pi / 180.0;
    const double ex = std::cos(th);
    const double ey = std::sin(th);
    const double dx = -ey;
    const double dy = ex;
    for (int k = 0; k < g.rays_per_angle; ++k, ++ray) {
      const double s = -extent / 2.0 + (k + 0.5) * spacing;
      const double px = s * ex;
      const double py = s * ey;
      for (int i = 0; i < g.n; ++i) {
        const double y1 = half - i;
        const double y0 = y1 - 1.0;
        for (int j = 0; j < g.n; ++j) {
          const double x0 = j - half;
          // pixel centre farther than half a diagonal from the line: no hit
          if (std::abs((x0 + 0.5) * ex + (y0 + 0.5) * ey - s) > 0.7072) continue;
          double len = clip_length(px, py, dx, dy, x0, x0 + 1.0, y0, y1);
          if (len > 1e-12) entries.emplace_back(ray, i * g.n + j, len);
        }
      }
    }
  }
  SparseMat a(rays, g.n * g.n);
  a.setFromTriplets(entries.begin(), entries.end());
  return LinearOp::sparse(LinearOp::Kind::radon, std::move(a));
}

OpNormEstimate op_norm(const LinearOp& a, int iters) {
  if (iters < 1) throw ContractError("op_norm: iters must be >= 1");
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> normal;
  Vec v(a.in_dim());
  for (auto& c : v) c = normal(rng);
  v.normalize();
  OpNormEstimate est;
  for (int k = 0; k < iters; ++k) {
    Vec w = a.adjoint(a.apply(v));
    double rq = v.dot(w);
    est.rayleigh = rq;
    double nw = w.norm();
    if (nw == 0.0) return {0.0, 0.0};
    v = w / nw;
  }
  est.norm = std::sqrt(std::max(est.rayleigh, 0.0));
  return est;
}

Measurement simulate(const LinearOp& a, const Vec& x, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ContractError("simulate: sigma must be >= 0");
  Vec y = a.apply(x);
  if (sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (auto& v : y) v += sigma * normal(rng);
  }
  return {std::move(y), sigma, a};
}

CgResult pseudo_inverse_init(const LinearOp& a, const Vec& y, double ridge, double tol, int max_iter) {
  if (!(ridge > 0.0)) throw ContractError("pseudo_inverse_init: ridge must be positive");
  const Vec rhs = a.adjoint(y);
  const double rhs_norm = rhs.norm();
  CgResult res;
  res.x = Vec::Zero(a.in_dim());
  if (rhs_norm == 0.0) {
    res.converged = true;
    return res;
  }
  auto normal_op = [&](const Vec& v) -> Vec { return a.adjoint(a.apply(v)) + ridge * v; };
  Vec r = rhs;
  Vec p = r;
  double rr = r.squaredNorm();
  Vec best = res.x;
  double best_res = 1.0;
  for (int k = 0; k < max_iter; ++k) {
    Vec ap = normal_op(p);
    double alpha = rr / p.dot(ap);
    res.x += alpha * p;
    r -= alpha * ap;
    double rr_new = r.squaredNorm();
    res.iterations = k + 1;
    double rel = std::sqrt(rr_new) / rhs_norm;
    if (rel < best_res) {
      best_res = rel;
      best = res.x;
    }
    if (rel <= tol) {
      res.relative_residual = rel;
      res.converged = true;
      return res;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  res.x = best;
  res.relative_residual = best_res;
  return res;
}

}  // namespace dcreg
