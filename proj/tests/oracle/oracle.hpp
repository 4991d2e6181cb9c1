#pragma once

// Brute-force reference implementations. Nothing here calls into the
// library's numerical code; only the Eigen containers are shared.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct GridSpec {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> res;
};

struct GridMin {
  Vec x;
  double f = 0.0;
};

// Exhaustive search over a 1-d or 2-d grid.
inline GridMin grid_min(const std::function<double(const Vec&)>& f, const GridSpec& g) {
  const std::size_t d = g.lo.size();
  GridMin best;
  best.f = INFINITY;
  Vec x(static_cast<Eigen::Index>(d));
  const int r0 = g.res[0];
  const int r1 = d > 1 ? g.res[1] : 1;
  for (int i = 0; i < r0; ++i) {
    x[0] = g.lo[0] + (g.hi[0] - g.lo[0]) * i / (r0 - 1);
    for (int j = 0; j < r1; ++j) {
      if (d > 1) x[1] = g.lo[1] + (g.hi[1] - g.lo[1]) * j / (r1 - 1);
      const double v = f(x);
      if (v < best.f) {
        best.f = v;
        best.x = x;
      }
    }
  }
  return best;
}

inline Vec soft_threshold(const Vec& v, double tau) {
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::fabs(v[i]) - tau;
    out[i] = a > 0 ? (v[i] > 0 ? a : -a) : 0.0;
  }
  return out;
}

struct McResult {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Sample mean and standard error of g(X) for X drawn by `sample`.
inline McResult mc_expectation(const std::function<Eigen::Vector2d(std::mt19937_64&)>& sample,
                               const std::function<double(const Eigen::Vector2d&)>& g, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& s : v) s = g(sample(rng));
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : v) ss += (s - mean) * (s - mean);
  return {mean, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
}

// Box-Muller standard normal pair; independent of std::normal_distribution.
inline Eigen::Vector2d gaussian2(std::mt19937_64& rng, const Eigen::Matrix2d& chol) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng), b = u(rng);
  const double r = std::sqrt(-2.0 * std::log(1.0 - a));
  return chol * Eigen::Vector2d(r * std::cos(2 * M_PI * b), r * std::sin(2 * M_PI * b));
}

inline double largest_singular_value(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

inline Vec svd_pinv_solve(const Mat& a, const Vec& y) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 1e-12 * s[0]) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
}

inline Vec finite_diff(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

// Composite Simpson on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Naive PSNR / SSIM on row-major images (rows x cols).
inline double psnr(const Vec& x, const Vec& ref, double peak) {
  double mse = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) mse += (x[i] - ref[i]) * (x[i] - ref[i]);
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return 99.0;
  return std::fmin(99.0, 10.0 * std::log10(peak * peak / mse));
}

inline double ssim(const Vec& x, const Vec& y, int rows, int cols, double peak) {
  Mat w(11, 11);
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) w(i, j) = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  w /= w.sum();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(x.data(), rows, cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(y.data(), rows, cols);
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double total = 0.0;
  int n = 0;
  for (int r = 0; r + 11 <= rows; ++r)
    for (int c = 0; c + 11 <= cols; ++c) {
      Mat px = X.block(r, c, 11, 11), py = Y.block(r, c, 11, 11);
      const double mx = (w.array() * px.array()).sum();
      const double my = (w.array() * py.array()).sum();
      const double vx = (w.array() * (px.array() - mx).square()).sum();
      const double vy = (w.array() * (py.array() - my).square()).sum();
      const double cxy = (w.array() * (px.array() - mx) * (py.array() - my)).sum();
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  return total / n;
}

}  // namespace oracle
