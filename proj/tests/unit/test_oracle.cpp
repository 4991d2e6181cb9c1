// The reference implementations checked against closed forms.

#include <cmath>

#include "doctest.h"
#include "oracle.hpp"

using oracle::Mat;
using oracle::Vec;

TEST_SUITE("oracle") {

TEST_CASE("grid_min finds a known minimizer") {
  auto f = [](const Vec& x) { return (x[0] - 0.5) * (x[0] - 0.5) + 2 * (x[1] + 1) * (x[1] + 1) + 3; };
  auto m = oracle::grid_min(f, {{-2, -2}, {2, 2}, {401, 401}});
  CHECK(m.x[0] == doctest::Approx(0.5));
  CHECK(m.x[1] == doctest::Approx(-1.0));
  CHECK(m.f == doctest::Approx(3.0));
  auto m1 = oracle::grid_min([](const Vec& x) { return std::abs(x[0] - 0.25); }, {{0}, {1}, {5}});
  CHECK(m1.x[0] == 0.25);
}

TEST_CASE("soft threshold") {
  Vec v(4);
  v << 2.0, -0.5, 0.3, -3.0;
  Vec s = oracle::soft_threshold(v, 1.0);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 0.0);
  CHECK(s[2] == 0.0);
  CHECK(s[3] == -2.0);
}

TEST_CASE("mc_expectation of |x|^2 for a standard gaussian is 2") {
  auto r = oracle::mc_expectation([](std::mt19937_64& g) { return oracle::gaussian2(g, Eigen::Matrix2d::Identity()); },
                                  [](const Eigen::Vector2d& x) { return x.squaredNorm(); }, 200000, 1);
  CHECK(std::abs(r.mean - 2.0) <= 4 * r.stderr_);
  CHECK(r.stderr_ == doctest::Approx(2.0 / std::sqrt(200000.0)).epsilon(0.05));
}

TEST_CASE("singular values and pseudo-inverse of a diagonal matrix") {
  Mat a = Mat::Zero(3, 2);
  a(0, 0) = 3;
  a(1, 1) = 0.5;
  CHECK(oracle::largest_singular_value(a) == doctest::Approx(3.0));
  Vec y(3);
  y << 6, 1, 7;
  Vec x = oracle::svd_pinv_solve(a, y);
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(2.0));
}

TEST_CASE("finite differences and simpson on polynomials") {
  Vec x(2);
  x << 1.0, -2.0;
  Vec g = oracle::finite_diff([](const Vec& v) { return v[0] * v[0] * v[0] + v[0] * v[1]; }, x, 1e-5);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(oracle::simpson([](double t) { return t * t * t; }, 0, 2, 2) == doctest::Approx(4.0));
}

TEST_CASE("psnr and ssim reference values") {
  Vec a = Vec::Constant(16 * 16, 0.5), b = a;
  b[3] += 0.16;
  // mse = 0.0256 / 256 = 1e-4 -> 40 dB
  CHECK(oracle::psnr(b, a, 1.0) == doctest::Approx(40.0));
  CHECK(oracle::psnr(a, a, 1.0) == 99.0);
  CHECK(oracle::ssim(a, a, 16, 16, 1.0) == doctest::Approx(1.0));
  CHECK(oracle::ssim(b, a, 16, 16, 1.0) < 1.0);
}

}
