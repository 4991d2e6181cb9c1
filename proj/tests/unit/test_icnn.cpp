#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "dcreg/error.hpp"
#include "dcreg/icnn.hpp"
#include "dcreg/io.hpp"
#include "oracle.hpp"

using namespace dcreg;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// One hidden layer, d=1, wx=[1], b=0, relu, head 1.
IcnnParams relu1() {
  IcnnParams p;
  p.input_dim = 1;
  IcnnLayer l;
  l.wx = Mat::Ones(1, 1);
  l.b = Vec::Zero(1);
  l.act = Activation::relu();
  p.layers.push_back(l);
  p.head = Vec::Ones(1);
  return p;
}

// 0.5 |x|^2 in d dims: sum_i 0.5 (hinge(x_i)^2 + hinge(-x_i)^2).
IcnnParams half_square(int d) {
  IcnnParams p;
  p.input_dim = d;
  IcnnLayer l;
  l.wx = Mat::Zero(2 * d, d);
  for (int i = 0; i < d; ++i) {
    l.wx(2 * i, i) = 1.0;
    l.wx(2 * i + 1, i) = -1.0;
  }
  l.b = Vec::Zero(2 * d);
  l.act = Activation::squared_hinge();
  p.layers.push_back(l);
  p.head = Vec::Constant(2 * d, 0.5);
  return p;
}

template <class F>
int jensen_violations(F f, int d, int triples, std::uint64_t seed, double box) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-box, box), lam(0.0, 1.0);
  int bad = 0;
  for (int k = 0; k < triples; ++k) {
    Vec x(d), y(d);
    for (auto& e : x) e = u(rng);
    for (auto& e : y) e = u(rng);
    const double l = lam(rng);
    const double fx = f(x), fy = f(y);
    const double scale = 1.0 + std::abs(fx) + std::abs(fy);
    if (f(l * x + (1 - l) * y) > l * fx + (1 - l) * fy + 1e-9 * scale) ++bad;
  }
  return bad;
}

}  // namespace

TEST_SUITE("icnn") {

TEST_CASE("zero network is zero with zero gradient") {
  IcnnParams p = IcnnParams::init(3, {4, 4}, Activation::relu(), 1);
  p.unflatten(Vec::Zero(static_cast<Eigen::Index>(p.param_count())));
  Vec x(3);
  x << 1, -2, 5;
  CHECK(icnn_eval(p, x) == 0.0);
  CHECK(icnn_grad_x(p, x).isZero(0.0));
}

TEST_CASE("single relu by hand") {
  IcnnParams p = relu1();
  Vec x(1);
  x << -2;
  CHECK(icnn_eval(p, x) == 0.0);
  x << 3;
  CHECK(icnn_eval(p, x) == 3.0);
  x << 0;
  CHECK(icnn_grad_x(p, x)[0] == 0.0);
}

TEST_CASE("depth-2 hand-set network at [1,1]") {
  IcnnParams p;
  p.input_dim = 2;
  IcnnLayer a;
  a.wx = Mat(2, 2);
  a.wx << 1, -1, 0.5, 2;
  a.b = v2(0.5, -1);
  a.act = Activation::relu();
  IcnnLayer b;
  b.w = Mat(1, 2);
  b.w << 2, 3;
  b.wx = Mat(1, 2);
  b.wx << -1, 1;
  b.b = Vec::Constant(1, 0.25);
  b.act = Activation::relu();
  p.layers = {a, b};
  p.head = Vec::Constant(1, 2.0);
  // z1 = relu([0.5, 1.5]) = [0.5, 1.5]; z2 = relu(1 + 4.5 + 0 + 0.25) = 5.75; out = 11.5
  CHECK(icnn_eval(p, v2(1, 1)) == doctest::Approx(11.5).epsilon(1e-15));
}

TEST_CASE("linear network has the composed gradient") {
  IcnnParams p = IcnnParams::init(3, {5, 4}, Activation::identity(), 2);
  Mat m = p.layers[0].wx;
  Mat acc = m;
  for (std::size_t i = 1; i < p.layers.size(); ++i) acc = p.layers[i].w * acc + p.layers[i].wx;
  Vec want = (p.head.transpose() * acc).transpose();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    Vec x = Vec::NullaryExpr(3, [&] { return std::normal_distribution<double>()(rng); });
    CHECK((icnn_grad_x(p, x) - want).norm() <= 1e-12);
  }
}

TEST_CASE("softplus gradient matches finite differences") {
  IcnnParams p = IcnnParams::init(4, {8, 8, 8}, Activation::softplus(), 4);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    Vec x = Vec::NullaryExpr(4, [&] { return std::normal_distribution<double>()(rng); });
    Vec fd = oracle::finite_diff([&](const Vec& z) { return icnn_eval(p, z); }, x, 1e-5);
    CHECK((icnn_grad_x(p, x) - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("batch evaluation agrees with single evaluation") {
  IcnnParams p = IcnnParams::init(3, {6, 6}, Activation::leaky_relu(0.2), 6);
  std::mt19937_64 rng(7);
  Mat xs = Mat::NullaryExpr(9, 3, [&] { return std::normal_distribution<double>()(rng); });
  Vec vals = icnn_eval_batch(p, xs);
  Mat grads = icnn_grad_batch(p, xs);
  for (int i = 0; i < 9; ++i) {
    Vec x = xs.row(i).transpose();
    CHECK(vals[i] == doctest::Approx(icnn_eval(p, x)).epsilon(1e-13));
    CHECK((grads.row(i).transpose() - icnn_grad_x(p, x)).norm() <= 1e-12);
  }
}

TEST_CASE("project_nonneg") {
  IcnnParams p = IcnnParams::init(2, {2, 2}, Activation::relu(), 8);
  p.layers[1].w.resize(2, 2);
  p.layers[1].w << -1, 2, 3, -4;
  p.head = v2(-0.5, 1);
  Mat wx = p.layers[1].wx;
  IcnnParams q = project_nonneg(p);
  Mat want(2, 2);
  want << 0, 2, 3, 0;
  CHECK(q.layers[1].w == want);
  CHECK(q.head == v2(0, 1));
  CHECK(q.layers[1].wx == wx);
  CHECK(q.nonneg());
  CHECK(project_nonneg(q).flatten() == q.flatten());
}

TEST_CASE("random steps followed by projection keep the invariant") {
  IcnnParams p = IcnnParams::init(3, {5, 5, 5}, Activation::leaky_relu(0.2), 9);
  std::mt19937_64 rng(10);
  for (int k = 0; k < 50; ++k) {
    Vec f = p.flatten();
    f += Vec::NullaryExpr(f.size(), [&] { return std::normal_distribution<double>(0, 0.3)(rng); });
    p.unflatten(f);
    project_nonneg_inplace(p);
    CHECK(p.nonneg());
  }
  CHECK(jensen_violations([&](const Vec& x) { return icnn_eval(p, x); }, 3, 2000, 11, 4.0) == 0);
}

TEST_CASE("convexity of freshly initialized networks") {
  for (auto act : {Activation::relu(), Activation::leaky_relu(0.2), Activation::softplus(2.0)}) {
    IcnnParams p = IcnnParams::init(2, {16, 16, 16}, act, 12);
    CHECK(jensen_violations([&](const Vec& x) { return icnn_eval(p, x); }, 2, 10000, 13, 5.0) == 0);
  }
}

TEST_CASE("dc_eval examples") {
  DcRegularizer r;
  r.r1 = IcnnParams::init(2, {6, 6}, Activation::leaky_relu(0.2), 14);
  r.r2 = IcnnParams::init(2, {6, 6}, Activation::leaky_relu(0.2), 15);
  Vec x = v2(0.3, -1.2);
  CHECK(dc_eval(r, x) == icnn_eval(r.r1, x) - icnn_eval(r.r2, x));

  r.mode = DcMode::convex_only;
  CHECK(dc_eval(r, x) == icnn_eval(r.r1, x));
  CHECK(dc_grad(r, x).g2.isZero(0.0));

  r.mode = DcMode::dc;
  r.r2 = r.r1;
  CHECK(dc_eval(r, x) == 0.0);

  r.mode = DcMode::weakly_convex;
  r.rho = 2.0;
  CHECK(dc_eval(r, v2(1, 1)) == icnn_eval(r.r1, v2(1, 1)) - 2.0);
  CHECK(dc_grad(r, v2(1, 1)).g2 == v2(2, 2));
}

TEST_CASE("weakly convex mode: R + rho/2 |x|^2 is convex") {
  DcRegularizer r;
  r.r1 = IcnnParams::init(2, {8, 8}, Activation::softplus(), 16);
  r.mode = DcMode::weakly_convex;
  r.rho = 0.7;
  CHECK(jensen_violations([&](const Vec& x) { return dc_eval(r, x) + 0.35 * x.squaredNorm(); }, 2, 10000, 17, 5.0) ==
        0);
}

TEST_CASE("monotone along directions that raise every pre-activation") {
  IcnnParams p = IcnnParams::init(2, {4, 4}, Activation::relu(), 18);
  p.layers[0].wx = p.layers[0].wx.cwiseAbs();
  p.layers[1].wx = p.layers[1].wx.cwiseAbs();
  double prev = -INFINITY;
  for (double t = -3; t <= 3; t += 0.25) {
    const double v = icnn_eval(p, v2(t, 0.5 * t));
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("estimate_smoothness") {
  IcnnParams q = half_square(3);
  auto e = estimate_smoothness(q, -2, 2, 500, 19);
  CHECK(std::abs(e.l_hat - 1.0) <= 0.05);
  CHECK(e.pairs == 500);

  IcnnParams lin = IcnnParams::init(3, {4}, Activation::identity(), 20);
  CHECK(estimate_smoothness(lin, -2, 2, 100, 21).l_hat <= 1e-12);

  IcnnParams sp = IcnnParams::init(3, {8, 8}, Activation::softplus(), 22);
  double prev = 0.0;
  for (int n : {1, 10, 100, 1000}) {
    const double l = estimate_smoothness(sp, -2, 2, n, 23).l_hat;
    CHECK(l >= prev);
    prev = l;
  }
  IcnnParams relu = IcnnParams::init(3, {8}, Activation::relu(), 24);
  CHECK_THROWS_AS(estimate_smoothness(relu, -2, 2, 10, 1), ContractError);
}

TEST_CASE("difference stencils give anisotropic TV by hand") {
  IcnnParams p = IcnnParams::init(6, {20}, Activation::relu(), 31);
  const Mat tail = p.layers[0].wx.bottomRows(6);
  CHECK(seed_difference_stencils(p, 2, 3) == 14);
  CHECK(p.layers[0].wx.bottomRows(6) == tail);
  p.head = Vec::Zero(20);
  p.head.head(14).setOnes();
  Vec x(6);
  x << 1, 4, 2, 0, 3, 3;
  // rows: |4-1| + |2-4| + |3-0| + |3-3|, columns: |0-1| + |3-4| + |3-2|
  CHECK(icnn_eval(p, x) == 11.0);
  CHECK(jensen_violations([&](const Vec& v) { return icnn_eval(p, v); }, 6, 2000, 32, 3.0) == 0);

  IcnnParams q = IcnnParams::init(6, {5}, Activation::relu(), 33);
  CHECK(seed_difference_stencils(q, 2, 3) == 5);
  CHECK_THROWS_AS(seed_difference_stencils(q, 2, 2), ShapeError);
}

TEST_CASE("shape mismatch") {
  IcnnParams p = IcnnParams::init(3, {4}, Activation::relu(), 25);
  CHECK_THROWS_AS(icnn_eval(p, Vec::Zero(2)), ShapeError);
  CHECK_THROWS_AS(icnn_grad_x(p, Vec::Zero(4)), ShapeError);
}

TEST_CASE("checkpoint round trip and corruption") {
  DcRegularizer r;
  r.r1 = IcnnParams::init(2, {5, 5}, Activation::leaky_relu(0.2), 26);
  r.r2 = IcnnParams::init(2, {5, 5}, Activation::softplus(3.0), 27);
  auto path = std::filesystem::temp_directory_path() / "dcreg_unit_icnn.ckpt";
  save_checkpoint(path, r);
  DcRegularizer back = load_checkpoint(path);
  CHECK(back.flatten() == r.flatten());
  CHECK(back.r2.layers[0].act == Activation::softplus(3.0));
  CHECK(dc_eval(back, v2(0.1, 0.2)) == dc_eval(r, v2(0.1, 0.2)));

  std::string bytes = serialize(r);
  bytes[bytes.size() / 2] ^= 1;
  CHECK_THROWS(deserialize(bytes));
  CHECK_THROWS(deserialize(bytes.substr(0, 10)));
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), MissingArtifact);
}

}
