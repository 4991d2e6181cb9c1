#include <cmath>
#include <random>

#include "doctest.h"
#include "dcreg/error.hpp"
#include "dcreg/train.hpp"
#include "oracle.hpp"

using namespace dcreg;

namespace {

IcnnParams linear(const Vec& c) {
  IcnnParams p;
  p.input_dim = static_cast<int>(c.size());
  IcnnLayer l;
  l.wx = c.transpose();
  l.b = Vec::Zero(1);
  l.act = Activation::identity();
  p.layers.push_back(l);
  p.head = Vec::Ones(1);
  return p;
}

Mat randn(int rows, int cols, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> g(0.0, s);
  return Mat::NullaryExpr(rows, cols, [&] { return g(rng); });
}

DcRegularizer small_dc(DcMode mode, Activation act, std::uint64_t seed) {
  DcRegularizer r;
  r.r1 = IcnnParams::init(2, {6, 6}, act, seed);
  r.r2 = IcnnParams::init(2, {6, 6}, act, seed + 1);
  r.mode = mode;
  r.rho = 0.3;
  return r;
}

// Two Gaussian blobs: clean is tight around the origin, noisy is spread.
SampleSource blobs(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  SampleSource s;
  for (int i = 0; i < n; ++i) {
    Vec c(2), z(2);
    c << 0.2 * g(rng), 0.2 * g(rng);
    z << 1.5 * g(rng), 1.5 * g(rng);
    s.clean.push_back(c);
    s.noisy.push_back(z);
  }
  return s;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("zero network with identical batches has zero loss") {
  DcRegularizer r = small_dc(DcMode::dc, Activation::leaky_relu(0.2), 1);
  r.unflatten(Vec::Zero(static_cast<Eigen::Index>(r.param_count())));
  std::mt19937_64 rng(2);
  Mat b = randn(8, 2, rng);
  auto t = ar_loss(r, b, b, 10.0, rng);
  CHECK(t.loss == 0.0);
  CHECK(t.penalty_term == 0.0);
}

TEST_CASE("linear regularizer with |c| = 2 has penalty lambda") {
  Vec c(2);
  c << 2.0, 0.0;
  DcRegularizer r;
  r.r1 = linear(c);
  r.mode = DcMode::convex_only;
  std::mt19937_64 rng(3);
  Mat b = randn(5, 2, rng);
  auto t = ar_loss(r, b, b, 7.0, rng);
  CHECK(t.penalty_term == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(t.loss == doctest::Approx(7.0).epsilon(1e-14));
}

TEST_CASE("loss terms by hand for a linear regularizer") {
  Vec c(2);
  c << 0.3, -0.4;
  DcRegularizer r;
  r.r1 = linear(c);
  r.mode = DcMode::convex_only;
  std::mt19937_64 rng(4);
  Mat cl = randn(6, 2, rng), no = randn(6, 2, rng);
  auto t = ar_loss(r, cl, no, 10.0, rng);
  CHECK(t.clean_term == doctest::Approx((cl * c).mean()).epsilon(1e-13));
  CHECK(t.noisy_term == doctest::Approx((no * c).mean()).epsilon(1e-13));
  CHECK(t.penalty_term == 0.0);
  CHECK(t.loss == doctest::Approx(t.clean_term - t.noisy_term).epsilon(1e-13));
}

TEST_CASE("parameter gradient matches finite differences in every mode") {
  for (auto mode : {DcMode::dc, DcMode::convex_only, DcMode::weakly_convex}) {
    DcRegularizer r = small_dc(mode, Activation::softplus(), 5);
    std::mt19937_64 rng(6);
    Mat cl = randn(4, 2, rng, 2.0), no = randn(4, 2, rng, 2.0);
    Mat pen = penalty_points(cl, no, PenaltySampling::interpolate, rng);
    ArLossEvaluator ev(r, 4);
    // scale up so the hinge is active on part of the batch
    Vec theta = r.flatten() * 3.0;
    r.unflatten(theta);
    auto t = ev(r, cl, no, pen, 10.0);
    CHECK(t.penalty_term > 0.0);
    Vec fd = oracle::finite_diff(
        [&](const Vec& th) {
          DcRegularizer q = r;
          q.unflatten(th);
          return ev(q, cl, no, pen, 10.0).loss;
        },
        theta, 1e-6);
    CHECK((t.param_grad - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("penalty gradient path on a quadratic network") {
  // R(x) = a * (hinge(x1)^2 + hinge(-x1)^2), grad norm 2a|x1|
  IcnnParams p;
  p.input_dim = 2;
  IcnnLayer l;
  l.wx = Mat(2, 2);
  l.wx << 1, 0, -1, 0;
  l.b = Vec::Zero(2);
  l.act = Activation::squared_hinge();
  p.layers.push_back(l);
  p.head = Vec::Constant(2, 0.8);
  DcRegularizer r;
  r.r1 = p;
  r.mode = DcMode::convex_only;
  Mat pts(3, 2);
  pts << 1.0, 0.0, -2.0, 1.0, 0.2, 0.0;
  ArLossEvaluator ev(r, 3);
  Mat zero = Mat::Zero(3, 2);
  auto t = ev(r, zero, zero, pts, 1.0);
  // |grad| = 1.6, 3.2, 0.32 -> hinge^2 = 0.36, 4.84, 0
  CHECK(t.penalty_term == doctest::Approx((0.36 + 4.84) / 3).epsilon(1e-12));
  Vec theta = r.flatten();
  Vec fd = oracle::finite_diff(
      [&](const Vec& th) {
        DcRegularizer q = r;
        q.unflatten(th);
        return ev(q, zero, zero, pts, 1.0).loss;
      },
      theta, 1e-6);
  CHECK((t.param_grad - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
}

TEST_CASE("penalty points lie on the segments") {
  std::mt19937_64 rng(7);
  Mat cl = randn(10, 3, rng), no = randn(10, 3, rng);
  Mat p = penalty_points(cl, no, PenaltySampling::interpolate, rng);
  for (int i = 0; i < 10; ++i) {
    Vec d = (cl.row(i) - no.row(i)).transpose();
    Vec q = (p.row(i) - no.row(i)).transpose();
    const double u = q.dot(d) / d.squaredNorm();
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
    CHECK((q - u * d).norm() <= 1e-12);
  }
  CHECK(penalty_points(cl, no, PenaltySampling::clean, rng) == cl);
  CHECK(penalty_points(cl, no, PenaltySampling::noisy, rng) == no);
}

TEST_CASE("dimension mismatch is rejected") {
  DcRegularizer r = small_dc(DcMode::dc, Activation::relu(), 8);
  std::mt19937_64 rng(9);
  CHECK_THROWS_AS(ar_loss(r, randn(4, 2, rng), randn(4, 3, rng), 1.0, rng), ShapeError);
  CHECK_THROWS_AS(ar_loss(r, randn(4, 3, rng), randn(4, 3, rng), 1.0, rng), ShapeError);
}

TEST_CASE("zero epochs leave parameters unchanged") {
  DcRegularizer r = small_dc(DcMode::dc, Activation::leaky_relu(0.2), 10);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto res = train(r, blobs(32, 11), cfg);
  CHECK(res.reg.flatten() == r.flatten());
  CHECK(res.selected_epoch == 0);
}

TEST_CASE("training is deterministic and keeps W >= 0 and separates clean from noisy") {
  DcRegularizer r = small_dc(DcMode::dc, Activation::leaky_relu(0.2), 12);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 2e-3;
  cfg.batch_size = 16;
  cfg.seed = 13;
  SampleSource src = blobs(128, 14);
  auto a = train(r, src, cfg);
  auto b = train(r, src, cfg);
  CHECK(a.reg.flatten() == b.reg.flatten());
  CHECK(a.log.size() == 30);
  CHECK(a.log.front().epoch == 1);
  CHECK(a.reg.r1.nonneg());
  CHECK(a.reg.r2.nonneg());

  SampleSource held = blobs(200, 15);
  double mc = 0.0, mn = 0.0;
  for (const auto& x : held.clean) mc += dc_eval(a.reg, x);
  for (const auto& x : held.noisy) mn += dc_eval(a.reg, x);
  CHECK(mn / 200 - mc / 200 > 0.0);
  CHECK(a.log.back().loss < a.log.front().loss);
}

TEST_CASE("validator selects the best epoch") {
  DcRegularizer r = small_dc(DcMode::convex_only, Activation::leaky_relu(0.2), 16);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 1e-3;
  int calls = 0;
  auto res = train(r, blobs(32, 17), cfg, [&](const DcRegularizer&) {
    ++calls;
    return calls == 2 ? 1.0 : 0.0;
  });
  CHECK(calls == 5);
  CHECK(res.selected_epoch == 2);
  CHECK(res.log[1].epoch == 2);
  CHECK(res.log[1].val_psnr == 1.0);
  CHECK(std::isnan(train(r, blobs(32, 17), cfg).log[0].val_psnr));

  // the initial parameters are never selected, even when training hurts
  double v = 10.0;
  auto worse = train(r, blobs(32, 17), cfg, [&](const DcRegularizer&) { return v -= 1.0; });
  CHECK(worse.selected_epoch == 1);
}

TEST_CASE("divergence raises NumericalError") {
  DcRegularizer r = small_dc(DcMode::dc, Activation::leaky_relu(0.2), 18);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e6;
  cfg.optimizer = TrainConfig::Optimizer::sgd;
  CHECK_THROWS_AS(train(r, blobs(32, 19), cfg), NumericalError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.lambda_gp = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.paired_batches = true;
  SampleSource s = blobs(8, 1);
  s.noisy.pop_back();
  CHECK_THROWS(train(small_dc(DcMode::dc, Activation::relu(), 1), s, cfg));
}

TEST_CASE("training log csv") {
  std::vector<EpochLog> log(2);
  log[1].epoch = 1;
  log[1].loss = 0.5;
  std::string csv = training_log_csv(log);
  CHECK(csv.rfind("epoch,loss,clean_term,noisy_term,penalty_term,val_psnr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("variational weight for the identity is E|eta|") {
  // E|N(0, s^2 I_d)| ~ s sqrt(d - 1/2)
  const double mu = variational_weight(LinearOp::identity(400), 0.5, 64, 20);
  CHECK(std::abs(mu - 0.5 * std::sqrt(399.5)) < 0.05);
}

}
