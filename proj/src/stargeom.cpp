#include "dcreg/stargeom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kDim = 2;

void require_aligned(const StarBody& a, const StarBody& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": angular grids differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " nodes)");
  }
}

}  // namespace

StarBody::StarBody(std::vector<double> radii) : radii_(std::move(radii)) {
  if (radii_.size() < 3) throw ContractError("star body: need at least 3 directions");
  for (std::size_t j = 0; j < radii_.size(); ++j) {
    if (!(radii_[j] > 0.0) || !std::isfinite(radii_[j])) {
      throw ContractError("star body: radial sample " + std::to_string(j) + " is not positive and finite");
    }
  }
  build();
}

void StarBody::build() {
  const int m = size();
  normals_.resize(radii_.size());
  for (int j = 0; j < m; ++j) {
    const int k = (j + 1) % m;
    Mat2 p;
    p.row(0) = radii_[j] * direction(j).transpose();
    p.row(1) = radii_[k] * direction(k).transpose();
    normals_[j] = p.partialPivLu().solve(Vec2::Ones());
  }
}

StarBody StarBody::from_radial(int m, const std::function<double(double)>& rho) {
  std::vector<double> r(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) r[j] = rho(kTwoPi * j / m);
  return StarBody(std::move(r));
}

StarBody StarBody::from_gauge(int m, const std::function<double(const Vec2&)>& g) {
  std::vector<double> r(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double t = kTwoPi * j / m;
    r[j] = 1.0 / g(Vec2(std::cos(t), std::sin(t)));
  }
  return StarBody(std::move(r));
}

StarBody StarBody::disc(int m, double r) {
  return from_radial(m, [r](double) { return r; });
}

StarBody StarBody::lp_ball(int m, double p, double scale) {
  return from_gauge(m, [p, scale](const Vec2& u) {
    const double n = std::isinf(p) ? u.cwiseAbs().maxCoeff() : std::pow(std::pow(std::abs(u[0]), p) + std::pow(std::abs(u[1]), p), 1.0 / p);
    return n / scale;
  });
}

double StarBody::angle(int j) const { return kTwoPi * j / size(); }

Vec2 StarBody::direction(int j) const {
  const double t = angle(j);
  return Vec2(std::cos(t), std::sin(t));
}

int StarBody::cone(double theta) const {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  int j = static_cast<int>(std::floor(t / kTwoPi * size()));
  return std::clamp(j, 0, size() - 1);
}

double StarBody::radial(double theta) const {
  const int j = cone(theta);
  if (theta == angle(j)) return radii_[j];
  return 1.0 / normals_[j].dot(Vec2(std::cos(theta), std::sin(theta)));
}

double StarBody::gauge(const Vec2& x) const {
  if (x.isZero(0.0)) return 0.0;
  const double theta = std::atan2(x[1], x[0]);
  const int j = cone(theta);
  const double t = theta < 0.0 ? theta + kTwoPi : theta;
  if (t == angle(j)) return x.norm() / radii_[j];
  return normals_[j].dot(x);
}

StarBody StarBody::scaled(double s) const {
  if (!(s > 0.0)) throw ContractError("star body: scale must be positive");
  std::vector<double> r = radii_;
  for (auto& v : r) v *= s;
  return StarBody(std::move(r));
}

double StarBody::volume() const { return dual_mixed_volume(*this, *this, 0.0); }

double gauge(const StarBody& k, const Vec2& x) { return k.gauge(x); }

RadialDensity RadialDensity::gaussian(Vec2 mean, Mat2 cov) {
  Eigen::LLT<Mat2> llt(cov);
  if (llt.info() != Eigen::Success || !(cov(0, 1) == cov(1, 0))) {
    throw ContractError("gaussian density: covariance must be symmetric positive definite");
  }
  RadialDensity d;
  d.kind_ = Kind::gaussian;
  d.mean_ = mean;
  d.cov_ = cov;
  d.chol_ = llt.matrixL();
  d.prec_ = cov.inverse();
  d.norm_ = 1.0 / (kTwoPi * std::sqrt(cov.determinant()));
  return d;
}

RadialDensity RadialDensity::mixture(std::vector<double> weights, std::vector<RadialDensity> parts) {
  if (weights.empty() || weights.size() != parts.size()) throw ContractError("mixture: weights and parts must match");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("mixture: weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ContractError("mixture: weights sum to zero");
  for (auto& w : weights) w /= total;
  for (const auto& p : parts) {
    if (!p.sampleable()) throw ContractError("mixture: components must be sampleable");
  }
  RadialDensity d;
  d.kind_ = Kind::mixture;
  d.weights_ = std::move(weights);
  d.parts_ = std::move(parts);
  return d;
}

RadialDensity RadialDensity::custom(std::function<double(const Vec2&)> p) {
  RadialDensity d;
  d.kind_ = Kind::custom;
  d.fn_ = std::move(p);
  return d;
}

double RadialDensity::operator()(const Vec2& x) const {
  switch (kind_) {
    case Kind::gaussian: {
      const Vec2 z = x - mean_;
      return norm_ * std::exp(-0.5 * z.dot(prec_ * z));
    }
    case Kind::mixture: {
      double s = 0.0;
      for (std::size_t i = 0; i < parts_.size(); ++i) s += weights_[i] * parts_[i](x);
      return s;
    }
    case Kind::custom: return fn_(x);
  }
  return 0.0;
}

Vec2 RadialDensity::sample(std::mt19937_64& rng) const {
  switch (kind_) {
    case Kind::gaussian: {
      std::normal_distribution<double> n;
      const double a = n(rng);
      const double b = n(rng);
      return mean_ + chol_ * Vec2(a, b);
    }
    case Kind::mixture: {
      std::discrete_distribution<std::size_t> pick(weights_.begin(), weights_.end());
      return parts_[pick(rng)].sample(rng);
    }
    case Kind::custom: break;
  }
  throw ContractError("density: custom densities cannot be sampled");
}

RadialDensity RadialDensity::dilated(double s) const {
  if (!(s > 0.0)) throw ContractError("density: dilation must be positive");
  switch (kind_) {
    case Kind::gaussian: return gaussian(s * mean_, s * s * cov_);
    case Kind::mixture: {
      std::vector<RadialDensity> parts;
      for (const auto& p : parts_) parts.push_back(p.dilated(s));
      return mixture(weights_, std::move(parts));
    }
    case Kind::custom: {
      auto f = fn_;
      return custom([f, s](const Vec2& x) { return f(x / s) / (s * s); });
    }
  }
  return *this;
}

double radial_moment(const RadialDensity& p, double k, double theta, const QuadConfig& quad) {
  using boost::math::quadrature::gauss_kronrod;
  const Vec2 u(std::cos(theta), std::sin(theta));
  auto f = [&](double t) { return t > 0.0 ? std::pow(t, k) * p(t * u) : (k == 0.0 ? p(Vec2::Zero()) : 0.0); };
  double t = 1.0;
  double acc = gauss_kronrod<double, 61>::integrate(f, 0.0, t, 15, quad.rel_tol);
  for (int i = 0; i < quad.max_doublings; ++i) {
    const double tail = gauss_kronrod<double, 61>::integrate(f, t, 2.0 * t, 15, quad.rel_tol);
    acc += tail;
    t *= 2.0;
    if (!std::isfinite(acc)) break;
    if (std::abs(tail) <= quad.tail_tol * std::abs(acc)) return acc;
  }
  throw NumericalError("radial_moment: integral does not converge (tail not decreasing, exponent " + io::fmt(k) + ")");
}

double rho_p_alpha(const RadialDensity& p, double alpha, double theta, const QuadConfig& quad) {
  if (!(alpha > 0.0)) throw ContractError("rho_p_alpha: alpha must be > 0");
  const double m = radial_moment(p, kDim + 1.0 - alpha, theta, quad);
  return std::pow(m, 1.0 / (kDim + alpha));
}

StarBody optimal_star_body(const RadialDensity& pr, const RadialDensity* pn, double alpha, int m, bool unit_volume,
                           const QuadConfig& quad) {
  if (m < 3) throw ContractError("optimal_star_body: need at least 3 directions");
  const double e = kDim + alpha;
  std::vector<double> r(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double theta = kTwoPi * j / m;
    const double a = rho_p_alpha(pr, alpha, theta, quad);
    const double b = pn ? rho_p_alpha(*pn, alpha, theta, quad) : 0.0;
    if (!(a > b)) {
      throw ContractError("optimal_star_body: rho_r <= rho_n in direction " + std::to_string(j) + " (angle " +
                          io::fmt(theta) + " rad): " + io::fmt(a) + " <= " + io::fmt(b));
    }
    r[j] = std::pow(std::pow(a, e) - std::pow(b, e), 1.0 / e);
  }
  StarBody c(std::move(r));
  if (unit_volume) c = c.scaled(std::pow(c.volume(), -1.0 / kDim));
  return c;
}

StarBody harmonic_combination(const StarBody& k, const StarBody& c, double alpha) {
  require_aligned(k, c, "harmonic_combination");
  if (!(alpha > 0.0)) throw ContractError("harmonic_combination: alpha must be > 0");
  std::vector<double> r(k.radii().size());
  for (int j = 0; j < k.size(); ++j) {
    r[j] = std::pow(std::pow(k.radius(j), -alpha) + std::pow(c.radius(j), -alpha), -1.0 / alpha);
  }
  return StarBody(std::move(r));
}

StarBody harmonic_difference(const StarBody& m, const StarBody& c, double alpha) {
  require_aligned(m, c, "harmonic_difference");
  if (!(alpha > 0.0)) throw ContractError("harmonic_difference: alpha must be > 0");
  std::vector<double> r(m.radii().size());
  for (int j = 0; j < m.size(); ++j) {
    const double g = std::pow(m.radius(j), -alpha) - std::pow(c.radius(j), -alpha);
    if (!(g > 0.0)) throw ContractError("harmonic_difference: C does not strictly contain M at node " + std::to_string(j));
    r[j] = std::pow(g, -1.0 / alpha);
  }
  return StarBody(std::move(r));
}

double dual_mixed_volume(const StarBody& c, const StarBody& k, double i) {
  require_aligned(c, k, "dual_mixed_volume");
  double s = 0.0;
  for (int j = 0; j < c.size(); ++j) s += std::pow(c.radius(j), kDim - i) * std::pow(k.radius(j), i);
  return s * (kTwoPi / c.size()) / kDim;
}

JensenReport jensen_test(const std::function<double(const Vec2&)>& f, int triples, double lo, double hi,
                         std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(lo, hi), unit(0.0, 1.0);
  JensenReport rep;
  rep.triples = triples;
  rep.worst = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < triples; ++n) {
    const Vec2 x(box(rng), box(rng));
    const Vec2 y(box(rng), box(rng));
    const double l = unit(rng);
    const double fx = f(x), fy = f(y), fm = f(l * x + (1.0 - l) * y);
    const double scale = std::max({1.0, std::abs(fx), std::abs(fy), std::abs(fm)});
    const double v = (fm - (l * fx + (1.0 - l) * fy)) / scale;
    rep.worst = std::max(rep.worst, v);
    if (v > tol) ++rep.violations;
  }
  return rep;
}

DcWitnessReport dc_witness_check(const StarBody& k, const StarBody& c, double alpha, int samples, std::uint64_t seed,
                                 double box) {
  if (!(alpha >= 1.0)) throw ContractError("dc_witness_check: alpha must be >= 1");
  const StarBody m = harmonic_combination(k, c, alpha);
  DcWitnessReport rep;
  rep.m_convex = jensen_test([&](const Vec2& x) { return std::pow(m.gauge(x), alpha); }, samples, -box, box, seed);
  rep.c_convex = jensen_test([&](const Vec2& x) { return std::pow(c.gauge(x), alpha); }, samples, -box, box, seed + 1);
  double worst = 0.0;
  for (int j = 0; j < k.size(); ++j) {
    const Vec2 u = k.direction(j);
    const double gm = std::pow(m.gauge(u), alpha);
    const double diff = std::pow(k.gauge(u), alpha) - (gm - std::pow(c.gauge(u), alpha));
    worst = std::max(worst, std::abs(diff) / std::max(1.0, gm));
  }
  rep.identity_error = worst;
  rep.identity_pass = worst <= 1e-12;
  return rep;
}

double spherical_objective(const RadialDensity& p, double alpha, const StarBody& k, const QuadConfig& quad) {
  double s = 0.0;
  for (int j = 0; j < k.size(); ++j) {
    s += radial_moment(p, kDim + alpha - 1.0, k.angle(j), quad) * std::pow(k.radius(j), -alpha);
  }
  return s * kTwoPi / k.size();
}

namespace {

IdentitySide identity_side(const RadialDensity& p, double alpha, const StarBody& k, int samples, std::uint64_t seed,
                           const QuadConfig& quad) {
  if (!p.sampleable()) throw ContractError("objective_identity_check: density must be sampleable");
  if (samples < 2) throw ContractError("objective_identity_check: need at least 2 samples");
  std::mt19937_64 rng(seed);
  double mean = 0.0, m2 = 0.0;
  for (int n = 1; n <= samples; ++n) {
    const double v = std::pow(k.gauge(p.sample(rng)), alpha);
    const double delta = v - mean;
    mean += delta / n;
    m2 += delta * (v - mean);
  }
  IdentitySide side;
  side.mc_mean = mean;
  side.mc_stderr = std::sqrt(m2 / (samples - 1) / samples);
  side.quadrature = spherical_objective(p, alpha, k, quad);
  return side;
}

}  // namespace

ObjectiveIdentityReport objective_identity_check(const RadialDensity& pr, const RadialDensity* pn, double alpha,
                                                 const StarBody& k, int samples, std::uint64_t seed,
                                                 const QuadConfig& quad) {
  ObjectiveIdentityReport rep;
  rep.clean = identity_side(pr, alpha, k, samples, seed, quad);
  if (pn) rep.noisy = identity_side(*pn, alpha, k, samples, seed + 1, quad);
  return rep;
}

LocalOptimalityReport optimality_sweep(const StarBody& c, const StarBody& k, double alpha, int trials,
                                       std::uint64_t seed) {
  require_aligned(c, k, "optimality_sweep");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, kTwoPi), width(0.05, 0.6);
  std::bernoulli_distribution sign;
  auto objective = [&](const StarBody& b) {
    const StarBody u = b.scaled(std::pow(b.volume(), -1.0 / kDim));
    return dual_mixed_volume(c, u, -alpha);
  };
  LocalOptimalityReport rep;
  rep.base = objective(k);
  rep.trials = trials;
  rep.worst_change = std::numeric_limits<double>::infinity();
  for (int n = 0; n < trials; ++n) {
    const double center = angle(rng), w = width(rng), s = sign(rng) ? 0.01 : -0.01;
    std::vector<double> r = k.radii();
    for (int j = 0; j < k.size(); ++j) {
      double d = std::remainder(k.angle(j) - center, kTwoPi);
      r[j] *= 1.0 + s * std::exp(-0.5 * (d / w) * (d / w));
    }
    rep.worst_change = std::min(rep.worst_change, objective(StarBody(std::move(r))) - rep.base);
  }
  return rep;
}

std::string star_body_csv(const StarBody& k) {
  std::string out = "angle,radius\n";
  for (int j = 0; j < k.size(); ++j) out += io::fmt(k.angle(j)) + "," + io::fmt(k.radius(j)) + "\n";
  return out;
}

std::string contour_csv(const std::function<double(const Vec2&)>& f, double lo, double hi, int res) {
  if (res < 2) throw ContractError("contour_csv: resolution must be >= 2");
  std::string out = "x,y,value\n";
  for (int i = 0; i < res; ++i) {
    const double yv = lo + (hi - lo) * i / (res - 1);
    for (int j = 0; j < res; ++j) {
      const double xv = lo + (hi - lo) * j / (res - 1);
      out += io::fmt(xv) + "," + io::fmt(yv) + "," + io::fmt(f(Vec2(xv, yv))) + "\n";
    }
  }
  return out;
}

}  // namespace dcreg
