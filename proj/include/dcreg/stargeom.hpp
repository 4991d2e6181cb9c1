#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcreg {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Planar star body sampled on M equally spaced directions theta_j = 2 pi j / M.
///
/// Between nodes the boundary is the chord joining the two sampled boundary
/// points, so the gauge is piecewise linear in x. A sampled convex body is
/// therefore a convex polygon and its gauge is exactly convex.
class StarBody {
 public:
  StarBody() = default;
  explicit StarBody(std::vector<double> radii);

  static StarBody from_radial(int m, const std::function<double(double)>& rho);
  /// rho(u) = 1 / gauge(u) on the nodes.
  static StarBody from_gauge(int m, const std::function<double(const Vec2&)>& gauge);
  static StarBody disc(int m, double r = 1.0);
  /// Unit ball of the l_p norm (p = inf allowed).
  static StarBody lp_ball(int m, double p, double scale = 1.0);

  int size() const { return static_cast<int>(radii_.size()); }
  double angle(int j) const;
  Vec2 direction(int j) const;
  const std::vector<double>& radii() const { return radii_; }
  double radius(int j) const { return radii_[static_cast<std::size_t>(j)]; }

  /// Interpolated radial function along angle theta.
  double radial(double theta) const;
  double gauge(const Vec2& x) const;
  StarBody scaled(double s) const;
  /// (1/2) (2 pi / M) sum rho_j^2.
  double volume() const;

 private:
  void build();
  int cone(double theta) const;

  std::vector<double> radii_;
  std::vector<Vec2> normals_;  // <normals_[j], x> = gauge on cone j
};

/// Gauge of a star body; 0 at the origin.
double gauge(const StarBody& k, const Vec2& x);

/// Planar density with optional sampling.
class RadialDensity {
 public:
  enum class Kind { gaussian, mixture, custom };

  static RadialDensity gaussian(Vec2 mean, Mat2 cov);
  static RadialDensity mixture(std::vector<double> weights, std::vector<RadialDensity> parts);
  static RadialDensity custom(std::function<double(const Vec2&)> p);

  Kind kind() const { return kind_; }
  double operator()(const Vec2& x) const;
  bool sampleable() const { return kind_ != Kind::custom; }
  Vec2 sample(std::mt19937_64& rng) const;
  /// Density of x -> s x: p(x / s) / s^2.
  RadialDensity dilated(double s) const;

 private:
  Kind kind_ = Kind::custom;
  Vec2 mean_ = Vec2::Zero();
  Mat2 cov_ = Mat2::Identity();
  Mat2 chol_ = Mat2::Identity();
  Mat2 prec_ = Mat2::Identity();
  double norm_ = 0.0;
  std::vector<double> weights_;
  std::vector<RadialDensity> parts_;
  std::function<double(const Vec2&)> fn_;
};

struct QuadConfig {
  double rel_tol = 1e-10;
  double tail_tol = 1e-12;  // stop when the tail over [t, 2t] is below this fraction of the integral
  int max_doublings = 60;
};

/// int_0^inf t^k p(t u) dt along the direction with angle theta.
double radial_moment(const RadialDensity& p, double k, double theta, const QuadConfig& quad = {});

/// (int_0^inf t^{d+1-alpha} p(t u) dt)^{1/(d+alpha)} with d = 2.
double rho_p_alpha(const RadialDensity& p, double alpha, double theta, const QuadConfig& quad = {});

/// Radial samples (rho_r^{d+alpha} - rho_n^{d+alpha})^{1/(d+alpha)}; no noise
/// density means rho_n = 0. Throws ContractError naming the first direction
/// where rho_r <= rho_n. With `unit_volume` the body is rescaled to volume 1.
StarBody optimal_star_body(const RadialDensity& pr, const RadialDensity* pn, double alpha, int m,
                           bool unit_volume = false, const QuadConfig& quad = {});

/// rho^{-alpha} = rho_K^{-alpha} + rho_C^{-alpha} node by node.
StarBody harmonic_combination(const StarBody& k, const StarBody& c, double alpha);
/// Inverse of the combination: rho_K^{-alpha} = rho_M^{-alpha} - rho_C^{-alpha}.
/// Needs rho_M < rho_C on every node.
StarBody harmonic_difference(const StarBody& m, const StarBody& c, double alpha);

/// (1/d) int rho_C^{d-i} rho_K^i du by the trapezoidal rule on the nodes.
double dual_mixed_volume(const StarBody& c, const StarBody& k, double i);

struct JensenReport {
  int triples = 0;
  int violations = 0;
  double worst = 0.0;  // largest f(mix) - mix(f) scaled by max(1, |values|)
  bool pass() const { return violations == 0; }
};

/// Random triples (x, y, lambda) in [lo, hi]^2; f(lambda x + (1-lambda) y) <=
/// lambda f(x) + (1-lambda) f(y) + tol max(1, |values|).
JensenReport jensen_test(const std::function<double(const Vec2&)>& f, int triples, double lo, double hi,
                         std::uint64_t seed, double tol = 1e-9);

struct DcWitnessReport {
  JensenReport m_convex;   // x -> gauge_M(x)^alpha
  JensenReport c_convex;   // x -> gauge_C(x)^alpha
  double identity_error = 0.0;  // max over nodes of |g_K^a - (g_M^a - g_C^a)| / max(1, g_M^a)
  bool identity_pass = false;
  bool pass() const { return m_convex.pass() && c_convex.pass() && identity_pass; }
};

/// Builds M = harmonic_combination(K, C, alpha) and checks the DC decomposition
/// gauge_K^alpha = gauge_M^alpha - gauge_C^alpha with both parts convex.
DcWitnessReport dc_witness_check(const StarBody& k, const StarBody& c, double alpha, int samples, std::uint64_t seed,
                                 double box = 3.0);

struct IdentitySide {
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
  double quadrature = 0.0;
  bool agree() const { return std::abs(mc_mean - quadrature) <= 3.0 * mc_stderr; }
};

struct ObjectiveIdentityReport {
  IdentitySide clean;
  std::optional<IdentitySide> noisy;
  bool pass() const { return clean.agree() && (!noisy || noisy->agree()); }
};

/// E_p[gauge_K(x)^alpha] by Monte Carlo against int m(u) rho_K(u)^{-alpha} du,
/// m(u) = int_0^inf r^{d+alpha-1} p(r u) dr.
ObjectiveIdentityReport objective_identity_check(const RadialDensity& pr, const RadialDensity* pn, double alpha,
                                                 const StarBody& k, int samples, std::uint64_t seed,
                                                 const QuadConfig& quad = {});

/// Angular quadrature of int m(u) rho_K(u)^{-alpha} du (the quadrature side above).
double spherical_objective(const RadialDensity& p, double alpha, const StarBody& k, const QuadConfig& quad = {});

struct LocalOptimalityReport {
  double base = 0.0;          // V_{-alpha}(C, K) at the candidate
  double worst_change = 0.0;  // min over perturbations of objective(K') - base
  int trials = 0;
  bool pass(double tol = 1e-9) const { return worst_change >= -tol * std::max(1.0, std::abs(base)); }
};

/// Radial +-1% bumps of a unit-volume K (renormalized to unit volume) must not
/// decrease V_{-alpha}(C, K).
LocalOptimalityReport optimality_sweep(const StarBody& c, const StarBody& k, double alpha, int trials,
                                       std::uint64_t seed);

/// CSV angle,radius.
std::string star_body_csv(const StarBody& k);
/// CSV x,y,value of f on a res x res grid over [lo, hi]^2.
std::string contour_csv(const std::function<double(const Vec2&)>& f, double lo, double hi, int res);

}  // namespace dcreg
