#include "dcreg/solve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>

#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg {

Vec ConvexTerm::prox(const Vec&, double) const {
  throw ContractError(name() + ": no proximal map available");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

class ZeroTerm final : public ConvexTerm {
 public:
  std::string name() const override { return "zero"; }
  double value(const Vec&) const override { return 0.0; }
  Vec grad(const Vec& x) const override { return Vec::Zero(x.size()); }
  bool has_prox() const override { return true; }
  Vec prox(const Vec& v, double) const override { return v; }
  double smoothness() const override { return 0.0; }
};

class L1Term final : public ConvexTerm {
 public:
  std::string name() const override { return "l1"; }
  double value(const Vec& x) const override { return x.lpNorm<1>(); }
  Vec grad(const Vec& x) const override { return x.unaryExpr(&sgn); }
  bool has_prox() const override { return true; }
  Vec prox(const Vec& v, double tau) const override {
    return v.unaryExpr([tau](double s) { return sgn(s) * std::max(std::abs(s) - tau, 0.0); });
  }
  double smoothness() const override { return kInf; }
};

class L2Term final : public ConvexTerm {
 public:
  std::string name() const override { return "l2"; }
  double value(const Vec& x) const override { return x.norm(); }
  Vec grad(const Vec& x) const override {
    double n = x.norm();
    return n > 0.0 ? Vec(x / n) : Vec(Vec::Zero(x.size()));
  }
  bool has_prox() const override { return true; }
  Vec prox(const Vec& v, double tau) const override {
    double n = v.norm();
    if (n <= tau) return Vec::Zero(v.size());
    return (1.0 - tau / n) * v;
  }
  double smoothness() const override { return kInf; }
};

class QuadraticTerm final : public ConvexTerm {
 public:
  explicit QuadraticTerm(double rho) : rho_(rho) {}
  std::string name() const override { return "quadratic"; }
  double value(const Vec& x) const override { return 0.5 * rho_ * x.squaredNorm(); }
  Vec grad(const Vec& x) const override { return rho_ * x; }
  bool has_prox() const override { return true; }
  Vec prox(const Vec& v, double tau) const override { return v / (1.0 + tau * rho_); }
  double smoothness() const override { return rho_; }

 private:
  double rho_;
};

class TvTerm final : public ConvexTerm {
 public:
  TvTerm(int rows, int cols, int iters) : rows_(rows), cols_(cols), iters_(iters) {}
  std::string name() const override { return "tv"; }

  double value(const Vec& x) const override { return diff(x).lpNorm<1>(); }
  Vec grad(const Vec& x) const override { return diff_t(diff(x).unaryExpr(&sgn)); }
  bool has_prox() const override { return true; }

  // Dual projected gradient with Nesterov momentum on p in [-1, 1]:
  // z = v - tau D^T p.
  Vec prox(const Vec& v, double tau) const override {
    check(v);
    if (tau <= 0.0) return v;
    const Eigen::Index m = static_cast<Eigen::Index>(rows_) * (cols_ - 1) + static_cast<Eigen::Index>(rows_ - 1) * cols_;
    Vec p = Vec::Zero(m), q = p;
    double t = 1.0;
    const double step = 1.0 / (8.0 * tau);
    for (int k = 0; k < iters_; ++k) {
      Vec z = v - tau * diff_t(q);
      Vec pn = (q + step * diff(z)).cwiseMax(-1.0).cwiseMin(1.0);
      double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      q = pn + ((t - 1.0) / tn) * (pn - p);
      p = std::move(pn);
      t = tn;
    }
    return v - tau * diff_t(p);
  }
  double smoothness() const override { return kInf; }

 private:
  void check(const Vec& x) const {
    if (x.size() != static_cast<Eigen::Index>(rows_) * cols_) throw ShapeError("tv: vector does not match the image grid");
  }
  Vec diff(const Vec& x) const {
    check(x);
    Vec d(static_cast<Eigen::Index>(rows_) * (cols_ - 1) + static_cast<Eigen::Index>(rows_ - 1) * cols_);
    Eigen::Index k = 0;
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c + 1 < cols_; ++c) d[k++] = x[r * cols_ + c + 1] - x[r * cols_ + c];
    for (int r = 0; r + 1 < rows_; ++r)
      for (int c = 0; c < cols_; ++c) d[k++] = x[(r + 1) * cols_ + c] - x[r * cols_ + c];
    return d;
  }
  Vec diff_t(const Vec& d) const {
    Vec x = Vec::Zero(static_cast<Eigen::Index>(rows_) * cols_);
    Eigen::Index k = 0;
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c + 1 < cols_; ++c, ++k) {
        x[r * cols_ + c + 1] += d[k];
        x[r * cols_ + c] -= d[k];
      }
    for (int r = 0; r + 1 < rows_; ++r)
      for (int c = 0; c < cols_; ++c, ++k) {
        x[(r + 1) * cols_ + c] += d[k];
        x[r * cols_ + c] -= d[k];
      }
    return x;
  }

  int rows_;
  int cols_;
  int iters_;
};

class NetworkTerm final : public ConvexTerm {
 public:
  explicit NetworkTerm(IcnnParams p) : p_(std::move(p)) {}
  std::string name() const override { return "icnn"; }
  double value(const Vec& x) const override { return icnn_eval(p_, x); }
  Vec grad(const Vec& x) const override { return icnn_grad_x(p_, x); }
  double smoothness() const override { return kNaN; }

 private:
  IcnnParams p_;
};

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

// Smooth part of a composite problem min f(x) + tau h(x).
struct Smooth {
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> g;
};

struct InnerResult {
  Vec x;
  int iters = 0;
};

// FISTA with backtracking and a function-value restart. The returned point
// never has a larger composite value than the start.
InnerResult fista(const Smooth& s, const ConvexTerm* h, double tau, const Vec& x0, double l0, double tol,
                  int max_iter) {
  auto phi = [&](const Vec& v, double fv) { return h ? fv + tau * h->value(v) : fv; };
  Vec x = x0;
  double fx = s.f(x);
  double phix = phi(x, fx);
  Vec y = x;
  double t = 1.0;
  double lip = l0 > 0.0 ? l0 : 1.0;
  InnerResult res;
  for (int k = 0; k < max_iter; ++k) {
    res.iters = k + 1;
    const double fy = s.f(y);
    const Vec gy = s.g(y);
    Vec z, d;
    double fz = 0.0;
    for (int bt = 0; bt < 200; ++bt) {
      z = h ? h->prox(y - gy / lip, tau / lip) : Vec(y - gy / lip);
      d = z - y;
      fz = s.f(z);
      if (fz <= fy + gy.dot(d) + 0.5 * lip * d.squaredNorm() + 1e-15 * (1.0 + std::abs(fy))) break;
      lip *= 2.0;
    }
    const double gm = lip * d.norm();
    const double phiz = phi(z, fz);
    if (phiz > phix) {
      if (t > 1.0) {
        y = x;
        t = 1.0;
        continue;
      }
      break;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / tn) * (z - x);
    x = std::move(z);
    phix = phiz;
    t = tn;
    if (gm <= tol) break;
  }
  res.x = std::move(x);
  return res;
}

using Clock = std::chrono::steady_clock;

class Recorder {
 public:
  Recorder(const Objective& obj, SolverTrace& tr, const SolverConfig& cfg)
      : obj_(obj), tr_(tr), cfg_(cfg), start_(Clock::now()) {}

  // Returns false (and marks the trace aborted) on a non-finite or unbounded objective.
  bool record(int t, const Vec& x, const Vec* prev, TraceRecord rec = {}) {
    rec.t = t;
    rec.f = obj_.value(x);
    rec.grad_norm = obj_.grad(x).norm();
    rec.step_norm = prev ? (x - *prev).norm() : 0.0;
    rec.time_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    tr_.records.push_back(rec);
    if (cfg_.observer) cfg_.observer(t, x);
    if (!x.allFinite() || !std::isfinite(rec.f)) {
      tr_.aborted = true;
      tr_.message = "non-finite iterate at t=" + std::to_string(t);
      return false;
    }
    if (rec.f < -1e12) {
      tr_.aborted = true;
      tr_.message = "objective unbounded below at t=" + std::to_string(t);
      return false;
    }
    return true;
  }

 private:
  const Objective& obj_;
  SolverTrace& tr_;
  const SolverConfig& cfg_;
  Clock::time_point start_;
};

bool stop_now(const SolverConfig& cfg, const Vec& x, const Vec& prev) {
  if (!cfg.early_stop) return false;
  double nx = x.norm();
  return (x - prev).norm() <= cfg.stop_tol * (nx > 0.0 ? nx : 1.0);
}

double gd_bound(const Objective& obj) { return 1.0 / (1.01 * obj.a_norm * obj.a_norm + obj.mu * obj.l1); }

}  // namespace

TermPtr zero_term() { return std::make_shared<ZeroTerm>(); }
TermPtr l1_term() { return std::make_shared<L1Term>(); }
TermPtr l2_term() { return std::make_shared<L2Term>(); }
TermPtr quadratic_term(double rho) {
  if (!(rho >= 0.0)) throw ContractError("quadratic term: rho must be >= 0");
  return std::make_shared<QuadraticTerm>(rho);
}
TermPtr tv_term(int rows, int cols, int prox_iters) {
  if (rows < 1 || cols < 1) throw ContractError("tv term: empty grid");
  if (prox_iters < 1) throw ContractError("tv term: prox_iters must be >= 1");
  return std::make_shared<TvTerm>(rows, cols, prox_iters);
}
TermPtr network_term(IcnnParams p) { return std::make_shared<NetworkTerm>(std::move(p)); }

Objective::Objective(LinearOp op, Vec data, TermPtr first, TermPtr second, double weight, double norm)
    : a(std::move(op)), y(std::move(data)), r1(std::move(first)), r2(std::move(second)), mu(weight) {
  if (y.size() != a.out_dim()) throw ShapeError("objective: y has length " + std::to_string(y.size()) +
                                                ", operator output is " + std::to_string(a.out_dim()));
  if (!r1 || !r2) throw ContractError("objective: missing regularizer term");
  if (!(mu >= 0.0)) throw ContractError("objective: mu must be >= 0");
  a_norm = norm >= 0.0 ? norm : op_norm(a, 500).norm;
  l1 = finite_or_zero(r1->smoothness());
  l2 = finite_or_zero(r2->smoothness());
}

Objective Objective::from_regularizer(LinearOp op, Vec data, const DcRegularizer& r, double weight, double norm) {
  if (r.input_dim() != op.in_dim()) throw ShapeError("objective: regularizer dimension does not match the operator");
  TermPtr second;
  switch (r.mode) {
    case DcMode::dc: second = network_term(r.r2); break;
    case DcMode::convex_only: second = zero_term(); break;
    case DcMode::weakly_convex: second = quadratic_term(r.rho); break;
  }
  return Objective(std::move(op), std::move(data), network_term(r.r1), second, weight, norm);
}

void Objective::estimate_smoothness(const DcRegularizer& r, double lo, double hi, int pairs, std::uint64_t seed) {
  l1 = dcreg::estimate_smoothness(r.r1, lo, hi, pairs, seed).l_hat;
  if (r.mode == DcMode::dc) l2 = dcreg::estimate_smoothness(r.r2, lo, hi, pairs, seed + 1).l_hat;
}

Fidelity data_fidelity(const LinearOp& a, const Vec& y, const Vec& x) {
  if (x.size() != a.in_dim() || y.size() != a.out_dim()) throw ShapeError("data_fidelity: dimension mismatch");
  Vec r = a.apply(x) - y;
  return {0.5 * r.squaredNorm(), a.adjoint(r)};
}

double Objective::value(const Vec& x) const {
  return data_fidelity(a, y, x).value + mu * (r1->value(x) - r2->value(x));
}

Vec Objective::grad(const Vec& x) const {
  return data_fidelity(a, y, x).grad + mu * (r1->grad(x) - r2->grad(x));
}

void SolverConfig::validate() const {
  if (iterations < 1) throw ConfigError("solver: T must be >= 1");
  if (inner < 1) throw ConfigError("solver: N must be >= 1");
  if (alpha < 0.0) throw ConfigError("solver: alpha must be > 0 (or 0 for auto)");
  if (gamma < 0.0) throw ConfigError("solver: gamma must be > 0 (or 0 for 1/alpha)");
  if (!(inner_tol > 0.0)) throw ConfigError("solver: inner_tol must be > 0");
  if (inner_max < 1) throw ConfigError("solver: inner_max must be >= 1");
}

double psm_auto_alpha(double a_norm) {
  if (!(a_norm > 0.0)) throw ContractError("psm: operator norm must be positive");
  return 1.0 / (1.01 * a_norm * a_norm);
}

Vec initial_point(const Objective& obj, const SolverConfig& cfg) {
  switch (cfg.init) {
    case InitPolicy::zeros: return Vec::Zero(obj.dim());
    case InitPolicy::custom:
      if (cfg.x0.size() != obj.dim()) throw ShapeError("solver: custom x0 has the wrong length");
      return cfg.x0;
    case InitPolicy::pseudo_inverse: break;
  }
  return pseudo_inverse_init(obj.a, obj.y, cfg.init_ridge).x;
}

SolverTrace solve_gd(const Objective& obj, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm != Algorithm::gd) throw ConfigError("solve_gd: config is for " + algorithm_name(cfg.algorithm));
  const double bound = 1.0 / (obj.a_norm * obj.a_norm + obj.mu * obj.l1);
  const double alpha = cfg.alpha > 0.0 ? cfg.alpha : gd_bound(obj);
  if (alpha > bound * (1.0 + 1e-12)) {
    throw ConfigError("solve_gd: alpha exceeds 1/(|A|^2 + mu L1) = " + io::fmt(bound));
  }
  SolverTrace tr;
  tr.algorithm = Algorithm::gd;
  tr.alpha = alpha;
  Recorder rec(obj, tr, cfg);
  Vec x = initial_point(obj, cfg);
  if (!rec.record(0, x, nullptr)) return tr;
  for (int t = 1; t <= cfg.iterations; ++t) {
    Vec prev = x;
    x -= alpha * obj.grad(x);
    if (!rec.record(t, x, &prev) || stop_now(cfg, x, prev)) break;
  }
  tr.x = std::move(x);
  return tr;
}

SolverTrace solve_dca(const Objective& obj, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm != Algorithm::dca) throw ConfigError("solve_dca: config is for " + algorithm_name(cfg.algorithm));
  const double mu = obj.mu;
  const bool use_prox = obj.r1->has_prox();
  const double lq = 1.01 * obj.a_norm * obj.a_norm + (use_prox ? 0.0 : mu * obj.l1);
  const double step = 1.0 / lq;
  SolverTrace tr;
  tr.algorithm = Algorithm::dca;
  tr.alpha = step;
  Recorder rec(obj, tr, cfg);
  Vec x = initial_point(obj, cfg);
  if (!rec.record(0, x, nullptr)) return tr;

  for (int t = 1; t <= cfg.iterations; ++t) {
    const Vec xt = x;
    const Vec g2 = obj.r2->grad(xt);
    const double r2t = obj.r2->value(xt);
    // q(z; x_t) = L(z) + mu R1(z) - mu R2(x_t) - mu <g2, z - x_t>
    auto q = [&](const Vec& z) {
      return data_fidelity(obj.a, obj.y, z).value + mu * obj.r1->value(z) - mu * r2t - mu * g2.dot(z - xt);
    };
    Smooth s;
    if (use_prox) {
      s.f = [&](const Vec& z) { return data_fidelity(obj.a, obj.y, z).value - mu * g2.dot(z); };
      s.g = [&](const Vec& z) { return Vec(data_fidelity(obj.a, obj.y, z).grad - mu * g2); };
    } else {
      s.f = [&](const Vec& z) { return data_fidelity(obj.a, obj.y, z).value + mu * obj.r1->value(z) - mu * g2.dot(z); };
      s.g = [&](const Vec& z) { return Vec(data_fidelity(obj.a, obj.y, z).grad + mu * (obj.r1->grad(z) - g2)); };
    }
    TraceRecord r;
    r.q_prev = q(xt);
    if (cfg.inner_mode == InnerMode::exact) {
      InnerResult in = fista(s, use_prox ? obj.r1.get() : nullptr, mu, xt, lq, cfg.inner_tol, cfg.inner_max);
      x = std::move(in.x);
      r.inner_iters = in.iters;
    } else {
      for (int k = 0; k < cfg.inner; ++k) {
        Vec v = x - step * s.g(x);
        x = use_prox ? obj.r1->prox(v, mu * step) : v;
      }
      r.inner_iters = cfg.inner;
    }
    r.q_next = q(x);
    if (!rec.record(t, x, &xt, r) || stop_now(cfg, x, xt)) break;
  }
  tr.x = std::move(x);
  return tr;
}

SolverTrace solve_psm(const Objective& obj, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.algorithm != Algorithm::psm) throw ConfigError("solve_psm: config is for " + algorithm_name(cfg.algorithm));
  const double limit = 1.0 / (obj.a_norm * obj.a_norm);
  const double alpha = cfg.alpha > 0.0 ? cfg.alpha : psm_auto_alpha(obj.a_norm);
  if (alpha > limit * (1.0 + 1e-12)) throw ConfigError("solve_psm: alpha must lie in (0, 1/|A|^2 = " + io::fmt(limit) + "]");
  const double gamma = cfg.gamma > 0.0 ? cfg.gamma : 1.0 / alpha;
  if (std::abs(gamma * alpha - 1.0) > 1e-12) throw ConfigError("solve_psm: gamma must equal 1/alpha");
  const double mu = obj.mu;
  SolverTrace tr;
  tr.algorithm = Algorithm::psm;
  tr.alpha = alpha;
  tr.gamma = gamma;
  Recorder rec(obj, tr, cfg);
  Vec x = initial_point(obj, cfg);
  if (!rec.record(0, x, nullptr)) return tr;

  for (int t = 1; t <= cfg.iterations; ++t) {
    const Vec xt = x;
    const Vec v = xt - alpha * (data_fidelity(obj.a, obj.y, xt).grad - mu * obj.r2->grad(xt));
    TraceRecord r;
    if (obj.r1->has_prox()) {
      x = obj.r1->prox(v, mu / gamma);
      r.inner_iters = 0;
    } else {
      // argmin_z (gamma/2)|z - v|^2 + mu R1(z)
      Smooth s;
      s.f = [&](const Vec& z) { return 0.5 * gamma * (z - v).squaredNorm() + mu * obj.r1->value(z); };
      s.g = [&](const Vec& z) { return Vec(gamma * (z - v) + mu * obj.r1->grad(z)); };
      const double lp = gamma + mu * obj.l1;
      if (cfg.inner_mode == InnerMode::exact) {
        InnerResult in = fista(s, nullptr, 0.0, v, lp, cfg.inner_tol, cfg.inner_max);
        x = std::move(in.x);
        r.inner_iters = in.iters;
      } else {
        x = v;
        for (int k = 0; k < cfg.inner; ++k) x -= s.g(x) / lp;
        r.inner_iters = cfg.inner;
      }
    }
    if (!rec.record(t, x, &xt, r) || stop_now(cfg, x, xt)) break;
  }
  tr.x = std::move(x);
  return tr;
}

SolverTrace solve(const Objective& obj, const SolverConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::gd: return solve_gd(obj, cfg);
    case Algorithm::dca: return solve_dca(obj, cfg);
    case Algorithm::psm: return solve_psm(obj, cfg);
  }
  throw ConfigError("solve: unknown algorithm");
}

namespace {

double f_gap(const SolverTrace& tr) {
  double fmin = tr.records.front().f;
  for (const auto& r : tr.records) fmin = std::min(fmin, r.f);
  return tr.records.front().f - fmin;
}

}  // namespace

RateReport check_dca_rate(const SolverTrace& trace, double l1, double a_norm) {
  RateReport rep;
  rep.name = "dca_gradient_rate";
  if (trace.records.size() < 2) throw ContractError("check_dca_rate: trace needs at least one step");
  const double tp1 = static_cast<double>(trace.records.size());
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < trace.records.size(); ++t) sum += trace.records[t].grad_norm * trace.records[t].grad_norm;
  rep.lhs = sum / tp1;
  rep.rhs = 2.0 * (a_norm * a_norm + l1) * f_gap(trace) / tp1;
  rep.pass = rep.lhs <= rep.rhs;
  return rep;
}

PsmRateReport check_psm_rates(const SolverTrace& trace, double l2, double a_norm, double alpha) {
  if (trace.records.size() < 2) throw ContractError("check_psm_rates: trace needs at least one step");
  if (!(alpha > 0.0)) throw ContractError("check_psm_rates: alpha must be > 0");
  PsmRateReport rep;
  const double tp1 = static_cast<double>(trace.records.size());
  const double gap = f_gap(trace);
  double steps = 0.0, grads = 0.0;
  double margin = kInf;
  for (std::size_t t = 1; t < trace.records.size(); ++t) {
    const auto& r = trace.records[t];
    steps += r.step_norm * r.step_norm;
    grads += r.grad_norm * r.grad_norm;
    margin = std::min(margin, trace.records[t - 1].f - r.f - r.step_norm * r.step_norm / (2.0 * alpha));
  }
  rep.step = {"psm_step_rate", steps / tp1, 2.0 * alpha * gap / tp1, false};
  rep.step.pass = rep.step.lhs <= rep.step.rhs;
  const double c = a_norm * a_norm + l2 + 1.0 / alpha;
  rep.gradient = {"psm_gradient_rate", grads / tp1, 2.0 * alpha * c * c * gap / tp1, false};
  rep.gradient.pass = rep.gradient.lhs <= rep.gradient.rhs;
  rep.decrease = {"psm_sufficient_decrease", margin, -1e-8, margin >= -1e-8};
  return rep;
}

double monotone_violation(const SolverTrace& trace, double tol) {
  double worst = -kInf;
  for (std::size_t t = 1; t < trace.records.size(); ++t) {
    const double prev = trace.records[t - 1].f;
    worst = std::max(worst, trace.records[t].f - prev - tol * (1.0 + std::abs(prev)));
  }
  return trace.records.size() < 2 ? 0.0 : worst;
}

std::string trace_csv(const SolverTrace& trace) {
  std::string out = "t,f,grad_norm,step_norm,time_ms\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.t) + "," + io::fmt(r.f) + "," + io::fmt(r.grad_norm) + "," + io::fmt(r.step_norm) + "," +
           io::fmt(r.time_ms) + "\n";
  }
  return out;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::gd: return "gd";
    case Algorithm::dca: return "dca";
    case Algorithm::psm: return "psm";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "gd") return Algorithm::gd;
  if (s == "dca") return Algorithm::dca;
  if (s == "psm") return Algorithm::psm;
  throw ConfigError("unknown algorithm '" + s + "' (expected gd, dca or psm)");
}

}  // namespace dcreg
