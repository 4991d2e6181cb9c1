#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dcreg/icnn.hpp"
#include "dcreg/linops.hpp"

namespace dcreg {

/// Convex function on R^d with a subgradient selection and, when one is
/// known in closed form (or by a dedicated inner method), a proximal map.
class ConvexTerm {
 public:
  virtual ~ConvexTerm() = default;
  virtual std::string name() const = 0;
  virtual double value(const Vec& x) const = 0;
  virtual Vec grad(const Vec& x) const = 0;
  virtual bool has_prox() const { return false; }
  /// argmin_z 0.5 |z - v|^2 + tau * value(z).
  virtual Vec prox(const Vec& v, double tau) const;
  /// Lipschitz constant of the gradient when known, NaN when it must be
  /// estimated, +inf for nonsmooth terms.
  virtual double smoothness() const = 0;
};

using TermPtr = std::shared_ptr<const ConvexTerm>;

TermPtr zero_term();
TermPtr l1_term();
/// Euclidean norm, subgradient 0 at the origin.
TermPtr l2_term();
/// (rho / 2) |x|^2.
TermPtr quadratic_term(double rho);
/// Anisotropic total variation of a rows x cols image (forward differences).
/// The prox is computed by a fast dual projected-gradient method.
TermPtr tv_term(int rows, int cols, int prox_iters = 200);
TermPtr network_term(IcnnParams p);

/// F(x) = 0.5 |A x - y|^2 + mu (R1(x) - R2(x)).
struct Objective {
  LinearOp a;
  Vec y;
  TermPtr r1;
  TermPtr r2;
  double mu = 1.0;
  double a_norm = 0.0;  // power-iteration estimate of |A|_2
  double l1 = 0.0;      // gradient Lipschitz constant of R1 (unscaled)
  double l2 = 0.0;      // same for R2

  /// A negative `norm` means: estimate |A|_2 by power iteration.
  Objective(LinearOp op, Vec data, TermPtr first, TermPtr second, double weight, double norm = -1.0);
  /// Terms from a learned regularizer; network smoothness constants stay at
  /// 0 until `estimate_smoothness` is called.
  static Objective from_regularizer(LinearOp op, Vec data, const DcRegularizer& r, double weight,
                                    double norm = -1.0);

  /// Fills l1 / l2 for network terms by sampling pairs in [lo, hi]^d.
  void estimate_smoothness(const DcRegularizer& r, double lo, double hi, int pairs, std::uint64_t seed);

  int dim() const { return a.in_dim(); }
  double value(const Vec& x) const;
  /// Selection gradient grad L + mu g1 - mu g2.
  Vec grad(const Vec& x) const;
};

struct Fidelity {
  double value = 0.0;
  Vec grad;
};

/// 0.5 |A x - y|^2 and its gradient A^T (A x - y).
Fidelity data_fidelity(const LinearOp& a, const Vec& y, const Vec& x);

enum class Algorithm { gd, dca, psm };
enum class InitPolicy { pseudo_inverse, zeros, custom };
enum class InnerMode { steps, exact };

struct SolverConfig {
  Algorithm algorithm = Algorithm::psm;
  int iterations = 100;  // T
  int inner = 1;         // N
  double alpha = 0.0;    // step size; 0 selects the automatic rule
  double gamma = 0.0;    // prox strength; 0 means 1/alpha
  InitPolicy init = InitPolicy::pseudo_inverse;
  Vec x0;                       // used with InitPolicy::custom
  double init_ridge = 1e-3;     // ridge of the pseudo-inverse start
  InnerMode inner_mode = InnerMode::steps;
  double inner_tol = 1e-10;     // gradient(-mapping) norm target in exact mode
  int inner_max = 200000;
  bool early_stop = false;
  double stop_tol = 1e-7;       // on |x_t - x_{t-1}| / |x_t|
  /// Called with every iterate, the start point included.
  std::function<void(int, const Vec&)> observer;

  /// Checks the algorithm-independent bounds (T >= 1, N >= 1, ...).
  void validate() const;
};

/// PSM step: alpha = 1 / (1.01 |A|^2), gamma = 1 / alpha.
double psm_auto_alpha(double a_norm);

struct TraceRecord {
  int t = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double time_ms = 0.0;
  double q_prev = 0.0;  // DCA: q(x_{t-1}; x_{t-1}) for the step into x_t
  double q_next = 0.0;  // DCA: q(x_t; x_{t-1})
  int inner_iters = 0;
};

struct SolverTrace {
  Algorithm algorithm = Algorithm::gd;
  double alpha = 0.0;
  double gamma = 0.0;
  std::vector<TraceRecord> records;  // records[0] is the start point
  Vec x;                             // final iterate
  bool aborted = false;
  std::string message;
};

SolverTrace solve_gd(const Objective& obj, const SolverConfig& cfg);
SolverTrace solve_dca(const Objective& obj, const SolverConfig& cfg);
SolverTrace solve_psm(const Objective& obj, const SolverConfig& cfg);
SolverTrace solve(const Objective& obj, const SolverConfig& cfg);

Vec initial_point(const Objective& obj, const SolverConfig& cfg);

struct RateReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

/// mean_{t<T} |grad F(x_t)|^2 <= 2 (|A|^2 + L1)(F(x_0) - min_t F(x_t)) / (T+1).
/// `l1` is the smoothness constant of mu R1.
RateReport check_dca_rate(const SolverTrace& trace, double l1, double a_norm);

struct PsmRateReport {
  RateReport step;      // averaged squared steps
  RateReport gradient;  // averaged squared gradients, needs smooth R2
  RateReport decrease;  // worst per-step margin of F(x_t) - F(x_{t+1}) - |dx|^2 / 2 alpha
};

/// `l2` is the smoothness constant of mu R2; the gradient part is only
/// meaningful when R1 and R2 are smooth.
PsmRateReport check_psm_rates(const SolverTrace& trace, double l2, double a_norm, double alpha);

/// Largest violation of F(x_{t+1}) <= F(x_t) + tol (1 + |F(x_t)|); <= 0 means monotone.
double monotone_violation(const SolverTrace& trace, double tol = 1e-8);

/// CSV t,f,grad_norm,step_norm,time_ms.
std::string trace_csv(const SolverTrace& trace);

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

}  // namespace dcreg
