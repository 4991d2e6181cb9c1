#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcreg/icnn.hpp"
#include "dcreg/linops.hpp"
#include "dcreg/solve.hpp"
#include "dcreg/stargeom.hpp"
#include "dcreg/train.hpp"
#include "dcreg/types.hpp"

namespace dcreg {

// ---- double spiral ------------------------------------------------------

struct SpiralDataset {
  std::vector<Vec2> clean;  // points on the curves
  std::vector<Vec2> noisy;  // clean + isotropic Gaussian noise
  std::vector<int> labels;  // 0 or 1
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Point of spiral `label` for u in [0, 1]: theta = sqrt(u) 2 pi, r = 2 theta + pi,
/// r (cos theta, sin theta), rotated by pi for label 1.
Vec2 spiral_point(double u, int label);

/// count/2 points per spiral, labels alternate.
SpiralDataset gen_spiral(int count, double sigma, std::uint64_t seed);

/// min over the clean points of |x - p|.
double distance_to_manifold(const std::vector<Vec2>& clean, const Vec2& x);

struct GridSpec {
  double lo = -20.0;
  double hi = 20.0;
  int res = 81;
};

/// Mean squared difference of the two fields after each is normalized to
/// zero mean and unit variance over the grid. Throws NumericalError when the
/// regularizer is constant on the grid.
double regularizer_fit_error(const std::function<double(const Vec2&)>& r, const SpiralDataset& ds,
                             const GridSpec& grid = {});
double regularizer_fit_error(const DcRegularizer& r, const SpiralDataset& ds, const GridSpec& grid = {});

std::vector<Vec> to_vecs(const std::vector<Vec2>& pts);

// ---- image metrics ------------------------------------------------------

/// 10 log10(peak^2 / mse), capped at 99 dB.
double psnr(const Vec& x, const Vec& ref, double peak = 1.0);
/// Mean SSIM over the valid region, 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03.
double ssim(const ImageGrid& x, const ImageGrid& ref, double peak = 1.0);

struct Metrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

// ---- phantoms -----------------------------------------------------------

enum class PhantomKind { shepp_logan, random_ellipses };

struct Phantom {
  ImageGrid image;
  PhantomKind kind = PhantomKind::random_ellipses;
};

/// n x n image in [0, 1].
Phantom make_phantom(int n, PhantomKind kind, std::uint64_t seed);

// ---- CT harness ---------------------------------------------------------

struct CtConfig {
  std::string setting = "sparse";  // "sparse" or "limited"
  RadonGeometry geom;
  double noise_rel = 0.01;  // sigma as a fraction of the mean clean sinogram value
  double ridge = 1e-2;      // pseudo-inverse ridge
  int train_count = 200;
  int val_count = 4;
  int test_count = 10;
  std::uint64_t seed = 1;
  int max_iters = 300;   // T budget; the reported T is picked on the validation set
  int dca_inner = 5;
  int psm_inner = 1;
  double mu = 0.0;       // 0 selects variational_weight
  int mu_draws = 64;
  std::vector<double> tv_weights = {0.25, 0.5, 1.0, 2.0, 4.0};  // multiples of the regularizer weight
  bool tv = true;

  void validate() const;
};

/// Phantoms, operator, measurements and pseudo-inverse reconstructions.
struct CtProblem {
  CtConfig cfg;
  LinearOp a = LinearOp::identity(1);
  double sigma = 0.0;
  std::vector<ImageGrid> train, val, test;
  std::vector<Vec> y_train, y_val, y_test;
  std::vector<Vec> recon_train;  // pseudo-inverse reconstructions of the training data
};

CtProblem make_ct_problem(const CtConfig& cfg);

/// Clean phantoms and pseudo-inverse reconstructions as training data.
SampleSource ct_samples(const CtProblem& prob);

struct MethodResult {
  std::string method;
  int iterations = 0;  // selected T (0 for the pseudo-inverse)
  double weight = 0.0;
  Metrics mean;
  std::vector<Metrics> per_image;
};

struct CtReport {
  std::string setting;
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<MethodResult> rows;  // pinv, tv, adcr, adcr_dca, adcr_psm

  const MethodResult& row(const std::string& method) const;
};

/// Optional extra rows for a convex-only and a weakly convex regularizer.
struct CtBaselines {
  const DcRegularizer* convex = nullptr;
  const DcRegularizer* weakly_convex = nullptr;
};

/// Pseudo-inverse, TV (PSM with the TV prox), then the learned regularizer
/// solved with GD, DCA and PSM; T chosen by validation PSNR per method.
CtReport run_ct_experiment(const CtProblem& prob, const DcRegularizer& reg, const CtBaselines& extra = {});

/// cfg.mu, or variational_weight(A, sigma) when cfg.mu is 0.
double ct_weight(const CtProblem& prob);

/// Solver defaults of the harness: pseudo-inverse start, N from the config.
SolverConfig ct_solver_config(const CtProblem& prob, Algorithm alg);

/// One learned-regularizer row with explicit solver settings; T is picked
/// on the validation set up to cfg.max_iters.
MethodResult ct_evaluate(const CtProblem& prob, const std::string& name, const DcRegularizer& reg,
                         const SolverConfig& solver, double mu);

/// Mean validation PSNR along a GD run, maximized over iterations.
double ct_validation_psnr(const CtProblem& prob, const DcRegularizer& reg, double mu, int iters);

/// method,limited_psnr,limited_ssim,sparse_psnr,sparse_ssim; settings not run stay empty.
std::string ct_metrics_csv(const std::vector<CtReport>& reports);

}  // namespace dcreg
