#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcreg/icnn.hpp"
#include "dcreg/linops.hpp"
#include "dcreg/tape.hpp"

namespace dcreg {

/// Where the Lipschitz penalty is evaluated.
enum class PenaltySampling { interpolate, clean, noisy };

struct TrainConfig {
  enum class Optimizer { adam, sgd };

  double lambda_gp = 10.0;
  double lr = 5e-5;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  PenaltySampling penalty = PenaltySampling::interpolate;
  /// Draw clean and noisy batches with the same shuffled indices. Requires
  /// equally many samples of each kind; the loss is unchanged in expectation.
  bool paired_batches = false;

  void validate() const;
};

/// Unpaired training data: clean samples and pseudo-inverse reconstructions.
struct SampleSource {
  std::vector<Vec> clean;
  std::vector<Vec> noisy;
};

struct ArLossTerms {
  double loss = 0.0;
  double clean_term = 0.0;    // mean R over clean samples
  double noisy_term = 0.0;    // mean R over noisy samples
  double penalty_term = 0.0;  // lambda * mean (|grad R| - 1)_+^2
  Vec param_grad;             // DcRegularizer::flatten order
};

/// Adversarial-regularization loss on a fixed-size batch, with its gradient
/// in the parameters. The graph is declared once per architecture and batch
/// size and reused across steps.
class ArLossEvaluator {
 public:
  ArLossEvaluator(const DcRegularizer& shape, int batch_size);

  /// `penalty_points` are the rows where the gradient-norm penalty is applied.
  ArLossTerms operator()(const DcRegularizer& r, const Mat& clean, const Mat& noisy, const Mat& penalty_points,
                         double lambda);

  int batch_size() const { return batch_; }

 private:
  DcMode mode_;
  int batch_;
  int dim_;
  Tape tape_;
  NodeId loss_ = 0;
  NodeId value_ = 0;
  NodeId tangent_ = 0;
  IcnnGraph g1_;
  IcnnGraph g2_;
};

/// Penalty points: u * clean + (1 - u) * noisy with one u ~ U(0,1) per row
/// (or the clean / noisy rows themselves for the other sampling modes).
Mat penalty_points(const Mat& clean, const Mat& noisy, PenaltySampling mode, std::mt19937_64& rng);

/// One-shot loss evaluation: penalty points drawn from `rng`.
ArLossTerms ar_loss(const DcRegularizer& r, const Mat& clean, const Mat& noisy, double lambda, std::mt19937_64& rng,
                    PenaltySampling mode = PenaltySampling::interpolate);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double clean_term = 0.0;
  double noisy_term = 0.0;
  double penalty_term = 0.0;
  double val_psnr = 0.0;  // NaN when no validator is configured
};

struct TrainResult {
  DcRegularizer reg;      // selected checkpoint
  std::vector<EpochLog> log;
  int selected_epoch = 0;  // 0 only when epochs == 0
};

/// Scores a candidate regularizer on held-out data (higher is better).
using Validator = std::function<double(const DcRegularizer&)>;

/// Mini-batch training with a projection onto W >= 0 after every step.
/// With a validator the best-scoring epoch is returned, otherwise the last.
/// Throws NumericalError if the loss is NaN or exceeds 1e12.
TrainResult train(const DcRegularizer& init, const SampleSource& src, const TrainConfig& cfg,
                  const Validator& validator = {});

/// CSV with header epoch,loss,clean_term,noisy_term,penalty_term,val_psnr.
std::string training_log_csv(const std::vector<EpochLog>& log);

/// Regularization weight mu = E |A^T eta| for eta ~ N(0, sigma^2 I): the size
/// of the data-fit gradient at the ground truth, matched against a
/// 1-Lipschitz regularizer. Monte-Carlo over `draws` noise vectors.
double variational_weight(const LinearOp& a, double sigma, int draws, std::uint64_t seed);

Mat stack_rows(const std::vector<Vec>& rows);

}  // namespace dcreg
