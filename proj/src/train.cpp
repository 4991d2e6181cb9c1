#include "dcreg/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg {

namespace {

Mat dc_grad_batch(const DcRegularizer& r, const Mat& xs) {
  Mat g = icnn_grad_batch(r.r1, xs);
  switch (r.mode) {
    case DcMode::dc: g -= icnn_grad_batch(r.r2, xs); break;
    case DcMode::convex_only: break;
    case DcMode::weakly_convex: g -= r.rho * xs; break;
  }
  return g;
}

Tensor column(int n, double v) { return Tensor::filled({static_cast<std::size_t>(n)}, v); }

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda_gp > 0.0)) throw ConfigError("train: lambda_gp must be > 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
}

Mat stack_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return Mat();
  Mat m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ShapeError("stack_rows: samples have different dimensions");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

ArLossEvaluator::ArLossEvaluator(const DcRegularizer& shape, int batch_size)
    : mode_(shape.mode), batch_(batch_size), dim_(shape.input_dim()) {
  if (batch_size < 1) throw ContractError("ar_loss: batch must be nonempty");
  NodeId xs = tape_.placeholder("x");
  NodeId dirs = tape_.placeholder("v");
  NodeId row_weight = tape_.placeholder("row_weight");
  NodeId pen_weight = tape_.placeholder("pen_weight");
  g1_ = build_icnn_graph(tape_, "r1", shape.r1, xs, dirs);
  value_ = g1_.value;
  tangent_ = g1_.tangent;
  if (mode_ == DcMode::dc) {
    g2_ = build_icnn_graph(tape_, "r2", shape.r2, xs, dirs);
    value_ = tape_.add(value_, tape_.scale(g2_.value, -1.0));
    tangent_ = tape_.add(tangent_, tape_.scale(g2_.tangent, -1.0));
  } else if (mode_ == DcMode::weakly_convex) {
    NodeId ones = tape_.constant(column(dim_, 1.0));
    NodeId sq = tape_.matmul(tape_.mul(xs, xs), ones);
    NodeId lin = tape_.matmul(tape_.mul(xs, dirs), ones);
    value_ = tape_.add(value_, tape_.scale(sq, -0.5 * shape.rho));
    tangent_ = tape_.add(tangent_, tape_.scale(lin, -shape.rho));
  }
  NodeId shifted = tape_.add(tangent_, tape_.constant(column(3 * batch_, -1.0)));
  NodeId hinge = tape_.activation(shifted, Activation::squared_hinge());
  loss_ = tape_.add(tape_.reduce_sum(tape_.mul(value_, row_weight)), tape_.reduce_sum(tape_.mul(hinge, pen_weight)));
}

ArLossTerms ArLossEvaluator::operator()(const DcRegularizer& r, const Mat& clean, const Mat& noisy,
                                        const Mat& pen, double lambda) {
  if (r.mode != mode_ || r.input_dim() != dim_) throw ContractError("ar_loss: regularizer does not match the graph");
  if (clean.rows() != batch_ || noisy.rows() != batch_ || pen.rows() != batch_) {
    throw ShapeError("ar_loss: expected batches of " + std::to_string(batch_) + " rows");
  }
  if (clean.cols() != dim_ || noisy.cols() != dim_ || pen.cols() != dim_) {
    throw ShapeError("ar_loss: sample dimension does not match the regularizer");
  }
  const int b = batch_;
  Mat xs(3 * b, dim_);
  xs << clean, noisy, pen;
  Mat dirs = Mat::Zero(3 * b, dim_);
  Mat g = dc_grad_batch(r, pen);
  for (int i = 0; i < b; ++i) {
    double n = g.row(i).norm();
    if (n > 0.0) dirs.row(2 * b + i) = g.row(i) / n;
  }
  std::vector<double> rw(3 * b, 0.0), pw(3 * b, 0.0);
  for (int i = 0; i < b; ++i) {
    rw[i] = 1.0 / b;
    rw[b + i] = -1.0 / b;
    pw[2 * b + i] = lambda / b;
  }
  std::map<std::string, Tensor> inputs;
  inputs["x"] = to_tensor(xs);
  inputs["v"] = to_tensor(dirs);
  inputs["row_weight"] = Tensor::vector(std::move(rw));
  inputs["pen_weight"] = Tensor::vector(std::move(pw));
  bind_params("r1", r.r1, inputs);
  if (mode_ == DcMode::dc) bind_params("r2", r.r2, inputs);

  ArLossTerms out;
  out.loss = tape_.forward(loss_, inputs).item();
  const Tensor& vals = tape_.value(value_);
  const Tensor& tang = tape_.value(tangent_);
  double pen_sum = 0.0;
  for (int i = 0; i < b; ++i) {
    out.clean_term += vals[i] / b;
    out.noisy_term += vals[b + i] / b;
    double h = std::max(tang[2 * b + i] - 1.0, 0.0);
    pen_sum += h * h;
  }
  out.penalty_term = lambda * pen_sum / b;
  auto grads = tape_.backward(loss_, Tensor::scalar(1.0));
  Vec g1 = gather_grads("r1", r.r1, grads);
  if (mode_ == DcMode::dc) {
    Vec g2 = gather_grads("r2", r.r2, grads);
    out.param_grad.resize(g1.size() + g2.size());
    out.param_grad << g1, g2;
  } else {
    out.param_grad = std::move(g1);
  }
  return out;
}

Mat penalty_points(const Mat& clean, const Mat& noisy, PenaltySampling mode, std::mt19937_64& rng) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
    throw ShapeError("penalty_points: clean and noisy batches differ in shape");
  }
  switch (mode) {
    case PenaltySampling::clean: return clean;
    case PenaltySampling::noisy: return noisy;
    case PenaltySampling::interpolate: break;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat out(clean.rows(), clean.cols());
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    double u = unif(rng);
    out.row(i) = u * clean.row(i) + (1.0 - u) * noisy.row(i);
  }
  return out;
}

ArLossTerms ar_loss(const DcRegularizer& r, const Mat& clean, const Mat& noisy, double lambda, std::mt19937_64& rng,
                    PenaltySampling mode) {
  if (clean.rows() == 0 || noisy.rows() == 0) throw ContractError("ar_loss: batches must be nonempty");
  if (clean.rows() != noisy.rows()) throw ShapeError("ar_loss: clean and noisy batches must have equal size");
  if (clean.cols() != r.input_dim() || noisy.cols() != r.input_dim()) {
    throw ShapeError("ar_loss: sample dimension does not match the regularizer");
  }
  Mat pen = penalty_points(clean, noisy, mode, rng);
  ArLossEvaluator eval(r, static_cast<int>(clean.rows()));
  return eval(r, clean, noisy, pen, lambda);
}

TrainResult train(const DcRegularizer& init, const SampleSource& src, const TrainConfig& cfg,
                  const Validator& validator) {
  cfg.validate();
  if (src.clean.empty() || src.noisy.empty()) throw ContractError("train: sample source must be nonempty");
  const Mat clean = stack_rows(src.clean);
  const Mat noisy = stack_rows(src.noisy);
  if (clean.cols() != init.input_dim() || noisy.cols() != init.input_dim()) {
    throw ShapeError("train: sample dimension does not match the regularizer");
  }

  TrainResult res;
  res.reg = init;
  if (cfg.epochs == 0) return res;

  DcRegularizer cur = init;
  project_nonneg_inplace(cur);
  if (cfg.paired_batches && clean.rows() != noisy.rows()) {
    throw ContractError("train: paired batches need as many noisy as clean samples");
  }
  const int b = cfg.batch_size;
  ArLossEvaluator eval(cur, b);
  std::mt19937_64 rng(cfg.seed);

  Vec theta = cur.flatten();
  Vec m1 = Vec::Zero(theta.size());
  Vec m2 = Vec::Zero(theta.size());
  long step = 0;
  double best = -std::numeric_limits<double>::infinity();

  std::vector<Eigen::Index> perm_c(static_cast<std::size_t>(clean.rows()));
  std::vector<Eigen::Index> perm_n(static_cast<std::size_t>(noisy.rows()));
  std::iota(perm_c.begin(), perm_c.end(), 0);
  std::iota(perm_n.begin(), perm_n.end(), 0);
  const int steps = static_cast<int>((clean.rows() + b - 1) / b);
  Mat bc(b, clean.cols()), bn(b, clean.cols());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(perm_c.begin(), perm_c.end(), rng);
    if (cfg.paired_batches) {
      perm_n = perm_c;
    } else {
      std::shuffle(perm_n.begin(), perm_n.end(), rng);
    }
    EpochLog row;
    row.epoch = epoch;
    row.val_psnr = std::numeric_limits<double>::quiet_NaN();
    for (int s = 0; s < steps; ++s) {
      for (int i = 0; i < b; ++i) {
        const std::size_t k = static_cast<std::size_t>(s) * b + i;
        bc.row(i) = clean.row(perm_c[k % perm_c.size()]);
        bn.row(i) = noisy.row(perm_n[k % perm_n.size()]);
      }
      Mat pen = penalty_points(bc, bn, cfg.penalty, rng);
      ArLossTerms t = eval(cur, bc, bn, pen, cfg.lambda_gp);
      if (!std::isfinite(t.loss) || std::abs(t.loss) > 1e12 || !t.param_grad.allFinite()) {
        std::ostringstream os;
        os << "train: loss diverged at epoch " << epoch << " step " << s << " (loss=" << t.loss << ")";
        throw NumericalError(os.str());
      }
      ++step;
      if (cfg.optimizer == TrainConfig::Optimizer::adam) {
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * t.param_grad;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * t.param_grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        theta.array() -= cfg.lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.eps);
      } else {
        theta -= cfg.lr * t.param_grad;
      }
      cur.unflatten(theta);
      project_nonneg_inplace(cur);
      theta = cur.flatten();
      row.loss += t.loss / steps;
      row.clean_term += t.clean_term / steps;
      row.noisy_term += t.noisy_term / steps;
      row.penalty_term += t.penalty_term / steps;
    }
    if (validator) {
      row.val_psnr = validator(cur);
      if (row.val_psnr > best || res.selected_epoch == 0) {
        best = row.val_psnr;
        res.reg = cur;
        res.selected_epoch = epoch;
      }
    }
    res.log.push_back(row);
  }
  if (!validator) {
    res.reg = cur;
    res.selected_epoch = cfg.epochs;
  }
  return res;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,clean_term,noisy_term,penalty_term,val_psnr\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + io::fmt(r.loss) + "," + io::fmt(r.clean_term) + "," +
           io::fmt(r.noisy_term) + "," + io::fmt(r.penalty_term) + "," + io::fmt(r.val_psnr) + "\n";
  }
  return out;
}

double variational_weight(const LinearOp& a, double sigma, int draws, std::uint64_t seed) {
  if (draws < 1) throw ContractError("variational_weight: draws must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double acc = 0.0;
  Vec eta(a.out_dim());
  for (int k = 0; k < draws; ++k) {
    for (auto& v : eta) v = sigma * normal(rng);
    acc += a.adjoint(eta).norm();
  }
  return acc / draws;
}

}  // namespace dcreg
