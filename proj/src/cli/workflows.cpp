#include <algorithm>
#include <cmath>

#include "dcreg/cli.hpp"
#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg::cli {

namespace {

// Divide the input weights by s: the network then reads x / s.
void rescale_inputs(IcnnParams& p, double s) {
  for (auto& layer : p.layers) layer.wx /= s;
}

GridSpec fit_grid(const RunConfig& cfg) {
  GridSpec g{cfg.number("problem.grid_lo"), cfg.number("problem.grid_hi"), cfg.integer("problem.grid_res")};
  if (!(g.hi > g.lo) || g.res < 2) throw ConfigError("config: need grid_lo < grid_hi and grid_res >= 2");
  return g;
}

const char* model_name(DcMode m) {
  switch (m) {
    case DcMode::convex_only: return "icnn";
    case DcMode::weakly_convex: return "iwcnn";
    case DcMode::dc: return "idcnn";
  }
  return "?";
}

}  // namespace

SpiralTrainResult train_spiral(const RunConfig& cfg, DcMode mode, std::uint64_t seed) {
  const double scale = cfg.number("problem.spiral_scale");
  if (!(scale > 0.0)) throw ConfigError("config: problem.spiral_scale must be > 0");
  const int count = cfg.integer("problem.spiral_count");
  const SpiralDataset ds = gen_spiral(count, cfg.number("problem.spiral_sigma"), seed);
  const SpiralDataset held = gen_spiral(count, cfg.number("problem.spiral_sigma"), seed + 1000);

  SampleSource src{to_vecs(ds.clean), to_vecs(ds.noisy)};
  for (auto& v : src.clean) v /= scale;
  for (auto& v : src.noisy) v /= scale;
  if (cfg.flag("problem.spiral_symmetrize")) {
    const std::size_t n = src.clean.size();
    for (std::size_t i = 0; i < n; ++i) {
      src.clean.push_back(-src.clean[i]);
      src.noisy.push_back(-src.noisy[i]);
    }
  }

  RunConfig local = cfg;
  local.set("regularizer.init_seed", std::to_string(cfg.integer("regularizer.init_seed") + 100 * seed));
  local.set("regularizer.mode", mode == DcMode::dc ? "dc" : mode == DcMode::convex_only ? "convex" : "weakly_convex");
  const DcRegularizer init = build_regularizer(local, 2);
  TrainConfig tc = train_config(cfg);
  tc.seed = seed;

  SpiralTrainResult out;
  out.train = train(init, src, tc);
  out.reg = out.train.reg;
  rescale_inputs(out.reg.r1, scale);
  if (out.reg.mode == DcMode::dc) rescale_inputs(out.reg.r2, scale);
  out.reg.rho /= scale * scale;

  out.fit_error = regularizer_fit_error(out.reg, ds, fit_grid(cfg));
  double c = 0.0, n = 0.0;
  for (const auto& p : held.clean) c += dc_eval(out.reg, Vec(p));
  for (const auto& p : held.noisy) n += dc_eval(out.reg, Vec(p));
  out.separation = (n - c) / static_cast<double>(held.clean.size());
  return out;
}

double SpiralBench::median(const std::string& model) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.model == model) v.push_back(r.fit_error);
  if (v.empty()) throw ContractError("spiral bench: no rows for " + model);
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

SpiralBench spiral_bench(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("config: problem.seeds is empty");
  SpiralBench b;
  for (std::uint64_t seed : seeds) {
    for (DcMode m : {DcMode::convex_only, DcMode::weakly_convex, DcMode::dc}) {
      const SpiralTrainResult r = train_spiral(cfg, m, seed);
      b.rows.push_back({model_name(m), seed, r.fit_error, r.separation});
    }
  }
  return b;
}

std::string spiral_bench_csv(const SpiralBench& b) {
  std::string out = "model,seed,fit_error,separation\n";
  for (const auto& r : b.rows)
    out += r.model + "," + std::to_string(r.seed) + "," + io::fmt(r.fit_error) + "," + io::fmt(r.separation) + "\n";
  return out;
}

CtTrained train_ct(const RunConfig& cfg) {
  CtTrained out{make_ct_problem(ct_config(cfg)), {}, {}, 0.0};
  out.mu = ct_weight(out.prob);
  const DcRegularizer init = build_regularizer(cfg, out.prob.a.in_dim());
  const TrainConfig tc = train_config(cfg);
  Validator v;
  if (cfg.flag("train.validate")) {
    const int iters = cfg.integer("train.val_iters");
    if (iters < 1) throw ConfigError("config: train.val_iters must be >= 1");
    v = [&out, iters](const DcRegularizer& r) { return ct_validation_psnr(out.prob, r, out.mu, iters); };
  }
  out.train = train(init, ct_samples(out.prob), tc, v);
  out.reg = out.train.reg;
  return out;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const CtProblem& prob, const DcRegularizer& reg) {
  const std::string& axis = cfg.get("solver.sweep_axis");
  const std::vector<double> values = cfg.numbers("solver.sweep_values");
  if (values.empty()) throw ConfigError("config: solver.sweep_values is empty");
  const double mu = ct_weight(prob);
  std::vector<AblationRow> rows;
  for (double v : values) {
    RunConfig point = cfg;
    point.set("output.dir", RunConfig().get("output.dir"));
    SolverConfig s;
    if (axis == "inner") {
      if (v < 1 || v != std::floor(v)) throw ConfigError("config: inner sweep values must be positive integers");
      point.set("solver.algorithm", "dca");
      point.set("solver.dca_inner", io::fmt(v));
      s = ct_solver_config(prob, Algorithm::dca);
      s.inner = static_cast<int>(v);
    } else if (axis == "gamma") {
      const double an = op_norm(prob.a, 500).norm;
      if (!(v >= an * an))
        throw ConfigError("config: gamma sweep value " + io::fmt(v) + " is below |A|^2 = " + io::fmt(an * an));
      point.set("solver.algorithm", "psm");
      point.set("solver.gamma", io::fmt(v));
      s = ct_solver_config(prob, Algorithm::psm);
      s.gamma = v;
      s.alpha = 1.0 / v;
    } else {
      throw ConfigError("config: solver.sweep_axis must be inner or gamma");
    }
    const MethodResult m = ct_evaluate(prob, axis + "=" + io::fmt(v), reg, s, mu);
    rows.push_back({v, m.mean, m.iterations, point.hash()});
  }
  return rows;
}

std::string ablation_csv(const std::string& axis, const std::vector<AblationRow>& rows) {
  std::string out = axis + ",psnr,ssim,iterations,config_hash\n";
  for (const auto& r : rows)
    out += io::fmt(r.value) + "," + io::fmt(r.metrics.psnr) + "," + io::fmt(r.metrics.ssim) + "," +
           std::to_string(r.iterations) + "," + r.config_hash + "\n";
  return out;
}

}  // namespace dcreg::cli
