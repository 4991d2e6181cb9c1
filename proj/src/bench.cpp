#include "dcreg/bench.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg {

namespace {
constexpr double kPi = std::numbers::pi;
}

Vec2 spiral_point(double u, int label) {
  const double theta = std::sqrt(u) * 2.0 * kPi;
  const double r = 2.0 * theta + kPi;
  Vec2 p(r * std::cos(theta), r * std::sin(theta));
  return label == 0 ? p : Vec2(-p);
}

SpiralDataset gen_spiral(int count, double sigma, std::uint64_t seed) {
  if (count <= 0 || count % 2 != 0) throw ContractError("gen_spiral: count must be positive and even");
  if (!(sigma >= 0.0)) throw ContractError("gen_spiral: sigma must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  SpiralDataset ds;
  ds.sigma = sigma;
  ds.seed = seed;
  for (int i = 0; i < count; ++i) {
    const int label = i % 2;
    const Vec2 p = spiral_point(unif(rng), label);
    const double a = normal(rng);
    const double b = normal(rng);
    ds.clean.push_back(p);
    ds.noisy.push_back(p + sigma * Vec2(a, b));
    ds.labels.push_back(label);
  }
  return ds;
}

double distance_to_manifold(const std::vector<Vec2>& clean, const Vec2& x) {
  if (clean.empty()) throw ContractError("distance_to_manifold: no clean points");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : clean) best = std::min(best, (x - p).squaredNorm());
  return std::sqrt(best);
}

namespace {

Vec normalized(const Vec& v, const char* what) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  if (!(var > 1e-24)) throw NumericalError(std::string("regularizer_fit_error: ") + what + " field is constant on the grid");
  return (v.array() - mean) / std::sqrt(var);
}

}  // namespace

double regularizer_fit_error(const std::function<double(const Vec2&)>& r, const SpiralDataset& ds,
                             const GridSpec& grid) {
  if (grid.res < 2) throw ContractError("regularizer_fit_error: grid resolution must be >= 2");
  const Eigen::Index n = static_cast<Eigen::Index>(grid.res) * grid.res;
  Vec rv(n), dv(n);
  Eigen::Index k = 0;
  for (int i = 0; i < grid.res; ++i) {
    for (int j = 0; j < grid.res; ++j, ++k) {
      const Vec2 x(grid.lo + (grid.hi - grid.lo) * j / (grid.res - 1), grid.lo + (grid.hi - grid.lo) * i / (grid.res - 1));
      rv[k] = r(x);
      dv[k] = distance_to_manifold(ds.clean, x);
    }
  }
  return (normalized(rv, "regularizer") - normalized(dv, "distance")).squaredNorm() / static_cast<double>(n);
}

double regularizer_fit_error(const DcRegularizer& r, const SpiralDataset& ds, const GridSpec& grid) {
  if (r.input_dim() != 2) throw ShapeError("regularizer_fit_error: regularizer must act on R^2");
  return regularizer_fit_error([&](const Vec2& x) { return dc_eval(r, Vec(x)); }, ds, grid);
}

std::vector<Vec> to_vecs(const std::vector<Vec2>& pts) {
  std::vector<Vec> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p);
  return out;
}

double psnr(const Vec& x, const Vec& ref, double peak) {
  if (x.size() != ref.size()) throw ShapeError("psnr: size mismatch");
  if (x.size() == 0) throw ContractError("psnr: empty input");
  const double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const ImageGrid& x, const ImageGrid& ref, double peak) {
  if (x.rows != ref.rows || x.cols != ref.cols) throw ShapeError("ssim: size mismatch");
  constexpr int w = 11;
  if (x.rows < w || x.cols < w) throw ContractError("ssim: images must be at least 11x11");
  double win[w][w];
  double total = 0.0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) {
      const double di = i - 5, dj = j - 5;
      win[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      total += win[i][j];
    }
  for (auto& row : win)
    for (double& v : row) v /= total;
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + w <= x.rows; ++r) {
    for (int c = 0; c + w <= x.cols; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double a = x.at(r + i, c + j), b = ref.at(r + i, c + j), k = win[i][j];
          mx += k * a;
          my += k * b;
          sxx += k * a * a;
          syy += k * b * b;
          sxy += k * a * b;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      acc += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  }
  return acc / count;
}

namespace {

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

void paint(ImageGrid& img, const std::vector<Ellipse>& es) {
  const int n = img.rows;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = (2.0 * j + 1.0) / n - 1.0;
      const double y = 1.0 - (2.0 * i + 1.0) / n;
      double v = 0.0;
      for (const auto& e : es) {
        const double p = e.phi_deg * kPi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = dx * std::cos(p) + dy * std::sin(p);
        const double w = -dx * std::sin(p) + dy * std::cos(p);
        if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img.at(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
}

}  // namespace

Phantom make_phantom(int n, PhantomKind kind, std::uint64_t seed) {
  if (n < 4) throw ContractError("make_phantom: n must be >= 4");
  Phantom ph;
  ph.kind = kind;
  ph.image = ImageGrid(n, n);
  if (kind == PhantomKind::shepp_logan) {
    paint(ph.image, {{1.0, .69, .92, 0, 0, 0},
                     {-.8, .6624, .874, 0, -.0184, 0},
                     {-.2, .11, .31, .22, 0, -18},
                     {-.2, .16, .41, -.22, 0, 18},
                     {.1, .21, .25, 0, .35, 0},
                     {.1, .046, .046, 0, .1, 0},
                     {.1, .046, .046, 0, -.1, 0},
                     {.1, .046, .023, -.08, -.605, 0},
                     {.1, .023, .023, 0, -.606, 0},
                     {.1, .023, .046, .06, -.605, 0}});
    return ph;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Ellipse> es;
  const double ba = 0.7 + 0.2 * u(rng), bb = 0.7 + 0.2 * u(rng);
  es.push_back({0.3 + 0.2 * u(rng), ba, bb, 0.0, 0.0, 180.0 * u(rng)});
  const int k = 4 + static_cast<int>(u(rng) * 5.0);
  for (int i = 0; i < k; ++i) {
    const double a = 0.08 + 0.3 * u(rng), b = 0.08 + 0.3 * u(rng);
    const double r = 0.5 * u(rng), t = 2.0 * kPi * u(rng);
    const double sign = u(rng) < 0.7 ? 1.0 : -1.0;
    es.push_back({sign * (0.1 + 0.4 * u(rng)), a, b, r * std::cos(t), r * std::sin(t), 180.0 * u(rng)});
  }
  paint(ph.image, es);
  return ph;
}

void CtConfig::validate() const {
  if (setting != "sparse" && setting != "limited") throw ConfigError("ct: setting must be sparse or limited");
  if (geom.n < 11 || geom.n > 128) throw ConfigError("ct: image side must lie in [11, 128]");
  if (!(noise_rel >= 0.0)) throw ConfigError("ct: noise_rel must be >= 0");
  if (!(ridge > 0.0)) throw ConfigError("ct: ridge must be > 0");
  if (train_count < 1 || val_count < 1 || test_count < 1) throw ConfigError("ct: phantom counts must be >= 1");
  if (max_iters < 1) throw ConfigError("ct: max_iters must be >= 1");
  if (dca_inner < 1 || psm_inner < 1) throw ConfigError("ct: inner iteration counts must be >= 1");
  if (mu < 0.0) throw ConfigError("ct: mu must be >= 0");
  if (mu_draws < 1) throw ConfigError("ct: mu_draws must be >= 1");
}

CtProblem make_ct_problem(const CtConfig& cfg) {
  cfg.validate();
  CtProblem prob;
  prob.cfg = cfg;
  prob.a = build_radon(cfg.geom);
  const int n = cfg.geom.n;
  auto phantoms = [&](int count, std::uint64_t base) {
    std::vector<ImageGrid> out;
    for (int i = 0; i < count; ++i) out.push_back(make_phantom(n, PhantomKind::random_ellipses, base + i).image);
    return out;
  };
  const std::uint64_t s = cfg.seed * 1000003ULL;
  prob.train = phantoms(cfg.train_count, s);
  prob.val = phantoms(cfg.val_count, s + 500000);
  prob.test = phantoms(cfg.test_count, s + 700000);

  double mean = 0.0;
  for (const auto& img : prob.train) mean += prob.a.apply(img.pixels).mean();
  mean /= static_cast<double>(prob.train.size());
  prob.sigma = cfg.noise_rel * mean;

  auto measure = [&](const std::vector<ImageGrid>& imgs, std::uint64_t base) {
    std::vector<Vec> ys;
    for (std::size_t i = 0; i < imgs.size(); ++i) ys.push_back(simulate(prob.a, imgs[i].pixels, prob.sigma, base + i).y);
    return ys;
  };
  prob.y_train = measure(prob.train, s + 1000);
  prob.y_val = measure(prob.val, s + 600000);
  prob.y_test = measure(prob.test, s + 800000);
  for (const auto& y : prob.y_train) prob.recon_train.push_back(pseudo_inverse_init(prob.a, y, cfg.ridge).x);
  return prob;
}

SampleSource ct_samples(const CtProblem& prob) {
  SampleSource src;
  for (const auto& img : prob.train) src.clean.push_back(img.pixels);
  src.noisy = prob.recon_train;
  return src;
}

const MethodResult& CtReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw ContractError("ct report: no row named " + method);
}

namespace {

using ObjectiveFactory = std::function<Objective(const Vec& y)>;

Metrics measure(const Vec& x, const ImageGrid& ref) {
  return {psnr(x, ref.pixels), ssim(ImageGrid(ref.rows, ref.cols, x), ref)};
}

// Mean validation PSNR after t iterations, t = 0..T.
std::vector<double> validation_curve(const CtProblem& prob, const ObjectiveFactory& make, SolverConfig cfg) {
  std::vector<double> curve(static_cast<std::size_t>(cfg.iterations) + 1, 0.0);
  for (std::size_t i = 0; i < prob.val.size(); ++i) {
    std::vector<double> local(curve.size(), -std::numeric_limits<double>::infinity());
    cfg.observer = [&](int t, const Vec& x) { local[static_cast<std::size_t>(t)] = psnr(x, prob.val[i].pixels); };
    SolverTrace tr = solve(make(prob.y_val[i]), cfg);
    // A stopped or aborted run keeps its last value for the remaining t.
    for (std::size_t t = 1; t < local.size(); ++t)
      if (!std::isfinite(local[t])) local[t] = tr.aborted ? -1e9 : local[t - 1];
    for (std::size_t t = 0; t < curve.size(); ++t) curve[t] += local[t] / static_cast<double>(prob.val.size());
  }
  return curve;
}

MethodResult evaluate(const CtProblem& prob, const std::string& name, const ObjectiveFactory& make, SolverConfig cfg,
                      double weight) {
  cfg.iterations = prob.cfg.max_iters;
  const std::vector<double> curve = validation_curve(prob, make, cfg);
  const int best = static_cast<int>(std::max_element(curve.begin(), curve.end()) - curve.begin());
  MethodResult res;
  res.method = name;
  res.iterations = best;
  res.weight = weight;
  for (std::size_t i = 0; i < prob.test.size(); ++i) {
    Vec x;
    if (best == 0) {
      x = pseudo_inverse_init(prob.a, prob.y_test[i], prob.cfg.ridge).x;
    } else {
      cfg.iterations = best;
      SolverTrace tr = solve(make(prob.y_test[i]), cfg);
      if (tr.aborted) throw NumericalError("ct: " + name + " diverged on test image " + std::to_string(i) + ": " + tr.message);
      x = tr.x;
    }
    res.per_image.push_back(measure(x, prob.test[i]));
  }
  for (const auto& m : res.per_image) {
    res.mean.psnr += m.psnr / static_cast<double>(res.per_image.size());
    res.mean.ssim += m.ssim / static_cast<double>(res.per_image.size());
  }
  return res;
}

SolverConfig base_config(const CtProblem& prob, Algorithm alg) { return ct_solver_config(prob, alg); }

double weight_for(const CtProblem& prob) { return ct_weight(prob); }

}  // namespace

SolverConfig ct_solver_config(const CtProblem& prob, Algorithm alg) {
  SolverConfig c;
  c.algorithm = alg;
  c.init = InitPolicy::pseudo_inverse;
  c.init_ridge = prob.cfg.ridge;
  c.inner = alg == Algorithm::dca ? prob.cfg.dca_inner : prob.cfg.psm_inner;
  return c;
}

double ct_weight(const CtProblem& prob) {
  return prob.cfg.mu > 0.0 ? prob.cfg.mu
                           : variational_weight(prob.a, prob.sigma, prob.cfg.mu_draws, prob.cfg.seed + 17);
}

MethodResult ct_evaluate(const CtProblem& prob, const std::string& name, const DcRegularizer& reg,
                         const SolverConfig& solver, double mu) {
  if (reg.input_dim() != prob.a.in_dim()) throw ShapeError("ct: regularizer dimension does not match the image size");
  const double norm = op_norm(prob.a, 500).norm;
  auto make = [&](const Vec& y) { return Objective::from_regularizer(prob.a, y, reg, mu, norm); };
  return evaluate(prob, name, make, solver, mu);
}

double ct_validation_psnr(const CtProblem& prob, const DcRegularizer& reg, double mu, int iters) {
  const double norm = op_norm(prob.a, 500).norm;
  SolverConfig cfg = base_config(prob, Algorithm::gd);
  cfg.iterations = iters;
  auto curve = validation_curve(
      prob, [&](const Vec& y) { return Objective::from_regularizer(prob.a, y, reg, mu, norm); }, cfg);
  return *std::max_element(curve.begin(), curve.end());
}

CtReport run_ct_experiment(const CtProblem& prob, const DcRegularizer& reg, const CtBaselines& extra) {
  if (reg.input_dim() != prob.a.in_dim()) throw ShapeError("ct: regularizer dimension does not match the image size");
  CtReport rep;
  rep.setting = prob.cfg.setting;
  rep.sigma = prob.sigma;
  rep.mu = weight_for(prob);
  const double norm = op_norm(prob.a, 500).norm;
  const int n = prob.cfg.geom.n;

  MethodResult base;
  base.method = "pseudo_inverse";
  for (std::size_t i = 0; i < prob.test.size(); ++i) {
    base.per_image.push_back(measure(pseudo_inverse_init(prob.a, prob.y_test[i], prob.cfg.ridge).x, prob.test[i]));
    base.mean.psnr += base.per_image.back().psnr / static_cast<double>(prob.test.size());
    base.mean.ssim += base.per_image.back().ssim / static_cast<double>(prob.test.size());
  }
  rep.rows.push_back(base);

  if (prob.cfg.tv) {
    const TermPtr tv = tv_term(n, n);
    const TermPtr zero = zero_term();
    MethodResult best;
    best.mean.psnr = -std::numeric_limits<double>::infinity();
    // Weight picked on the validation set through the same T selection.
    double best_val = -std::numeric_limits<double>::infinity();
    for (double w : prob.cfg.tv_weights) {
      const double lam = w * rep.mu / std::sqrt(static_cast<double>(prob.a.in_dim()));
      auto make = [&](const Vec& y) { return Objective(prob.a, y, tv, zero, lam, norm); };
      SolverConfig cfg = base_config(prob, Algorithm::psm);
      cfg.iterations = prob.cfg.max_iters;
      auto curve = validation_curve(prob, make, cfg);
      const double v = *std::max_element(curve.begin(), curve.end());
      if (v > best_val) {
        best_val = v;
        best = evaluate(prob, "tv", make, cfg, lam);
      }
    }
    rep.rows.push_back(best);
  }

  auto learned = [&](const std::string& name, const DcRegularizer& r, Algorithm alg) {
    auto make = [&](const Vec& y) { return Objective::from_regularizer(prob.a, y, r, rep.mu, norm); };
    rep.rows.push_back(evaluate(prob, name, make, base_config(prob, alg), rep.mu));
  };
  if (extra.convex) learned("acr", *extra.convex, Algorithm::gd);
  if (extra.weakly_convex) learned("awcr", *extra.weakly_convex, Algorithm::gd);
  learned("adcr", reg, Algorithm::gd);
  learned("adcr_dca", reg, Algorithm::dca);
  learned("adcr_psm", reg, Algorithm::psm);
  return rep;
}

std::string ct_metrics_csv(const std::vector<CtReport>& reports) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, Metrics>> cells;
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      if (std::find(order.begin(), order.end(), row.method) == order.end()) order.push_back(row.method);
      cells[row.method][rep.setting] = row.mean;
    }
  }
  std::string out = "method,limited_psnr,limited_ssim,sparse_psnr,sparse_ssim\n";
  for (const auto& m : order) {
    out += m;
    for (const char* s : {"limited", "sparse"}) {
      auto it = cells[m].find(s);
      if (it == cells[m].end()) {
        out += ",,";
      } else {
        out += "," + io::fmt(it->second.psnr) + "," + io::fmt(it->second.ssim);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace dcreg
