#include <cmath>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "dcreg/cli.hpp"
#include "dcreg/error.hpp"
#include "dcreg/io.hpp"
#include "dcreg/stargeom.hpp"

namespace dcreg::cli {

namespace fs = std::filesystem;

namespace {

using Artifacts = std::map<std::string, std::string>;

struct Out {
  fs::path dir;
  Artifacts files;

  void text(const std::string& name, const std::string& body) {
    io::write_text(dir / name, body);
    files[name] = io::file_hash(dir / name);
  }
  void checkpoint(const std::string& name, const DcRegularizer& r) {
    save_checkpoint(dir / name, r);
    files[name] = io::file_hash(dir / name);
  }
  void image(const std::string& name, const ImageGrid& img) {
    io::write_pgm(dir / name, img);
    files[name] = io::file_hash(dir / name);
  }
};

Out open_output(const RunConfig& cfg) {
  Out o{output_dir(cfg), {}};
  fs::create_directories(o.dir);
  return o;
}

void finish(Out& o, const std::string& command, const RunConfig& cfg) {
  write_manifest(o.dir, command, cfg, o.files);
  std::printf("wrote %s\n", (o.dir / "manifest.ini").string().c_str());
}

DcMode mode_of(const RunConfig& cfg) {
  const std::string& m = cfg.get("regularizer.mode");
  if (m == "dc") return DcMode::dc;
  if (m == "convex") return DcMode::convex_only;
  if (m == "weakly_convex") return DcMode::weakly_convex;
  throw ConfigError("config: regularizer.mode must be dc, convex or weakly_convex");
}

void require_ct(const RunConfig& cfg, const std::string& command) {
  if (cfg.get("problem.kind") != "ct") throw ConfigError(command + ": needs problem.kind = ct");
}

DcRegularizer load_given_checkpoint(const RunConfig& cfg) {
  const std::string& path = cfg.get("output.checkpoint");
  if (path.empty()) throw MissingArtifact("no checkpoint given (set output.checkpoint or --checkpoint)");
  return load_checkpoint(path);
}

// ---- commands ------------------------------------------------------------

void cmd_train(const RunConfig& cfg) {
  const std::string& kind = cfg.get("problem.kind");
  if (kind == "spiral") {
    const auto seed = static_cast<std::uint64_t>(cfg.integer("problem.seed"));
    const SpiralTrainResult r = train_spiral(cfg, mode_of(cfg), seed);
    Out o = open_output(cfg);
    o.checkpoint("checkpoint.bin", r.reg);
    o.text("training_log.csv", training_log_csv(r.train.log));
    o.text("fit.csv", "fit_error,separation\n" + io::fmt(r.fit_error) + "," + io::fmt(r.separation) + "\n");
    o.text("contour.csv", contour_csv([&](const Vec2& x) { return dc_eval(r.reg, Vec(x)); },
                                      cfg.number("problem.grid_lo"), cfg.number("problem.grid_hi"),
                                      cfg.integer("problem.grid_res")));
    std::printf("fit_error %s separation %s\n", io::fmt(r.fit_error).c_str(), io::fmt(r.separation).c_str());
    finish(o, "train", cfg);
  } else if (kind == "ct") {
    const CtTrained t = train_ct(cfg);
    Out o = open_output(cfg);
    o.checkpoint("checkpoint.bin", t.reg);
    o.text("training_log.csv", training_log_csv(t.train.log));
    std::printf("mu %s selected epoch %d\n", io::fmt(t.mu).c_str(), t.train.selected_epoch);
    finish(o, "train", cfg);
  } else {
    throw ConfigError("train: problem.kind must be spiral or ct");
  }
}

void cmd_solve(const RunConfig& cfg) {
  require_ct(cfg, "solve");
  const DcRegularizer reg = load_given_checkpoint(cfg);
  const CtProblem prob = make_ct_problem(ct_config(cfg));
  if (reg.input_dim() != prob.a.in_dim()) throw ShapeError("solve: checkpoint dimension does not match the image size");
  const double norm = op_norm(prob.a, 500).norm;
  const double mu = ct_weight(prob);
  const SolverConfig sc = solver_config(cfg, norm);
  const int n = prob.cfg.geom.n;

  Out o = open_output(cfg);
  std::string metrics = "image,psnr,ssim,final_f,aborted\n";
  double mean = 0.0;
  for (std::size_t i = 0; i < prob.test.size(); ++i) {
    const Objective obj = Objective::from_regularizer(prob.a, prob.y_test[i], reg, mu, norm);
    const SolverTrace tr = solve(obj, sc);
    const ImageGrid img(n, n, tr.x);
    const double p = psnr(tr.x, prob.test[i].pixels);
    const double s = ssim(img, prob.test[i]);
    mean += p / static_cast<double>(prob.test.size());
    metrics += std::to_string(i) + "," + io::fmt(p) + "," + io::fmt(s) + "," + io::fmt(tr.records.back().f) + "," +
               (tr.aborted ? "1" : "0") + "\n";
    if (i == 0) {
      o.text("trace.csv", trace_csv(tr));
      o.text("checks.csv", "check,value,pass\nmonotone_violation," + io::fmt(monotone_violation(tr)) + "," +
                               (monotone_violation(tr) <= 0.0 ? "1" : "0") + "\n");
    }
    if (cfg.flag("output.images")) {
      char name[32];
      std::snprintf(name, sizeof name, "recon_%02zu.pgm", i);
      o.image(name, img);
    }
  }
  o.text("metrics.csv", metrics);
  std::printf("%s mean psnr %s over %zu images\n", algorithm_name(sc.algorithm).c_str(), io::fmt(mean).c_str(),
              prob.test.size());
  finish(o, "solve", cfg);
}

void cmd_stargeom(const RunConfig& cfg) {
  const int m = cfg.integer("problem.star_m");
  const double alpha = cfg.number("problem.star_alpha");
  const int samples = cfg.integer("problem.star_samples");
  const int res = cfg.integer("problem.star_contour_res");
  const auto seed = static_cast<std::uint64_t>(cfg.integer("problem.seed"));
  if (m < 8 || samples < 1 || res < 2) throw ConfigError("stargeom: need star_m >= 8, star_samples >= 1, contour_res >= 2");
  if (!(alpha > 0.0)) throw ConfigError("stargeom: star_alpha must be > 0");

  const StarBody k = StarBody::lp_ball(m, cfg.number("problem.star_inner_p"));
  const StarBody c = StarBody::lp_ball(m, cfg.number("problem.star_outer_p"), cfg.number("problem.star_outer_scale"));
  const StarBody mb = harmonic_combination(k, c, alpha);
  const DcWitnessReport w = dc_witness_check(k, c, alpha, samples, seed);

  const RadialDensity pr = RadialDensity::gaussian(Vec2::Zero(), (Mat2() << 1.0, 0.3, 0.3, 0.8).finished());
  const RadialDensity pn = RadialDensity::gaussian(Vec2::Zero(), 0.16 * Mat2::Identity());
  const StarBody opt = optimal_star_body(pr, &pn, alpha, m, true);
  const ObjectiveIdentityReport id = objective_identity_check(pr, &pn, alpha, k, samples, seed + 1);

  auto field = [alpha](const StarBody& b) {
    return [&b, alpha](const Vec2& x) { return std::pow(gauge(b, x), alpha); };
  };
  Out o = open_output(cfg);
  o.text("body_K.csv", star_body_csv(k));
  o.text("body_C.csv", star_body_csv(c));
  o.text("body_M.csv", star_body_csv(mb));
  o.text("optimal_body.csv", star_body_csv(opt));
  o.text("contour_K.csv", contour_csv(field(k), -3.0, 3.0, res));
  o.text("contour_M.csv", contour_csv(field(mb), -3.0, 3.0, res));
  o.text("contour_C.csv", contour_csv(field(c), -3.0, 3.0, res));
  std::string checks = "check,value,pass\n";
  checks += "m_convex_violations," + std::to_string(w.m_convex.violations) + "," + (w.m_convex.pass() ? "1" : "0") + "\n";
  checks += "c_convex_violations," + std::to_string(w.c_convex.violations) + "," + (w.c_convex.pass() ? "1" : "0") + "\n";
  checks += "dc_identity_error," + io::fmt(w.identity_error) + "," + (w.identity_pass ? "1" : "0") + "\n";
  checks += "objective_identity_clean," + io::fmt(id.clean.mc_mean - id.clean.quadrature) + "," +
            (id.clean.agree() ? "1" : "0") + "\n";
  checks += "objective_identity_noisy," + io::fmt(id.noisy->mc_mean - id.noisy->quadrature) + "," +
            (id.noisy->agree() ? "1" : "0") + "\n";
  o.text("checks.csv", checks);
  std::printf("dc witness %s, objective identity %s\n", w.pass() ? "pass" : "FAIL", id.pass() ? "pass" : "FAIL");
  finish(o, "stargeom", cfg);
}

void cmd_ablate(const RunConfig& cfg) {
  require_ct(cfg, "ablate");
  Out o = open_output(cfg);
  CtProblem prob;
  DcRegularizer reg;
  if (cfg.get("output.checkpoint").empty()) {
    CtTrained t = train_ct(cfg);
    o.checkpoint("checkpoint.bin", t.reg);
    o.text("training_log.csv", training_log_csv(t.train.log));
    prob = std::move(t.prob);
    reg = std::move(t.reg);
  } else {
    reg = load_given_checkpoint(cfg);
    prob = make_ct_problem(ct_config(cfg));
  }
  const std::vector<AblationRow> rows = ablate(cfg, prob, reg);
  o.text("ablation.csv", ablation_csv(cfg.get("solver.sweep_axis"), rows));
  for (const auto& r : rows)
    std::printf("%s=%s psnr %.3f ssim %.4f T=%d\n", cfg.get("solver.sweep_axis").c_str(), io::fmt(r.value).c_str(),
                r.metrics.psnr, r.metrics.ssim, r.iterations);
  finish(o, "ablate", cfg);
}

void cmd_bench(const RunConfig& cfg) {
  const std::string& kind = cfg.get("problem.kind");
  if (kind == "spiral") {
    std::vector<std::uint64_t> seeds;
    for (int s : cfg.integers("problem.seeds")) seeds.push_back(static_cast<std::uint64_t>(s));
    const SpiralBench b = spiral_bench(cfg, seeds);
    Out o = open_output(cfg);
    o.text("spiral_fit.csv", spiral_bench_csv(b));
    std::string med = "model,median_fit_error\n";
    for (const char* model : {"icnn", "iwcnn", "idcnn"}) {
      med += std::string(model) + "," + io::fmt(b.median(model)) + "\n";
      std::printf("%-6s median fit error %.4f\n", model, b.median(model));
    }
    o.text("spiral_median.csv", med);
    finish(o, "bench", cfg);
  } else if (kind == "ct") {
    const CtTrained t = train_ct(cfg);
    const CtReport rep = run_ct_experiment(t.prob, t.reg);
    Out o = open_output(cfg);
    o.checkpoint("checkpoint.bin", t.reg);
    o.text("training_log.csv", training_log_csv(t.train.log));
    o.text("metrics.csv", ct_metrics_csv({rep}));
    std::string rows = "method,iterations,weight,psnr,ssim\n";
    for (const auto& r : rep.rows) {
      rows += r.method + "," + std::to_string(r.iterations) + "," + io::fmt(r.weight) + "," + io::fmt(r.mean.psnr) +
              "," + io::fmt(r.mean.ssim) + "\n";
      std::printf("%-16s T=%-4d psnr %.3f ssim %.4f\n", r.method.c_str(), r.iterations, r.mean.psnr, r.mean.ssim);
    }
    o.text("methods.csv", rows);
    finish(o, "bench", cfg);
  } else {
    throw ConfigError("bench: problem.kind must be spiral or ct");
  }
}

void dispatch(const std::string& command, const RunConfig& cfg) {
  if (command == "train") {
    cmd_train(cfg);
  } else if (command == "solve") {
    cmd_solve(cfg);
  } else if (command == "stargeom") {
    cmd_stargeom(cfg);
  } else if (command == "ablate") {
    cmd_ablate(cfg);
  } else if (command == "bench") {
    cmd_bench(cfg);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
}

// --section.key=value or --section.key value
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extra) {
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const std::string& a = extra[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos)
      throw ConfigError("unrecognized argument '" + a + "'");
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      cfg.set(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extra.size()) throw ConfigError("missing value for '" + a + "'");
      cfg.set(body, extra[++i]);
    }
  }
}

struct Shortcuts {
  std::string config, preset_name, algorithm, alpha, gamma, checkpoint, output;
  int inner = 0, iterations = 0, seed = -1;

  void add(CLI::App* sub) {
    sub->add_option("--config,-c", config, "INI configuration file");
    sub->add_option("--preset,-p", preset_name, "start from a named preset");
    sub->add_option("--algorithm", algorithm, "gd, dca or psm");
    sub->add_option("--alpha", alpha, "step size or auto");
    sub->add_option("--gamma", gamma, "prox strength (psm, sets alpha = 1/gamma)");
    sub->add_option("--inner", inner, "inner iterations N");
    sub->add_option("--iterations", iterations, "outer iterations T");
    sub->add_option("--checkpoint", checkpoint, "trained regularizer");
    sub->add_option("--seed", seed, "problem seed");
    sub->add_option("--output,-o", output, "output directory");
    sub->allow_extras();
  }

  RunConfig build(const std::vector<std::string>& extra) const {
    if (!config.empty() && !preset_name.empty()) throw ConfigError("give either --config or --preset");
    RunConfig cfg = !config.empty() ? RunConfig::load(config) : !preset_name.empty() ? preset(preset_name) : RunConfig();
    if (!algorithm.empty()) cfg.set("solver.algorithm", algorithm);
    if (!alpha.empty()) cfg.set("solver.alpha", alpha);
    if (!gamma.empty()) cfg.set("solver.gamma", gamma);
    if (inner > 0) cfg.set("solver.inner", std::to_string(inner));
    if (iterations > 0) cfg.set("solver.iterations", std::to_string(iterations));
    if (!checkpoint.empty()) cfg.set("output.checkpoint", checkpoint);
    if (seed >= 0) cfg.set("problem.seed", std::to_string(seed));
    if (!output.empty()) cfg.set("output.dir", output);
    apply_overrides(cfg, extra);
    return cfg;
  }
};

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"dcreg: learned difference-of-convex regularizers"};
  app.set_version_flag("--version", std::string(DCREG_VERSION));
  app.require_subcommand(1);

  std::map<std::string, Shortcuts> opts;
  std::map<std::string, CLI::App*> subs;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a regularizer (spiral or ct)"},
      {"solve", "reconstruct the CT test set with a trained regularizer"},
      {"stargeom", "star-body geometry demo and checks"},
      {"ablate", "sweep DCA inner iterations or the PSM gamma"},
      {"bench", "spiral comparison or the CT table"},
  };
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    opts[name].add(subs[name]);
  }
  std::string preset_arg;
  auto* pre = app.add_subcommand("preset", "print a preset configuration");
  pre->add_option("name", preset_arg)->required();
  std::string manifest_arg;
  Shortcuts rerun_opts;
  auto* rerun = app.add_subcommand("rerun", "repeat the command recorded in a manifest");
  rerun->add_option("manifest", manifest_arg)->required();
  rerun->add_option("--output,-o", rerun_opts.output, "output directory");
  rerun->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pre->parsed()) {
      std::cout << preset(preset_arg).to_ini();
      return 0;
    }
    if (rerun->parsed()) {
      std::string command;
      RunConfig cfg = read_manifest(manifest_arg, &command);
      if (!rerun_opts.output.empty()) cfg.set("output.dir", rerun_opts.output);
      apply_overrides(cfg, rerun->remaining());
      dispatch(command, cfg);
      return 0;
    }
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      dispatch(name, opts[name].build(sub->remaining()));
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dcreg::cli
