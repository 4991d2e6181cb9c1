#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dcreg/bench.hpp"
#include "dcreg/cli.hpp"
#include "dcreg/error.hpp"
#include "dcreg/icnn.hpp"
#include "dcreg/io.hpp"
#include "dcreg/linops.hpp"
#include "dcreg/solve.hpp"
#include "dcreg/stargeom.hpp"
#include "dcreg/train.hpp"

namespace py = pybind11;
using namespace dcreg;

namespace {

Vec2 as2(const Vec& v) {
  if (v.size() != 2) throw ShapeError("expected a point in R^2");
  return Vec2(v[0], v[1]);
}

std::vector<Vec> rows_of(const Mat& m) {
  std::vector<Vec> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
  return out;
}

Mat points(const std::vector<Vec2>& p) {
  Mat m(static_cast<Eigen::Index>(p.size()), 2);
  for (std::size_t i = 0; i < p.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = p[i].transpose();
  return m;
}

TermPtr term(const std::string& name, int rows, int cols, double rho) {
  if (name == "zero") return zero_term();
  if (name == "l1") return l1_term();
  if (name == "l2") return l2_term();
  if (name == "quadratic") return quadratic_term(rho);
  if (name == "tv") return tv_term(rows, cols);
  throw ConfigError("unknown term '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_dcreg, m) {
  m.doc() = "Learned difference-of-convex regularizers";
  m.attr("__version__") = DCREG_VERSION;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MissingArtifact>(m, "MissingArtifact", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  // ---- networks -----------------------------------------------------------
  py::class_<Activation>(m, "Activation")
      .def_static("relu", &Activation::relu)
      .def_static("leaky_relu", &Activation::leaky_relu, py::arg("slope") = 0.2)
      .def_static("softplus", &Activation::softplus, py::arg("beta") = 1.0)
      .def_static("squared_hinge", &Activation::squared_hinge);

  py::class_<IcnnParams>(m, "Icnn")
      .def_static("init", &IcnnParams::init, py::arg("input_dim"), py::arg("widths"),
                  py::arg("activation") = Activation::leaky_relu(0.2), py::arg("seed") = 0)
      .def_readonly("input_dim", &IcnnParams::input_dim)
      .def_property_readonly("widths", &IcnnParams::widths)
      .def_property_readonly("param_count", &IcnnParams::param_count)
      .def("nonneg", &IcnnParams::nonneg)
      .def("flatten", &IcnnParams::flatten)
      .def("unflatten", &IcnnParams::unflatten)
      .def("__call__", &icnn_eval)
      .def("grad", &icnn_grad_x)
      .def("eval_batch", &icnn_eval_batch)
      .def("grad_batch", &icnn_grad_batch);

  py::enum_<DcMode>(m, "DcMode")
      .value("dc", DcMode::dc)
      .value("convex_only", DcMode::convex_only)
      .value("weakly_convex", DcMode::weakly_convex);

  py::class_<DcRegularizer>(m, "DcRegularizer")
      .def(py::init([](IcnnParams r1, std::optional<IcnnParams> r2, DcMode mode, double rho) {
             DcRegularizer r;
             r.r1 = std::move(r1);
             if (r2) r.r2 = std::move(*r2);
             r.mode = mode;
             r.rho = rho;
             return r;
           }),
           py::arg("r1"), py::arg("r2") = py::none(), py::arg("mode") = DcMode::dc, py::arg("rho") = 0.0)
      .def_readwrite("r1", &DcRegularizer::r1)
      .def_readwrite("r2", &DcRegularizer::r2)
      .def_readwrite("mode", &DcRegularizer::mode)
      .def_readwrite("rho", &DcRegularizer::rho)
      .def_property_readonly("input_dim", &DcRegularizer::input_dim)
      .def("__call__", &dc_eval)
      .def("grad", [](const DcRegularizer& r, const Vec& x) {
        const DcGradient g = dc_grad(r, x);
        return py::make_tuple(g.g1, g.g2);
      });
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("reg"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  // ---- training -----------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_gp", &TrainConfig::lambda_gp)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("paired_batches", &TrainConfig::paired_batches);

  py::class_<EpochLog>(m, "EpochLog")
      .def_readonly("epoch", &EpochLog::epoch)
      .def_readonly("loss", &EpochLog::loss)
      .def_readonly("clean_term", &EpochLog::clean_term)
      .def_readonly("noisy_term", &EpochLog::noisy_term)
      .def_readonly("penalty_term", &EpochLog::penalty_term)
      .def_readonly("val_psnr", &EpochLog::val_psnr);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("reg", &TrainResult::reg)
      .def_readonly("log", &TrainResult::log)
      .def_readonly("selected_epoch", &TrainResult::selected_epoch);

  m.def(
      "train",
      [](const DcRegularizer& init, const Mat& clean, const Mat& noisy, const TrainConfig& cfg) {
        py::gil_scoped_release nogil;
        return train(init, SampleSource{rows_of(clean), rows_of(noisy)}, cfg);
      },
      py::arg("init"), py::arg("clean"), py::arg("noisy"), py::arg("config"),
      "Adversarial training; clean and noisy samples are the rows of the two arrays.");

  // ---- operators ----------------------------------------------------------
  py::class_<LinearOp>(m, "LinearOp")
      .def_static("identity", &LinearOp::identity, py::arg("dim"), py::arg("scale") = 1.0)
      .def_static("dense", &LinearOp::dense)
      .def_static("radon",
                  [](int n, int angles, int rays, double wedge) {
                    RadonGeometry g;
                    g.n = n;
                    g.num_angles = angles;
                    g.rays_per_angle = rays;
                    g.missing_wedge_deg = wedge;
                    return build_radon(g);
                  },
                  py::arg("n"), py::arg("angles"), py::arg("rays"), py::arg("missing_wedge_deg") = 0.0)
      .def_property_readonly("in_dim", &LinearOp::in_dim)
      .def_property_readonly("out_dim", &LinearOp::out_dim)
      .def("apply", &LinearOp::apply)
      .def("adjoint", &LinearOp::adjoint)
      .def("norm", [](const LinearOp& a, int iters) { return op_norm(a, iters).norm; }, py::arg("iters") = 200)
      .def("pinv", [](const LinearOp& a, const Vec& y, double ridge) { return pseudo_inverse_init(a, y, ridge).x; },
           py::arg("y"), py::arg("ridge") = 1e-3);

  // ---- solvers ------------------------------------------------------------
  py::class_<Objective>(m, "Objective")
      .def(py::init([](LinearOp a, Vec y, const std::string& r1, const std::string& r2, double mu, int rows, int cols,
                       double rho) {
             return Objective(std::move(a), std::move(y), term(r1, rows, cols, rho), term(r2, rows, cols, rho), mu);
           }),
           py::arg("a"), py::arg("y"), py::arg("r1") = "zero", py::arg("r2") = "zero", py::arg("mu") = 1.0,
           py::arg("rows") = 0, py::arg("cols") = 0, py::arg("rho") = 1.0,
           "Hand-crafted terms: zero, l1, l2, quadratic (rho) or tv (rows x cols).")
      .def_static("from_regularizer", &Objective::from_regularizer, py::arg("a"), py::arg("y"), py::arg("reg"),
                  py::arg("mu"), py::arg("norm") = -1.0)
      .def("estimate_smoothness", &Objective::estimate_smoothness, py::arg("reg"), py::arg("lo"), py::arg("hi"),
           py::arg("pairs") = 500, py::arg("seed") = 0)
      .def_readonly("mu", &Objective::mu)
      .def_readonly("a_norm", &Objective::a_norm)
      .def_readonly("l1", &Objective::l1)
      .def_readonly("l2", &Objective::l2)
      .def("value", &Objective::value)
      .def("grad", &Objective::grad);

  py::class_<TraceRecord>(m, "TraceRecord")
      .def_readonly("t", &TraceRecord::t)
      .def_readonly("f", &TraceRecord::f)
      .def_readonly("grad_norm", &TraceRecord::grad_norm)
      .def_readonly("step_norm", &TraceRecord::step_norm)
      .def_readonly("inner_iters", &TraceRecord::inner_iters);

  py::class_<SolverTrace>(m, "SolverTrace")
      .def_readonly("x", &SolverTrace::x)
      .def_readonly("records", &SolverTrace::records)
      .def_readonly("alpha", &SolverTrace::alpha)
      .def_readonly("gamma", &SolverTrace::gamma)
      .def_readonly("aborted", &SolverTrace::aborted)
      .def_readonly("message", &SolverTrace::message)
      .def("csv", &trace_csv);

  m.def(
      "solve",
      [](const Objective& obj, const std::string& algorithm, int iterations, int inner, double alpha,
         std::optional<Vec> x0, bool exact_inner) {
        SolverConfig c;
        c.algorithm = parse_algorithm(algorithm);
        c.iterations = iterations;
        c.inner = inner;
        c.alpha = alpha;
        if (x0) {
          c.init = InitPolicy::custom;
          c.x0 = *x0;
        }
        c.inner_mode = exact_inner ? InnerMode::exact : InnerMode::steps;
        py::gil_scoped_release nogil;
        return solve(obj, c);
      },
      py::arg("objective"), py::arg("algorithm") = "psm", py::arg("iterations") = 100, py::arg("inner") = 1,
      py::arg("alpha") = 0.0, py::arg("x0") = py::none(), py::arg("exact_inner") = false,
      "Runs gd, dca or psm; alpha = 0 selects the automatic step.");

  m.def("prox", [](const std::string& name, const Vec& v, double tau, int rows, int cols, double rho) {
    return term(name, rows, cols, rho)->prox(v, tau);
  }, py::arg("term"), py::arg("v"), py::arg("tau"), py::arg("rows") = 0, py::arg("cols") = 0, py::arg("rho") = 1.0);

  // ---- benchmarks ---------------------------------------------------------
  m.def(
      "gen_spiral",
      [](int count, double sigma, std::uint64_t seed) {
        const SpiralDataset d = gen_spiral(count, sigma, seed);
        return py::make_tuple(points(d.clean), points(d.noisy), d.labels);
      },
      py::arg("count") = 1000, py::arg("sigma") = 1.0, py::arg("seed") = 0,
      "Returns (clean, noisy, labels).");
  m.def(
      "regularizer_fit_error",
      [](const DcRegularizer& r, int count, double sigma, std::uint64_t seed, double lo, double hi, int res) {
        return regularizer_fit_error(r, gen_spiral(count, sigma, seed), GridSpec{lo, hi, res});
      },
      py::arg("reg"), py::arg("count") = 1000, py::arg("sigma") = 1.0, py::arg("seed") = 0, py::arg("lo") = -20.0,
      py::arg("hi") = 20.0, py::arg("res") = 81);
  m.def("psnr", &psnr, py::arg("x"), py::arg("ref"), py::arg("peak") = 1.0);
  m.def(
      "ssim",
      [](const Vec& x, const Vec& ref, int rows, int cols, double peak) {
        return ssim(ImageGrid(rows, cols, x), ImageGrid(rows, cols, ref), peak);
      },
      py::arg("x"), py::arg("ref"), py::arg("rows"), py::arg("cols"), py::arg("peak") = 1.0);
  m.def(
      "phantom",
      [](int n, const std::string& kind, std::uint64_t seed) {
        const PhantomKind k = kind == "shepp_logan" ? PhantomKind::shepp_logan : PhantomKind::random_ellipses;
        return make_phantom(n, k, seed).image.pixels;
      },
      py::arg("n"), py::arg("kind") = "random_ellipses", py::arg("seed") = 0);

  // ---- star geometry ------------------------------------------------------
  py::class_<StarBody>(m, "StarBody")
      .def(py::init<std::vector<double>>())
      .def_static("disc", &StarBody::disc, py::arg("m"), py::arg("r") = 1.0)
      .def_static("lp_ball", &StarBody::lp_ball, py::arg("m"), py::arg("p"), py::arg("scale") = 1.0)
      .def_property_readonly("radii", &StarBody::radii)
      .def("gauge", [](const StarBody& k, const Vec& x) { return k.gauge(as2(x)); })
      .def("radial", &StarBody::radial)
      .def("volume", &StarBody::volume)
      .def("scaled", &StarBody::scaled)
      .def("csv", &star_body_csv);

  m.def("harmonic_combination", &harmonic_combination, py::arg("k"), py::arg("c"), py::arg("alpha"));
  m.def("harmonic_difference", &harmonic_difference, py::arg("m"), py::arg("c"), py::arg("alpha"));
  m.def("dual_mixed_volume", &dual_mixed_volume, py::arg("c"), py::arg("k"), py::arg("i"));
  m.def(
      "rho_gaussian",
      [](const Vec& mean, const Mat& cov, double alpha, double theta) {
        return rho_p_alpha(RadialDensity::gaussian(as2(mean), Mat2(cov)), alpha, theta);
      },
      py::arg("mean"), py::arg("cov"), py::arg("alpha"), py::arg("theta"),
      "rho_{p,alpha} of a planar Gaussian along angle theta.");
  m.def(
      "optimal_star_body_gaussian",
      [](const Mat& cov_r, std::optional<Mat> cov_n, double alpha, int m_dirs, bool unit_volume) {
        const RadialDensity pr = RadialDensity::gaussian(Vec2::Zero(), Mat2(cov_r));
        if (!cov_n) return optimal_star_body(pr, nullptr, alpha, m_dirs, unit_volume);
        const RadialDensity pn = RadialDensity::gaussian(Vec2::Zero(), Mat2(*cov_n));
        return optimal_star_body(pr, &pn, alpha, m_dirs, unit_volume);
      },
      py::arg("cov_r"), py::arg("cov_n") = py::none(), py::arg("alpha") = 1.0, py::arg("m") = 1024,
      py::arg("unit_volume") = false);

  // ---- configuration and command line -------------------------------------
  py::class_<cli::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", &cli::RunConfig::parse)
      .def_static("load", &cli::RunConfig::load)
      .def("set", &cli::RunConfig::set)
      .def("get", &cli::RunConfig::get)
      .def("to_ini", &cli::RunConfig::to_ini)
      .def("hash", &cli::RunConfig::hash)
      .def("values", &cli::RunConfig::values);
  m.def("preset", &cli::preset);
  m.def("preset_names", &cli::preset_names);
  m.def(
      "run",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "dcreg");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release nogil;
        return cli::run(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Command-line entry point; returns the exit code.");
}
