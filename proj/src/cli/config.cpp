#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dcreg/cli.hpp"
#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

namespace dcreg::cli {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::string>& schema() {
  static const std::map<std::string, std::string> s = {
      {"problem.kind", "spiral"},
      {"problem.seed", "1"},
      {"problem.seeds", "1,2,3"},
      {"problem.spiral_count", "1000"},
      {"problem.spiral_sigma", "1"},
      {"problem.spiral_scale", "8"},
      {"problem.spiral_symmetrize", "true"},
      {"problem.grid_lo", "-20"},
      {"problem.grid_hi", "20"},
      {"problem.grid_res", "81"},
      {"problem.ct_setting", "sparse"},
      {"problem.ct_n", "32"},
      {"problem.ct_angles", "30"},
      {"problem.ct_rays", "32"},
      {"problem.ct_wedge", "0"},
      {"problem.ct_noise_rel", "0.01"},
      {"problem.ct_ridge", "0.01"},
      {"problem.ct_train", "200"},
      {"problem.ct_val", "4"},
      {"problem.ct_test", "10"},
      {"problem.ct_tv", "true"},
      {"problem.ct_tv_weights", "0.25,0.5,1,2,4"},
      {"problem.star_m", "1024"},
      {"problem.star_alpha", "1"},
      {"problem.star_inner_p", "inf"},
      {"problem.star_outer_p", "3"},
      {"problem.star_outer_scale", "1.8"},
      {"problem.star_samples", "10000"},
      {"problem.star_contour_res", "121"},
      {"regularizer.mode", "dc"},
      {"regularizer.widths", "128,128,128"},
      {"regularizer.activation", "leaky_relu"},
      {"regularizer.slope", "0.2"},
      {"regularizer.beta", "1"},
      {"regularizer.rho", "0.1"},
      {"regularizer.r2_head_scale", "0.1"},
      {"regularizer.init_seed", "7"},
      {"regularizer.first_layer", "uniform"},
      {"train.epochs", "100"},
      {"train.lr", "0.002"},
      {"train.batch_size", "100"},
      {"train.lambda_gp", "10"},
      {"train.optimizer", "adam"},
      {"train.penalty", "interpolate"},
      {"train.paired_batches", "true"},
      {"train.validate", "true"},
      {"train.val_iters", "100"},
      {"solver.algorithm", "psm"},
      {"solver.iterations", "300"},
      {"solver.inner", "1"},
      {"solver.dca_inner", "5"},
      {"solver.psm_inner", "1"},
      {"solver.alpha", "auto"},
      {"solver.gamma", "auto"},
      {"solver.init", "pseudo_inverse"},
      {"solver.inner_mode", "steps"},
      {"solver.mu", "auto"},
      {"solver.mu_draws", "64"},
      {"solver.early_stop", "false"},
      {"solver.sweep_axis", "inner"},
      {"solver.sweep_values", "1,2,3,4,5,6,7,8"},
      {"output.dir", "runs/default"},
      {"output.checkpoint", ""},
      {"output.images", "true"},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_number(const std::string& key, const std::string& v) {
  if (v == "inf") return INFINITY;
  if (v == "-inf") return -INFINITY;
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: " + key + " = '" + v + "' is not a number");
}

std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_tree(RunConfig& cfg, const pt::ptree& tree, const std::vector<std::string>& skip) {
  for (const auto& [section, body] : tree) {
    if (std::find(skip.begin(), skip.end(), section) != skip.end()) continue;
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
}

pt::ptree read_tree(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return tree;
}

}  // namespace

RunConfig::RunConfig() : values_(schema()) {}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  apply_tree(cfg, read_tree(text), {});
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("config: no file " + path.string());
  return parse(io::read_text(path));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const { return to_number(key, get(key)); }

int RunConfig::integer(const std::string& key) const {
  const double v = number(key);
  if (v != std::floor(v) || std::abs(v) > 2e9) throw ConfigError("config: " + key + " must be an integer");
  return static_cast<int>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " = '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(get(key))) out.push_back(to_number(key, item));
  return out;
}

std::vector<int> RunConfig::integers(const std::string& key) const {
  std::vector<int> out;
  for (double v : numbers(key)) {
    if (v != std::floor(v)) throw ConfigError("config: " + key + " must list integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += k.substr(dot + 1) + " = " + v + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return io::hex64(io::fnv1a(to_ini())); }

std::vector<std::string> preset_names() { return {"spiral", "ct-sparse-desk", "ct-limited-desk", "stargeom-demo"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "spiral") {
    c.set("problem.kind", "spiral");
    c.set("output.dir", "runs/spiral");
  } else if (name == "ct-sparse-desk" || name == "ct-limited-desk") {
    const bool limited = name == "ct-limited-desk";
    c.set("problem.kind", "ct");
    c.set("problem.ct_setting", limited ? "limited" : "sparse");
    c.set("problem.ct_wedge", limited ? "60" : "0");
    c.set("regularizer.widths", "3968,32");
    c.set("regularizer.first_layer", "stencil");
    c.set("regularizer.r2_head_scale", "1");
    c.set("train.epochs", "4");
    c.set("train.lr", "0.0001");
    c.set("train.batch_size", "16");
    c.set("solver.dca_inner", limited ? "6" : "5");
    c.set("output.dir", "runs/" + name);
  } else if (name == "stargeom-demo") {
    c.set("problem.kind", "stargeom");
    c.set("output.dir", "runs/stargeom-demo");
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

// ---- builders ----------------------------------------------------------

namespace {

Activation activation(const RunConfig& cfg) {
  const std::string& a = cfg.get("regularizer.activation");
  if (a == "leaky_relu") return Activation::leaky_relu(cfg.number("regularizer.slope"));
  if (a == "softplus") return Activation::softplus(cfg.number("regularizer.beta"));
  if (a == "relu") return Activation::relu();
  throw ConfigError("config: regularizer.activation must be leaky_relu, softplus or relu");
}

}  // namespace

DcRegularizer build_regularizer(const RunConfig& cfg, int input_dim) {
  const std::vector<int> widths = cfg.integers("regularizer.widths");
  if (widths.empty()) throw ConfigError("config: regularizer.widths is empty");
  for (int w : widths)
    if (w < 1) throw ConfigError("config: regularizer.widths must be positive");
  const Activation act = activation(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.integer("regularizer.init_seed"));
  DcRegularizer r;
  const std::string& mode = cfg.get("regularizer.mode");
  if (mode == "dc") {
    r.mode = DcMode::dc;
  } else if (mode == "convex") {
    r.mode = DcMode::convex_only;
  } else if (mode == "weakly_convex") {
    r.mode = DcMode::weakly_convex;
  } else {
    throw ConfigError("config: regularizer.mode must be dc, convex or weakly_convex");
  }
  r.r1 = IcnnParams::init(input_dim, widths, act, seed);
  const std::string& first = cfg.get("regularizer.first_layer");
  if (first == "stencil") {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(input_dim))));
    if (side * side != input_dim) throw ConfigError("config: regularizer.first_layer=stencil needs a square image input");
    seed_difference_stencils(r.r1, side, side);
  } else if (first != "uniform") {
    throw ConfigError("config: regularizer.first_layer must be uniform or stencil");
  }
  if (r.mode == DcMode::dc) {
    r.r2 = IcnnParams::init(input_dim, widths, act, seed + 1);
    const double hs = cfg.number("regularizer.r2_head_scale");
    if (!(hs >= 0.0)) throw ConfigError("config: regularizer.r2_head_scale must be >= 0");
    r.r2.head *= hs;
  }
  r.rho = cfg.number("regularizer.rho");
  if (r.mode == DcMode::weakly_convex && !(r.rho >= 0.0)) throw ConfigError("config: regularizer.rho must be >= 0");
  return r;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.integer("train.epochs");
  t.lr = cfg.number("train.lr");
  t.batch_size = cfg.integer("train.batch_size");
  t.lambda_gp = cfg.number("train.lambda_gp");
  t.seed = static_cast<std::uint64_t>(cfg.integer("problem.seed"));
  const std::string& opt = cfg.get("train.optimizer");
  if (opt == "adam") {
    t.optimizer = TrainConfig::Optimizer::adam;
  } else if (opt == "sgd") {
    t.optimizer = TrainConfig::Optimizer::sgd;
  } else {
    throw ConfigError("config: train.optimizer must be adam or sgd");
  }
  const std::string& pen = cfg.get("train.penalty");
  if (pen == "interpolate") {
    t.penalty = PenaltySampling::interpolate;
  } else if (pen == "clean") {
    t.penalty = PenaltySampling::clean;
  } else if (pen == "noisy") {
    t.penalty = PenaltySampling::noisy;
  } else {
    throw ConfigError("config: train.penalty must be interpolate, clean or noisy");
  }
  t.paired_batches = cfg.flag("train.paired_batches");
  t.validate();
  return t;
}

CtConfig ct_config(const RunConfig& cfg) {
  CtConfig c;
  c.setting = cfg.get("problem.ct_setting");
  c.geom.n = cfg.integer("problem.ct_n");
  c.geom.num_angles = cfg.integer("problem.ct_angles");
  c.geom.rays_per_angle = cfg.integer("problem.ct_rays");
  c.geom.missing_wedge_deg = cfg.number("problem.ct_wedge");
  c.noise_rel = cfg.number("problem.ct_noise_rel");
  c.ridge = cfg.number("problem.ct_ridge");
  c.train_count = cfg.integer("problem.ct_train");
  c.val_count = cfg.integer("problem.ct_val");
  c.test_count = cfg.integer("problem.ct_test");
  c.seed = static_cast<std::uint64_t>(cfg.integer("problem.seed"));
  c.max_iters = cfg.integer("solver.iterations");
  c.dca_inner = cfg.integer("solver.dca_inner");
  c.psm_inner = cfg.integer("solver.psm_inner");
  c.mu = cfg.get("solver.mu") == "auto" ? 0.0 : cfg.number("solver.mu");
  c.mu_draws = cfg.integer("solver.mu_draws");
  c.tv = cfg.flag("problem.ct_tv");
  c.tv_weights = cfg.numbers("problem.ct_tv_weights");
  if ((c.setting == "limited") != (c.geom.missing_wedge_deg > 0.0))
    throw ConfigError("config: ct_setting=limited needs ct_wedge > 0 and sparse needs ct_wedge = 0");
  c.validate();
  return c;
}

SolverConfig solver_config(const RunConfig& cfg, double a_norm) {
  SolverConfig s;
  s.algorithm = parse_algorithm(cfg.get("solver.algorithm"));
  s.iterations = cfg.integer("solver.iterations");
  s.inner = cfg.integer("solver.inner");
  const std::string& a = cfg.get("solver.alpha");
  const std::string& g = cfg.get("solver.gamma");
  if (g != "auto") {
    const double gamma = cfg.number("solver.gamma");
    if (s.algorithm != Algorithm::psm) throw ConfigError("config: solver.gamma only applies to psm");
    if (!(gamma >= a_norm * a_norm))
      throw ConfigError("config: solver.gamma = " + g + " is below |A|^2 = " + io::fmt(a_norm * a_norm));
    s.gamma = gamma;
    s.alpha = 1.0 / gamma;
    if (a != "auto" && cfg.number("solver.alpha") != s.alpha)
      throw ConfigError("config: solver.alpha must equal 1/gamma for psm");
  } else if (a == "auto") {
    s.alpha = s.algorithm == Algorithm::psm ? psm_auto_alpha(a_norm) : 0.0;
  } else {
    s.alpha = cfg.number("solver.alpha");
    if (!(s.alpha > 0.0)) throw ConfigError("config: solver.alpha must be > 0 or auto");
  }
  const std::string& init = cfg.get("solver.init");
  if (init == "pseudo_inverse") {
    s.init = InitPolicy::pseudo_inverse;
  } else if (init == "zeros") {
    s.init = InitPolicy::zeros;
  } else {
    throw ConfigError("config: solver.init must be pseudo_inverse or zeros");
  }
  s.init_ridge = cfg.number("problem.ct_ridge");
  const std::string& im = cfg.get("solver.inner_mode");
  if (im == "steps") {
    s.inner_mode = InnerMode::steps;
  } else if (im == "exact") {
    s.inner_mode = InnerMode::exact;
  } else {
    throw ConfigError("config: solver.inner_mode must be steps or exact");
  }
  s.early_stop = cfg.flag("solver.early_stop");
  s.validate();
  return s;
}

std::filesystem::path output_dir(const RunConfig& cfg) {
  std::filesystem::path p = cfg.get("output.dir");
  if (p.empty()) throw ConfigError("config: output.dir is empty");
  if (p.is_relative()) {
    if (const char* root = std::getenv("DCREG_OUTPUT_ROOT"); root && *root) p = std::filesystem::path(root) / p;
  }
  return p;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::map<std::string, std::string>& artifacts) {
  std::string text = "[run]\ncommand = " + command + "\nversion = " + DCREG_VERSION +
                     "\nseed = " + cfg.get("problem.seed") + "\nconfig_hash = " + cfg.hash() + "\n";
  if (!artifacts.empty()) {
    text += "\n[artifacts]\n";
    for (const auto& [name, hash] : artifacts) text += name + " = " + hash + "\n";
  }
  text += "\n" + cfg.to_ini();
  io::write_text(dir / "manifest.ini", text);
}

RunConfig read_manifest(const std::filesystem::path& path, std::string* command) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("manifest: no file " + path.string());
  const pt::ptree tree = read_tree(io::read_text(path));
  RunConfig cfg;
  apply_tree(cfg, tree, {"run", "artifacts"});
  const std::string cmd = tree.get<std::string>("run.command", "");
  if (cmd.empty()) throw ConfigError("manifest: missing run.command");
  if (tree.get<std::string>("run.config_hash", "") != cfg.hash())
    throw ConfigError("manifest: config hash does not match its configuration");
  if (command) *command = cmd;
  return cfg;
}

}  // namespace dcreg::cli
