#include <cstdlib>
#include <filesystem>

#include <doctest.h>

#include "dcreg/cli.hpp"
#include "dcreg/error.hpp"
#include "dcreg/io.hpp"

using namespace dcreg;
using namespace dcreg::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dcreg_cli_" + name);
  fs::remove_all(p);
  return p;
}

int call(std::vector<std::string> args) {
  args.insert(args.begin(), "dcreg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

RunConfig tiny_ct() {
  RunConfig c = preset("ct-sparse-desk");
  c.set("problem.ct_n", "12");
  c.set("problem.ct_angles", "6");
  c.set("problem.ct_rays", "12");
  c.set("problem.ct_train", "8");
  c.set("problem.ct_val", "2");
  c.set("problem.ct_test", "2");
  c.set("problem.ct_tv", "false");
  c.set("regularizer.widths", "4,4");
  c.set("train.epochs", "2");
  c.set("train.batch_size", "4");
  c.set("train.val_iters", "5");
  c.set("solver.iterations", "6");
  c.set("solver.mu_draws", "4");
  return c;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("defaults, overrides and unknown keys") {
    RunConfig c;
    CHECK(c.get("problem.kind") == "spiral");
    CHECK(c.integer("train.batch_size") == 100);
    c.set("solver.inner", "3");
    CHECK(c.integer("solver.inner") == 3);
    CHECK_THROWS_AS(c.set("solver.inners", "3"), ConfigError);
    CHECK_THROWS_AS(c.get("nope.key"), ConfigError);
    c.set("train.lr", "abc");
    CHECK_THROWS_AS(c.number("train.lr"), ConfigError);
    c.set("solver.inner", "2.5");
    CHECK_THROWS_AS(c.integer("solver.inner"), ConfigError);
    CHECK(c.numbers("problem.ct_tv_weights").size() == 5);
    CHECK(std::isinf(c.number("problem.star_inner_p")));
  }

  TEST_CASE("parse rejects unknown sections and keys") {
    CHECK_NOTHROW(RunConfig::parse("[train]\nepochs = 3\n"));
    CHECK_THROWS_AS(RunConfig::parse("[training]\nepochs = 3\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("[train]\nepoch = 3\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("[train\nepochs = 3\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/x.ini"), MissingArtifact);
  }

  TEST_CASE("hash is independent of key order and sensitive to values") {
    const RunConfig a = RunConfig::parse("[train]\nepochs = 3\nlr = 0.1\n[solver]\ninner = 2\n");
    const RunConfig b = RunConfig::parse("[solver]\ninner = 2\n[train]\nlr = 0.1\nepochs = 3\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.to_ini() == b.to_ini());
    RunConfig c = a;
    c.set("solver.inner", "3");
    CHECK(c.hash() != a.hash());
    CHECK(RunConfig::parse(a.to_ini()).hash() == a.hash());
  }

  TEST_CASE("presets") {
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name));
    CHECK_THROWS_AS(preset("nope"), ConfigError);
    CHECK_NOTHROW(ct_config(preset("ct-sparse-desk")));
    CHECK(ct_config(preset("ct-limited-desk")).geom.missing_wedge_deg == 60.0);
  }

  TEST_CASE("builders") {
    RunConfig c;
    c.set("regularizer.widths", "5,6");
    DcRegularizer r = build_regularizer(c, 3);
    CHECK(r.mode == DcMode::dc);
    CHECK(r.r1.widths() == std::vector<int>{5, 6});
    CHECK(r.r2.widths() == std::vector<int>{5, 6});
    CHECK(r.r1.nonneg());
    c.set("regularizer.mode", "convex");
    CHECK(build_regularizer(c, 3).mode == DcMode::convex_only);
    c.set("regularizer.mode", "other");
    CHECK_THROWS_AS(build_regularizer(c, 3), ConfigError);
    c.set("regularizer.mode", "dc");
    c.set("regularizer.activation", "tanh");
    CHECK_THROWS_AS(build_regularizer(c, 3), ConfigError);

    RunConfig s;
    s.set("solver.algorithm", "psm");
    CHECK(solver_config(s, 2.0).alpha == doctest::Approx(1.0 / (1.01 * 4.0)));
    s.set("solver.gamma", "8");
    CHECK(solver_config(s, 2.0).alpha == doctest::Approx(0.125));
    s.set("solver.gamma", "3");
    CHECK_THROWS_AS(solver_config(s, 2.0), ConfigError);
    s.set("solver.gamma", "auto");
    s.set("solver.algorithm", "dca");
    s.set("solver.inner", "4");
    CHECK(solver_config(s, 2.0).alpha == 0.0);
    CHECK(solver_config(s, 2.0).inner == 4);
    s.set("solver.algorithm", "newton");
    CHECK_THROWS(solver_config(s, 2.0));

    RunConfig ct = preset("ct-sparse-desk");
    ct.set("problem.ct_wedge", "30");
    CHECK_THROWS_AS(ct_config(ct), ConfigError);
  }

  TEST_CASE("manifest round trip and tamper detection") {
    const fs::path dir = scratch("manifest");
    RunConfig c;
    c.set("train.epochs", "7");
    write_manifest(dir, "train", c, {{"a.csv", "0123"}});
    std::string cmd;
    const RunConfig back = read_manifest(dir / "manifest.ini", &cmd);
    CHECK(cmd == "train");
    CHECK(back.hash() == c.hash());
    std::string text = io::read_text(dir / "manifest.ini");
    text.replace(text.find("epochs = 7"), 10, "epochs = 8");
    io::write_text(dir / "manifest.ini", text);
    CHECK_THROWS_AS(read_manifest(dir / "manifest.ini"), ConfigError);
    CHECK_THROWS_AS(read_manifest(dir / "missing.ini"), MissingArtifact);
  }

  TEST_CASE("exit codes") {
    CHECK(call({"train", "--nope.key=1"}) == 2);
    CHECK(call({"train", "--preset", "nope"}) == 2);
    CHECK(call({"solve", "--problem.kind=ct"}) == 3);
    CHECK(call({"solve", "--problem.kind=ct", "--checkpoint", "/nonexistent/c.bin"}) == 3);
    CHECK(call({"frobnicate"}) == 2);
    CHECK(call({"preset", "spiral"}) == 0);
  }

  TEST_CASE("stargeom command writes its artifacts and reruns identically") {
    const fs::path dir = scratch("stargeom");
    REQUIRE(call({"stargeom", "-o", dir.string(), "--problem.star_m=256", "--problem.star_samples=2000",
                  "--problem.star_contour_res=21"}) == 0);
    for (const char* f : {"body_K.csv", "body_C.csv", "body_M.csv", "contour_K.csv", "checks.csv", "manifest.ini"})
      CHECK(fs::exists(dir / f));
    const fs::path again = scratch("stargeom_again");
    REQUIRE(call({"rerun", (dir / "manifest.ini").string(), "-o", again.string()}) == 0);
    for (const char* f : {"body_M.csv", "contour_K.csv", "checks.csv"})
      CHECK(io::read_text(dir / f) == io::read_text(again / f));
  }

  TEST_CASE("tiny ct train, solve and ablate") {
    const fs::path dir = scratch("ct");
    RunConfig c = tiny_ct();
    c.set("output.dir", (dir / "train").string());
    const fs::path ini = dir / "run.ini";
    io::write_text(ini, c.to_ini());
    REQUIRE(call({"train", "--config", ini.string()}) == 0);
    const fs::path ckpt = dir / "train" / "checkpoint.bin";
    REQUIRE(fs::exists(ckpt));
    CHECK(load_checkpoint(ckpt).input_dim() == 144);

    for (const char* alg : {"gd", "dca", "psm"}) {
      const fs::path out = dir / (std::string("solve_") + alg);
      REQUIRE(call({"solve", "--config", ini.string(), "--checkpoint", ckpt.string(), "--algorithm", alg, "-o",
                    out.string(), "--inner", "2"}) == 0);
      CHECK(fs::exists(out / "trace.csv"));
      CHECK(fs::exists(out / "recon_01.pgm"));
      const std::string m = io::read_text(out / "metrics.csv");
      CHECK(m.rfind("image,psnr,ssim,final_f,aborted\n", 0) == 0);
    }
    // gamma below |A|^2 is refused before any work
    CHECK(call({"solve", "--config", ini.string(), "--checkpoint", ckpt.string(), "--algorithm", "psm", "--gamma",
                "1e-6", "-o", (dir / "bad").string()}) == 2);

    const fs::path ab = dir / "ablate";
    REQUIRE(call({"ablate", "--config", ini.string(), "--checkpoint", ckpt.string(), "-o", ab.string(),
                  "--solver.sweep_values=1,2,3"}) == 0);
    const std::string csv = io::read_text(ab / "ablation.csv");
    CHECK(csv.rfind("inner,psnr,ssim,iterations,config_hash\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    const fs::path ab2 = dir / "ablate2";
    REQUIRE(call({"rerun", (ab / "manifest.ini").string(), "-o", ab2.string()}) == 0);
    CHECK(io::read_text(ab2 / "ablation.csv") == csv);
  }

  TEST_CASE("ablation hashes differ per point") {
    const RunConfig c = tiny_ct();
    const CtProblem prob = make_ct_problem(ct_config(c));
    const DcRegularizer reg = build_regularizer(c, prob.a.in_dim());
    const auto rows = ablate(c, prob, reg);
    REQUIRE(rows.size() == 8);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].config_hash != rows[i - 1].config_hash);
    RunConfig g = c;
    g.set("solver.sweep_axis", "gamma");
    g.set("solver.sweep_values", "0.001");
    CHECK_THROWS_AS(ablate(g, prob, reg), ConfigError);
    g.set("solver.sweep_axis", "depth");
    CHECK_THROWS_AS(ablate(g, prob, reg), ConfigError);
  }

  TEST_CASE("spiral median") {
    SpiralBench b;
    b.rows = {{"icnn", 1, 3.0, 0}, {"icnn", 2, 1.0, 0}, {"icnn", 3, 2.0, 0}, {"idcnn", 1, 4.0, 0}, {"idcnn", 2, 2.0, 0}};
    CHECK(b.median("icnn") == 2.0);
    CHECK(b.median("idcnn") == 3.0);
    CHECK_THROWS_AS(b.median("iwcnn"), ContractError);
  }

  TEST_CASE("output root") {
    RunConfig c;
    c.set("output.dir", "runs/x");
    ::setenv("DCREG_OUTPUT_ROOT", "/tmp/root", 1);
    CHECK(output_dir(c) == fs::path("/tmp/root/runs/x"));
    ::unsetenv("DCREG_OUTPUT_ROOT");
    CHECK(output_dir(c) == fs::path("runs/x"));
    c.set("output.dir", "/abs");
    CHECK(output_dir(c) == fs::path("/abs"));
  }
}
