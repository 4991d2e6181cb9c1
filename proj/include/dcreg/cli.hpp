#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcreg/bench.hpp"
#include "dcreg/icnn.hpp"
#include "dcreg/solve.hpp"
#include "dcreg/train.hpp"

namespace dcreg::cli {

/// Sectioned key/value run description. Every key has a default; unknown
/// sections or keys are rejected when parsing or overriding.
class RunConfig {
 public:
  RunConfig();

  /// INI text with [problem] [regularizer] [train] [solver] [output].
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// "section.key" = value; throws ConfigError naming the key when unknown.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;

  /// Canonical INI (sorted sections and keys).
  std::string to_ini() const;
  /// FNV-1a over the canonical text; independent of the input key order.
  std::string hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;  // "section.key" -> value
};

std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

// ---- builders -----------------------------------------------------------

DcRegularizer build_regularizer(const RunConfig& cfg, int input_dim);
TrainConfig train_config(const RunConfig& cfg);
CtConfig ct_config(const RunConfig& cfg);
/// Algorithm, T, N, init and step rules; "auto" alpha resolves to the PSM
/// bound for psm and to the automatic rules elsewhere.
SolverConfig solver_config(const RunConfig& cfg, double a_norm);

/// Output directory: [output] dir, relative paths resolved against
/// $DCREG_OUTPUT_ROOT when set.
std::filesystem::path output_dir(const RunConfig& cfg);

/// manifest.ini: command, seed, config hash, version, artifact hashes and the
/// full configuration, enough to re-run the command.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::map<std::string, std::string>& artifacts = {});
/// Configuration and command stored in a manifest.
RunConfig read_manifest(const std::filesystem::path& path, std::string* command = nullptr);

// ---- workflows ----------------------------------------------------------

/// Regularizer over R^2 for the spiral, trained on coordinates divided by
/// [problem] spiral_scale and mapped back to the original coordinates.
struct SpiralTrainResult {
  DcRegularizer reg;
  TrainResult train;
  double fit_error = 0.0;
  double separation = 0.0;  // held-out mean R(noisy) - mean R(clean)
};
SpiralTrainResult train_spiral(const RunConfig& cfg, DcMode mode, std::uint64_t seed);

struct SpiralBenchRow {
  std::string model;  // icnn, iwcnn, idcnn
  std::uint64_t seed = 0;
  double fit_error = 0.0;
  double separation = 0.0;
};
struct SpiralBench {
  std::vector<SpiralBenchRow> rows;
  double median(const std::string& model) const;
};
SpiralBench spiral_bench(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds);
std::string spiral_bench_csv(const SpiralBench& b);

/// CT problem plus a regularizer trained on it with validation-PSNR epoch
/// selection.
struct CtTrained {
  CtProblem prob;
  DcRegularizer reg;
  TrainResult train;
  double mu = 0.0;
};
CtTrained train_ct(const RunConfig& cfg);

struct AblationRow {
  double value = 0.0;
  Metrics metrics;
  int iterations = 0;
  std::string config_hash;
};
/// [solver] sweep_axis = inner (DCA N) or gamma (PSM, alpha = 1/gamma).
std::vector<AblationRow> ablate(const RunConfig& cfg, const CtProblem& prob, const DcRegularizer& reg);
std::string ablation_csv(const std::string& axis, const std::vector<AblationRow>& rows);

/// Entry point shared by the executable and the tests; returns the exit code
/// (0 ok, 2 config error, 3 missing artifact, 4 numerical failure, 1 other).
int run(int argc, const char* const* argv);

}  // namespace dcreg::cli
