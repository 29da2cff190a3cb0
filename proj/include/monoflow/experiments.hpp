#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "monoflow/monoflow.hpp"

namespace monoflow::experiments {

using json = nlohmann::json;

enum class Preset { none, example1, example2 };

/// Schedule description; the exponential family takes r, theta and delta
/// from the solver parameters and its variant from the mode.
struct BetaSpec {
  std::string family = "constant";  ///< constant | power | exponential | tabulated
  double c = 1;                     ///< constant value, or power scale
  double exponent = 1;              ///< power exponent
  std::vector<std::pair<double, double>> table;

  BetaSchedule<double> build(const SolverParams<double>& p, Mode mode) const;
  std::string label() const;
};

struct RunConfig {
  std::string name = "run";
  Preset preset = Preset::example1;
  long n = 10;  ///< example2 size
  std::optional<MatrixX<double>> matrix;  ///< custom affine operator V(z) = M z + q
  std::optional<VectorX<double>> offset;
  std::optional<VectorX<double>> z_star;

  Mode mode = Mode::continuous;
  SolverParams<double> params;
  BetaSpec beta;
  IntegratorConfig<double> integrator;
  ResolventConfig<double> resolvent;
  long kmax = 10000;
  long stride = 0;
  std::optional<EnergyParams<double>> energy;

  std::optional<VectorX<double>> z0, zdot0, z1;
  bool random_start = false;
  unsigned long long seed = 0;

  std::filesystem::path out = "out";
  bool force = false;

  json to_json() const;
};

/// Raised by load_config with every violated constraint.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

RunConfig load_config(const json& j);
RunConfig load_config_text(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);

/// Constraint violations of an assembled config; empty when runnable.
std::vector<std::string> validate(const RunConfig& cfg);

/// A runnable problem instance derived from a config.
struct Instance {
  MonotoneOperator<double> op;
  VectorX<double> z_star;
  std::optional<LagrangianProblem<double>> lagrangian;
};

Instance build_instance(const RunConfig& cfg);

struct RunResult {
  std::string name;
  std::string status;  ///< ok | rejected | failed
  int exit_code = 0;   ///< 0 ok, 2 validation failure, 3 numerical failure
  std::filesystem::path csv_path;
  std::filesystem::path summary_path;
  json summary;
};

/// Runs the solver and writes <out>/<name>.csv and <out>/<name>.summary.json.
RunResult run(const RunConfig& cfg);

/// Validates and runs a raw JSON config; rejections become RunResults.
RunResult run_json(const json& j);

enum class SweepAxis { r, theta, alpha, delta, beta_family };

SweepAxis parse_axis(const std::string& name);
const char* to_string(SweepAxis axis);

struct SweepResult {
  std::vector<RunResult> runs;
  std::filesystem::path summary_path;
  json summary;
  int exit_code = 0;
};

/// One run per value, executed in parallel (MONOFLOW_THREADS caps the
/// worker count). A rejected or failed member does not stop the batch.
SweepResult sweep(const json& base, SweepAxis axis, const std::vector<std::string>& values);

/// "FAMILY[:a[:b]]" as accepted on the command line, returned as a patch of
/// top-level keys: constant[:c], power[:p[:c]], exponential[:delta].
json parse_beta_flag(const std::string& text);

}  // namespace monoflow::experiments
