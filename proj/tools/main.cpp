#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "monoflow/experiments.hpp"

namespace mx = monoflow::experiments;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void report(const mx::RunResult& r) {
  std::printf("%-40s %-9s", r.name.c_str(), r.status.c_str());
  if (!r.csv_path.empty() && r.status != "rejected") std::printf(" %s", r.csv_path.string().c_str());
  std::printf("\n");
  const auto& err = r.summary.value("error", mx::json());
  if (err.is_object()) {
    if (err.contains("problems")) {
      for (const auto& p : err["problems"]) std::fprintf(stderr, "  %s\n", p.get<std::string>().c_str());
    } else if (err.contains("message")) {
      std::fprintf(stderr, "  %s: %s\n", err.value("code", std::string()).c_str(), err["message"].get<std::string>().c_str());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run and sweep second-order monotone-operator flows and their implicit discretization."};
  std::string config_path, preset, mode, beta, sweep_spec, out, name;
  std::optional<double> r, alpha, theta, delta, horizon;
  std::optional<long> kmax, n, seed;
  bool force = false;

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "example1 | example2")->check(CLI::IsMember({"example1", "example2"}));
  app.add_option("--n", n, "size of the example2 saddle problem");
  app.add_option("--mode", mode, "continuous | discrete")->check(CLI::IsMember({"continuous", "discrete"}));
  app.add_option("--r", r, "damping exponent r");
  app.add_option("--alpha", alpha, "damping weight alpha");
  app.add_option("--theta", theta, "Hessian-damping weight theta");
  app.add_option("--delta", delta, "exponential-schedule slack delta");
  app.add_option("--beta", beta, "constant[:c] | power[:p[:c]] | exponential[:delta]");
  app.add_option("--horizon,-T", horizon, "final time T (continuous)");
  app.add_option("--kmax", kmax, "iteration count (discrete)");
  app.add_option("--out", out, "output directory");
  app.add_option("--name", name, "run name, used for output file names");
  app.add_option("--seed", seed, "seed for a random start point (with z0 = \"random\")");
  app.add_option("--sweep", sweep_spec, "AXIS=v1,v2,... with AXIS in r, theta, alpha, delta, beta-family");
  app.add_flag("--force", force, "run even when parameter or schedule validators fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  mx::json cfg = mx::json::object();
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      cfg = mx::json::parse(in);
      if (!cfg.is_object()) throw mx::ConfigError({"configuration must be a JSON object"});
    }
    if (!preset.empty()) {
      cfg.erase("operator");
      cfg["preset"] = preset;
    }
    if (!cfg.contains("preset") && !cfg.contains("operator")) cfg["preset"] = "example1";
    if (n) cfg["n"] = *n;
    if (!mode.empty()) cfg["mode"] = mode;
    if (r) cfg["r"] = *r;
    if (alpha) cfg["alpha"] = *alpha;
    if (theta) cfg["theta"] = *theta;
    if (delta) cfg["delta"] = *delta;
    if (!beta.empty()) cfg.update(mx::parse_beta_flag(beta));
    if (horizon) cfg["T"] = *horizon;
    if (kmax) cfg["kmax"] = *kmax;
    if (!out.empty()) cfg["out"] = out;
    if (!name.empty()) cfg["name"] = name;
    if (seed) cfg["seed"] = *seed;
    if (force) cfg["force"] = true;

    if (!sweep_spec.empty()) {
      const auto eq = sweep_spec.find('=');
      if (eq == std::string::npos) throw mx::ConfigError({"--sweep expects AXIS=v1,v2,..."});
      const auto axis = mx::parse_axis(sweep_spec.substr(0, eq));
      const auto values = split(sweep_spec.substr(eq + 1), ',');
      const auto result = mx::sweep(cfg, axis, values);
      for (const auto& run : result.runs) report(run);
      std::printf("sweep summary: %s\n", result.summary_path.string().c_str());
      return result.exit_code;
    }

    const auto result = mx::run_json(cfg);
    report(result);
    if (result.status != "rejected") std::printf("summary: %s\n", result.summary_path.string().c_str());
    return result.exit_code;
  } catch (const mx::json::parse_error& e) {
    std::fprintf(stderr, "config parse error: %s\n", e.what());
    return 2;
  } catch (const mx::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const monoflow::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  }
}
