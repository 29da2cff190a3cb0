#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "monoflow/experiments.hpp"

namespace monoflow::experiments {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json rate_json(const RateReport<double>& r) {
  return {{"metric", r.metric},         {"model", r.model},         {"slope", r.slope},
          {"intercept", r.intercept},   {"window", {r.window_lo, r.window_hi}},
          {"residual", r.residual},     {"samples", r.samples},     {"terminal_value", r.terminal_value},
          {"decaying", r.decaying}};
}

template <typename Fit>
json guarded_fit(Fit&& fit, const std::string& metric) {
  try {
    return rate_json(fit());
  } catch (const Error& e) {
    return {{"metric", metric}, {"error", e.what()}};
  }
}

json product_json(const Series<double>& s) {
  json j;
  j["name"] = s.name;
  double mx = 0;
  for (double v : s.value) mx = std::max(mx, std::abs(v));
  j["max"] = mx;
  j["terminal"] = s.value.empty() ? 0.0 : s.value.back();
  std::vector<double> mag(s.value.size());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(s.value[i]);
  if (const auto t = detect_transient(mag)) {
    j["transient_index"] = *t;
    j["transient_tau"] = s.tau[*t];
    j["terminal_over_transient"] = mag[*t] > 0 ? terminal_ratio(mag, *t) : 0.0;
  } else {
    j["transient_index"] = nullptr;
  }
  return j;
}

struct Columns {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
};

VectorX<double> initial_point(const RunConfig& cfg, Index dim) {
  if (cfg.random_start) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VectorX<double> z(dim);
    for (Index i = 0; i < dim; ++i) z(i) = u(rng);
    return z;
  }
  return cfg.z0 ? *cfg.z0 : VectorX<double>::Zero(dim);
}

Columns tabulate(const Trajectory<double>& traj, const RunConfig& cfg, const Instance& inst,
                 const EnergyParams<double>& e) {
  Columns c;
  c.names = {"tau", "norm_V", "gap", "energy"};
  if (inst.lagrangian) {
    for (const char* n : {"f_gap", "feasibility", "lagrangian_gap", "grad_gap", "adjoint_gap"}) c.names.push_back(n);
  }
  for (const auto& s : traj.samples) {
    std::vector<double> row;
    row.push_back(s.tau);
    row.push_back(s.value.stableNorm());
    row.push_back(gap_function<double>(s.z, inst.z_star, s.value));
    if (cfg.mode == Mode::continuous) {
      row.push_back(energy_continuous(s, traj.schedule, traj.params, e, inst.z_star));
    } else {
      const VectorX<double> prev = s.z - s.velocity;
      row.push_back(energy_discrete(long(s.tau), s.z, prev, s.value, traj.schedule, traj.params, e, inst.z_star));
    }
    if (inst.lagrangian) {
      const auto m = primal_dual_metrics<double>(s.z, *inst.lagrangian);
      for (double v : {m.f_gap, m.feasibility, m.lagrangian_gap, m.grad_gap, m.adjoint_gap}) row.push_back(v);
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

/// Writes rows up to the first non-finite one; returns the rows written.
std::size_t write_csv(const std::filesystem::path& path, const Columns& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write " + path.string());
  for (std::size_t i = 0; i < c.names.size(); ++i) out << (i ? "," : "") << c.names[i];
  out << "\n";
  std::size_t written = 0;
  for (const auto& row : c.rows) {
    bool finite = true;
    for (double v : row) finite = finite && std::isfinite(v);
    if (!finite) break;
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << num(row[i]);
    out << "\n";
    ++written;
  }
  return written;
}

Series<double> column_series(const Columns& c, std::size_t rows, const std::string& name) {
  Series<double> s;
  s.name = name;
  const auto it = std::find(c.names.begin(), c.names.end(), name);
  if (it == c.names.end()) return s;
  const std::size_t col = std::size_t(it - c.names.begin());
  for (std::size_t i = 0; i < rows; ++i) {
    s.tau.push_back(c.rows[i][0]);
    s.value.push_back(c.rows[i][col]);
  }
  return s;
}

json summarize(const Trajectory<double>& traj, const Columns& cols, std::size_t rows, const RunConfig& cfg,
               const Instance& inst, const EnergyParams<double>& e) {
  json s;
  s["samples"] = rows;
  if (rows == 0) return s;
  s["final_tau"] = cols.rows[rows - 1][0];
  const Trajectory<double> kept{traj.kind,
                                std::vector<Sample<double>>(traj.samples.begin(), traj.samples.begin() + long(rows)),
                                traj.params, traj.schedule};

  json rates = json::array();
  const auto norm_v = column_series(cols, rows, "norm_V");
  rates.push_back(guarded_fit([&] { return fit_loglog_slope(norm_v, FitWindow<double>{}, std::optional(1e-300)); },
                              "norm_V"));
  if (cfg.beta.family == "exponential") {
    rates.push_back(guarded_fit([&] { return fit_exponential_rate(norm_v, cfg.params.r, FitWindow<double>{}, std::optional(1e-300)); },
                                "norm_V"));
  }
  if (inst.lagrangian) {
    for (const char* m : {"f_gap", "feasibility"}) {
      const auto series = column_series(cols, rows, m);
      rates.push_back(guarded_fit([&] { return fit_loglog_slope(series, FitWindow<double>{}, std::optional(1e-300)); }, m));
    }
  }
  s["rates"] = rates;

  const auto products = decay_products(kept, inst.z_star);
  s["decay_products"] = {{"norm_V", product_json(products.operator_norm)},
                         {"gap", product_json(products.gap)},
                         {"velocity", product_json(products.velocity)}};

  const auto energy = column_series(cols, rows, "energy");
  json ej = {{"lambda", e.lambda}, {"rho", e.rho}};
  if (const auto t = detect_transient(energy.value)) {
    const auto rep = nonincrease_violations(energy.value, *t, 1e-8 * std::abs(energy.value[*t]));
    ej["transient_index"] = *t;
    ej["transient_tau"] = energy.tau[*t];
    ej["violations"] = rep.violations;
    ej["tolerance"] = rep.tolerance;
  } else {
    ej["transient_index"] = nullptr;
  }
  s["energy"] = ej;

  const auto bounded = boundedness(kept);
  s["boundedness"] = {{"max_norm", bounded.max_norm}, {"argmax_tau", bounded.argmax_tau},
                      {"terminal_norm", bounded.terminal_norm}};
  json terminal;
  for (std::size_t i = 1; i < cols.names.size(); ++i) terminal[cols.names[i]] = cols.rows[rows - 1][i];
  s["terminal"] = terminal;
  return s;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input:
    case ErrorCode::schedule_invalid: return 2;
    default: return 3;
  }
}

void write_summary(const std::filesystem::path& path, const json& summary) {
  std::ofstream out(path, std::ios::trunc);
  out << summary.dump(2) << "\n";
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  RunResult res;
  res.name = cfg.name;
  std::filesystem::create_directories(cfg.out);
  res.csv_path = cfg.out / (cfg.name + ".csv");
  res.summary_path = cfg.out / (cfg.name + ".summary.json");
  json& summary = res.summary;
  summary["name"] = cfg.name;
  summary["config"] = cfg.to_json();
  summary["csv"] = res.csv_path.string();
  summary["error"] = nullptr;

  const auto problems = validate(cfg);
  if (!problems.empty()) {
    res.status = "rejected";
    res.exit_code = 2;
    summary["status"] = res.status;
    summary["error"] = {{"code", to_string(ErrorCode::invalid_input)}, {"problems", problems}};
    write_summary(res.summary_path, summary);
    return res;
  }

  const Instance inst = build_instance(cfg);
  const Index dim = inst.op.dimension();
  const auto schedule = cfg.beta.build(cfg.params, cfg.mode);
  const EnergyParams<double> e = cfg.energy.value_or(default_energy_params(cfg.params));
  const VectorX<double> z0 = initial_point(cfg, dim);

  const auto start = std::chrono::steady_clock::now();
  Trajectory<double> traj;
  try {
    if (cfg.mode == Mode::continuous) {
      IntegratorConfig<double> ic = cfg.integrator;
      ic.force = true;  // validated above
      traj = integrate(inst.op, schedule, cfg.params, ic, z0, cfg.zdot0.value_or(VectorX<double>::Zero(dim)));
    } else {
      DiscreteOptions<double> opt;
      opt.force = true;
      opt.stride = cfg.stride;
      traj = run_discrete(inst.op, schedule, cfg.params, z0, cfg.z1.value_or(z0), cfg.kmax, cfg.resolvent, opt);
    }
    res.status = "ok";
  } catch (const SolverFailure<double>& f) {
    traj = f.partial();
    res.status = "failed";
    res.exit_code = exit_code_for(f.code());
    summary["error"] = {{"code", to_string(f.code())}, {"message", f.what()}};
  } catch (const Error& err) {
    res.status = "failed";
    res.exit_code = exit_code_for(err.code());
    summary["error"] = {{"code", to_string(err.code())}, {"message", err.what()}};
  }
  summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const Columns cols = tabulate(traj, cfg, inst, e);
  const std::size_t rows = write_csv(res.csv_path, cols);
  summary["truncated"] = rows < cols.rows.size();
  if (rows < cols.rows.size() && res.status == "ok") {
    res.status = "failed";
    res.exit_code = 3;
    summary["error"] = {{"code", to_string(ErrorCode::divergence)}, {"message", "non-finite output row"}};
  }
  summary.update(summarize(traj, cols, rows, cfg, inst, e));
  summary["status"] = res.status;
  write_summary(res.summary_path, summary);
  return res;
}

RunResult run_json(const json& j) {
  try {
    return run(load_config(j));
  } catch (const ConfigError& e) {
    RunResult res;
    res.name = j.is_object() ? j.value("name", std::string("run")) : "run";
    res.status = "rejected";
    res.exit_code = 2;
    res.summary = {{"name", res.name}, {"status", "rejected"}, {"config", j},
                   {"error", {{"code", to_string(ErrorCode::invalid_input)}, {"problems", e.problems()}}}};
    return res;
  }
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "r") return SweepAxis::r;
  if (name == "theta") return SweepAxis::theta;
  if (name == "alpha") return SweepAxis::alpha;
  if (name == "delta") return SweepAxis::delta;
  if (name == "beta-family" || name == "beta_family" || name == "beta") return SweepAxis::beta_family;
  throw ConfigError({"unknown sweep axis '" + name + "' (r, theta, alpha, delta, beta-family)"});
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::r: return "r";
    case SweepAxis::theta: return "theta";
    case SweepAxis::alpha: return "alpha";
    case SweepAxis::delta: return "delta";
    case SweepAxis::beta_family: return "beta-family";
  }
  return "unknown";
}

SweepResult sweep(const json& base, SweepAxis axis, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError({"sweep needs at least one value"});
  const std::string base_name = base.value("name", std::string("run"));
  const std::string out_dir = base.value("out", std::string("out"));

  // Member configs are built up front so that malformed values are rejected
  // per member instead of aborting the batch.
  std::vector<json> members(values.size());
  std::vector<std::optional<RunResult>> results(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    json j = base;
    std::string tag = values[i];
    std::replace(tag.begin(), tag.end(), ':', '-');
    j["name"] = base_name + "_" + to_string(axis) + "=" + tag;
    try {
      if (axis == SweepAxis::beta_family) {
        j.update(parse_beta_flag(values[i]));
      } else {
        std::size_t used = 0;
        const double v = std::stod(values[i], &used);
        if (used != values[i].size()) throw std::invalid_argument("trailing characters");
        j[to_string(axis)] = v;
      }
    } catch (const ConfigError& e) {
      results[i] = RunResult{j["name"], "rejected", 2, {}, {}, {{"status", "rejected"}, {"error", {{"problems", e.problems()}}}}};
    } catch (const std::exception&) {
      results[i] = RunResult{j["name"], "rejected", 2, {}, {}, {{"status", "rejected"},
                             {"error", {{"problems", {"'" + values[i] + "' is not a number"}}}}}};
    }
    members[i] = std::move(j);
  }

  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MONOFLOW_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) workers = std::min<unsigned>(workers, unsigned(cap));
  }
  workers = std::min<unsigned>(workers, unsigned(values.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      if (!results[i]) results[i] = run_json(members[i]);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult out;
  json rows = json::array();
  bool any_failed = false, any_rejected = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunResult& r = *results[i];
    any_failed = any_failed || r.status == "failed";
    any_rejected = any_rejected || r.status == "rejected";
    json row = {{"value", values[i]}, {"name", r.name}, {"status", r.status}, {"error", r.summary.value("error", json())}};
    if (r.summary.contains("terminal")) row["terminal"] = r.summary["terminal"];
    if (r.summary.contains("rates")) row["rates"] = r.summary["rates"];
    if (r.summary.contains("wall_time_s")) row["wall_time_s"] = r.summary["wall_time_s"];
    rows.push_back(row);
    out.runs.push_back(std::move(r));
  }
  out.exit_code = any_failed ? 3 : any_rejected ? 2 : 0;
  out.summary = {{"axis", to_string(axis)}, {"base", base}, {"runs", rows}};
  std::filesystem::create_directories(out_dir);
  out.summary_path = std::filesystem::path(out_dir) / (base_name + "_sweep_" + to_string(axis) + ".json");
  write_summary(out.summary_path, out.summary);

  std::ofstream table(std::filesystem::path(out_dir) / (base_name + "_sweep_" + to_string(axis) + ".csv"), std::ios::trunc);
  table << "value,status,terminal_norm_V,norm_V_slope\n";
  for (const auto& r : out.runs) {
    const json& sm = r.summary;
    std::string terminal, slope;
    if (sm.contains("terminal") && sm["terminal"].contains("norm_V")) terminal = num(sm["terminal"]["norm_V"].get<double>());
    if (sm.contains("rates") && !sm["rates"].empty() && sm["rates"][0].contains("slope")) {
      slope = num(sm["rates"][0]["slope"].get<double>());
    }
    const std::size_t i = std::size_t(&r - out.runs.data());
    table << values[i] << "," << r.status << "," << terminal << "," << slope << "\n";
  }
  return out;
}

}  // namespace monoflow::experiments
