#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "monoflow/experiments.hpp"

namespace monoflow::experiments {

namespace {

const std::set<std::string> kTopLevelKeys = {
    "name", "preset", "n",      "operator", "mode",   "r",     "alpha", "theta", "delta",  "t0", "k0",
    "beta", "T",      "horizon", "kmax",    "stride", "integrator", "resolvent", "energy", "z0", "zdot0",
    "z1",   "seed",   "out",    "force"};

/// Collects problems instead of failing on the first one.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  template <typename T>
  void get(const json& j, const char* key, T& dst, const std::string& where = "") {
    if (!j.contains(key)) return;
    try {
      dst = j.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(where + key + ": expected " + type_name<T>() + ", got " + j.at(key).dump());
    }
  }

  std::optional<VectorX<double>> vector(const json& j, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    const json& v = j.at(key);
    if (!v.is_array() || v.empty()) {
      problems_.push_back(std::string(key) + ": expected a nonempty array of numbers");
      return std::nullopt;
    }
    VectorX<double> out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        problems_.push_back(std::string(key) + "[" + std::to_string(i) + "]: expected a number");
        return std::nullopt;
      }
      out(Index(i)) = v[i].get<double>();
    }
    return out;
  }

  std::optional<MatrixX<double>> matrix(const json& j, const char* key) {
    if (!j.contains(key)) return std::nullopt;
    const json& m = j.at(key);
    if (!m.is_array() || m.empty() || !m[0].is_array() || m[0].empty()) {
      problems_.push_back(std::string(key) + ": expected a nonempty array of rows");
      return std::nullopt;
    }
    const std::size_t cols = m[0].size();
    MatrixX<double> out(Index(m.size()), Index(cols));
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i].is_array() || m[i].size() != cols) {
        problems_.push_back(std::string(key) + ": rows must all have " + std::to_string(cols) + " entries");
        return std::nullopt;
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (!m[i][c].is_number()) {
          problems_.push_back(std::string(key) + "[" + std::to_string(i) + "][" + std::to_string(c) + "]: expected a number");
          return std::nullopt;
        }
        out(Index(i), Index(c)) = m[i][c].get<double>();
      }
    }
    return out;
  }

  void fail(std::string msg) { problems_.push_back(std::move(msg)); }

 private:
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else return "a string";
  }

  std::vector<std::string>& problems_;
};

json vector_json(const VectorX<double>& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_json(const MatrixX<double>& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

void parse_beta(const json& j, BetaSpec& beta, Reader& rd, std::vector<std::string>& problems) {
  if (j.is_string()) {
    beta.family = j.get<std::string>();
  } else if (j.is_object()) {
    for (const auto& [key, _] : j.items()) {
      if (key != "family" && key != "c" && key != "p" && key != "points") problems.push_back("beta: unknown key '" + key + "'");
    }
    rd.get(j, "family", beta.family, "beta.");
    rd.get(j, "c", beta.c, "beta.");
    rd.get(j, "p", beta.exponent, "beta.");
    if (j.contains("points")) {
      const json& pts = j.at("points");
      bool ok = pts.is_array();
      if (ok) {
        for (const auto& pt : pts) {
          if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
            ok = false;
            break;
          }
          beta.table.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        }
      }
      if (!ok) problems.push_back("beta.points: expected an array of [t, value] pairs");
    }
  } else {
    problems.push_back("beta: expected a family name or an object");
  }
  static const std::set<std::string> families = {"constant", "power", "exponential", "tabulated"};
  if (!families.count(beta.family)) {
    problems.push_back("beta.family: unknown family '" + beta.family + "' (constant, power, exponential, tabulated)");
  }
}

}  // namespace

BetaSchedule<double> BetaSpec::build(const SolverParams<double>& p, Mode mode) const {
  if (family == "constant") return BetaSchedule<double>::constant(c);
  if (family == "power") return BetaSchedule<double>::power(exponent, c);
  if (family == "exponential") {
    return mode == Mode::continuous ? BetaSchedule<double>::exponential_continuous(p.r, p.theta, p.delta)
                                    : BetaSchedule<double>::exponential_discrete(p.r, p.theta, p.delta);
  }
  if (family == "tabulated") return BetaSchedule<double>::tabulated(table);
  throw Error(ErrorCode::invalid_input, "unknown beta family '" + family + "'");
}

std::string BetaSpec::label() const {
  if (family == "constant") return "constant:" + detail::fmt(c);
  if (family == "power") return "power:" + detail::fmt(exponent) + ":" + detail::fmt(c);
  return family;
}

json RunConfig::to_json() const {
  json j;
  j["name"] = name;
  if (preset == Preset::example1) {
    j["preset"] = "example1";
  } else if (preset == Preset::example2) {
    j["preset"] = "example2";
    j["n"] = n;
  } else {
    json op;
    if (matrix) op["matrix"] = matrix_json(*matrix);
    if (offset) op["offset"] = vector_json(*offset);
    if (z_star) op["z_star"] = vector_json(*z_star);
    j["operator"] = op;
  }
  j["mode"] = to_string(mode);
  j["r"] = params.r;
  j["alpha"] = params.alpha;
  j["theta"] = params.theta;
  j["delta"] = params.delta;
  j["t0"] = params.t0;
  j["k0"] = params.k0;
  json b;
  b["family"] = beta.family;
  if (beta.family == "constant" || beta.family == "power") b["c"] = beta.c;
  if (beta.family == "power") b["p"] = beta.exponent;
  if (beta.family == "tabulated") {
    json pts = json::array();
    for (const auto& [t, v] : beta.table) pts.push_back({t, v});
    b["points"] = pts;
  }
  j["beta"] = b;
  if (mode == Mode::continuous) {
    j["T"] = integrator.horizon;
    j["integrator"] = {{"method", monoflow::to_string(integrator.method)},
                       {"step", integrator.step},
                       {"rtol", integrator.rtol},
                       {"atol", integrator.atol},
                       {"samples", integrator.sample_count},
                       {"max_steps", integrator.max_steps}};
  } else {
    j["kmax"] = kmax;
    if (stride > 0) j["stride"] = stride;
    j["resolvent"] = {{"method", monoflow::to_string(resolvent.method)},
                      {"tol", resolvent.tol},
                      {"max_iter", resolvent.max_iter}};
  }
  if (energy) j["energy"] = {{"lambda", energy->lambda}, {"rho", energy->rho}};
  if (random_start) j["z0"] = "random";
  else if (z0) j["z0"] = vector_json(*z0);
  if (zdot0) j["zdot0"] = vector_json(*zdot0);
  if (z1) j["z1"] = vector_json(*z1);
  j["seed"] = seed;
  j["out"] = out.string();
  j["force"] = force;
  return j;
}

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(ErrorCode::invalid_input,
            [&] {
              std::string msg = "invalid configuration:";
              for (const auto& p : problems) msg += "\n  - " + p;
              return msg;
            }()),
      problems_(std::move(problems)) {}

RunConfig load_config(const json& j) {
  std::vector<std::string> problems;
  Reader rd(problems);
  RunConfig cfg;
  if (!j.is_object()) throw ConfigError({"configuration must be a JSON object"});
  for (const auto& [key, _] : j.items()) {
    if (!kTopLevelKeys.count(key)) problems.push_back("unknown key '" + key + "'");
  }

  rd.get(j, "name", cfg.name);
  const bool has_operator = j.contains("operator");
  if (j.contains("preset")) {
    std::string preset;
    rd.get(j, "preset", preset);
    if (preset == "example1") cfg.preset = Preset::example1;
    else if (preset == "example2") cfg.preset = Preset::example2;
    else problems.push_back("preset: unknown preset '" + preset + "' (example1, example2)");
    if (has_operator) problems.push_back("give either a preset or a custom operator, not both");
  } else if (has_operator) {
    cfg.preset = Preset::none;
    const json& op = j.at("operator");
    if (!op.is_object()) {
      problems.push_back("operator: expected an object with 'matrix' and 'offset'");
    } else {
      cfg.matrix = rd.matrix(op, "matrix");
      cfg.offset = rd.vector(op, "offset");
      cfg.z_star = rd.vector(op, "z_star");
      if (!op.contains("matrix")) problems.push_back("operator.matrix is required");
    }
  } else {
    problems.push_back("either a preset or a custom operator is required");
  }
  rd.get(j, "n", cfg.n);

  std::string mode = "continuous";
  rd.get(j, "mode", mode);
  if (mode == "continuous") cfg.mode = Mode::continuous;
  else if (mode == "discrete") cfg.mode = Mode::discrete;
  else problems.push_back("mode: expected 'continuous' or 'discrete', got '" + mode + "'");

  rd.get(j, "r", cfg.params.r);
  rd.get(j, "alpha", cfg.params.alpha);
  rd.get(j, "theta", cfg.params.theta);
  rd.get(j, "delta", cfg.params.delta);
  rd.get(j, "t0", cfg.params.t0);
  rd.get(j, "k0", cfg.params.k0);
  if (j.contains("beta")) parse_beta(j.at("beta"), cfg.beta, rd, problems);

  rd.get(j, "horizon", cfg.integrator.horizon);
  rd.get(j, "T", cfg.integrator.horizon);
  rd.get(j, "kmax", cfg.kmax);
  rd.get(j, "stride", cfg.stride);
  if (j.contains("integrator")) {
    const json& ij = j.at("integrator");
    std::string method;
    rd.get(ij, "method", method, "integrator.");
    if (method == "rk4" || method == "rk4_fixed") cfg.integrator.method = IntegrationMethod::rk4_fixed;
    else if (method.empty() || method == "rk45" || method == "rk45_adaptive") cfg.integrator.method = IntegrationMethod::rk45_adaptive;
    else problems.push_back("integrator.method: expected rk4_fixed or rk45_adaptive, got '" + method + "'");
    rd.get(ij, "step", cfg.integrator.step, "integrator.");
    rd.get(ij, "rtol", cfg.integrator.rtol, "integrator.");
    rd.get(ij, "atol", cfg.integrator.atol, "integrator.");
    rd.get(ij, "samples", cfg.integrator.sample_count, "integrator.");
    rd.get(ij, "max_steps", cfg.integrator.max_steps, "integrator.");
  }
  if (j.contains("resolvent")) {
    const json& rj = j.at("resolvent");
    std::string method;
    rd.get(rj, "method", method, "resolvent.");
    if (method.empty() || method == "direct" || method == "direct_affine") cfg.resolvent.method = ResolventMethod::direct_affine;
    else if (method == "newton") cfg.resolvent.method = ResolventMethod::newton;
    else problems.push_back("resolvent.method: expected direct_affine or newton, got '" + method + "'");
    rd.get(rj, "tol", cfg.resolvent.tol, "resolvent.");
    rd.get(rj, "max_iter", cfg.resolvent.max_iter, "resolvent.");
  }
  if (j.contains("energy")) {
    EnergyParams<double> e = default_energy_params(cfg.params);
    rd.get(j.at("energy"), "lambda", e.lambda, "energy.");
    rd.get(j.at("energy"), "rho", e.rho, "energy.");
    cfg.energy = e;
  }
  if (j.contains("z0") && j.at("z0").is_string()) {
    if (j.at("z0").get<std::string>() == "random") cfg.random_start = true;
    else problems.push_back("z0: expected an array or \"random\"");
  } else {
    cfg.z0 = rd.vector(j, "z0");
  }
  cfg.zdot0 = rd.vector(j, "zdot0");
  cfg.z1 = rd.vector(j, "z1");
  rd.get(j, "seed", cfg.seed);
  std::string out = cfg.out.string();
  rd.get(j, "out", out);
  cfg.out = out;
  rd.get(j, "force", cfg.force);

  if (problems.empty()) problems = validate(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

RunConfig load_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  return load_config(j);
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

Instance build_instance(const RunConfig& cfg) {
  switch (cfg.preset) {
    case Preset::example1: {
      auto prob = example1_problem<double>();
      auto op = build_lagrangian_operator(prob);
      VectorX<double> zs = prob.known_solution->stacked();
      return {std::move(op), std::move(zs), std::move(prob)};
    }
    case Preset::example2: {
      const auto prob = saddle_example2_problem<double>(cfg.n);
      return {prob.make_operator(), prob.solution(), std::nullopt};
    }
    case Preset::none: break;
  }
  detail::require(cfg.matrix.has_value(), "custom operator needs a matrix");
  const MatrixX<double>& M = *cfg.matrix;
  const VectorX<double> q = cfg.offset ? *cfg.offset : VectorX<double>::Zero(M.rows());
  auto op = MonotoneOperator<double>::affine(M, q);
  VectorX<double> zs;
  if (cfg.z_star) {
    zs = *cfg.z_star;
    detail::require(zs.size() == M.rows(), "operator.z_star has the wrong dimension");
  } else {
    const Eigen::FullPivLU<MatrixX<double>> lu(M);
    zs = lu.solve(-q);
  }
  const double scale = 1 + M.norm() * zs.norm() + q.norm();
  if (!((M * zs + q).norm() <= 1e-10 * scale)) {
    throw Error(ErrorCode::invalid_input, "custom operator: z_star is not a zero of V (give operator.z_star explicitly "
                                          "or use a matrix whose zero set is nonempty)");
  }
  return {std::move(op), std::move(zs), std::nullopt};
}

std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> problems;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.emplace_back(e.what());
    }
  };

  std::optional<Instance> inst;
  guard([&] { inst = build_instance(cfg); });
  if (inst) {
    const Index dim = inst->op.dimension();
    auto check_dim = [&](const std::optional<VectorX<double>>& v, const char* key) {
      if (v && v->size() != dim) {
        problems.push_back(std::string(key) + " has " + std::to_string(v->size()) + " entries; the operator has dimension " +
                           std::to_string(dim));
      }
    };
    check_dim(cfg.z0, "z0");
    check_dim(cfg.zdot0, "zdot0");
    check_dim(cfg.z1, "z1");
  }

  if (cfg.mode == Mode::continuous) {
    guard([&] { cfg.integrator.validate(cfg.params.t0); });
    if (!(cfg.params.t0 > 0)) problems.push_back("t0 must be positive");
  } else {
    guard([&] { cfg.resolvent.validate(); });
    if (cfg.kmax < 2) problems.push_back("kmax must be at least 2");
    if (cfg.stride < 0) problems.push_back("stride must be nonnegative");
    if (!(cfg.params.r > 0 && cfg.params.r <= 1)) {
      problems.push_back("discrete scheme requires r in (0, 1] (r = " + detail::fmt(cfg.params.r) + ")");
    }
    if (inst && cfg.resolvent.method == ResolventMethod::direct_affine && !inst->op.is_affine()) {
      problems.push_back("resolvent.method direct_affine needs an affine operator");
    }
  }

  std::optional<BetaSchedule<double>> schedule;
  guard([&] { schedule = cfg.beta.build(cfg.params, cfg.mode); });
  if (cfg.force) return problems;

  for (auto& v : admissibility_violations(cfg.params, cfg.mode)) problems.push_back(v);
  if (cfg.beta.family == "exponential") {
    for (auto& v : exponential_violations(cfg.params.r, cfg.params.theta, cfg.params.delta, cfg.mode)) problems.push_back(v);
  }
  if (cfg.energy) {
    for (auto& v : energy_violations(*cfg.energy, cfg.params, cfg.mode)) problems.push_back("energy: " + v);
  }
  if (problems.empty() && schedule) {
    if (cfg.mode == Mode::continuous) {
      guard([&] { validate_continuous_setup(*schedule, cfg.params); });
    } else {
      guard([&] { validate_discrete_setup(*schedule, cfg.params, cfg.kmax); });
    }
  }
  return problems;
}

json parse_beta_flag(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.empty()) throw ConfigError({"--beta: empty value"});
  auto number = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError({"--beta: '" + parts[i] + "' is not a number"});
    }
  };
  const std::string& family = parts[0];
  json b;
  b["family"] = family;
  if (family == "constant") {
    if (parts.size() > 2) throw ConfigError({"--beta constant takes at most one argument (constant:c)"});
    if (parts.size() == 2) b["c"] = number(1);
  } else if (family == "power") {
    if (parts.size() > 3) throw ConfigError({"--beta power takes at most two arguments (power:p:c)"});
    if (parts.size() >= 2) b["p"] = number(1);
    if (parts.size() == 3) b["c"] = number(2);
  } else if (family == "exponential") {
    if (parts.size() > 2) throw ConfigError({"--beta exponential takes at most one argument (exponential:delta)"});
  } else {
    throw ConfigError({"--beta: unknown family '" + family + "' (constant, power, exponential)"});
  }
  json patch;
  patch["beta"] = b;
  if (family == "exponential" && parts.size() == 2) patch["delta"] = number(1);
  return patch;
}

}  // namespace monoflow::experiments
