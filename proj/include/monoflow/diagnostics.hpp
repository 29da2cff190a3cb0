#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "monoflow/problems.hpp"
#include "monoflow/trajectory.hpp"

namespace monoflow {

/// <z - z*, V(z)>
template <typename Scalar>
Scalar gap_function(const VectorX<Scalar>& z, const VectorX<Scalar>& z_star, const VectorX<Scalar>& v) {
  detail::require(z.size() == z_star.size() && z.size() == v.size(), "gap_function dimension mismatch");
  return (z - z_star).dot(v);
}

template <typename Scalar>
struct PrimalDualMetrics {
  Scalar lagrangian_gap = 0;  ///< f(x) - f(x*) + <lambda*, Ax - b>
  Scalar feasibility = 0;     ///< |Ax - b|
  Scalar f_gap = 0;           ///< |f(x) - f(x*)|
  Scalar grad_gap = 0;        ///< |grad f(x) - grad f(x*)|
  Scalar adjoint_gap = 0;     ///< |A^T (lambda - lambda*)|
};

template <typename Scalar>
PrimalDualMetrics<Scalar> primal_dual_metrics(const VectorX<Scalar>& x, const VectorX<Scalar>& lambda,
                                              const LagrangianProblem<Scalar>& p) {
  if (!p.known_solution) throw Error(ErrorCode::unsupported_metric, "primal-dual metrics need a known solution");
  detail::require(x.size() == p.primal_dimension() && lambda.size() == p.dual_dimension(),
                  "primal-dual metrics dimension mismatch");
  const auto& s = *p.known_solution;
  const VectorX<Scalar> residual = p.A * x - p.b;
  const Scalar df = p.objective_gap(x);
  PrimalDualMetrics<Scalar> m;
  m.lagrangian_gap = df + s.lambda.dot(residual);
  m.feasibility = residual.norm();
  m.f_gap = std::abs(df);
  m.grad_gap = (p.grad_f(x) - p.grad_f(s.x)).norm();
  m.adjoint_gap = (p.A.transpose() * (lambda - s.lambda)).norm();
  return m;
}

/// Splits a stacked (x, lambda) state.
template <typename Scalar>
PrimalDualMetrics<Scalar> primal_dual_metrics(const VectorX<Scalar>& z, const LagrangianProblem<Scalar>& p) {
  const Index n = p.primal_dimension();
  detail::require(z.size() == n + p.dual_dimension(), "stacked state has the wrong dimension");
  return primal_dual_metrics<Scalar>(z.head(n), z.tail(p.dual_dimension()), p);
}

/// A scalar series indexed by time or iteration.
template <typename Scalar>
struct Series {
  std::string name;
  std::vector<Scalar> tau;
  std::vector<Scalar> value;

  std::size_t size() const { return tau.size(); }
  bool empty() const { return tau.empty(); }
};

template <typename Scalar>
struct DecayProducts {
  Series<Scalar> operator_norm;  ///< tau^(rho+r) beta |V|
  Series<Scalar> gap;            ///< tau^(rho+r) beta <z - z*, V>
  Series<Scalar> velocity;       ///< tau^rho |velocity|
};

/// Theorem-rate products along a trajectory; rho defaults to r. Powers of tau
/// and beta are combined in log space so that exponential schedules do not
/// overflow.
template <typename Scalar>
DecayProducts<Scalar> decay_products(const Trajectory<Scalar>& traj, const VectorArg<Scalar>& z_star,
                                     std::optional<Scalar> rho = std::nullopt) {
  detail::require(!traj.empty(), "decay_products needs a nonempty trajectory");
  using std::exp;
  using std::log;
  const Scalar r = traj.params.r;
  const Scalar rh = rho.value_or(r);
  DecayProducts<Scalar> out;
  out.operator_norm.name = "tau^(rho+r) beta |V|";
  out.gap.name = "tau^(rho+r) beta gap";
  out.velocity.name = "tau^rho |velocity|";
  auto scaled = [](Scalar log_weight, Scalar x) -> Scalar {
    if (x == 0) return Scalar(0);
    using std::abs;
    const Scalar mag = exp(log_weight + log(abs(x)));
    return x < 0 ? -mag : mag;
  };
  for (const auto& s : traj.samples) {
    const Scalar lt = log(s.tau);
    const Scalar lw = (rh + r) * lt + traj.log_beta_at(s.tau);
    out.operator_norm.tau.push_back(s.tau);
    out.operator_norm.value.push_back(scaled(lw, s.value.stableNorm()));
    out.gap.tau.push_back(s.tau);
    out.gap.value.push_back(scaled(lw, gap_function<Scalar>(s.z, z_star, s.value)));
    out.velocity.tau.push_back(s.tau);
    out.velocity.value.push_back(scaled(rh * lt, s.velocity.size() ? s.velocity.stableNorm() : Scalar(0)));
  }
  return out;
}

template <typename Scalar>
struct FitWindow {
  enum class Kind { last_decade, trailing_fraction, explicit_range };
  Kind kind = Kind::last_decade;
  Scalar fraction = Scalar(0.1);  ///< trailing_fraction: share of the log-span of tau
  Scalar lo = 0;                  ///< explicit_range bounds, inclusive
  Scalar hi = 0;
  /// Samples whose value is at or below this level are left out, which keeps
  /// round-off plateaus out of a fit. Zero disables the cut.
  Scalar noise_floor = 0;
  std::size_t min_samples = 10;

  static FitWindow last_decade() { return {}; }
  static FitWindow trailing(Scalar fraction) {
    FitWindow w;
    w.kind = Kind::trailing_fraction;
    w.fraction = fraction;
    return w;
  }
  static FitWindow range(Scalar lo, Scalar hi) {
    FitWindow w;
    w.kind = Kind::explicit_range;
    w.lo = lo;
    w.hi = hi;
    return w;
  }
};

template <typename Scalar>
struct RateReport {
  std::string metric;
  std::string model;  ///< "loglog" or "exponential"
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar window_lo = 0;
  Scalar window_hi = 0;
  Scalar residual = 0;  ///< root-mean-square deviation of the fit in log(value)
  std::size_t samples = 0;
  Scalar terminal_value = 0;
  bool decaying = false;  ///< slope below -sqrt(eps); round-off slopes of flat series do not count
};

namespace detail {

template <typename Scalar>
std::pair<Scalar, Scalar> window_bounds(const Series<Scalar>& s, const FitWindow<Scalar>& w) {
  using std::log;
  using std::pow;
  const Scalar first = s.tau.front(), last = s.tau.back();
  switch (w.kind) {
    case FitWindow<Scalar>::Kind::last_decade: return {std::max(first, last / 10), last};
    case FitWindow<Scalar>::Kind::trailing_fraction: {
      require(w.fraction > 0 && w.fraction <= 1, "fit window fraction must lie in (0, 1]");
      if (first <= 0) return {last - w.fraction * (last - first), last};
      return {first * pow(last / first, 1 - w.fraction), last};
    }
    case FitWindow<Scalar>::Kind::explicit_range:
      require(w.lo < w.hi, "fit window needs lo < hi");
      require(w.lo >= first && w.hi <= last, "fit window must lie within the trajectory span");
      return {w.lo, w.hi};
  }
  return {first, last};
}

/// Least squares of log(value) against x(tau) over the window.
template <typename Scalar, typename XMap>
RateReport<Scalar> fit_log_values(const Series<Scalar>& s, const FitWindow<Scalar>& w, std::optional<Scalar> floor,
                                  XMap xmap, const char* model) {
  require(s.tau.size() == s.value.size(), "series has mismatched lengths");
  require(!s.empty(), "cannot fit an empty series");
  using std::log;
  using std::sqrt;
  const auto [lo, hi] = window_bounds(s, w);
  std::vector<Scalar> xs, ys;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.tau[i] < lo || s.tau[i] > hi) continue;
    Scalar v = s.value[i];
    if (floor) v = std::max(v, *floor);
    if (w.noise_floor > 0 && v <= w.noise_floor) continue;
    if (!(v > 0) || !std::isfinite(double(v))) {
      throw Error(ErrorCode::numerical_domain, "cannot fit " + s.name + ": nonpositive or non-finite value " + fmt(v) +
                                                   " at tau = " + fmt(s.tau[i]));
    }
    xs.push_back(xmap(s.tau[i]));
    ys.push_back(log(v));
  }
  if (xs.size() < w.min_samples) {
    throw Error(ErrorCode::invalid_input, "fit window for " + s.name + " holds " + std::to_string(xs.size()) +
                                              " samples; at least " + std::to_string(w.min_samples) + " needed");
  }
  const Scalar n = Scalar(xs.size());
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  Scalar sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  require(sxx > 0, "fit window has no spread in tau");
  RateReport<Scalar> rep;
  rep.metric = s.name;
  rep.model = model;
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  Scalar ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Scalar e = ys[i] - (rep.intercept + rep.slope * xs[i]);
    ss += e * e;
  }
  rep.residual = sqrt(ss / n);
  rep.window_lo = lo;
  rep.window_hi = hi;
  rep.samples = xs.size();
  rep.terminal_value = s.value.back();
  using std::sqrt;
  rep.decaying = rep.slope < -sqrt(std::numeric_limits<Scalar>::epsilon());
  return rep;
}

}  // namespace detail

/// Slope of log(value) against log(tau); the default window is the last decade.
template <typename Scalar>
RateReport<Scalar> fit_loglog_slope(const Series<Scalar>& s, const FitWindow<Scalar>& w = {},
                                    std::optional<Scalar> floor = std::nullopt) {
  for (Scalar t : s.tau) detail::require(t > 0, "log-log fit needs positive tau");
  return detail::fit_log_values(s, w, floor, [](Scalar t) { using std::log; return log(t); }, "loglog");
}

/// Slope of log(value) against tau^(1-r)/(1-r).
template <typename Scalar>
RateReport<Scalar> fit_exponential_rate(const Series<Scalar>& s, Scalar r, const FitWindow<Scalar>& w = {},
                                        std::optional<Scalar> floor = std::nullopt) {
  detail::require(r >= 0 && r < 1, "exponential rate fit needs r in [0, 1)");
  return detail::fit_log_values(
      s, w, floor, [r](Scalar t) { using std::pow; return pow(t, 1 - r) / (1 - r); }, "exponential");
}

enum class QuadSign { certified_nonpositive, certified_nonnegative, indeterminate };

inline const char* to_string(QuadSign q) {
  switch (q) {
    case QuadSign::certified_nonpositive: return "certified_nonpositive";
    case QuadSign::certified_nonnegative: return "certified_nonnegative";
    case QuadSign::indeterminate: return "indeterminate";
  }
  return "unknown";
}

/// Sign of A|X|^2 + 2B<X,Y> + C|Y|^2 over all X, Y when B^2 - AC <= 0.
template <typename Scalar>
QuadSign quad_form_sign(Scalar A, Scalar B, Scalar C) {
  if (A == 0) throw Error(ErrorCode::invalid_input, "quad_form_sign needs A != 0");
  if (B * B - A * C > 0) return QuadSign::indeterminate;
  return A < 0 ? QuadSign::certified_nonpositive : QuadSign::certified_nonnegative;
}

/// First index i with values[i] > values[i+1] > ... > values[i+run]; the
/// point after which the series decreases for `run` consecutive samples.
template <typename Scalar>
std::optional<std::size_t> detect_transient(const std::vector<Scalar>& values, std::size_t run = 50) {
  std::size_t streak = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    streak = values[i] < values[i - 1] ? streak + 1 : 0;
    if (streak >= run) return i - run;
  }
  return std::nullopt;
}

template <typename Scalar>
struct MonotonicityReport {
  std::size_t start = 0;
  Scalar tolerance = 0;
  std::size_t violations = 0;
  Scalar worst_increase = 0;
  std::optional<std::size_t> first_violation;
};

/// Counts i > start with values[i] > values[i-1] + tolerance.
template <typename Scalar>
MonotonicityReport<Scalar> nonincrease_violations(const std::vector<Scalar>& values, std::size_t start, Scalar tolerance) {
  MonotonicityReport<Scalar> rep;
  rep.start = start;
  rep.tolerance = tolerance;
  for (std::size_t i = start + 1; i < values.size(); ++i) {
    const Scalar inc = values[i] - values[i - 1];
    if (inc > rep.worst_increase) rep.worst_increase = inc;
    if (inc > tolerance) {
      ++rep.violations;
      if (!rep.first_violation) rep.first_violation = i;
    }
  }
  return rep;
}

/// terminal / value at `index`; the little-o proxy asks for at most 0.01.
template <typename Scalar>
Scalar terminal_ratio(const std::vector<Scalar>& values, std::size_t index) {
  detail::require(index < values.size(), "terminal_ratio index out of range");
  using std::abs;
  return abs(values.back()) / abs(values[index]);
}

template <typename Scalar>
struct BoundednessReport {
  Scalar max_norm = 0;
  Scalar argmax_tau = 0;
  Scalar terminal_norm = 0;
  bool finite = true;
};

template <typename Scalar>
BoundednessReport<Scalar> boundedness(const Trajectory<Scalar>& traj) {
  BoundednessReport<Scalar> rep;
  for (const auto& s : traj.samples) {
    const Scalar nz = s.z.norm();
    if (!std::isfinite(double(nz))) rep.finite = false;
    if (nz > rep.max_norm) {
      rep.max_norm = nz;
      rep.argmax_tau = s.tau;
    }
  }
  if (!traj.empty()) rep.terminal_norm = traj.back().z.norm();
  return rep;
}

/// sup_{j >= i} |z_j - z_i| for every sample i.
template <typename Scalar>
Series<Scalar> cauchy_diagnostic(const Trajectory<Scalar>& traj) {
  Series<Scalar> out;
  out.name = "sup_{j>=i} |z_j - z_i|";
  const std::size_t n = traj.size();
  out.tau.resize(n);
  out.value.assign(n, Scalar(0));
  for (std::size_t i = 0; i < n; ++i) {
    out.tau[i] = traj.samples[i].tau;
    for (std::size_t j = i + 1; j < n; ++j) {
      out.value[i] = std::max(out.value[i], Scalar((traj.samples[j].z - traj.samples[i].z).norm()));
    }
  }
  return out;
}

template <typename Scalar>
Series<Scalar> operator_norm_series(const Trajectory<Scalar>& traj) {
  Series<Scalar> out;
  out.name = "norm_V";
  for (const auto& s : traj.samples) {
    out.tau.push_back(s.tau);
    out.value.push_back(s.value.stableNorm());
  }
  return out;
}

template <typename Scalar>
Series<Scalar> gap_series(const Trajectory<Scalar>& traj, const VectorArg<Scalar>& z_star) {
  Series<Scalar> out;
  out.name = "gap";
  for (const auto& s : traj.samples) {
    out.tau.push_back(s.tau);
    out.value.push_back(gap_function<Scalar>(s.z, z_star, s.value));
  }
  return out;
}

}  // namespace monoflow
