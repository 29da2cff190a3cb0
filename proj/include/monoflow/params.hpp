#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "monoflow/types.hpp"

namespace monoflow {

enum class Mode { continuous, discrete };

inline const char* to_string(Mode mode) { return mode == Mode::continuous ? "continuous" : "discrete"; }

/// Damping exponent r, damping weight alpha, Hessian-damping weight theta,
/// exponential-schedule slack delta, and the start time / start index.
template <typename Scalar>
struct SolverParams {
  Scalar r = Scalar(1);
  Scalar alpha = Scalar(8);
  Scalar theta = Scalar(0.25);
  Scalar delta = Scalar(0);
  Scalar t0 = Scalar(1);
  long k0 = 1;
};

namespace detail {

template <typename Scalar>
std::string fmt(Scalar v) {
  std::ostringstream os;
  os.precision(10);
  os << double(v);
  return os.str();
}

}  // namespace detail

/// Lists every violated parameter constraint for the chosen scheme; an empty
/// list means the tuple is admissible.
///
///   continuous: r in [0,1]; r < 1 needs theta > 2/alpha; r = 1 needs 2/(alpha+1) <= theta < 1/2
///   discrete:   r in (0,1]; r < 1 needs theta > 2/alpha; r = 1 needs 2/(alpha+1) <= theta < 1/4
template <typename Scalar>
std::vector<std::string> admissibility_violations(const SolverParams<Scalar>& p, Mode mode) {
  using detail::fmt;
  std::vector<std::string> out;
  if (!(p.alpha > 0)) out.push_back("alpha must be positive (alpha = " + fmt(p.alpha) + ")");
  if (!(p.theta > 0)) out.push_back("theta must be positive (theta = " + fmt(p.theta) + ")");
  if (mode == Mode::continuous) {
    if (!(p.t0 > 0)) out.push_back("start time t0 must be positive (t0 = " + fmt(p.t0) + ")");
    if (!(p.r >= 0 && p.r <= 1)) out.push_back("continuous scheme requires r in [0, 1] (r = " + fmt(p.r) + ")");
  } else {
    if (p.k0 < 1) out.push_back("start index k0 must be a positive integer");
    if (!(p.r > 0 && p.r <= 1)) out.push_back("discrete scheme requires r in (0, 1] (r = " + fmt(p.r) + ")");
  }
  if (!out.empty()) return out;

  const Scalar upper = mode == Mode::continuous ? Scalar(0.5) : Scalar(0.25);
  const std::string upper_text = mode == Mode::continuous ? "1/2" : "1/4";
  if (p.r < 1) {
    if (!(p.theta > 2 / p.alpha)) {
      out.push_back("r < 1 requires theta > 2/alpha = " + fmt(2 / p.alpha) + " (theta = " + fmt(p.theta) + ")");
    }
  } else {
    if (!(p.theta >= 2 / (p.alpha + 1))) {
      out.push_back("r = 1 requires 2/(alpha+1) <= theta < " + upper_text + "; theta = " + fmt(p.theta) +
                    " is below 2/(alpha+1) = " + fmt(2 / (p.alpha + 1)));
    }
    if (!(p.theta < upper)) {
      out.push_back("r = 1 requires 2/(alpha+1) <= theta < " + upper_text + " for the " + to_string(mode) +
                    " scheme; theta = " + fmt(p.theta) + " is too large");
    }
  }
  return out;
}

/// Slack bound for the exponential schedule: 0 < delta < 1/theta (continuous)
/// or 0 < delta < 1/(2 theta) (discrete).
template <typename Scalar>
std::vector<std::string> exponential_violations(Scalar r, Scalar theta, Scalar delta, Mode mode) {
  using detail::fmt;
  std::vector<std::string> out;
  if (!(r >= 0 && r < 1)) out.push_back("exponential schedule requires r < 1 (r = " + fmt(r) + ")");
  if (!(theta > 0)) {
    out.push_back("exponential schedule requires theta > 0");
    return out;
  }
  const Scalar bound = mode == Mode::continuous ? 1 / theta : 1 / (2 * theta);
  const std::string text = mode == Mode::continuous ? "1/theta" : "1/(2 theta)";
  if (!(delta > 0 && delta < bound)) {
    out.push_back("exponential schedule requires 0 < delta < " + text + " = " + fmt(bound) + " (delta = " + fmt(delta) +
                  ")");
  }
  return out;
}

/// Weights of the Lyapunov energy: 0 < lambda < alpha (alpha - 1 when r = 1),
/// rho = r at r in {0, 1}, rho in (0, r) otherwise.
template <typename Scalar>
struct EnergyParams {
  Scalar lambda = Scalar(1);
  Scalar rho = Scalar(1);
};

template <typename Scalar>
std::vector<std::string> energy_violations(const EnergyParams<Scalar>& e, const SolverParams<Scalar>& p, Mode mode) {
  using detail::fmt;
  std::vector<std::string> out;
  if (mode == Mode::discrete && p.r == 0) out.push_back("discrete energy is defined for r in (0, 1] only");
  const Scalar lambda_max = p.r == 1 ? p.alpha - 1 : p.alpha;
  if (!(e.lambda > 0 && e.lambda < lambda_max)) {
    out.push_back("lambda must lie in (0, " + fmt(lambda_max) + ") (lambda = " + fmt(e.lambda) + ")");
  }
  if (p.r == 0 || p.r == 1) {
    if (e.rho != p.r) out.push_back("rho must equal r = " + fmt(p.r) + " (rho = " + fmt(e.rho) + ")");
  } else if (!(e.rho > 0 && e.rho < p.r)) {
    out.push_back("rho must lie in (0, r) = (0, " + fmt(p.r) + ") (rho = " + fmt(e.rho) + ")");
  }
  return out;
}

/// The distinguished weight alpha/2 - 1/(2 theta) (r < 1) or
/// (alpha-1)/2 - 1/(2 theta) (r = 1), clipped into the open admissible interval.
template <typename Scalar>
Scalar default_energy_lambda(const SolverParams<Scalar>& p) {
  const Scalar lambda_max = p.r == 1 ? p.alpha - 1 : p.alpha;
  Scalar lambda = p.r == 1 ? (p.alpha - 1) / 2 - 1 / (2 * p.theta) : p.alpha / 2 - 1 / (2 * p.theta);
  const Scalar lo = Scalar(1e-3) * lambda_max;
  const Scalar hi = lambda_max * (1 - Scalar(1e-3));
  if (lambda < lo) lambda = lo;
  if (lambda > hi) lambda = hi;
  return lambda;
}

template <typename Scalar>
EnergyParams<Scalar> default_energy_params(const SolverParams<Scalar>& p) {
  EnergyParams<Scalar> e;
  e.lambda = default_energy_lambda(p);
  e.rho = (p.r == 0 || p.r == 1) ? p.r : Scalar(0.9) * p.r;
  return e;
}

}  // namespace monoflow
