#pragma once

#include <cmath>
#include <functional>
#include <string>

#include <Eigen/LU>

#include "monoflow/growth.hpp"
#include "monoflow/operator.hpp"
#include "monoflow/trajectory.hpp"

namespace monoflow {

// One step of the implicit scheme solves the resolvent equation
//   z^{k+1} + gamma_k V(z^{k+1}) = w_k,   w_k = z^k + m_k (z^k - z^{k-1}) + a_k V(z^k).

template <typename Scalar>
struct StepCoefficients {
  long k = 0;
  Scalar D = 0;      ///< alpha - r k^(r-1) + (k+1)^r
  Scalar m = 0;      ///< k^r / D
  Scalar a = 0;      ///< theta k^(2r) beta_{k-1} / D
  Scalar b = 0;      ///< (theta [(k+1)^(2r) - k^(2r) - 2r k^(2r-1)] + k^r) beta_k / D
  Scalar gamma = 0;  ///< a + b
};

template <typename Scalar>
StepCoefficients<Scalar> compute_coefficients(long k, const SolverParams<Scalar>& p, const BetaSchedule<Scalar>& s) {
  using std::pow;
  detail::require(k >= 1, "step index must be at least 1");
  detail::require(p.r > 0 && p.r <= 1, "implicit scheme requires r in (0, 1]");
  const Scalar kk = Scalar(k);
  const Scalar r = p.r;
  const Scalar kr = pow(kk, r);
  StepCoefficients<Scalar> c;
  c.k = k;
  c.D = p.alpha - r * pow(kk, r - 1) + pow(kk + 1, r);
  if (!(c.D > 0)) {
    throw Error(ErrorCode::ill_posed_step, "step k = " + std::to_string(k) + " has nonpositive denominator D = " +
                                               detail::fmt(c.D));
  }
  const Scalar beta_k = s.at(k);
  const Scalar beta_prev = s.previous(k);
  // (k+1)^(2r) - k^(2r) - 2r k^(2r-1) without cancellation of the leading terms
  const Scalar bracket = power_difference(kk, 2 * r) - 2 * r * pow(kk, 2 * r - 1);
  c.m = kr / c.D;
  c.a = p.theta * kr * kr * beta_prev / c.D;
  c.b = (p.theta * bracket + kr) * beta_k / c.D;
  c.gamma = c.a + c.b;
  if (!(c.gamma > 0) || !std::isfinite(double(c.gamma))) {
    throw Error(ErrorCode::ill_posed_step, "step k = " + std::to_string(k) + " has resolvent parameter gamma = " +
                                               detail::fmt(c.gamma) + " for schedule " + s.describe());
  }
  return c;
}

enum class ResolventMethod { direct_affine, newton };

inline const char* to_string(ResolventMethod m) { return m == ResolventMethod::direct_affine ? "direct_affine" : "newton"; }

template <typename Scalar>
struct ResolventConfig {
  ResolventMethod method = ResolventMethod::direct_affine;
  Scalar tol = Scalar(1e-12);  ///< relative to 1 + |w|
  int max_iter = 50;

  void validate() const {
    detail::require(tol > 0, "resolvent tolerance must be positive");
    detail::require(max_iter >= 1, "resolvent max_iter must be at least 1");
  }
};

template <typename Scalar>
struct ResolventResult {
  VectorX<Scalar> z;
  Scalar residual = 0;  ///< |z + gamma V(z) - w|
  int iterations = 0;
};

/// Solves z + gamma V(z) = w.
template <typename Scalar>
ResolventResult<Scalar> solve_resolvent(const MonotoneOperator<Scalar>& op, std::type_identity_t<Scalar> gamma, const VectorArg<Scalar>& w,
                                        const ResolventConfig<Scalar>& cfg = {}) {
  cfg.validate();
  detail::require(gamma > 0, "resolvent parameter gamma must be positive");
  detail::require(w.size() == op.dimension(), "resolvent argument has the wrong dimension");
  const Index n = op.dimension();
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  ResolventResult<Scalar> out;

  if (cfg.method == ResolventMethod::direct_affine) {
    if (!op.is_affine()) throw Error(ErrorCode::invalid_input, "direct_affine resolvent needs an affine operator");
    const Eigen::PartialPivLU<MatrixX<Scalar>> lu(I + gamma * op.matrix());
    if (!(lu.rcond() > std::numeric_limits<Scalar>::epsilon())) {
      throw Error(ErrorCode::numerical_domain, "resolvent system I + gamma M is numerically singular (gamma = " +
                                                   detail::fmt(gamma) + ")");
    }
    out.z = lu.solve(w - gamma * op.offset());
    out.residual = (out.z + gamma * op(out.z) - w).norm();
    out.iterations = 1;
    return out;
  }

  const Scalar target = cfg.tol * (1 + w.norm());
  VectorX<Scalar> z = w;
  VectorX<Scalar> F = z + gamma * op(z) - w;
  Scalar res = F.norm();
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (res <= target) {
      out.z = std::move(z);
      out.residual = res;
      out.iterations = it;
      return out;
    }
    const Eigen::PartialPivLU<MatrixX<Scalar>> lu(I + gamma * op.jacobian(z));
    const VectorX<Scalar> step = lu.solve(F);
    if (!step.allFinite()) break;
    z -= step;
    F = z + gamma * op(z) - w;
    res = F.norm();
    // At large gamma the residual stagnates at roughly gamma |J| |z| eps; a
    // negligible Newton step then means the iteration has converged.
    if (res <= target || step.norm() <= cfg.tol * (1 + z.norm())) {
      out.z = std::move(z);
      out.residual = res;
      out.iterations = it + 1;
      return out;
    }
  }
  throw Error(ErrorCode::convergence, "Newton resolvent did not converge in " + std::to_string(cfg.max_iter) +
                                          " iterations (residual " + detail::fmt(res) + ")");
}

template <typename Scalar>
VectorX<Scalar> resolvent(const MonotoneOperator<Scalar>& op, std::type_identity_t<Scalar> gamma, const VectorArg<Scalar>& w,
                          const ResolventConfig<Scalar>& cfg = {}) {
  return solve_resolvent(op, gamma, w, cfg).z;
}

/// Everything known about one transition z^k -> z^{k+1}.
template <typename Scalar>
struct StepRecord {
  StepCoefficients<Scalar> coeffs;
  const VectorX<Scalar>* z_prev;  ///< z^{k-1}
  const VectorX<Scalar>* z;       ///< z^k
  const VectorX<Scalar>* value;   ///< V(z^k)
  const VectorX<Scalar>* w;
  const VectorX<Scalar>* z_next;  ///< z^{k+1}
  Scalar residual;
};

template <typename Scalar>
struct DiscreteOptions {
  long stride = 0;  ///< sample every stride-th iterate; 0 picks ceil(k_max / 2000)
  bool force = false;
  std::function<void(const StepRecord<Scalar>&)> observer;
};

/// Throws unless the parameters and the schedule satisfy the discrete
/// admissibility and growth conditions up to k_max.
template <typename Scalar>
void validate_discrete_setup(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p, long k_max) {
  auto violations = admissibility_violations(p, Mode::discrete);
  if (const auto* e = s.template get_if<ExponentialBeta<Scalar>>()) {
    for (auto& v : exponential_violations(e->r, e->theta, e->delta, Mode::discrete)) violations.push_back(v);
  }
  if (!violations.empty()) {
    std::string msg = "inadmissible discrete setup:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw Error(ErrorCode::invalid_input, msg);
  }
  const auto growth = check_growth_discrete(s, p, std::max(k_max, p.k0 + 1));
  if (!growth.passes) {
    throw Error(ErrorCode::schedule_invalid, "discrete growth condition fails: g_k reaches " +
                                                 detail::fmt(growth.sup_value) + " at k = " +
                                                 std::to_string(growth.argsup) + ", bound 1/(2 theta) = " +
                                                 detail::fmt(growth.bound));
  }
}

/// Runs the implicit scheme from (z^0, z^1) and returns samples of z^1..z^{k_max}
/// (sample index k, velocity z^k - z^{k-1}).
template <typename Scalar>
Trajectory<Scalar> run_discrete(const MonotoneOperator<Scalar>& op, const BetaSchedule<Scalar>& s,
                                const SolverParams<Scalar>& p, const VectorArg<Scalar>& z0, const VectorArg<Scalar>& z1,
                                long k_max, const ResolventConfig<Scalar>& cfg = {},
                                const DiscreteOptions<Scalar>& options = {}) {
  if (!(p.r > 0 && p.r <= 1)) {
    throw Error(ErrorCode::invalid_input, "discrete scheme requires r in (0, 1] (r = " + detail::fmt(p.r) + ")");
  }
  detail::require(k_max >= 1, "k_max must be at least 1");
  detail::require(z0.size() == op.dimension() && z1.size() == op.dimension(), "initial iterates have the wrong dimension");
  detail::require(z0.allFinite() && z1.allFinite(), "initial iterates must be finite");
  cfg.validate();
  if (!options.force) validate_discrete_setup(s, p, k_max);

  const long stride = options.stride > 0 ? options.stride : std::max(1L, (k_max + 1999) / 2000);
  Trajectory<Scalar> traj;
  traj.kind = TrajectoryKind::discrete;
  traj.params = p;
  traj.schedule = s;
  traj.samples.reserve(std::size_t(k_max / stride + 2));

  VectorX<Scalar> z_prev = z0;
  VectorX<Scalar> z = z1;
  VectorX<Scalar> w, z_next;
  long k = 1;
  try {
    for (; k <= k_max; ++k) {
      const VectorX<Scalar> v = op(z);
      if (k == 1 || k % stride == 0 || k == k_max) {
        traj.samples.push_back(Sample<Scalar>{Scalar(k), z, v, z - z_prev});
      }
      if (k == k_max) break;
      const auto c = compute_coefficients(k, p, s);
      w = z + c.m * (z - z_prev) + c.a * v;
      auto sol = solve_resolvent(op, c.gamma, w, cfg);
      z_next = std::move(sol.z);
      if (!z_next.allFinite()) throw Error(ErrorCode::divergence, "iterate became non-finite");
      if (options.observer) options.observer(StepRecord<Scalar>{c, &z_prev, &z, &v, &w, &z_next, sol.residual});
      z_prev.swap(z);
      z.swap(z_next);
    }
  } catch (const Error& e) {
    const ErrorCode code = e.code() == ErrorCode::numerical_domain ? ErrorCode::divergence : e.code();
    throw SolverFailure<Scalar>(code, std::string(e.what()) + " at step k = " + std::to_string(k), std::move(traj));
  }
  return traj;
}

/// Discrete Lyapunov energy
///   1/2 |2 lambda k^(rho-r) (z^k - z*) + 2 k^rho (z^k - z^{k-1}) + theta k^(rho+r) beta_{k-1} V(z^k)|^2
///   + 2 lambda k^(2(rho-r)) (alpha - (2 rho - r) k^(r-1) - lambda) |z^k - z*|^2
///   + 2 lambda theta k^(2 rho) beta_{k-1} <z^k - z*, V(z^k)>
///   + theta^2/2 (k+1)^(2r) k^(2 rho) beta_k beta_{k-1} |V(z^k)|^2
template <typename Scalar>
Scalar energy_discrete(long k, const VectorX<Scalar>& zk, const VectorX<Scalar>& zkm1, const VectorX<Scalar>& vk,
                       const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p, const EnergyParams<Scalar>& e,
                       const VectorArg<Scalar>& z_star) {
  using std::pow;
  detail::require(k >= 1, "energy index must be at least 1");
  const Scalar kk = Scalar(k);
  const Scalar r = p.r, rho = e.rho, lambda = e.lambda, theta = p.theta;
  const Scalar beta_k = s.at(k);
  const Scalar beta_prev = s.previous(k);
  const VectorX<Scalar> d = zk - z_star;
  const VectorX<Scalar> mixed =
      2 * lambda * pow(kk, rho - r) * d + 2 * pow(kk, rho) * (zk - zkm1) + theta * pow(kk, rho + r) * beta_prev * vk;
  return Scalar(0.5) * mixed.squaredNorm() +
         2 * lambda * pow(kk, 2 * (rho - r)) * (p.alpha - (2 * rho - r) * pow(kk, r - 1) - lambda) * d.squaredNorm() +
         2 * lambda * theta * pow(kk, 2 * rho) * beta_prev * d.dot(vk) +
         theta * theta / 2 * pow(kk + 1, 2 * r) * pow(kk, 2 * rho) * beta_k * beta_prev * vk.squaredNorm();
}

template <typename Scalar>
Scalar energy_discrete(long k, const VectorX<Scalar>& zk, const VectorX<Scalar>& zkm1, const MonotoneOperator<Scalar>& op,
                       const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p, const EnergyParams<Scalar>& e,
                       const VectorArg<Scalar>& z_star) {
  return energy_discrete(k, zk, zkm1, op(zk), s, p, e, z_star);
}

/// eta_k = 2 k^r [(2 r theta k^(r-1) - 1) beta_k + theta k^r (beta_k - beta_{k-1})]
///         - theta [(k+1)^(2r) beta_k - k^(2r) beta_{k-1}]
template <typename Scalar>
Scalar eta_k(long k, const SolverParams<Scalar>& p, const BetaSchedule<Scalar>& s) {
  using std::pow;
  detail::require(k >= 1, "eta_k needs k >= 1");
  const Scalar kk = Scalar(k);
  const Scalar r = p.r, theta = p.theta;
  const Scalar kr = pow(kk, r);
  const Scalar bk = s.at(k);
  const Scalar bp = s.previous(k);
  return 2 * kr * ((2 * r * theta * pow(kk, r - 1) - 1) * bk + theta * kr * (bk - bp)) -
         theta * (pow(kk + 1, 2 * r) * bk - kr * kr * bp);
}

}  // namespace monoflow
