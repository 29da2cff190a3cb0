#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "monoflow/growth.hpp"
#include "monoflow/operator.hpp"
#include "monoflow/trajectory.hpp"

namespace monoflow {

// The second-order flow
//   z'' + alpha/t^r z' + theta t^r beta(t) d/dt V(z) + beta(t) V(z) = 0
// is integrated through the first-order pair (u, z):
//   u' = 2 t^r [(2 r theta t^(r-1) - 1) beta + theta t^r beta'] V(z) + 2 r (1-r) t^(r-2) z
//   u  = 2 (alpha - r t^(r-1)) z + 2 t^r z' + 2 theta t^(2r) beta V(z)

template <typename Scalar>
struct FlowState {
  Scalar t;
  VectorX<Scalar> z;
  VectorX<Scalar> u;
};

template <typename Scalar>
struct FlowDerivative {
  VectorX<Scalar> du;
  VectorX<Scalar> dz;
};

namespace detail {

/// Time-dependent scalar weights of the first-order system at time t.
template <typename Scalar>
struct FlowWeights {
  Scalar t_r;          // t^r
  Scalar r_t_rm1;      // r t^(r-1)
  Scalar beta;         // beta(t)
  Scalar force;        // 2 t^r [(2 r theta t^(r-1) - 1) beta + theta t^r beta']
  Scalar curvature;    // 2 r (1-r) t^(r-2)
  Scalar damping;      // 2 (alpha - r t^(r-1))
  Scalar hessian;      // 2 theta t^(2r) beta

  FlowWeights(Scalar t, const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p) {
    if (!(t > 0)) throw Error(ErrorCode::numerical_domain, "flow evaluated at nonpositive time " + fmt(t));
    using std::pow;
    const Scalar r = p.r;
    t_r = pow(t, r);
    r_t_rm1 = r == 0 ? Scalar(0) : r * pow(t, r - 1);
    beta = s.value(t);
    const Scalar beta_dot = beta * s.log_derivative(t);
    force = 2 * t_r * ((2 * p.theta * r_t_rm1 - 1) * beta + p.theta * t_r * beta_dot);
    curvature = (r == 0 || r == 1) ? Scalar(0) : 2 * r * (1 - r) * pow(t, r - 2);
    damping = 2 * (p.alpha - r_t_rm1);
    hessian = 2 * p.theta * t_r * t_r * beta;
  }
};

}  // namespace detail

/// z' recovered from the auxiliary variable u at time t.
template <typename Scalar>
VectorX<Scalar> velocity_from_auxiliary(Scalar t, const VectorX<Scalar>& z, const VectorX<Scalar>& u,
                                        const VectorX<Scalar>& v, const BetaSchedule<Scalar>& s,
                                        const SolverParams<Scalar>& p) {
  const detail::FlowWeights<Scalar> w(t, s, p);
  return (u - w.damping * z - w.hessian * v) / (2 * w.t_r);
}

/// u(t) = 2 (alpha - r t^(r-1)) z + 2 t^r z' + 2 theta t^(2r) beta V(z)
template <typename Scalar>
VectorX<Scalar> auxiliary_from_velocity(Scalar t, const VectorX<Scalar>& z, const VectorX<Scalar>& zdot,
                                        const VectorX<Scalar>& v, const BetaSchedule<Scalar>& s,
                                        const SolverParams<Scalar>& p) {
  const detail::FlowWeights<Scalar> w(t, s, p);
  return w.damping * z + 2 * w.t_r * zdot + w.hessian * v;
}

/// Right-hand side of the first-order system; one evaluation of V.
template <typename Scalar>
FlowDerivative<Scalar> flow_rhs(const FlowState<Scalar>& state, const MonotoneOperator<Scalar>& op,
                                const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p) {
  const detail::FlowWeights<Scalar> w(state.t, s, p);
  const VectorX<Scalar> v = op(state.z);
  FlowDerivative<Scalar> d;
  d.du = w.force * v + w.curvature * state.z;
  d.dz = (state.u - w.damping * state.z - w.hessian * v) / (2 * w.t_r);
  return d;
}

enum class IntegrationMethod { rk4_fixed, rk45_adaptive };

inline const char* to_string(IntegrationMethod m) {
  return m == IntegrationMethod::rk4_fixed ? "rk4_fixed" : "rk45_adaptive";
}

template <typename Scalar>
struct IntegratorConfig {
  IntegrationMethod method = IntegrationMethod::rk45_adaptive;
  Scalar step = Scalar(1e-3);  ///< fixed step, or initial step for the adaptive method
  Scalar rtol = Scalar(1e-10);
  Scalar atol = Scalar(1e-13);
  Scalar horizon = Scalar(100);
  int sample_count = 2000;  ///< geometrically spaced output times, t0 and T included
  long max_steps = 200'000'000;
  bool force = false;  ///< skip parameter and schedule validation

  void validate(Scalar t0) const {
    detail::require(horizon > t0, "horizon T must exceed t0");
    detail::require(step > 0 && step < horizon - t0, "step must lie in (0, T - t0)");
    detail::require(rtol > 0 && rtol <= Scalar(1e-2), "relative tolerance must lie in (0, 1e-2]");
    detail::require(atol > 0, "absolute tolerance must be positive");
    detail::require(sample_count >= 2, "sample_count must be at least 2");
    detail::require(max_steps >= 1, "max_steps must be positive");
  }
};

/// Geometric output grid t0 (T/t0)^(i/(n-1)).
template <typename Scalar>
std::vector<Scalar> geometric_times(Scalar t0, Scalar T, int n) {
  std::vector<Scalar> ts(static_cast<std::size_t>(n));
  using std::pow;
  for (int i = 0; i < n; ++i) ts[std::size_t(i)] = t0 * pow(T / t0, Scalar(i) / Scalar(n - 1));
  ts.front() = t0;
  ts.back() = T;
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

/// Throws unless the parameters and the schedule satisfy the continuous
/// admissibility and growth conditions.
template <typename Scalar>
void validate_continuous_setup(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p) {
  auto violations = admissibility_violations(p, Mode::continuous);
  if (const auto* e = s.template get_if<ExponentialBeta<Scalar>>()) {
    for (auto& v : exponential_violations(e->r, e->theta, e->delta, Mode::continuous)) violations.push_back(v);
  }
  if (!violations.empty()) {
    std::string msg = "inadmissible continuous setup:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw Error(ErrorCode::invalid_input, msg);
  }
  const auto growth = check_growth_continuous(s, p);
  if (!growth.passes) {
    throw Error(ErrorCode::schedule_invalid, "growth condition fails: sup t^r (beta'/beta + 2r/t) = " +
                                                 detail::fmt(growth.sup_value) + " is not below 1/theta = " +
                                                 detail::fmt(growth.bound));
  }
}

namespace detail {

template <typename Scalar>
class FlowSystem {
 public:
  FlowSystem(const MonotoneOperator<Scalar>& op, const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p)
      : op_(op), s_(s), p_(p), n_(op.dimension()) {}

  /// y = [u; z]
  void rhs(Scalar t, const VectorX<Scalar>& y, VectorX<Scalar>& dy) const {
    const FlowWeights<Scalar> w(t, s_, p_);
    const auto u = y.head(n_);
    const auto z = y.tail(n_);
    const VectorX<Scalar> v = op_(z);
    dy.resize(2 * n_);
    dy.head(n_) = w.force * v + w.curvature * z;
    dy.tail(n_) = (u - w.damping * z - w.hessian * v) / (2 * w.t_r);
  }

  Sample<Scalar> sample(Scalar t, const VectorX<Scalar>& y) const {
    Sample<Scalar> out;
    out.tau = t;
    out.z = y.tail(n_);
    out.value = op_(out.z);
    out.velocity = velocity_from_auxiliary<Scalar>(t, out.z, y.head(n_), out.value, s_, p_);
    return out;
  }

  Index n() const { return n_; }

 private:
  const MonotoneOperator<Scalar>& op_;
  const BetaSchedule<Scalar>& s_;
  const SolverParams<Scalar>& p_;
  Index n_;
};

template <typename Scalar>
void rk4_step(const FlowSystem<Scalar>& sys, Scalar t, Scalar h, VectorX<Scalar>& y) {
  VectorX<Scalar> k1, k2, k3, k4;
  sys.rhs(t, y, k1);
  sys.rhs(t + h / 2, y + (h / 2) * k1, k2);
  sys.rhs(t + h / 2, y + (h / 2) * k2, k3);
  sys.rhs(t + h, y + h * k3, k4);
  y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Dormand-Prince 5(4) tableau.
template <typename Scalar>
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

template <typename Scalar>
class AdaptiveStepper {
 public:
  AdaptiveStepper(const FlowSystem<Scalar>& sys, const IntegratorConfig<Scalar>& cfg) : sys_(sys), cfg_(cfg) {}

  /// Advances (t, y) to `target` exactly. `h` carries the step suggestion
  /// between calls.
  void advance(Scalar& t, VectorX<Scalar>& y, Scalar target, Scalar& h, long& steps) {
    using T = DormandPrince<Scalar>;
    using std::abs;
    using std::max;
    using std::min;
    using std::pow;
    using std::sqrt;
    if (!fsal_valid_ || fsal_t_ != t) {
      sys_.rhs(t, y, k1_);
      fsal_valid_ = true;
      fsal_t_ = t;
    }
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    while (t < target) {
      if (++steps > cfg_.max_steps) {
        throw Error(ErrorCode::stiffness, "step budget exhausted at t = " + fmt(t));
      }
      bool last = false;
      Scalar step = h;
      if (t + step >= target || target - (t + step) < Scalar(1e-12) * abs(target)) {
        step = target - t;
        last = true;
      }
      if (step < 16 * eps * max(Scalar(1), abs(t)) && !last) {
        throw Error(ErrorCode::stiffness, "step size underflow at t = " + fmt(t) + " (h = " + fmt(step) + ")");
      }
      sys_.rhs(t + Scalar(T::c2) * step, y + step * (Scalar(T::a21) * k1_), k2_);
      sys_.rhs(t + Scalar(T::c3) * step, y + step * (Scalar(T::a31) * k1_ + Scalar(T::a32) * k2_), k3_);
      sys_.rhs(t + Scalar(T::c4) * step,
               y + step * (Scalar(T::a41) * k1_ + Scalar(T::a42) * k2_ + Scalar(T::a43) * k3_), k4_);
      sys_.rhs(t + Scalar(T::c5) * step,
               y + step * (Scalar(T::a51) * k1_ + Scalar(T::a52) * k2_ + Scalar(T::a53) * k3_ + Scalar(T::a54) * k4_),
               k5_);
      sys_.rhs(t + step,
               y + step * (Scalar(T::a61) * k1_ + Scalar(T::a62) * k2_ + Scalar(T::a63) * k3_ + Scalar(T::a64) * k4_ +
                           Scalar(T::a65) * k5_),
               k6_);
      y_new_ = y + step * (Scalar(T::b1) * k1_ + Scalar(T::b3) * k3_ + Scalar(T::b4) * k4_ + Scalar(T::b5) * k5_ +
                           Scalar(T::b6) * k6_);
      const Scalar t_new = last ? target : t + step;
      sys_.rhs(t_new, y_new_, k7_);
      err_vec_ = step * (Scalar(T::e1) * k1_ + Scalar(T::e3) * k3_ + Scalar(T::e4) * k4_ + Scalar(T::e5) * k5_ +
                         Scalar(T::e6) * k6_ + Scalar(T::e7) * k7_);
      Scalar acc = 0;
      for (Index i = 0; i < y.size(); ++i) {
        const Scalar sc = cfg_.atol + cfg_.rtol * max(abs(y(i)), abs(y_new_(i)));
        const Scalar e = err_vec_(i) / sc;
        acc += e * e;
      }
      Scalar err = sqrt(acc / Scalar(y.size()));
      if (!(err == err)) err = Scalar(1e10);  // NaN from an overflowing trial step: reject and shrink
      if (err <= 1) {
        t = t_new;
        y.swap(y_new_);
        k1_.swap(k7_);
        fsal_t_ = t;
        const Scalar factor = err == 0 ? Scalar(5) : min(Scalar(5), max(Scalar(0.2), Scalar(0.9) * pow(err, Scalar(-0.2))));
        if (!last || factor < 1) h = step * factor;
        if (!y.allFinite()) throw Error(ErrorCode::divergence, "state became non-finite at t = " + fmt(t));
      } else {
        h = step * max(Scalar(0.2), Scalar(0.9) * pow(err, Scalar(-0.2)));
      }
    }
  }

 private:
  const FlowSystem<Scalar>& sys_;
  const IntegratorConfig<Scalar>& cfg_;
  VectorX<Scalar> k1_, k2_, k3_, k4_, k5_, k6_, k7_, y_new_, err_vec_;
  bool fsal_valid_ = false;
  Scalar fsal_t_ = 0;
};

}  // namespace detail

/// Integrates the flow from t0 = p.t0 to cfg.horizon starting at (z0, z0'),
/// emitting cfg.sample_count geometrically spaced samples.
template <typename Scalar>
Trajectory<Scalar> integrate(const MonotoneOperator<Scalar>& op, const BetaSchedule<Scalar>& s,
                             const SolverParams<Scalar>& p, const IntegratorConfig<Scalar>& cfg,
                             const VectorArg<Scalar>& z0, const VectorArg<Scalar>& zdot0) {
  detail::require(p.t0 > 0, "t0 must be positive");
  cfg.validate(p.t0);
  detail::require(z0.size() == op.dimension() && zdot0.size() == op.dimension(), "initial data has the wrong dimension");
  detail::require(z0.allFinite() && zdot0.allFinite(), "initial data must be finite");
  if (!cfg.force) validate_continuous_setup(s, p);

  Trajectory<Scalar> traj;
  traj.kind = TrajectoryKind::continuous;
  traj.params = p;
  traj.schedule = s;

  const Index n = op.dimension();
  const detail::FlowSystem<Scalar> sys(op, s, p);
  VectorX<Scalar> y(2 * n);
  y.head(n) = auxiliary_from_velocity<Scalar>(p.t0, z0, zdot0, op(z0), s, p);
  y.tail(n) = z0;

  const std::vector<Scalar> targets = geometric_times(p.t0, cfg.horizon, cfg.sample_count);
  traj.samples.reserve(targets.size());
  Scalar t = p.t0;
  Scalar h = cfg.step;
  long steps = 0;
  detail::AdaptiveStepper<Scalar> adaptive(sys, cfg);
  try {
    traj.samples.push_back(sys.sample(t, y));
    for (std::size_t i = 1; i < targets.size(); ++i) {
      const Scalar target = targets[i];
      if (cfg.method == IntegrationMethod::rk4_fixed) {
        while (t < target) {
          Scalar step = cfg.step;
          bool last = false;
          if (t + step >= target || target - (t + step) < Scalar(1e-9) * step) {
            step = target - t;
            last = true;
          }
          detail::rk4_step(sys, t, step, y);
          t = last ? target : t + step;
          if (!y.allFinite()) throw Error(ErrorCode::divergence, "state became non-finite at t = " + detail::fmt(t));
          if (++steps > cfg.max_steps) throw Error(ErrorCode::stiffness, "step budget exhausted");
        }
      } else {
        adaptive.advance(t, y, target, h, steps);
      }
      traj.samples.push_back(sys.sample(t, y));
    }
  } catch (const Error& e) {
    const ErrorCode code = e.code() == ErrorCode::numerical_domain ? ErrorCode::divergence : e.code();
    throw SolverFailure<Scalar>(code, e.what(), std::move(traj));
  }
  return traj;
}

/// Continuous Lyapunov energy
///   1/2 |2 lambda t^(rho-r) (z - z*) + 2 t^rho z' + theta t^(rho+r) beta V(z)|^2
///   + 2 lambda t^(2(rho-r)) (alpha - (2 rho - r) t^(r-1) - lambda) |z - z*|^2
///   + 2 lambda theta t^(2 rho) beta <z - z*, V(z)>
///   + theta^2/2 t^(2(rho+r)) beta^2 |V(z)|^2
template <typename Scalar>
Scalar energy_continuous(const Sample<Scalar>& sample, const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p,
                         const EnergyParams<Scalar>& e, const VectorArg<Scalar>& z_star) {
  using std::pow;
  const Scalar t = sample.tau;
  const Scalar r = p.r, rho = e.rho, lambda = e.lambda, theta = p.theta;
  const Scalar beta = s.value(t);
  const VectorX<Scalar> d = sample.z - z_star;
  const Scalar coupling = (2 * rho - r) == 0 ? Scalar(0) : (2 * rho - r) * pow(t, r - 1);
  const VectorX<Scalar> mixed =
      2 * lambda * pow(t, rho - r) * d + 2 * pow(t, rho) * sample.velocity + theta * pow(t, rho + r) * beta * sample.value;
  return Scalar(0.5) * mixed.squaredNorm() +
         2 * lambda * pow(t, 2 * (rho - r)) * (p.alpha - coupling - lambda) * d.squaredNorm() +
         2 * lambda * theta * pow(t, 2 * rho) * beta * d.dot(sample.value) +
         theta * theta / 2 * pow(t, 2 * (rho + r)) * beta * beta * sample.value.squaredNorm();
}

}  // namespace monoflow
