#include <cmath>

#include <gtest/gtest.h>

#include "monoflow/monoflow.hpp"

using namespace monoflow;
using Vec = VectorX<double>;
using Mat = MatrixX<double>;
using Sched = BetaSchedule<double>;

namespace {

SolverParams<double> params(double r, double alpha, double theta) {
  SolverParams<double> p;
  p.r = r;
  p.alpha = alpha;
  p.theta = theta;
  return p;
}

MonotoneOperator<double> scalar_identity() { return MonotoneOperator<double>::affine(Mat::Identity(1, 1), Vec::Zero(1)); }

// Integrates z'' + (alpha/t^r) z' + theta t^r z' + z = 0 (scalar V(z) = z,
// beta = 1) in (z, z') form with classical RK4; an oracle independent of the
// auxiliary-variable formulation used by the library.
std::pair<double, double> scalar_oracle(double r, double alpha, double theta, double T, double h) {
  auto f = [&](double t, double z, double v) {
    return std::pair<double, double>{v, -(alpha / std::pow(t, r) + theta * std::pow(t, r)) * v - z};
  };
  double t = 1, z = 1, v = 0;
  const long n = std::lround((T - 1) / h);
  for (long i = 0; i < n; ++i) {
    const auto [a1, b1] = f(t, z, v);
    const auto [a2, b2] = f(t + h / 2, z + h / 2 * a1, v + h / 2 * b1);
    const auto [a3, b3] = f(t + h / 2, z + h / 2 * a2, v + h / 2 * b2);
    const auto [a4, b4] = f(t + h, z + h * a3, v + h * b3);
    z += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
    v += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
    t = 1 + double(i + 1) * h;
  }
  return {z, v};
}

double rk4_terminal(double h, double T) {
  IntegratorConfig<double> cfg;
  cfg.method = IntegrationMethod::rk4_fixed;
  cfg.step = h;
  cfg.horizon = T;
  cfg.sample_count = 2;
  const auto traj = integrate(scalar_identity(), Sched::constant(1.0), params(1, 8, 0.25), cfg, Vec::Ones(1), Vec::Zero(1));
  return traj.back().z(0);
}

}  // namespace

TEST(FlowRhs, HandEvaluatedScalarCase) {
  FlowState<double> st{1.0, Vec::Ones(1), Vec::Constant(1, 4.0)};
  const auto d = flow_rhs(st, scalar_identity(), Sched::constant(1.0), params(0, 2, 1));
  EXPECT_DOUBLE_EQ(d.du(0), -2.0);
  EXPECT_DOUBLE_EQ(d.dz(0), -1.0);
}

TEST(FlowRhs, AtZeroOnlyCurvatureAndDampingRemain) {
  const auto op = MonotoneOperator<double>::affine(Mat::Identity(2, 2), Vec::Constant(2, -1.0));  // z* = (1, 1)
  const Vec zs = Vec::Ones(2);
  const double r = 0.5, alpha = 8, t = 3;
  FlowState<double> st{t, zs, Vec::Constant(2, 0.7)};
  const auto d = flow_rhs(st, op, Sched::power(1.0), params(r, alpha, 0.3));
  const Vec du = 2 * r * (1 - r) * std::pow(t, r - 2) * zs;
  const Vec dz = (st.u - 2 * (alpha - r * std::pow(t, r - 1)) * zs) / (2 * std::pow(t, r));
  EXPECT_LE((d.du - du).norm(), 1e-15);
  EXPECT_LE((d.dz - dz).norm(), 1e-15);
}

TEST(FlowRhs, ROneConstantBetaForcing) {
  // with r = 1 and beta = 1, r t^(r-1) = 1 and the forcing reduces to 2t (2 theta - 1) V(z)
  const double theta = 0.25, t = 7;
  Mat M(2, 2);
  M << 1, 2, -2, 0.5;
  const auto op = MonotoneOperator<double>::affine(M, Vec::Zero(2));
  FlowState<double> st{t, Vec::Constant(2, 0.3), Vec::Constant(2, -1.1)};
  const auto d = flow_rhs(st, op, Sched::constant(1.0), params(1, 8, theta));
  const Vec expected = 2 * t * (2 * theta - 1) * op(st.z);
  EXPECT_LE((d.du - expected).norm(), 1e-13);
}

TEST(FlowRhs, NonPositiveTimeIsDomainError) {
  FlowState<double> st{0.0, Vec::Ones(1), Vec::Ones(1)};
  try {
    flow_rhs(st, scalar_identity(), Sched::constant(1.0), params(0.5, 8, 0.3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::numerical_domain || e.code() == ErrorCode::invalid_input);
  }
}

TEST(FlowRhs, AuxiliaryRoundTrip) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const auto s = Sched::exponential_continuous(0.5, 1.0 / 3, 2.0);
  const auto p = params(0.5, 8, 1.0 / 3);
  Vec z(6), zd(6);
  z << 1, -2, 0.5, 0.1, 3, -1;
  zd << 0.2, 0.1, -0.3, 1, 0, 0.5;
  const Vec v = op(z);
  const Vec u = auxiliary_from_velocity(2.5, z, zd, v, s, p);
  EXPECT_LE((velocity_from_auxiliary(2.5, z, u, v, s, p) - zd).norm(), 1e-12);
}

TEST(Integrate, ZeroOperatorKeepsRestingStateFixed) {
  const auto op = MonotoneOperator<double>::affine(Mat::Zero(3, 3), Vec::Zero(3));
  Vec z0(3);
  z0 << 1, -2, 3;
  for (double r : {0.0, 0.5, 1.0}) {
    IntegratorConfig<double> cfg;
    cfg.horizon = 50;
    cfg.force = true;
    const auto traj = integrate(op, Sched::constant(1.0), params(r, 8, 0.3), cfg, z0, Vec::Zero(3));
    for (const auto& smp : traj.samples) {
      EXPECT_LE((smp.z - z0).norm(), 1e-12) << "r=" << r << " t=" << smp.tau;
    }
  }
}

TEST(Integrate, ScalarAffineDecaysAndMatchesOracle) {
  IntegratorConfig<double> cfg;
  cfg.horizon = 100;
  const auto traj = integrate(scalar_identity(), Sched::constant(1.0), params(1, 8, 0.25), cfg, Vec::Ones(1), Vec::Zero(1));
  EXPECT_DOUBLE_EQ(traj.back().tau, 100.0);
  EXPECT_LE(std::abs(traj.back().z(0)), 1e-3);
  const auto [zo, vo] = scalar_oracle(1, 8, 0.25, 100, 1e-4);
  EXPECT_NEAR(traj.back().z(0), zo, 1e-8);
  EXPECT_NEAR(traj.back().velocity(0), vo, 1e-8);
}

TEST(Integrate, SamplesAreGeometricAndVelocityIsReconstructed) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.25);
  IntegratorConfig<double> cfg;
  cfg.horizon = 20;
  cfg.sample_count = 50;
  const auto traj = integrate(op, s, p, cfg, Vec::Zero(6), Vec::Zero(6));
  ASSERT_EQ(traj.size(), 50u);
  const auto ts = geometric_times(1.0, 20.0, 50);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_DOUBLE_EQ(traj.samples[i].tau, ts[i]);
    const auto& smp = traj.samples[i];
    EXPECT_LE((smp.value - op(smp.z)).norm(), 1e-15 * (1 + smp.value.norm()));
    const Vec u = auxiliary_from_velocity(smp.tau, smp.z, smp.velocity, smp.value, s, p);
    EXPECT_LE((velocity_from_auxiliary(smp.tau, smp.z, u, smp.value, s, p) - smp.velocity).norm(), 1e-12);
  }
}

TEST(Integrate, Example1ConvergesToPrimalDualSolution) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  IntegratorConfig<double> cfg;
  cfg.horizon = 1000;
  const auto traj = integrate(op, Sched::constant(1.0), params(1, 8, 0.25), cfg, Vec::Zero(6), Vec::Zero(6));
  const Vec x = traj.back().z.head(4);
  EXPECT_LE((x - prob.known_solution->x).lpNorm<Eigen::Infinity>(), 1e-2);
}

TEST(Integrate, Rk4IsFourthOrder) {
  const double T = 4;
  const double ref = scalar_oracle(1, 8, 0.25, T, 1e-4).first;
  const double e1 = std::abs(rk4_terminal(0.1, T) - ref);
  const double e2 = std::abs(rk4_terminal(0.05, T) - ref);
  const double ratio = e1 / e2;
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Integrate, ConfigValidation) {
  const auto op = scalar_identity();
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.25);
  auto bad = [&](auto mutate) {
    IntegratorConfig<double> cfg;
    cfg.horizon = 10;
    mutate(cfg);
    EXPECT_THROW(integrate(op, s, p, cfg, Vec::Ones(1), Vec::Zero(1)), Error);
  };
  bad([](auto& c) { c.horizon = 0.5; });
  bad([](auto& c) { c.step = 20; });
  bad([](auto& c) { c.rtol = 0.1; });
  bad([](auto& c) { c.sample_count = 1; });
  IntegratorConfig<double> cfg;
  EXPECT_THROW(integrate(op, s, p, cfg, Vec::Ones(2), Vec::Zero(2)), Error);
}

TEST(Integrate, InadmissibleSetupRejectedUnlessForced) {
  IntegratorConfig<double> cfg;
  cfg.horizon = 5;
  EXPECT_THROW(integrate(scalar_identity(), Sched::constant(1.0), params(0.5, 8, 0.2), cfg, Vec::Ones(1), Vec::Zero(1)),
               Error);
  cfg.force = true;
  EXPECT_NO_THROW(
      integrate(scalar_identity(), Sched::constant(1.0), params(0.5, 8, 0.2), cfg, Vec::Ones(1), Vec::Zero(1)));
}

TEST(Integrate, DivergenceCarriesPartialTrajectory) {
  // z^3 is monotone; a huge start point overflows the explicit steps
  const auto op = MonotoneOperator<double>::general(1, [](const Vec& z) { return Vec(z.array().cube()); });
  IntegratorConfig<double> cfg;
  cfg.method = IntegrationMethod::rk4_fixed;
  cfg.step = 0.1;
  cfg.horizon = 50;
  cfg.sample_count = 500;
  try {
    integrate(op, Sched::constant(1.0), params(1, 8, 0.25), cfg, Vec::Constant(1, 1e60), Vec::Zero(1));
    FAIL() << "expected divergence";
  } catch (const SolverFailure<double>& e) {
    EXPECT_EQ(e.code(), ErrorCode::divergence);
    ASSERT_FALSE(e.partial().empty());
    for (const auto& smp : e.partial().samples) EXPECT_TRUE(smp.z.allFinite());
  }
}

TEST(Integrate, StepBudgetIsStiffnessError) {
  for (auto method : {IntegrationMethod::rk4_fixed, IntegrationMethod::rk45_adaptive}) {
    IntegratorConfig<double> cfg;
    cfg.method = method;
    cfg.horizon = 100;
    cfg.max_steps = 10;
    try {
      integrate(scalar_identity(), Sched::constant(1.0), params(1, 8, 0.25), cfg, Vec::Ones(1), Vec::Zero(1));
      FAIL();
    } catch (const SolverFailure<double>& e) {
      EXPECT_EQ(e.code(), ErrorCode::stiffness) << to_string(method);
      EXPECT_GE(e.partial().size(), 1u);
    }
  }
}

TEST(Energy, VanishesAtZero) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const Vec zs = prob.known_solution->stacked();
  Sample<double> smp{5.0, zs, op(zs), Vec::Zero(6)};
  EXPECT_NEAR(energy_continuous(smp, Sched::constant(1.0), params(1, 8, 0.25), EnergyParams<double>{1.5, 1}, zs), 0.0, 1e-20);
}

TEST(Energy, SecondSummandConstantAtROne) {
  // with V = 0 and zero velocity, E = 2 lambda^2 |d|^2 + 2 lambda (alpha - 1 - lambda) |d|^2 at every t
  const auto op = MonotoneOperator<double>::affine(Mat::Zero(2, 2), Vec::Zero(2));
  const double lambda = 1.5, alpha = 8;
  const Vec d = Vec::Constant(2, 0.5);
  for (double t : {1.0, 10.0, 1000.0}) {
    Sample<double> smp{t, d, op(d), Vec::Zero(2)};
    const double e = energy_continuous(smp, Sched::constant(1.0), params(1, alpha, 0.25), EnergyParams<double>{lambda, 1}, Vec::Zero(2));
    EXPECT_NEAR(e, (2 * lambda * lambda + 2 * lambda * (alpha - 1 - lambda)) * d.squaredNorm(), 1e-12);
  }
}

TEST(Energy, NonincreasingAfterTransientForTwoLambdas) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const Vec zs = prob.known_solution->stacked();
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.25);
  IntegratorConfig<double> cfg;
  cfg.horizon = 200;
  const auto traj = integrate(op, s, p, cfg, Vec::Zero(6), Vec::Zero(6));
  for (double lambda : {1.0, 2.0}) {
    const EnergyParams<double> e{lambda, 1};
    ASSERT_TRUE(energy_violations(e, p, Mode::continuous).empty());
    std::vector<double> E;
    for (const auto& smp : traj.samples) E.push_back(energy_continuous(smp, s, p, e, zs));
    const auto start = detect_transient(E);
    ASSERT_TRUE(start.has_value()) << "lambda=" << lambda;
    const auto rep = nonincrease_violations(E, *start, 1e-8 * E[*start]);
    EXPECT_EQ(rep.violations, 0u) << "lambda=" << lambda;
  }
}

TEST(Integrate, LongDoubleRuns) {
  using LVec = VectorX<long double>;
  const auto op = MonotoneOperator<long double>::affine(MatrixX<long double>::Identity(1, 1), LVec::Zero(1));
  SolverParams<long double> p;
  IntegratorConfig<long double> cfg;
  cfg.horizon = 10;
  const auto traj = integrate(op, BetaSchedule<long double>::constant(1), p, cfg, LVec::Ones(1), LVec::Zero(1));
  EXPECT_TRUE(traj.back().z.allFinite());
}
