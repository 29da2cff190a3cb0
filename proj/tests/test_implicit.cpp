#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "monoflow/monoflow.hpp"

using namespace monoflow;
using Vec = VectorX<double>;
using Mat = MatrixX<double>;
using Sched = BetaSchedule<double>;

namespace {

SolverParams<double> params(double r, double alpha, double theta, double delta = 0) {
  SolverParams<double> p;
  p.r = r;
  p.alpha = alpha;
  p.theta = theta;
  p.delta = delta;
  return p;
}

Mat random_monotone(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g;
  Mat B(n, n), C(n, n);
  for (Index i = 0; i < B.size(); ++i) B.data()[i] = g(rng);
  for (Index i = 0; i < C.size(); ++i) C.data()[i] = g(rng);
  const Index rank = 1 + Index(rng() % n);
  return B.leftCols(rank) * B.leftCols(rank).transpose() + (C - C.transpose());
}

// Residual of the four-term recurrence
//   2 D (z+ - z) - 2 k^r (z - z-) + 2 theta [(k+1)^(2r) beta_k - k^(2r) beta_{k-1}] V(z+)
//   + 2 theta k^(2r) beta_{k-1} [V(z+) - V(z)] - 2 k^r [(2 r theta k^(r-1) - 1) beta_k + theta k^r (beta_k - beta_{k-1})] V(z+)
// assembled term by term.
double four_term_residual(long k, const Vec& zm, const Vec& z, const Vec& zp, const MonotoneOperator<double>& op,
                          const Sched& s, const SolverParams<double>& p) {
  const double kk = double(k), r = p.r, th = p.theta;
  const double bk = s.at(k), bm = s.previous(k);
  const double D = p.alpha - r * std::pow(kk, r - 1) + std::pow(kk + 1, r);
  const Vec vp = op(zp), v = op(z);
  const Vec t1 = 2 * D * (zp - z);
  const Vec t2 = -2 * std::pow(kk, r) * (z - zm);
  const Vec t3 = 2 * th * (std::pow(kk + 1, 2 * r) * bk - std::pow(kk, 2 * r) * bm) * vp;
  const Vec t4 = 2 * th * std::pow(kk, 2 * r) * bm * (vp - v);
  const Vec t5 = -2 * std::pow(kk, r) * ((2 * r * th * std::pow(kk, r - 1) - 1) * bk + th * std::pow(kk, r) * (bk - bm)) * vp;
  // scale built from the operands before differencing, so late steps where
  // z^{k+1} - z^k is tiny are measured against what round-off can resolve
  const double c3 = 2 * th * std::abs(std::pow(kk + 1, 2 * r) * bk - std::pow(kk, 2 * r) * bm);
  const double c5 = 2 * std::pow(kk, r) * std::abs((2 * r * th * std::pow(kk, r - 1) - 1) * bk + th * std::pow(kk, r) * (bk - bm));
  const double scale = 2 * D * (zp.norm() + z.norm()) + 2 * std::pow(kk, r) * (z.norm() + zm.norm()) +
                       (c3 + c5 + 2 * th * std::pow(kk, 2 * r) * bm) * vp.norm() + 2 * th * std::pow(kk, 2 * r) * bm * v.norm();
  return (t1 + t2 + t3 + t4 + t5).norm() / std::max(scale, 1e-300);
}

}  // namespace

TEST(Coefficients, HandEvaluatedFirstStep) {
  const auto c = compute_coefficients(1, params(1, 8, 0.24), Sched::constant(1.0));
  EXPECT_DOUBLE_EQ(c.D, 9.0);
  EXPECT_DOUBLE_EQ(c.m, 1.0 / 9);
  EXPECT_DOUBLE_EQ(c.a, 0.24 / 9);
  EXPECT_DOUBLE_EQ(c.b, 1.24 / 9);
  EXPECT_NEAR(c.gamma, 1.48 / 9, 1e-15);
}

TEST(Coefficients, BTimesDIsThetaPlusKAtROne) {
  for (long k = 1; k <= 5000; k += 7) {
    const auto c = compute_coefficients(k, params(1, 8, 0.24), Sched::constant(1.0));
    EXPECT_NEAR(c.b * c.D, 0.24 + double(k), 1e-12 * double(k)) << k;
  }
}

TEST(Coefficients, ThetaZeroLimit) {
  const auto s = Sched::power(1.0);
  const auto c = compute_coefficients(10, params(0.5, 8, 0.0), s);
  EXPECT_EQ(c.a, 0.0);
  EXPECT_NEAR(c.b, std::sqrt(10.0) * 10.0 / c.D, 1e-14);
}

TEST(Coefficients, RejectsROutsideUnitInterval) {
  EXPECT_THROW(compute_coefficients(1, params(0, 8, 0.3), Sched::constant(1.0)), Error);
  EXPECT_THROW(compute_coefficients(0, params(1, 8, 0.24), Sched::constant(1.0)), Error);
}

TEST(Coefficients, NegativeDenominatorIsIllPosed) {
  try {
    compute_coefficients(1, params(1, -5, 0.24), Sched::constant(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ill_posed_step);
  }
}

TEST(Resolvent, IdentityAndSkewExamples) {
  const auto id = MonotoneOperator<double>::affine(Mat::Identity(2, 2), Vec::Zero(2));
  const Vec w = Vec::Constant(2, 2.0);
  EXPECT_LE((resolvent(id, 1.0, w) - Vec::Ones(2)).norm(), 1e-15);

  Mat K(2, 2);
  K << 0, 1, -1, 0;
  const auto skew = MonotoneOperator<double>::affine(K, Vec::Zero(2));
  Vec w2(2);
  w2 << 1, 0;
  Vec expected(2);
  expected << 0.5, 0.5;
  for (auto m : {ResolventMethod::direct_affine, ResolventMethod::newton}) {
    ResolventConfig<double> cfg;
    cfg.method = m;
    const auto res = solve_resolvent(skew, 1.0, w2, cfg);
    EXPECT_LE((res.z - expected).norm(), 1e-14) << to_string(m);
    EXPECT_LE(res.residual, 1e-14);
  }
}

TEST(Resolvent, NewtonMatchesDirectOnRandomAffine) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  ResolventConfig<double> newton;
  newton.method = ResolventMethod::newton;
  for (int inst = 0; inst < 30; ++inst) {
    const Index n = 1 + Index(rng() % 15);
    Vec q(n), w(n);
    for (Index i = 0; i < n; ++i) q(i) = g(rng), w(i) = g(rng);
    const auto op = MonotoneOperator<double>::affine(random_monotone(rng, n), q);
    for (double gamma : {1e-3, 1.0, 1e3}) {
      const Vec zd = resolvent(op, gamma, w);
      const Vec zn = resolvent(op, gamma, w, newton);
      EXPECT_LE((zd - zn).norm(), 1e-10) << "n=" << n << " gamma=" << gamma;
    }
  }
}

TEST(Resolvent, NonlinearNewtonSatisfiesEquation) {
  const auto op = MonotoneOperator<double>::general(3, [](const Vec& z) { return Vec(z.array().cube() + z.array()); });
  ResolventConfig<double> cfg;
  cfg.method = ResolventMethod::newton;
  Vec w(3);
  w << 2, -1, 0.5;
  const auto res = solve_resolvent(op, 0.7, w, cfg);
  EXPECT_LE((res.z + 0.7 * op(res.z) - w).norm(), 1e-12 * (1 + w.norm()));
}

TEST(Resolvent, Errors) {
  const auto nonlinear = MonotoneOperator<double>::general(1, [](const Vec& z) { return Vec(z.array().cube()); });
  try {
    resolvent(nonlinear, 1.0, Vec::Ones(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
  ResolventConfig<double> cfg;
  cfg.method = ResolventMethod::newton;
  cfg.max_iter = 1;
  cfg.tol = 1e-15;
  try {
    resolvent(nonlinear, 10.0, Vec::Constant(1, 50.0), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::convergence);
  }
  EXPECT_THROW(resolvent(nonlinear, -1.0, Vec::Ones(1), cfg), Error);
}

TEST(RunDiscrete, ZeroOperatorMomentumRecursion) {
  const auto op = MonotoneOperator<double>::affine(Mat::Zero(2, 2), Vec::Zero(2));
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.24);
  Vec z0(2);
  z0 << 1, 2;
  DiscreteOptions<double> opt;
  opt.stride = 1;
  const auto flat = run_discrete(op, s, p, z0, z0, 100, {}, opt);
  for (const auto& smp : flat.samples) EXPECT_EQ(smp.z, z0);

  // with z1 != z0 the iterates follow z+ = z + m (z - z-)
  const Vec z1 = z0 + Vec::Ones(2);
  const auto moving = run_discrete(op, s, p, z0, z1, 20, {}, opt);
  Vec zm = z0, z = z1;
  for (long k = 1; k < 20; ++k) {
    const double m = std::pow(double(k), 1.0) / (8 - 1 + double(k + 1));
    const Vec zp = z + m * (z - zm);
    zm = z;
    z = zp;
    EXPECT_LE((moving.samples[std::size_t(k)].z - z).norm(), 1e-14) << k;
  }
}

TEST(RunDiscrete, SamplingCoversFirstAndLastIterate) {
  const auto op = build_lagrangian_operator(example1_problem<double>());
  const auto traj = run_discrete(op, Sched::constant(1.0), params(1, 8, 0.24), Vec::Zero(6), Vec::Zero(6), 1000);
  EXPECT_EQ(traj.kind, TrajectoryKind::discrete);
  EXPECT_EQ(traj.samples.front().tau, 1.0);
  EXPECT_EQ(traj.samples.back().tau, 1000.0);
  for (std::size_t i = 1; i < traj.size(); ++i) EXPECT_LT(traj.samples[i - 1].tau, traj.samples[i].tau);
}

TEST(RunDiscrete, ResidualAndFourTermIdentity) {
  const auto op = build_lagrangian_operator(example1_problem<double>());
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.24);
  DiscreteOptions<double> opt;
  double worst_identity = 0, worst_resolvent = 0;
  opt.observer = [&](const StepRecord<double>& rec) {
    worst_resolvent = std::max(worst_resolvent, rec.residual / (1 + rec.w->norm()));
    worst_identity = std::max(worst_identity, four_term_residual(rec.coeffs.k, *rec.z_prev, *rec.z, *rec.z_next, op, s, p));
  };
  Vec z0(6);
  z0 << 1, 0, -1, 2, 0.5, 0;
  run_discrete(op, s, p, z0, z0, 1000, {}, opt);
  EXPECT_LE(worst_resolvent, 1e-10);
  EXPECT_LE(worst_identity, 1e-9);
}

TEST(RunDiscrete, NewtonAndDirectTrajectoriesAgree) {
  const auto op = build_saddle_example2<double>(6);
  const auto s = Sched::power(1.0);
  const auto p = params(0.5, 8, 0.3);
  ResolventConfig<double> newton;
  newton.method = ResolventMethod::newton;
  DiscreteOptions<double> opt;
  opt.force = true;
  opt.stride = 1;
  const auto a = run_discrete(op, s, p, Vec::Zero(12), Vec::Zero(12), 1000, {}, opt);
  const auto b = run_discrete(op, s, p, Vec::Zero(12), Vec::Zero(12), 1000, newton, opt);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE((a.samples[i].z - b.samples[i].z).norm(), 1e-9);
}

TEST(RunDiscrete, Example2ExponentialScheduleReachesTolerance) {
  const auto p = params(0.5, 8, 0.3, 1.0);
  const auto s = Sched::exponential_discrete(0.5, 0.3, 1.0);
  const auto op = build_saddle_example2<double>(10);
  DiscreteOptions<double> opt;
  opt.stride = 1;
  const auto traj = run_discrete(op, s, p, Vec::Zero(20), Vec::Zero(20), 2000, {}, opt);
  double best = INFINITY;
  for (const auto& smp : traj.samples) best = std::min(best, smp.value.norm());
  EXPECT_LT(best, 1e-8);
}

TEST(RunDiscrete, RejectsRZeroAndInadmissibleTheta) {
  const auto op = build_lagrangian_operator(example1_problem<double>());
  EXPECT_THROW(run_discrete(op, Sched::constant(1.0), params(0, 8, 0.3), Vec::Zero(6), Vec::Zero(6), 10), Error);
  EXPECT_THROW(run_discrete(op, Sched::constant(1.0), params(1, 8, 0.3), Vec::Zero(6), Vec::Zero(6), 10), Error);
  DiscreteOptions<double> opt;
  opt.force = true;
  EXPECT_THROW(run_discrete(op, Sched::constant(1.0), params(0, 8, 0.3), Vec::Zero(6), Vec::Zero(6), 10, {}, opt), Error);
}

TEST(RunDiscrete, IllPosedStepCarriesIndex) {
  const auto op = build_lagrangian_operator(example1_problem<double>());
  DiscreteOptions<double> opt;
  opt.force = true;
  try {
    run_discrete(op, Sched::constant(1.0), params(1, -5, 0.24), Vec::Zero(6), Vec::Zero(6), 10, {}, opt);
    FAIL();
  } catch (const SolverFailure<double>& e) {
    EXPECT_EQ(e.code(), ErrorCode::ill_posed_step);
    EXPECT_NE(std::string(e.what()).find("k = 1"), std::string::npos);
    EXPECT_EQ(e.partial().size(), 1u);
  }
}

TEST(DiscreteEnergy, VanishesAtZeroAndSecondSummandAtROne) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const Vec zs = prob.known_solution->stacked();
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.24);
  EXPECT_NEAR(energy_discrete(7, zs, zs, op, s, p, EnergyParams<double>{1.5, 1}, zs), 0.0, 1e-20);

  const auto zero = MonotoneOperator<double>::affine(Mat::Zero(2, 2), Vec::Zero(2));
  const Vec d = Vec::Constant(2, 0.5);
  const double lambda = 1.5;
  for (long k : {1L, 10L, 1000L}) {
    const double e = energy_discrete(k, d, d, zero, s, p, EnergyParams<double>{lambda, 1}, Vec::Zero(2));
    EXPECT_NEAR(e, (2 * lambda * lambda + 2 * lambda * (8 - 1 - lambda)) * d.squaredNorm(), 1e-12);
  }
}

TEST(DiscreteEnergy, NonincreasingAfterTransient) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  const Vec zs = prob.known_solution->stacked();
  const auto s = Sched::constant(1.0);
  const auto p = params(1, 8, 0.24);
  const EnergyParams<double> e{1.5, 1};
  ASSERT_TRUE(energy_violations(e, p, Mode::discrete).empty());
  std::vector<double> E;
  DiscreteOptions<double> opt;
  opt.observer = [&](const StepRecord<double>& rec) {
    E.push_back(energy_discrete(rec.coeffs.k, *rec.z, *rec.z_prev, *rec.value, s, p, e, zs));
  };
  run_discrete(op, s, p, Vec::Zero(6), Vec::Zero(6), 5000, {}, opt);
  const auto start = detect_transient(E);
  ASSERT_TRUE(start.has_value());
  EXPECT_EQ(nonincrease_violations(E, *start, 1e-8 * E[*start]).violations, 0u);
}

TEST(Eta, Examples) {
  EXPECT_NEAR(eta_k(2, params(1, 8, 0.2), Sched::constant(1.0)), -3.4, 1e-14);
  for (long k : {1L, 5L, 100L}) {
    EXPECT_NEAR(eta_k(k, params(0.5, 8, 0.0), Sched::constant(1.0)), -2 * std::sqrt(double(k)), 1e-12);
  }
  for (long k = 10; k <= 10000; k += 10) EXPECT_LT(eta_k(k, params(1, 8, 0.24), Sched::constant(1.0)), 0.0);
}
