#include <random>

#include <gtest/gtest.h>

#include "monoflow/monoflow.hpp"

using namespace monoflow;
using Vec = VectorX<double>;
using Mat = MatrixX<double>;

namespace {

/// Random monotone M = S + K with S = B B^T PSD and K skew.
Mat random_monotone(std::mt19937_64& rng, Index n, int rank) {
  std::normal_distribution<double> g;
  Mat B(n, rank), C(n, n);
  for (Index i = 0; i < B.size(); ++i) B.data()[i] = g(rng);
  for (Index i = 0; i < C.size(); ++i) C.data()[i] = g(rng);
  return B * B.transpose() + (C - C.transpose());
}

}  // namespace

TEST(Operator, IdentityEvaluates) {
  const auto op = MonotoneOperator<double>::affine(Mat::Identity(2, 2), Vec::Zero(2));
  Vec z(2);
  z << 3, -1;
  EXPECT_EQ(evaluate(op, z), z);
}

TEST(Operator, RejectsNonMonotoneMatrix) {
  Mat M = -Mat::Identity(2, 2);
  try {
    MonotoneOperator<double>::affine(M, Vec::Zero(2));
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
}

TEST(Operator, RejectsShapeMismatchAndNonFinite) {
  EXPECT_THROW(MonotoneOperator<double>::affine(Mat::Identity(2, 3), Vec::Zero(2)), Error);
  EXPECT_THROW(MonotoneOperator<double>::affine(Mat::Identity(2, 2), Vec::Zero(3)), Error);
  Mat M = Mat::Identity(2, 2);
  M(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(MonotoneOperator<double>::affine(M, Vec::Zero(2)), Error);
}

TEST(Operator, DimensionMismatchIsInvalidInput) {
  const auto op = MonotoneOperator<double>::affine(Mat::Identity(2, 2), Vec::Zero(2));
  try {
    op(Vec::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
}

TEST(Operator, NonFiniteOutputIsDomainError) {
  const auto op = MonotoneOperator<double>::general(1, [](const Vec& z) { return Vec::Constant(1, std::log(z(0))); });
  try {
    op(Vec::Constant(1, -1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numerical_domain);
  }
}

TEST(Operator, Example1KnownSolutionIsZero) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  EXPECT_EQ(op.dimension(), 6);
  EXPECT_TRUE(op.is_affine());
  Vec z(6);
  z << 0.8, 0.6, 0.2, 0.6, 0.4, 1.2;
  EXPECT_LE(op(z).norm(), 1e-12);
  const auto [stat, feas] = optimality_residuals(prob, *prob.known_solution);
  EXPECT_LE(stat, 1e-12);
  EXPECT_LE(feas, 1e-12);
}

TEST(Operator, Example1MatchesIndependentAssembly) {
  const auto prob = example1_problem<double>();
  const auto op = build_lagrangian_operator(prob);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    Vec z(6);
    for (Index i = 0; i < 6; ++i) z(i) = u(rng);
    const double x1 = z(0), x2 = z(1), x3 = z(2), x4 = z(3), l1 = z(4), l2 = z(5);
    // grad f + A^T lambda with f = (x1-1)^2 + (x2-1)^2 + x3^2 + x4^2; then b - Ax
    Vec expected(6);
    expected << 2 * (x1 - 1) + l1, 2 * (x2 - 1) - l1 + l2, 2 * x3 - l1, 2 * x4 - l2, -(x1 - x2 - x3), -(x2 - x4);
    EXPECT_LE((op(z) - expected).norm(), 1e-14 * (1 + expected.norm()));
  }
}

TEST(Operator, Example1ObjectiveAtSolution) {
  const auto prob = example1_problem<double>();
  Vec x(4);
  x << 0.8, 0.6, 0.2, 0.6;
  // (0.2)^2 + (0.4)^2 + 0.2^2 + 0.6^2
  EXPECT_NEAR(prob.f_value(x), 0.04 + 0.16 + 0.04 + 0.36, 1e-15);
}

TEST(Operator, DegenerateLagrangianIsZeroOperator) {
  QuadraticObjective<double> f{Mat::Zero(2, 2), Vec::Zero(2), 0.0};
  auto prob = LagrangianProblem<double>::from_quadratic(f, Mat::Zero(1, 2), Vec::Zero(1));
  const auto op = build_lagrangian_operator(prob);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 5; ++i) {
    Vec z(3);
    for (Index j = 0; j < 3; ++j) z(j) = g(rng);
    EXPECT_EQ(op(z).norm(), 0.0);
  }
}

TEST(Operator, LagrangianShapeMismatchRejected) {
  QuadraticObjective<double> f{Mat::Identity(3, 3), Vec::Zero(3), 0.0};
  auto prob = LagrangianProblem<double>::from_quadratic(f, Mat::Zero(1, 2), Vec::Zero(1));
  EXPECT_THROW(build_lagrangian_operator(prob), Error);
}

TEST(Operator, GeneralLagrangianUsesSuppliedHessian) {
  // f(x) = sum exp(x_i), a non-quadratic convex objective
  LagrangianProblem<double> prob;
  prob.grad_f = [](const Vec& x) { return Vec(x.array().exp()); };
  prob.f_value = [](const Vec& x) { return x.array().exp().sum(); };
  prob.hessian = [](const Vec& x) { return Mat(x.array().exp().matrix().asDiagonal()); };
  prob.A = Mat::Ones(1, 2);
  prob.b = Vec::Zero(1);
  const auto op = build_lagrangian_operator(prob);
  EXPECT_FALSE(op.is_affine());
  EXPECT_TRUE(op.has_jacobian());
  Vec z(3);
  z << 0.3, -0.2, 0.5;
  EXPECT_LE((op.jacobian(z) - op.finite_difference_jacobian(z)).norm(), 1e-5);
}

TEST(Operator, Example2StencilAndValueAtOrigin) {
  const auto p = saddle_example2_problem<double>(5);
  Mat A(5, 5);
  A << 0, 0, 0, -1, 1,
       0, 0, -1, 1, 0,
       0, -1, 1, 0, 0,
       -1, 1, 0, 0, 0,
       1, 0, 0, 0, 0;
  EXPECT_EQ(p.A, A / 4);
  EXPECT_LE((p.H - 2 * p.A.transpose() * p.A).norm(), 0.0);

  const auto op4 = build_saddle_example2<double>(4);
  Vec expected(8);
  expected << 0, 0, 0, -0.25, -0.25, -0.25, -0.25, -0.25;
  EXPECT_LE((op4(Vec::Zero(8)) - expected).norm(), 1e-15);
}

TEST(Operator, Example2SolutionSolvesLinearSystem) {
  const auto p = saddle_example2_problem<double>(4);
  const auto op = p.make_operator();
  const Vec z = p.solution();
  EXPECT_LE(op(z).norm(), 1e-10);
  // direct dense solve of M z = -q as an independent oracle
  const Vec oracle = op.matrix().fullPivLu().solve(-op.offset());
  EXPECT_LE((z - oracle).norm(), 1e-10);
  EXPECT_THROW(saddle_example2_problem<double>(1), Error);
}

TEST(Operator, ProbeOnIdentityAndAntiMonotone) {
  const auto id = MonotoneOperator<double>::affine(Mat::Identity(3, 3), Vec::Zero(3));
  const auto rep = monotonicity_probe(id, 100, 1);
  EXPECT_GE(rep.min_inner_product, 0.0);
  EXPECT_TRUE(rep.monotone());
  const auto anti = MonotoneOperator<double>::general(3, [](const Vec& z) { return Vec(-z); });
  const auto bad = monotonicity_probe(anti, 100, 1);
  EXPECT_LT(bad.min_inner_product, 0.0);
  EXPECT_FALSE(bad.monotone());
}

TEST(Operator, ProbeOnExamples) {
  // nonnegative up to rounding of the cancelling skew block
  EXPECT_GE(monotonicity_probe(build_lagrangian_operator(example1_problem<double>()), 100, 11).min_normalized, -1e-12);
  EXPECT_GE(monotonicity_probe(build_saddle_example2<double>(10), 200, 12).min_inner_product, -1e-12);
}

TEST(Operator, ProbeNeverBelowToleranceOnRandomAffine) {
  std::mt19937_64 rng(42);
  for (int inst = 0; inst < 30; ++inst) {
    const Index n = 1 + Index(rng() % 12);
    const auto op = MonotoneOperator<double>::affine(random_monotone(rng, n, 1 + int(rng() % n)), Vec::Zero(n));
    const auto rep = monotonicity_probe(op, 50, rng());
    EXPECT_GE(rep.min_normalized, -1e-10);
  }
}

TEST(Operator, FiniteDifferenceJacobianOfAffine) {
  std::mt19937_64 rng(5);
  const Mat M = random_monotone(rng, 4, 2);
  const auto op = MonotoneOperator<double>::general(4, [M](const Vec& z) { return Vec(M * z); });
  EXPECT_FALSE(op.has_jacobian());
  EXPECT_LE((op.jacobian(Vec::Ones(4)) - M).norm(), 1e-5 * (1 + M.norm()));
}

TEST(Operator, LongDoubleInstantiation) {
  const auto prob = example1_problem<long double>();
  const auto op = build_lagrangian_operator(prob);
  const VectorX<long double> z = prob.known_solution->stacked();
  EXPECT_LE(double(op(z).norm()), 1e-15);
}
