#pragma once

#include <functional>
#include <optional>

#include "monoflow/operator.hpp"

namespace monoflow {

/// f(x) = 1/2 x'Hx + g'x + c with constant symmetric PSD Hessian H.
template <typename Scalar>
struct QuadraticObjective {
  MatrixX<Scalar> hessian;
  VectorX<Scalar> linear;
  Scalar constant = Scalar(0);

  Scalar value(const VectorX<Scalar>& x) const {
    return Scalar(0.5) * x.dot(hessian * x) + linear.dot(x) + constant;
  }
  VectorX<Scalar> gradient(const VectorX<Scalar>& x) const { return hessian * x + linear; }
};

template <typename Scalar>
struct PrimalDualPair {
  VectorX<Scalar> x;
  VectorX<Scalar> lambda;

  VectorX<Scalar> stacked() const {
    VectorX<Scalar> z(x.size() + lambda.size());
    z << x, lambda;
    return z;
  }
};

/// min f(x) subject to A x = b. The induced operator is
/// V(x, lambda) = (grad f(x) + A' lambda, b - A x).
template <typename Scalar>
struct LagrangianProblem {
  std::function<VectorX<Scalar>(const VectorX<Scalar>&)> grad_f;
  std::function<Scalar(const VectorX<Scalar>&)> f_value;
  /// Optional analytic Hessian of f, used for the Jacobian of the operator.
  std::function<MatrixX<Scalar>(const VectorX<Scalar>&)> hessian;
  /// When present the operator is built as an affine map.
  std::optional<QuadraticObjective<Scalar>> quadratic;
  MatrixX<Scalar> A;
  VectorX<Scalar> b;
  std::optional<PrimalDualPair<Scalar>> known_solution;

  Index primal_dimension() const { return A.cols(); }
  Index dual_dimension() const { return A.rows(); }

  static LagrangianProblem from_quadratic(QuadraticObjective<Scalar> f, MatrixX<Scalar> A, VectorX<Scalar> b) {
    LagrangianProblem p;
    p.grad_f = [f](const VectorX<Scalar>& x) { return f.gradient(x); };
    p.f_value = [f](const VectorX<Scalar>& x) { return f.value(x); };
    p.hessian = [f](const VectorX<Scalar>&) { return f.hessian; };
    p.quadratic = std::move(f);
    p.A = std::move(A);
    p.b = std::move(b);
    return p;
  }

  /// f(x) - f(x*), evaluated through the quadratic expansion around x* when
  /// the objective is quadratic so the difference keeps full precision.
  Scalar objective_gap(const VectorX<Scalar>& x) const {
    if (!known_solution) throw Error(ErrorCode::unsupported_metric, "objective gap needs a known solution");
    const VectorX<Scalar>& xs = known_solution->x;
    if (quadratic) {
      const VectorX<Scalar> d = x - xs;
      return quadratic->gradient(xs).dot(d) + Scalar(0.5) * d.dot(quadratic->hessian * d);
    }
    return f_value(x) - f_value(xs);
  }
};

namespace detail {

template <typename Scalar>
Scalar solution_scale(const PrimalDualPair<Scalar>& s) {
  return Scalar(1) + s.x.norm() + s.lambda.norm();
}

}  // namespace detail

/// Optimality residuals (|grad f(x*) + A' lambda*|, |A x* - b|).
template <typename Scalar>
std::pair<Scalar, Scalar> optimality_residuals(const LagrangianProblem<Scalar>& p, const PrimalDualPair<Scalar>& s) {
  const Scalar stationarity = (p.grad_f(s.x) + p.A.transpose() * s.lambda).norm();
  const Scalar feasibility = (p.A * s.x - p.b).norm();
  return {stationarity, feasibility};
}

template <typename Scalar>
MonotoneOperator<Scalar> build_lagrangian_operator(const LagrangianProblem<Scalar>& p) {
  const Index n = p.A.cols();
  const Index m = p.A.rows();
  detail::require(n >= 1 && m >= 1, "constraint matrix must be non-empty");
  detail::require(p.b.size() == m, "constraint right-hand side has " + std::to_string(p.b.size()) +
                                       " entries, A has " + std::to_string(m) + " rows");
  if (p.quadratic) {
    detail::require(p.quadratic->hessian.rows() == n && p.quadratic->hessian.cols() == n,
                    "Hessian shape does not match A");
    detail::require(p.quadratic->linear.size() == n, "linear term length does not match A");
  } else {
    detail::require(static_cast<bool>(p.grad_f), "gradient of f is required");
  }
  if (p.known_solution) {
    detail::require(p.known_solution->x.size() == n && p.known_solution->lambda.size() == m,
                    "known solution has the wrong shape");
    const auto [stat, feas] = optimality_residuals(p, *p.known_solution);
    const Scalar tol = Scalar(1e-12) * detail::solution_scale(*p.known_solution);
    detail::require(stat <= tol && feas <= tol, "known solution violates the optimality conditions");
  }

  if (p.quadratic) {
    MatrixX<Scalar> M = MatrixX<Scalar>::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = p.quadratic->hessian;
    M.topRightCorner(n, m) = p.A.transpose();
    M.bottomLeftCorner(m, n) = -p.A;
    VectorX<Scalar> q(n + m);
    q << p.quadratic->linear, p.b;
    return MonotoneOperator<Scalar>::affine(std::move(M), std::move(q));
  }

  auto map = [p, n, m](const VectorX<Scalar>& z) {
    VectorX<Scalar> v(n + m);
    v.head(n) = p.grad_f(z.head(n)) + p.A.transpose() * z.tail(m);
    v.tail(m) = p.b - p.A * z.head(n);
    return v;
  };
  typename MonotoneOperator<Scalar>::JacobianMap jac;
  if (p.hessian) {
    jac = [p, n, m](const VectorX<Scalar>& z) {
      MatrixX<Scalar> J = MatrixX<Scalar>::Zero(n + m, n + m);
      J.topLeftCorner(n, n) = p.hessian(z.head(n));
      J.topRightCorner(n, m) = p.A.transpose();
      J.bottomLeftCorner(m, n) = -p.A;
      return J;
    };
  }
  return MonotoneOperator<Scalar>::general(n + m, std::move(map), std::move(jac));
}

/// f(x) = (x1-1)^2 + (x2-1)^2 + x3^2 + x4^2 subject to x1 - x2 - x3 = 0 and
/// x2 - x4 = 0, with primal-dual solution ((0.8,0.6,0.2,0.6), (0.4,1.2)).
template <typename Scalar = double>
LagrangianProblem<Scalar> example1_problem() {
  QuadraticObjective<Scalar> f;
  f.hessian = Scalar(2) * MatrixX<Scalar>::Identity(4, 4);
  f.linear = VectorX<Scalar>(4);
  f.linear << -2, -2, 0, 0;
  f.constant = Scalar(2);
  MatrixX<Scalar> A(2, 4);
  A << 1, -1, -1, 0,
       0, 1, 0, -1;
  auto p = LagrangianProblem<Scalar>::from_quadratic(std::move(f), std::move(A), VectorX<Scalar>::Zero(2));
  PrimalDualPair<Scalar> s;
  s.x = VectorX<Scalar>(4);
  s.x << Scalar(0.8), Scalar(0.6), Scalar(0.2), Scalar(0.6);
  s.lambda = VectorX<Scalar>(2);
  s.lambda << Scalar(0.4), Scalar(1.2);
  p.known_solution = std::move(s);
  return p;
}

/// Bilinear-quadratic saddle problem min_x max_y 1/2<x,Hx> - <x,h> - <y,Ax-b>
/// on R^n x R^n, with the anti-diagonal difference stencil A.
template <typename Scalar>
struct SaddleProblem {
  MatrixX<Scalar> A;
  MatrixX<Scalar> H;
  VectorX<Scalar> h;
  VectorX<Scalar> b;

  Index n() const { return A.rows(); }

  /// V(x, y) = (Hx - h - A'y, Ax - b) as the affine map [[H, -A'], [A, 0]] z + (-h, -b).
  MonotoneOperator<Scalar> make_operator() const {
    const Index k = n();
    MatrixX<Scalar> M = MatrixX<Scalar>::Zero(2 * k, 2 * k);
    M.topLeftCorner(k, k) = H;
    M.topRightCorner(k, k) = -A.transpose();
    M.bottomLeftCorner(k, k) = A;
    VectorX<Scalar> q(2 * k);
    q << -h, -b;
    return MonotoneOperator<Scalar>::affine(std::move(M), std::move(q));
  }

  /// Unique zero: A x = b, then A' y = H x - h.
  VectorX<Scalar> solution() const {
    const VectorX<Scalar> x = Eigen::FullPivLU<MatrixX<Scalar>>(A).solve(b);
    const VectorX<Scalar> y = Eigen::FullPivLU<MatrixX<Scalar>>(A.transpose()).solve(H * x - h);
    VectorX<Scalar> z(2 * n());
    z << x, y;
    return z;
  }
};

template <typename Scalar = double>
SaddleProblem<Scalar> saddle_example2_problem(Index n) {
  detail::require(n >= 2, "saddle example needs n >= 2");
  SaddleProblem<Scalar> s;
  s.A = MatrixX<Scalar>::Zero(n, n);
  // rows 1..n-1 (1-based): -1 at column n-i, +1 at column n-i+1; row n: +1 at column 1
  for (Index i = 1; i <= n - 1; ++i) {
    s.A(i - 1, n - i - 1) = Scalar(-1);
    s.A(i - 1, n - i) = Scalar(1);
  }
  s.A(n - 1, 0) = Scalar(1);
  s.A /= Scalar(4);
  s.H = Scalar(2) * s.A.transpose() * s.A;
  s.b = VectorX<Scalar>::Constant(n, Scalar(0.25));
  s.h = VectorX<Scalar>::Zero(n);
  s.h(n - 1) = Scalar(0.25);
  return s;
}

template <typename Scalar = double>
MonotoneOperator<Scalar> build_saddle_example2(Index n) {
  return saddle_example2_problem<Scalar>(n).make_operator();
}

}  // namespace monoflow
