#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <utility>

#include "monoflow/types.hpp"

namespace monoflow {

enum class OperatorStructure { affine, general };

/// A single-valued monotone map V on R^n, either declared affine
/// (V(z) = M z + q) or given as a general callable with an optional Jacobian.
/// Instances are immutable and cheap to copy.
template <typename Scalar>
class MonotoneOperator {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using Map = std::function<Vector(const Vector&)>;
  using JacobianMap = std::function<Matrix(const Vector&)>;

  /// Rejects M whose symmetric part has an eigenvalue below -1e-10 * scale.
  static MonotoneOperator affine(Matrix M, Vector q) {
    detail::require(M.rows() >= 1 && M.rows() == M.cols(), "affine operator needs a square, non-empty matrix");
    detail::require(q.size() == M.rows(), "affine operator offset has the wrong length");
    detail::require(M.allFinite() && q.allFinite(), "affine operator data must be finite");
    const Matrix sym = (M + M.transpose()) / Scalar(2);
    const Scalar scale = std::max(Scalar(1), M.cwiseAbs().maxCoeff());
    const Scalar min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    detail::require(min_eig >= Scalar(-1e-10) * scale,
                    "symmetric part of M is not positive semidefinite (min eigenvalue " + std::to_string(double(min_eig)) + ")");
    auto impl = std::make_shared<Impl>();
    impl->dimension = M.rows();
    impl->structure = OperatorStructure::affine;
    impl->matrix = std::move(M);
    impl->offset = std::move(q);
    return MonotoneOperator(std::move(impl));
  }

  static MonotoneOperator general(Index dimension, Map map, JacobianMap jacobian = {}) {
    detail::require(dimension >= 1, "operator dimension must be positive");
    detail::require(static_cast<bool>(map), "operator map is empty");
    auto impl = std::make_shared<Impl>();
    impl->dimension = dimension;
    impl->structure = OperatorStructure::general;
    impl->map = std::move(map);
    impl->jacobian = std::move(jacobian);
    return MonotoneOperator(std::move(impl));
  }

  Index dimension() const { return impl_->dimension; }
  OperatorStructure structure() const { return impl_->structure; }
  bool is_affine() const { return impl_->structure == OperatorStructure::affine; }
  bool has_jacobian() const { return is_affine() || static_cast<bool>(impl_->jacobian); }

  const Matrix& matrix() const {
    detail::require(is_affine(), "matrix() requested from a non-affine operator");
    return impl_->matrix;
  }
  const Vector& offset() const {
    detail::require(is_affine(), "offset() requested from a non-affine operator");
    return impl_->offset;
  }

  /// Checked evaluation: dimension mismatch is invalid-input, a non-finite
  /// result is a numerical-domain error.
  Vector operator()(const Vector& z) const {
    if (z.size() != dimension()) {
      throw Error(ErrorCode::invalid_input, "operator expects dimension " + std::to_string(dimension()) + ", got " +
                                                std::to_string(z.size()));
    }
    Vector v = raw(z);
    if (v.size() != dimension()) throw Error(ErrorCode::invalid_input, "operator returned a vector of the wrong dimension");
    if (!v.allFinite()) throw Error(ErrorCode::numerical_domain, "operator value is not finite");
    return v;
  }

  /// Analytic Jacobian when available, otherwise forward differences with
  /// step 1e-7 * (1 + |z|).
  Matrix jacobian(const Vector& z) const {
    if (is_affine()) return impl_->matrix;
    if (impl_->jacobian) return impl_->jacobian(z);
    return finite_difference_jacobian(z);
  }

  Matrix finite_difference_jacobian(const Vector& z) const {
    const Index n = dimension();
    const Scalar h = Scalar(1e-7) * (Scalar(1) + z.norm());
    const Vector base = (*this)(z);
    Matrix J(n, n);
    Vector probe = z;
    for (Index j = 0; j < n; ++j) {
      probe(j) = z(j) + h;
      J.col(j) = ((*this)(probe) - base) / h;
      probe(j) = z(j);
    }
    return J;
  }

 private:
  struct Impl {
    Index dimension = 0;
    OperatorStructure structure = OperatorStructure::general;
    Matrix matrix;
    Vector offset;
    Map map;
    JacobianMap jacobian;
  };

  explicit MonotoneOperator(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  Vector raw(const Vector& z) const {
    if (is_affine()) return impl_->matrix * z + impl_->offset;
    return impl_->map(z);
  }

  std::shared_ptr<const Impl> impl_;
};

template <typename Scalar>
VectorX<Scalar> evaluate(const MonotoneOperator<Scalar>& op, const VectorX<Scalar>& z) {
  return op(z);
}

template <typename Scalar>
struct ProbeReport {
  Scalar min_inner_product = std::numeric_limits<Scalar>::infinity();
  /// min of <V(u)-V(v), u-v> / |u-v|^2 over the sampled pairs
  Scalar min_normalized = std::numeric_limits<Scalar>::infinity();
  int trials = 0;

  bool monotone(Scalar tolerance = Scalar(1e-10)) const { return min_normalized >= -tolerance; }
};

namespace detail {

template <typename Scalar, typename Rng>
VectorX<Scalar> sample_ball(Index n, Scalar radius, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorX<Scalar> d(n);
  for (Index i = 0; i < n; ++i) d(i) = Scalar(gauss(rng));
  Scalar norm = d.norm();
  if (norm == Scalar(0)) {
    d.setZero();
    d(0) = Scalar(1);
    norm = Scalar(1);
  }
  using std::pow;
  const Scalar rho = radius * Scalar(pow(unif(rng), 1.0 / double(n)));
  return d * (rho / norm);
}

}  // namespace detail

/// Randomized monotonicity audit over pairs drawn uniformly from the ball of
/// radius 10. Deterministic for a given seed.
template <typename Scalar>
ProbeReport<Scalar> monotonicity_probe(const MonotoneOperator<Scalar>& op, int trials, std::uint64_t seed) {
  detail::require(trials >= 1, "monotonicity probe needs at least one trial");
  std::mt19937_64 rng(seed);
  ProbeReport<Scalar> report;
  report.trials = trials;
  for (int i = 0; i < trials; ++i) {
    const VectorX<Scalar> u = detail::sample_ball<Scalar>(op.dimension(), Scalar(10), rng);
    const VectorX<Scalar> v = detail::sample_ball<Scalar>(op.dimension(), Scalar(10), rng);
    const VectorX<Scalar> d = u - v;
    const Scalar inner = (op(u) - op(v)).dot(d);
    report.min_inner_product = std::min(report.min_inner_product, inner);
    const Scalar dd = d.squaredNorm();
    if (dd > Scalar(0)) report.min_normalized = std::min(report.min_normalized, inner / dd);
  }
  return report;
}

}  // namespace monoflow
