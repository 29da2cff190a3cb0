#pragma once

#include <vector>

#include "monoflow/schedule.hpp"

namespace monoflow {

enum class TrajectoryKind { continuous, discrete };

/// One emitted point. `velocity` is z'(t) for the flow and z^k - z^{k-1} for
/// the implicit scheme.
template <typename Scalar>
struct Sample {
  Scalar tau;
  VectorX<Scalar> z;
  VectorX<Scalar> value;  ///< V(z)
  VectorX<Scalar> velocity;
};

template <typename Scalar>
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::continuous;
  std::vector<Sample<Scalar>> samples;
  SolverParams<Scalar> params;
  BetaSchedule<Scalar> schedule;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  const Sample<Scalar>& back() const { return samples.back(); }

  /// beta at a sample's time or index
  Scalar beta_at(Scalar tau) const {
    return kind == TrajectoryKind::discrete ? schedule.at(static_cast<long>(tau)) : schedule.value(tau);
  }
  Scalar log_beta_at(Scalar tau) const {
    return kind == TrajectoryKind::discrete ? schedule.log_at(static_cast<long>(tau)) : schedule.log_value(tau);
  }
};

/// Raised when a run cannot continue (non-finite state, step underflow,
/// failed resolvent); carries every sample emitted before the failure.
template <typename Scalar>
class SolverFailure : public Error {
 public:
  SolverFailure(ErrorCode code, const std::string& what, Trajectory<Scalar> partial)
      : Error(code, what), partial_(std::move(partial)) {}

  const Trajectory<Scalar>& partial() const { return partial_; }

 private:
  Trajectory<Scalar> partial_;
};

}  // namespace monoflow
