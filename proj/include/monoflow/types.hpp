#pragma once

#include <stdexcept>
#include <string>

#include <type_traits>

#include <Eigen/Dense>

namespace monoflow {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Vector argument that does not take part in template deduction, so Eigen
/// expressions can be passed where Scalar is fixed by another argument.
template <typename Scalar>
using VectorArg = VectorX<std::type_identity_t<Scalar>>;

enum class ErrorCode {
  invalid_input,
  numerical_domain,
  schedule_invalid,
  ill_posed_step,
  convergence,
  divergence,
  stiffness,
  unsupported_metric,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::numerical_domain: return "numerical-domain";
    case ErrorCode::schedule_invalid: return "schedule-invalid";
    case ErrorCode::ill_posed_step: return "ill-posed-step";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::stiffness: return "stiffness";
    case ErrorCode::unsupported_metric: return "unsupported-metric";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::invalid_input, message);
}

}  // namespace detail

}  // namespace monoflow
