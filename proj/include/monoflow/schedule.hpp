#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "monoflow/params.hpp"

namespace monoflow {

enum class BetaFamily { constant, power, exponential_continuous, exponential_discrete, tabulated };

inline const char* to_string(BetaFamily f) {
  switch (f) {
    case BetaFamily::constant: return "constant";
    case BetaFamily::power: return "power";
    case BetaFamily::exponential_continuous: return "exponential_continuous";
    case BetaFamily::exponential_discrete: return "exponential_discrete";
    case BetaFamily::tabulated: return "tabulated";
  }
  return "unknown";
}

template <typename Scalar>
struct ConstantBeta {
  Scalar c;
};

/// beta(t) = scale * t^exponent
template <typename Scalar>
struct PowerBeta {
  Scalar exponent;
  Scalar scale;
};

/// beta(t) = t^(-2r) exp(rate * t^(1-r) / (1-r)), where rate is 1/theta - delta
/// for the continuous family and 1/(2 theta) - delta for the discrete one.
template <typename Scalar>
struct ExponentialBeta {
  Scalar r;
  Scalar theta;
  Scalar delta;
  bool discrete;

  Scalar rate() const { return (discrete ? 1 / (2 * theta) : 1 / theta) - delta; }
};

/// Piecewise-linear interpolation of (t, beta) pairs; derivative by central
/// differences.
template <typename Scalar>
struct TabulatedBeta {
  std::vector<Scalar> t;
  std::vector<Scalar> value;
};

/// Time-rescaling schedule beta, usable both as a function of continuous time
/// and as a sequence beta_k = beta(k). beta_0 is defined as beta_1.
template <typename Scalar>
class BetaSchedule {
 public:
  using Family = std::variant<ConstantBeta<Scalar>, PowerBeta<Scalar>, ExponentialBeta<Scalar>, TabulatedBeta<Scalar>>;

  BetaSchedule() : family_(ConstantBeta<Scalar>{Scalar(1)}) {}

  static BetaSchedule constant(Scalar c = Scalar(1)) {
    detail::require(c > 0, "constant schedule needs c > 0");
    return BetaSchedule(ConstantBeta<Scalar>{c});
  }

  static BetaSchedule power(Scalar exponent, Scalar scale = Scalar(1)) {
    detail::require(exponent >= 0, "power schedule needs a nonnegative exponent");
    detail::require(scale > 0, "power schedule needs a positive scale");
    return BetaSchedule(PowerBeta<Scalar>{exponent, scale});
  }

  static BetaSchedule exponential_continuous(Scalar r, Scalar theta, Scalar delta) {
    return exponential(r, theta, delta, false);
  }

  static BetaSchedule exponential_discrete(Scalar r, Scalar theta, Scalar delta) {
    return exponential(r, theta, delta, true);
  }

  static BetaSchedule tabulated(std::vector<std::pair<Scalar, Scalar>> points) {
    detail::require(points.size() >= 2, "tabulated schedule needs at least two points");
    std::sort(points.begin(), points.end());
    TabulatedBeta<Scalar> tab;
    for (const auto& [t, v] : points) {
      detail::require(t > 0 && v > 0, "tabulated schedule needs positive times and values");
      detail::require(tab.t.empty() || t > tab.t.back(), "tabulated schedule has duplicate times");
      tab.t.push_back(t);
      tab.value.push_back(v);
    }
    return BetaSchedule(std::move(tab));
  }

  BetaFamily family() const {
    return std::visit(
        [](const auto& f) {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ConstantBeta<Scalar>>) return BetaFamily::constant;
          else if constexpr (std::is_same_v<F, PowerBeta<Scalar>>) return BetaFamily::power;
          else if constexpr (std::is_same_v<F, ExponentialBeta<Scalar>>)
            return f.discrete ? BetaFamily::exponential_discrete : BetaFamily::exponential_continuous;
          else return BetaFamily::tabulated;
        },
        family_);
  }

  const Family& parameters() const { return family_; }

  template <typename F>
  const F* get_if() const { return std::get_if<F>(&family_); }

  Scalar value(Scalar t) const {
    check_time(t);
    using std::exp;
    using std::pow;
    return std::visit(
        [&](const auto& f) -> Scalar {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ConstantBeta<Scalar>>) return f.c;
          else if constexpr (std::is_same_v<F, PowerBeta<Scalar>>) return f.scale * pow(t, f.exponent);
          else if constexpr (std::is_same_v<F, ExponentialBeta<Scalar>>) return exp(log_value(t));
          else return interpolate(f, t);
        },
        family_);
  }

  /// log beta(t); finite even where beta itself would overflow.
  Scalar log_value(Scalar t) const {
    check_time(t);
    using std::log;
    using std::pow;
    if (const auto* e = get_if<ExponentialBeta<Scalar>>()) {
      return -2 * e->r * log(t) + e->rate() * pow(t, 1 - e->r) / (1 - e->r);
    }
    return log(value(t));
  }

  Scalar derivative(Scalar t) const {
    check_time(t);
    using std::pow;
    return std::visit(
        [&](const auto& f) -> Scalar {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ConstantBeta<Scalar>>) return Scalar(0);
          else if constexpr (std::is_same_v<F, PowerBeta<Scalar>>)
            return f.exponent == 0 ? Scalar(0) : f.scale * f.exponent * pow(t, f.exponent - 1);
          else if constexpr (std::is_same_v<F, ExponentialBeta<Scalar>>) return value(t) * log_derivative(t);
          else return tabulated_derivative(f, t);
        },
        family_);
  }

  /// beta'(t) / beta(t)
  Scalar log_derivative(Scalar t) const {
    check_time(t);
    using std::pow;
    return std::visit(
        [&](const auto& f) -> Scalar {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ConstantBeta<Scalar>>) return Scalar(0);
          else if constexpr (std::is_same_v<F, PowerBeta<Scalar>>) return f.exponent / t;
          else if constexpr (std::is_same_v<F, ExponentialBeta<Scalar>>) return -2 * f.r / t + f.rate() * pow(t, -f.r);
          else return tabulated_derivative(f, t) / interpolate(f, t);
        },
        family_);
  }

  /// beta_k for k >= 1.
  Scalar at(long k) const {
    if (k <= 0) throw Error(ErrorCode::invalid_input, "schedule index must be positive (k = " + std::to_string(k) + ")");
    return value(Scalar(k));
  }

  Scalar log_at(long k) const {
    if (k <= 0) throw Error(ErrorCode::invalid_input, "schedule index must be positive (k = " + std::to_string(k) + ")");
    return log_value(Scalar(k));
  }

  /// beta_{k-1}, with beta_0 := beta_1.
  Scalar previous(long k) const { return at(std::max(k - 1, 1L)); }
  Scalar log_previous(long k) const { return log_at(std::max(k - 1, 1L)); }

  std::string describe() const {
    return std::visit(
        [](const auto& f) -> std::string {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, ConstantBeta<Scalar>>) return "constant(c=" + detail::fmt(f.c) + ")";
          else if constexpr (std::is_same_v<F, PowerBeta<Scalar>>)
            return "power(p=" + detail::fmt(f.exponent) + ",c=" + detail::fmt(f.scale) + ")";
          else if constexpr (std::is_same_v<F, ExponentialBeta<Scalar>>)
            return std::string(f.discrete ? "exponential_discrete" : "exponential_continuous") +
                   "(r=" + detail::fmt(f.r) + ",theta=" + detail::fmt(f.theta) + ",delta=" + detail::fmt(f.delta) + ")";
          else return "tabulated(" + std::to_string(f.t.size()) + " points)";
        },
        family_);
  }

 private:
  explicit BetaSchedule(Family f) : family_(std::move(f)) {}

  static BetaSchedule exponential(Scalar r, Scalar theta, Scalar delta, bool discrete) {
    detail::require(r >= 0 && r < 1, "exponential schedule needs r in [0, 1)");
    detail::require(theta > 0, "exponential schedule needs theta > 0");
    detail::require(delta > 0, "exponential schedule needs delta > 0");
    return BetaSchedule(ExponentialBeta<Scalar>{r, theta, delta, discrete});
  }

  static void check_time(Scalar t) {
    if (!(t > 0)) throw Error(ErrorCode::invalid_input, "schedule argument must be positive (t = " + detail::fmt(t) + ")");
  }

  static Scalar interpolate(const TabulatedBeta<Scalar>& f, Scalar t) {
    if (t < f.t.front() || t > f.t.back()) {
      throw Error(ErrorCode::invalid_input, "t = " + detail::fmt(t) + " lies outside the tabulated range");
    }
    const auto it = std::upper_bound(f.t.begin(), f.t.end(), t);
    if (it == f.t.end()) return f.value.back();
    const std::size_t i = static_cast<std::size_t>(it - f.t.begin());
    const Scalar w = (t - f.t[i - 1]) / (f.t[i] - f.t[i - 1]);
    return (1 - w) * f.value[i - 1] + w * f.value[i];
  }

  static Scalar tabulated_derivative(const TabulatedBeta<Scalar>& f, Scalar t) {
    const Scalar h = Scalar(1e-6) * std::max(Scalar(1), t);
    const Scalar lo = std::max(f.t.front(), t - h);
    const Scalar hi = std::min(f.t.back(), t + h);
    return (interpolate(f, hi) - interpolate(f, lo)) / (hi - lo);
  }

  Family family_;
};

template <typename Scalar>
Scalar beta_value(const BetaSchedule<Scalar>& s, Scalar t) {
  return s.value(t);
}

template <typename Scalar>
Scalar beta_derivative(const BetaSchedule<Scalar>& s, Scalar t) {
  return s.derivative(t);
}

template <typename Scalar>
Scalar beta_seq(const BetaSchedule<Scalar>& s, long k) {
  return s.at(k);
}

}  // namespace monoflow
