#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "monoflow/schedule.hpp"

namespace monoflow {

/// Geometric sample grid over [t0, span * t0].
template <typename Scalar>
struct GrowthGrid {
  int points = 10000;
  Scalar span = Scalar(1e6);

  std::vector<Scalar> times(Scalar t0) const {
    detail::require(points >= 2, "growth grid needs at least two points");
    detail::require(span > 1, "growth grid span must exceed 1");
    std::vector<Scalar> ts(static_cast<std::size_t>(points));
    using std::pow;
    for (int i = 0; i < points; ++i) ts[std::size_t(i)] = t0 * pow(span, Scalar(i) / Scalar(points - 1));
    ts.back() = t0 * span;
    return ts;
  }
};

/// g(t) = t^r (beta'(t)/beta(t) + 2r/t)
template <typename Scalar>
Scalar continuous_growth_value(const BetaSchedule<Scalar>& s, Scalar r, Scalar t) {
  using std::pow;
  return pow(t, r) * (s.log_derivative(t) + 2 * r / t);
}

template <typename Scalar>
struct ContinuousGrowthReport {
  Scalar sup_value = Scalar(0);  ///< analytic supremum when known, grid maximum otherwise
  Scalar grid_sup = Scalar(0);
  Scalar grid_argsup = Scalar(0);
  std::optional<Scalar> analytic_sup;
  Scalar bound = Scalar(0);  ///< 1/theta
  bool passes = false;
  /// First grid time from which beta is nondecreasing onward.
  std::optional<Scalar> nondecreasing_from;
};

namespace detail {

template <typename Scalar>
std::optional<Scalar> analytic_continuous_sup(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p) {
  using std::pow;
  const Scalar r = p.r;
  auto decreasing_power_law = [&](Scalar coeff) -> Scalar {
    // coeff * t^(r-1) is nonincreasing on [t0, inf) for r <= 1
    return r == 1 ? coeff : coeff * pow(p.t0, r - 1);
  };
  if (s.template get_if<ConstantBeta<Scalar>>()) return decreasing_power_law(2 * r);
  if (const auto* f = s.template get_if<PowerBeta<Scalar>>()) return decreasing_power_law(f->exponent + 2 * r);
  if (const auto* f = s.template get_if<ExponentialBeta<Scalar>>()) {
    if (f->r == r) return f->rate();
  }
  return std::nullopt;
}

template <typename Scalar>
void check_positive(const BetaSchedule<Scalar>& s, Scalar t) {
  using std::isfinite;
  const Scalar lv = s.log_value(t);
  if (!isfinite(double(lv))) {
    throw Error(ErrorCode::schedule_invalid, "beta is not positive and finite at t = " + fmt(t));
  }
}

}  // namespace detail

template <typename Scalar>
ContinuousGrowthReport<Scalar> check_growth_continuous(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p,
                                                       const GrowthGrid<Scalar>& grid = {}, Scalar margin = Scalar(0)) {
  detail::require(p.t0 > 0, "growth check needs t0 > 0");
  detail::require(p.theta > 0, "growth check needs theta > 0");
  ContinuousGrowthReport<Scalar> rep;
  rep.bound = 1 / p.theta;
  std::vector<Scalar> ts = grid.times(p.t0);
  if (const auto* tab = s.template get_if<TabulatedBeta<Scalar>>()) {
    std::erase_if(ts, [&](Scalar t) { return t < tab->t.front() || t > tab->t.back(); });
    detail::require(ts.size() >= 2, "tabulated schedule does not cover the growth grid");
  }
  rep.grid_sup = -std::numeric_limits<Scalar>::infinity();
  std::optional<Scalar> last_decrease;
  for (const Scalar t : ts) {
    detail::check_positive(s, t);
    const Scalar g = continuous_growth_value(s, p.r, t);
    if (g > rep.grid_sup) {
      rep.grid_sup = g;
      rep.grid_argsup = t;
    }
    if (s.log_derivative(t) < 0) last_decrease = t;
  }
  if (!last_decrease) {
    rep.nondecreasing_from = ts.front();
  } else {
    const auto it = std::upper_bound(ts.begin(), ts.end(), *last_decrease);
    if (it != ts.end()) rep.nondecreasing_from = *it;
  }
  rep.analytic_sup = detail::analytic_continuous_sup(s, p);
  rep.sup_value = rep.analytic_sup ? *rep.analytic_sup : rep.grid_sup;
  rep.passes = rep.sup_value < rep.bound - margin;
  return rep;
}

/// g_k = k^r ((beta_k - beta_{k-1}) / beta_k + 2r/k), computed from log beta.
template <typename Scalar>
Scalar discrete_growth_value(const BetaSchedule<Scalar>& s, Scalar r, long k) {
  using std::expm1;
  using std::pow;
  const Scalar increment_ratio = -expm1(s.log_previous(k) - s.log_at(k));
  return pow(Scalar(k), r) * (increment_ratio + 2 * r / Scalar(k));
}

template <typename Scalar>
struct DiscreteGrowthReport {
  Scalar sup_value = Scalar(0);  ///< max of g_k over [k0, k_max]
  long argsup = 0;
  Scalar bound = Scalar(0);  ///< 1/(2 theta)
  /// Smallest index from which every sampled g_k stays below the bound.
  std::optional<long> first_passing_k0;
  bool passes = false;          ///< a passing start index exists within the sample
  bool passes_from_k0 = false;  ///< the configured k0 already works
  /// Limit 1/(2 theta) - delta of g_k for the discrete exponential family.
  std::optional<Scalar> limit;
  std::optional<long> nondecreasing_from;
};

template <typename Scalar>
DiscreteGrowthReport<Scalar> check_growth_discrete(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p,
                                                   long k_max, Scalar margin = Scalar(0)) {
  detail::require(p.k0 >= 1, "growth check needs k0 >= 1");
  detail::require(k_max >= p.k0 + 1, "growth check needs k_max >= k0 + 1");
  detail::require(p.theta > 0, "growth check needs theta > 0");
  DiscreteGrowthReport<Scalar> rep;
  rep.bound = 1 / (2 * p.theta);
  const Scalar threshold = rep.bound - margin;
  std::vector<Scalar> g(static_cast<std::size_t>(k_max - p.k0 + 1));
  rep.sup_value = -std::numeric_limits<Scalar>::infinity();
  long last_decrease = 0;
  for (long k = p.k0; k <= k_max; ++k) {
    detail::check_positive(s, Scalar(k));
    const Scalar gk = discrete_growth_value(s, p.r, k);
    g[std::size_t(k - p.k0)] = gk;
    if (gk > rep.sup_value) {
      rep.sup_value = gk;
      rep.argsup = k;
    }
    if (s.log_at(k) < s.log_previous(k)) last_decrease = k;
  }
  long first = k_max + 1;
  for (long k = k_max; k >= p.k0 && g[std::size_t(k - p.k0)] < threshold; --k) first = k;
  if (first <= k_max) rep.first_passing_k0 = first;
  rep.passes = rep.first_passing_k0.has_value();
  rep.passes_from_k0 = rep.passes && *rep.first_passing_k0 == p.k0;
  if (last_decrease < k_max) rep.nondecreasing_from = std::max(p.k0, last_decrease);
  if (const auto* f = s.template get_if<ExponentialBeta<Scalar>>(); f && f->discrete) rep.limit = f->rate();
  return rep;
}

/// The three step-ratio inequalities implied by the growth condition with
/// slack delta = p.delta, reported as LHS - RHS (all must be <= 0):
///   G1: (2 r theta k^(r-1) - 1) beta_k + theta k^r (beta_k - beta_{k-1}) + delta theta beta_k
///   G2: theta k^r (beta_k - beta_{k-1}) - (1 - 2 r theta k^(r-1) - delta theta) beta_k
///   G3: beta_k - M_beta beta_{k-1},  M_beta = k^r / (2 r k^(r-1) - 1/theta + delta + k^r)
/// G3 is not applicable where the denominator of M_beta is nonpositive.
template <typename Scalar>
struct StepRatioReport {
  Scalar g1 = Scalar(0);
  Scalar g2 = Scalar(0);
  std::optional<Scalar> g3;
  std::optional<Scalar> m_beta;

  bool holds() const { return g1 <= 0 && g2 <= 0 && (!g3 || *g3 <= 0); }
};

template <typename Scalar>
StepRatioReport<Scalar> step_ratio_inequalities(const BetaSchedule<Scalar>& s, const SolverParams<Scalar>& p, long k) {
  detail::require(k >= 1, "step index must be positive");
  using std::exp;
  using std::pow;
  const Scalar r = p.r, theta = p.theta, delta = p.delta;
  const Scalar kk = Scalar(k);
  const Scalar bk = s.at(k);
  const Scalar prev_ratio = exp(s.log_previous(k) - s.log_at(k));  // beta_{k-1} / beta_k
  const Scalar kr = pow(kk, r);
  const Scalar krm1 = pow(kk, r - 1);
  StepRatioReport<Scalar> rep;
  rep.g1 = bk * ((2 * r * theta * krm1 - 1) + theta * kr * (1 - prev_ratio) + delta * theta);
  rep.g2 = bk * (theta * kr * (1 - prev_ratio) - (1 - 2 * r * theta * krm1 - delta * theta));
  const Scalar denom = 2 * r * krm1 - 1 / theta + delta + kr;
  if (denom > 0) {
    rep.m_beta = kr / denom;
    rep.g3 = bk * (1 - *rep.m_beta * prev_ratio);
  }
  return rep;
}

/// Six power-difference bounds used in the discrete analysis, for k >= 1,
/// r in [0,1], sigma <= 0:
///   A1 (k+1)^r - k^r <= r k^(r-1)
///   A2 (k+1)^(3r) - k^(3r) <= 3r k^(3r-1) + 3r k^(3r-2) + r k^(3r-3)
///   A3 (k+1)^(2r) - k^(2r) <= 2r k^(2r-1) + r k^(2r-2)
///   A4 (k+1)^s - k^s <= s k^(s-1) + s(s-1) k^(s-2)
///   A5 |(k+1)^s - k^s| <= |s| k^(s-1)
///   A6 |2r k^(2r-1) - ((k+1)^(2r) - k^(2r))| <= 2r |2r-1| k^(2r-2)
/// Each comparison allows 8 ulps of the magnitudes involved.
template <typename Scalar>
struct PowerDifferenceReport {
  std::array<bool, 6> holds{};
  std::array<Scalar, 6> lhs{};
  std::array<Scalar, 6> rhs{};

  bool all() const {
    for (bool h : holds)
      if (!h) return false;
    return true;
  }
};

/// (k+1)^a - k^a without cancellation.
template <typename Scalar>
Scalar power_difference(Scalar k, Scalar a) {
  using std::expm1;
  using std::log1p;
  using std::pow;
  return pow(k, a) * expm1(a * log1p(1 / k));
}

template <typename Scalar>
PowerDifferenceReport<Scalar> power_difference_bounds(long k, Scalar r, Scalar sigma) {
  detail::require(k >= 1, "power-difference bounds need k >= 1");
  detail::require(r >= 0 && r <= 1, "power-difference bounds need r in [0, 1]");
  detail::require(sigma <= 0, "power-difference bounds need sigma <= 0");
  using std::abs;
  using std::pow;
  const Scalar kk = Scalar(k);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  PowerDifferenceReport<Scalar> rep;
  auto record = [&](int i, Scalar lhs, Scalar rhs, Scalar magnitude) {
    rep.lhs[std::size_t(i)] = lhs;
    rep.rhs[std::size_t(i)] = rhs;
    rep.holds[std::size_t(i)] = lhs <= rhs + 8 * eps * magnitude;
  };
  const Scalar d1 = power_difference(kk, r);
  const Scalar d2 = power_difference(kk, 3 * r);
  const Scalar d3 = power_difference(kk, 2 * r);
  const Scalar ds = power_difference(kk, sigma);

  const Scalar r1 = r * pow(kk, r - 1);
  record(0, d1, r1, abs(d1) + abs(r1));
  const Scalar r2 = 3 * r * pow(kk, 3 * r - 1) + 3 * r * pow(kk, 3 * r - 2) + r * pow(kk, 3 * r - 3);
  record(1, d2, r2, abs(d2) + abs(r2));
  const Scalar r3 = 2 * r * pow(kk, 2 * r - 1) + r * pow(kk, 2 * r - 2);
  record(2, d3, r3, abs(d3) + abs(r3));
  const Scalar r4 = sigma * pow(kk, sigma - 1) + sigma * (sigma - 1) * pow(kk, sigma - 2);
  record(3, ds, r4, abs(ds) + abs(sigma * pow(kk, sigma - 1)) + abs(sigma * (sigma - 1) * pow(kk, sigma - 2)));
  const Scalar r5 = abs(sigma) * pow(kk, sigma - 1);
  record(4, abs(ds), r5, abs(ds) + r5);
  const Scalar lead = 2 * r * pow(kk, 2 * r - 1);
  const Scalar r6 = 2 * r * abs(2 * r - 1) * pow(kk, 2 * r - 2);
  record(5, abs(lead - d3), r6, abs(lead) + abs(d3) + r6);
  return rep;
}

}  // namespace monoflow
