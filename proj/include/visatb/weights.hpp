// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"
#include "measure.hpp"

namespace visatb {

// ---------------------------------------------------------------------------
// Scalar parameter types
// ---------------------------------------------------------------------------

/// Softmax temperature; strictly positive and finite.
class Temperature {
 public:
  explicit Temperature(double value) : value_(value) {
    if (!std::isfinite(value_) || value_ <= 0.0)
      raise(Errc::InvalidConfig,
            "temperature must be finite and positive, got " + std::to_string(value));
  }
  double value() const { return value_; }

 private:
  double value_;
};

/// Mixing coefficients for integrating the three strategy weights. Each lies
/// in [0, 1] and they sum to 1 (within 1e-9).
class AlphaCoefficients {
 public:
  AlphaCoefficients(double out, double inward, double diff)
      : out_(out), inward_(inward), diff_(diff) {
    auto in_unit = [](double a) { return std::isfinite(a) && a >= 0.0 && a <= 1.0; };
    if (!in_unit(out_) || !in_unit(inward_) || !in_unit(diff_))
      raise(Errc::AlphaConstraint, "alpha coefficients must each lie in [0, 1]");
    if (std::fabs(out_ + inward_ + diff_ - 1.0) > 1e-9)
      raise(Errc::AlphaConstraint, "alpha coefficients must sum to 1, got " +
                                       format_fixed(out_ + inward_ + diff_, 12));
  }

  /// Parses "a,b,c" (e.g. a CLI flag value).
  static AlphaCoefficients parse(const std::string& text) {
    std::array<double, 3> a{};
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      std::size_t next = k < 2 ? text.find(',', pos) : text.size();
      if (next == std::string::npos)
        raise(Errc::AlphaConstraint, "alpha must be three comma-separated numbers, got \"" +
                                         text + "\"");
      const std::string piece = text.substr(pos, next - pos);
      char* end = nullptr;
      a[k] = std::strtod(piece.c_str(), &end);
      if (end == piece.c_str() || (end && *end != '\0'))
        raise(Errc::AlphaConstraint, "cannot parse alpha component \"" + piece + "\"");
      pos = next + 1;
    }
    return AlphaCoefficients(a[0], a[1], a[2]);
  }

  double out() const { return out_; }
  double inward() const { return inward_; }
  double diff() const { return diff_; }
  std::array<double, 3> as_array() const { return {out_, inward_, diff_}; }

 private:
  double out_, inward_, diff_;
};

// ---------------------------------------------------------------------------
// Contribution aggregation
// ---------------------------------------------------------------------------

/// Mean contribution each unit gives to the others: row-wise mean of the
/// contribution matrix excluding the diagonal.
inline std::vector<double> outward_contribution(const ContributionMatrix& cm) {
  const std::size_t n = cm.size();
  if (n < 2) raise(Errc::TooFewUnits, "outward contribution needs at least 2 units");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += cm.at(i, j);
    out[i] = sum / static_cast<double>(n - 1);
  }
  return out;
}

/// Mean contribution each unit receives from the others: column-wise mean of
/// the contribution matrix excluding the diagonal.
inline std::vector<double> inward_contribution(const ContributionMatrix& cm) {
  const std::size_t n = cm.size();
  if (n < 2) raise(Errc::TooFewUnits, "inward contribution needs at least 2 units");
  std::vector<double> in(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += cm.at(j, i);
    in[i] = sum / static_cast<double>(n - 1);
  }
  return in;
}

// ---------------------------------------------------------------------------
// Softmax weighting
// ---------------------------------------------------------------------------

/// λ = N · softmax(sign · scores / T), with max-subtraction for numerical
/// stability. Exponentials are floored at the smallest positive normal
/// double, so every weight stays strictly positive even at extreme
/// temperatures. The result sums to N (within float rounding) and is
/// invariant under adding a constant to all scores.
inline WeightVector softmax_weights(std::vector<std::string> unit_ids,
                                    const std::vector<double>& scores, Temperature t, int sign,
                                    WeightStrategy strategy = WeightStrategy::Manual) {
  if (sign != 1 && sign != -1)
    raise(Errc::InvalidConfig, "softmax sign must be +1 or -1, got " + std::to_string(sign));
  if (unit_ids.size() != scores.size())
    raise(Errc::InvalidConfig, "softmax ids/scores length mismatch");
  if (scores.empty()) raise(Errc::InvalidConfig, "softmax of empty score vector");
  const std::size_t n = scores.size();

  std::vector<double> arg(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i]))
      raise(Errc::NonFiniteValue, "non-finite score for unit \"" + unit_ids[i] + "\"");
    arg[i] = static_cast<double>(sign) * scores[i] / t.value();
  }
  const double hi = *std::max_element(arg.begin(), arg.end());

  std::vector<double> e(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::max(std::exp(arg[i] - hi), std::numeric_limits<double>::min());
    total += e[i];
  }

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i)
    values[i] = static_cast<double>(n) * e[i] / total;

  WeightVector w(strategy, std::move(unit_ids), std::move(values));
  w.set_temperature(t.value());
  return w;
}

/// Outward-contribution weights: units that help others more get larger
/// weights (sign +1 over the outward means).
inline WeightVector lambda_out(const ContributionMatrix& cm, Temperature t) {
  return softmax_weights(cm.unit_ids(), outward_contribution(cm), t, +1, WeightStrategy::Out);
}

/// Inward-contribution weights: units that already receive more help from
/// others get smaller weights (sign −1 over the inward means).
inline WeightVector lambda_in(const ContributionMatrix& cm, Temperature t) {
  return softmax_weights(cm.unit_ids(), inward_contribution(cm), t, -1, WeightStrategy::In);
}

/// Difficulty weights: harder units get larger weights (sign +1 over D).
inline WeightVector lambda_diff(const DifficultyVector& dv, Temperature t) {
  return softmax_weights(dv.unit_ids(), dv.values(), t, +1, WeightStrategy::Diff);
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

/// Convex combination of the three strategy vectors:
///   λ_i = α_out·λ_out,i + α_in·λ_in,i + α_D·λ_D,i.
/// All three inputs must cover the same unit set; the output follows `out`'s
/// unit order. Sum-to-N is preserved (convex combination of vectors that each
/// sum to N).
inline WeightVector integrate(const WeightVector& out, const WeightVector& inward,
                              const WeightVector& diff, const AlphaCoefficients& alpha) {
  if (inward.size() != out.size() || diff.size() != out.size())
    raise(Errc::MismatchedUnits, "weight vectors cover different numbers of units");
  std::vector<std::string> ids = out.unit_ids();
  std::vector<double> values(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!inward.contains(ids[i]) || !diff.contains(ids[i]))
      raise(Errc::MismatchedUnits, "unit \"" + ids[i] + "\" missing from a strategy vector");
    values[i] = alpha.out() * out[i] + alpha.inward() * inward.value_at(ids[i]) +
                alpha.diff() * diff.value_at(ids[i]);
  }
  WeightVector w(WeightStrategy::Integrated, std::move(ids), std::move(values));
  w.set_alpha(alpha.as_array());
  if (out.temperature() && inward.temperature() == out.temperature() &&
      diff.temperature() == out.temperature())
    w.set_temperature(*out.temperature());
  return w;
}

// ---------------------------------------------------------------------------
// Automatic temperature selection
// ---------------------------------------------------------------------------

/// Target band for individual weights when selecting T automatically.
inline constexpr double kAutoWeightLo = 0.5;
inline constexpr double kAutoWeightHi = 2.0;

/// Bisection bracket for auto_temperature.
struct TemperatureBounds {
  double lo = 1e-3;
  double hi = 1e3;
};

struct AutoTemperatureResult {
  double temperature = 1.0;
  /// False when even the upper bound cannot pull every weight into the band
  /// (the bound itself is returned in that case).
  bool attained = true;
};

/// The three score vectors feeding the strategy weights, as produced by
/// outward_contribution(), inward_contribution(), and difficulty_vector().
struct StrategyScores {
  std::vector<double> out;
  std::vector<double> inward;
  std::vector<double> diff;
};

namespace detail {

inline bool weights_within_band(const std::vector<double>& scores, Temperature t, int sign) {
  std::vector<std::string> ids(scores.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = "u" + std::to_string(i);
  const WeightVector w = softmax_weights(std::move(ids), scores, t, sign);
  for (double v : w.values())
    if (v < kAutoWeightLo || v > kAutoWeightHi) return false;
  return true;
}

}  // namespace detail

/// Smallest temperature (bisection, relative tolerance 1e-3, ties toward the
/// larger/safer T) at which every entry of all three strategy vectors lies in
/// [0.5, 2.0]. Raising T flattens every softmax toward 1, and the extreme
/// entries move monotonically, so the predicate is monotone in T and
/// bisection applies. The integrated vector is a convex combination of the
/// three and therefore inherits the band for any valid alpha; alpha is
/// validated but cannot change the chosen T. Returns bounds.hi with
/// attained=false when even that is not flat enough.
inline AutoTemperatureResult auto_temperature(const StrategyScores& scores,
                                              const AlphaCoefficients& alpha,
                                              const TemperatureBounds& bounds = {}) {
  (void)alpha;  // participates via validation only; see doc comment
  if (!(std::isfinite(bounds.lo) && std::isfinite(bounds.hi)) || bounds.lo <= 0.0 ||
      bounds.lo >= bounds.hi)
    raise(Errc::InvalidBounds, "temperature bounds need 0 < lo < hi");
  if (scores.inward.size() != scores.out.size() || scores.diff.size() != scores.out.size())
    raise(Errc::MismatchedUnits, "strategy score vectors have different lengths");

  auto ok = [&](double t) {
    Temperature temp(t);
    return detail::weights_within_band(scores.out, temp, +1) &&
           detail::weights_within_band(scores.inward, temp, -1) &&
           detail::weights_within_band(scores.diff, temp, +1);
  };

  if (ok(bounds.lo)) return {bounds.lo, true};
  if (!ok(bounds.hi)) return {bounds.hi, false};

  double lo = bounds.lo, hi = bounds.hi;  // invariant: !ok(lo) && ok(hi)
  while (hi - lo > 1e-3 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid))
      hi = mid;
    else
      lo = mid;
  }
  return {hi, true};
}

}  // namespace visatb
