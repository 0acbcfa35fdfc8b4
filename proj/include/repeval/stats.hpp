#pragma once

// Correlation analysis of repeatability curves against true-match curves:
// Pearson r with an exact two-tailed significance test, mean/std
// aggregation and +/++/+++ rating bins.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repeval/error.hpp"

namespace repeval {

struct CorrelationReport {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorCode::LengthMismatch, "series lengths differ (" + std::to_string(xs.size()) +
                                               " vs " + std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 3) {
    throw Error(ErrorCode::InsufficientData, "correlation needs at least 3 points");
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw Error(ErrorCode::InvalidArgument, "series contains a non-finite value");
    }
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::DegenerateSeries, "series has zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz
// evaluation.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "incomplete beta arguments out of range");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-tailed p-value of H0: rho = 0 from Student's t with n - 2 degrees of
/// freedom, t = r sqrt((n - 2) / (1 - r^2)).
inline double p_value_two_tailed(double r, std::size_t n) {
  if (n < 3) throw Error(ErrorCode::InsufficientData, "p-value needs n >= 3");
  if (!std::isfinite(r) || std::abs(r) > 1.0 + 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "correlation must lie in [-1, 1]");
  }
  const double abs_r = std::min(std::abs(r), 1.0);
  if (abs_r == 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2), and df/(df+t^2) = 1 - r^2.
  const double x = (1.0 - abs_r) * (1.0 + abs_r);
  return std::clamp(incomplete_beta(x, 0.5 * df, 0.5), 0.0, 1.0);
}

inline CorrelationReport correlate(std::span<const double> xs, std::span<const double> ys) {
  const double r = pearson_r(xs, ys);
  return {r, p_value_two_tailed(r, xs.size()), xs.size()};
}

enum class StdKind { Sample, Population };

struct Summary {
  double mean = 0.0;
  std::optional<double> std;  // unset when undefined (sample std of one value)
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> values, StdKind kind = StdKind::Sample) {
  if (values.empty()) throw Error(ErrorCode::InsufficientData, "summary of an empty list");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  Summary s{mean, std::nullopt, values.size()};
  const double denom = kind == StdKind::Sample ? n - 1.0 : n;
  if (denom > 0.0) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.std = std::sqrt(ss / denom);
  }
  return s;
}

/// Thresholds must be strictly ascending inside (0, 1).
inline void validate_thresholds(std::span<const double> thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "thresholds must lie in (0, 1)");
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "thresholds must be strictly ascending");
    }
  }
}

/// 1 + number of thresholds strictly below the score.
inline int rating(double score, std::span<const double> thresholds) {
  int r = 1;
  for (double t : thresholds) {
    if (t < score) ++r;
  }
  return r;
}

inline std::string render_rating(int r) { return std::string(static_cast<std::size_t>(r), '+'); }

/// Ratings for (name, score) entries, in input order.
inline std::vector<std::pair<std::string, std::string>> bin_scores(
    const std::vector<std::pair<std::string, double>>& scores,
    std::span<const double> thresholds) {
  validate_thresholds(thresholds);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(scores.size());
  for (const auto& [name, score] : scores) {
    out.emplace_back(name, render_rating(rating(score, thresholds)));
  }
  return out;
}

}  // namespace repeval
