#pragma once

// Planar projective geometry for affine-covariant regions: point transfer
// through a homography, local affine linearization, transport of
// second-moment ellipses between frames and grid-sampled overlap error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

#include <Eigen/Core>
#include <Eigen/LU>

#include "repeval/error.hpp"

namespace repeval {

inline constexpr double kDefaultProjectiveEpsilon = 1e-12;
inline constexpr double kDefaultNormalizeRadius = 30.0;
inline constexpr double kMaxGridStep = 0.1;
inline constexpr double kGridStepSemiaxisFraction = 0.01;
inline constexpr std::int64_t kMaxOverlapSamples = 4'000'000;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& p, const Point2& q) {
  return std::hypot(p.x - q.x, p.y - q.y);
}

/// Invertible 3x3 projective map. The matrix maps homogeneous coordinates of
/// the source (reference) frame to the destination (test) frame.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()), inv_(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
    if (!m.allFinite()) {
      throw Error(ErrorCode::SingularHomography, "homography has non-finite entries");
    }
    const double scale = m.cwiseAbs().maxCoeff();
    const double det = m.determinant();
    if (scale == 0.0 || !std::isfinite(det) ||
        std::abs(det) <= 1e-12 * scale * scale * scale) {
      throw Error(ErrorCode::SingularHomography, "homography matrix is singular");
    }
    inv_ = m.inverse();
  }

  static Homography identity() { return Homography(); }

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  const Eigen::Matrix3d& inverse_matrix() const noexcept { return inv_; }

  Homography inverse() const { return Homography(inv_, m_); }

  /// (lhs * rhs) applies rhs first.
  friend Homography operator*(const Homography& lhs, const Homography& rhs) {
    return Homography(Eigen::Matrix3d(lhs.m_ * rhs.m_));
  }

 private:
  Homography(const Eigen::Matrix3d& m, const Eigen::Matrix3d& inv) : m_(m), inv_(inv) {}

  Eigen::Matrix3d m_;
  Eigen::Matrix3d inv_;
};

/// Local linearization of a homography (its Jacobian at a point).
class AffineMap2 {
 public:
  explicit AffineMap2(const Eigen::Matrix2d& a) : a_(a) {
    if (!a.allFinite() || a.determinant() == 0.0) {
      throw Error(ErrorCode::DegenerateRegion, "local affine map is singular");
    }
  }

  const Eigen::Matrix2d& matrix() const noexcept { return a_; }

 private:
  Eigen::Matrix2d a_;
};

/// Elliptical region { p : (p - center)^T mu (p - center) <= 1 } with a
/// symmetric positive-definite shape matrix mu = [[a, b], [b, c]] (px^-2).
class SecondMomentEllipse {
 public:
  SecondMomentEllipse(Point2 center, double a, double b, double c)
      : center_(center), a_(a), b_(b), c_(c) {
    if (!std::isfinite(center.x) || !std::isfinite(center.y)) {
      throw Error(ErrorCode::InvalidRegion, "region center is not finite");
    }
    if (!is_positive_definite(a, b, c)) {
      throw Error(ErrorCode::InvalidRegion, "region shape matrix is not positive definite");
    }
  }

  SecondMomentEllipse(Point2 center, const Eigen::Matrix2d& shape)
      : SecondMomentEllipse(center, shape(0, 0), 0.5 * (shape(0, 1) + shape(1, 0)),
                            shape(1, 1)) {}

  static bool is_positive_definite(double a, double b, double c) {
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) return false;
    if (!(a > 0.0) || !(c > 0.0)) return false;
    const double det = a * c - b * b;
    return det > 0.0 && std::isfinite(std::numbers::pi / std::sqrt(det));
  }

  const Point2& center() const noexcept { return center_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double c() const noexcept { return c_; }
  double determinant() const noexcept { return a_ * c_ - b_ * b_; }

  Eigen::Matrix2d shape() const {
    Eigen::Matrix2d m;
    m << a_, b_, b_, c_;
    return m;
  }

  /// Half extents of the axis-aligned bounding box.
  double half_width() const { return std::sqrt(c_ / determinant()); }
  double half_height() const { return std::sqrt(a_ / determinant()); }

  /// Semiaxis lengths from the eigenvalues of mu.
  double minor_semiaxis() const { return 1.0 / std::sqrt(max_eigenvalue()); }
  double major_semiaxis() const { return 1.0 / std::sqrt(min_eigenvalue()); }

  /// Radius of the circle with the same area.
  double equivalent_radius() const { return std::pow(determinant(), -0.25); }

  bool contains(const Point2& p) const {
    const double dx = p.x - center_.x;
    const double dy = p.y - center_.y;
    return a_ * dx * dx + 2.0 * b_ * dx * dy + c_ * dy * dy <= 1.0;
  }

  SecondMomentEllipse with_center(Point2 center) const {
    return SecondMomentEllipse(center, a_, b_, c_);
  }

  /// Multiplies the quadratic form by `factor`; linear size shrinks by
  /// sqrt(factor) about the center.
  SecondMomentEllipse scaled_shape(double factor) const {
    return SecondMomentEllipse(center_, a_ * factor, b_ * factor, c_ * factor);
  }

 private:
  double half_trace() const { return 0.5 * (a_ + c_); }
  double eigen_gap() const { return std::hypot(0.5 * (a_ - c_), b_); }
  double max_eigenvalue() const { return half_trace() + eigen_gap(); }
  double min_eigenvalue() const { return determinant() / max_eigenvalue(); }

  Point2 center_;
  double a_;
  double b_;
  double c_;
};

inline Point2 project_point(const Eigen::Matrix3d& m, const Point2& p,
                            double epsilon = kDefaultProjectiveEpsilon) {
  const double u = m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2);
  const double v = m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2);
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (!(std::abs(w) >= epsilon)) {
    throw Error(ErrorCode::PointAtInfinity, "point maps to infinity under the homography");
  }
  return {u / w, v / w};
}

inline Point2 project_point(const Homography& h, const Point2& p,
                            double epsilon = kDefaultProjectiveEpsilon) {
  return project_point(h.matrix(), p, epsilon);
}

/// Analytic Jacobian of the rational map p -> (u/w, v/w) at p.
inline AffineMap2 homography_jacobian(const Homography& h, const Point2& p,
                                      double epsilon = kDefaultProjectiveEpsilon) {
  const Eigen::Matrix3d& m = h.matrix();
  const double u = m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2);
  const double v = m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2);
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (!(std::abs(w) >= epsilon)) {
    throw Error(ErrorCode::PointAtInfinity, "point maps to infinity under the homography");
  }
  const double xp = u / w;
  const double yp = v / w;
  Eigen::Matrix2d j;
  j << m(0, 0) - xp * m(2, 0), m(0, 1) - xp * m(2, 1),
       m(1, 0) - yp * m(2, 0), m(1, 1) - yp * m(2, 1);
  return AffineMap2(j / w);
}

/// Pulls a test-frame region back into the reference frame. The shape is
/// transported with the Jacobian of `h` at `ref_center` (A^T mu A) and the
/// center is mapped exactly through the inverse homography.
inline SecondMomentEllipse map_region_to_reference(const Homography& h, const Point2& ref_center,
                                                   const SecondMomentEllipse& test_region) {
  const Eigen::Matrix2d a = homography_jacobian(h, ref_center).matrix();
  const Eigen::Matrix2d shape = a.transpose() * test_region.shape() * a;
  const Point2 center = project_point(h.inverse_matrix(), test_region.center());
  try {
    return SecondMomentEllipse(center, shape);
  } catch (const Error&) {
    throw Error(ErrorCode::DegenerateRegion, "transported region is not positive definite");
  }
}

/// Pushes a reference-frame region into the test frame; the counterpart of
/// map_region_to_reference.
inline SecondMomentEllipse map_region_to_test(const Homography& h,
                                              const SecondMomentEllipse& ref_region) {
  const Eigen::Matrix2d a = homography_jacobian(h, ref_region.center()).matrix();
  const Eigen::Matrix2d a_inv = a.inverse();
  const Eigen::Matrix2d shape = a_inv.transpose() * ref_region.shape() * a_inv;
  const Point2 center = project_point(h, ref_region.center());
  try {
    return SecondMomentEllipse(center, shape);
  } catch (const Error&) {
    throw Error(ErrorCode::DegenerateRegion, "transported region is not positive definite");
  }
}

inline double area(const SecondMomentEllipse& e) {
  return std::numbers::pi / std::sqrt(e.determinant());
}

/// Rescales both regions by the common factor that gives `ref` the area of a
/// circle of radius `target_radius`. Centers are left in place.
inline std::pair<SecondMomentEllipse, SecondMomentEllipse> normalize_pair(
    const SecondMomentEllipse& ref, const SecondMomentEllipse& test, double target_radius) {
  if (!(target_radius > 0.0) || !std::isfinite(target_radius)) {
    throw Error(ErrorCode::InvalidArgument, "normalization radius must be positive");
  }
  const double ratio = ref.equivalent_radius() / target_radius;
  const double factor = ratio * ratio;
  return {ref.scaled_shape(factor), test.scaled_shape(factor)};
}

/// Regular sampling lattice over the joint bounding box of two regions.
/// Sample (i, j) sits at (x0 + (i + 1/2) step, y0 + (j + 1/2) step).
struct OverlapGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double step = 0.0;
  std::int64_t nx = 0;
  std::int64_t ny = 0;

  std::int64_t samples() const { return nx * ny; }
};

inline double default_grid_step(const SecondMomentEllipse& e1, const SecondMomentEllipse& e2) {
  const double minor = std::min(e1.minor_semiaxis(), e2.minor_semiaxis());
  return std::min(kMaxGridStep, minor * kGridStepSemiaxisFraction);
}

inline OverlapGrid overlap_grid(const SecondMomentEllipse& e1, const SecondMomentEllipse& e2,
                                double grid_step,
                                std::int64_t max_samples = kMaxOverlapSamples) {
  if (!(grid_step > 0.0) || !std::isfinite(grid_step)) {
    throw Error(ErrorCode::InvalidArgument, "grid step must be positive");
  }
  const double xmin = std::min(e1.center().x - e1.half_width(), e2.center().x - e2.half_width());
  const double xmax = std::max(e1.center().x + e1.half_width(), e2.center().x + e2.half_width());
  const double ymin = std::min(e1.center().y - e1.half_height(), e2.center().y - e2.half_height());
  const double ymax = std::max(e1.center().y + e1.half_height(), e2.center().y + e2.half_height());

  OverlapGrid grid;
  grid.x0 = xmin;
  grid.y0 = ymin;
  grid.step = grid_step;
  for (;;) {
    grid.nx = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((xmax - xmin) / grid.step)));
    grid.ny = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil((ymax - ymin) / grid.step)));
    if (grid.nx <= max_samples && grid.ny <= max_samples && grid.samples() <= max_samples) break;
    const double grow = std::sqrt(static_cast<double>(grid.nx) * static_cast<double>(grid.ny) /
                                  static_cast<double>(max_samples));
    grid.step *= std::max(grow, 1.0 + 1e-9);
  }
  return grid;
}

namespace detail {

/// Column index range [lo, hi] of the samples in row `row` that fall inside
/// `e`. Empty when lo > hi. Exact per-row solution of the membership test.
inline std::pair<std::int64_t, std::int64_t> row_span(const SecondMomentEllipse& e,
                                                      const OverlapGrid& grid, std::int64_t row) {
  const double y = grid.y0 + (static_cast<double>(row) + 0.5) * grid.step;
  const double dy = y - e.center().y;
  const double disc = e.b() * e.b() * dy * dy - e.a() * (e.c() * dy * dy - 1.0);
  if (disc < 0.0) return {1, 0};
  const double root = std::sqrt(disc);
  const double x_lo = e.center().x + (-e.b() * dy - root) / e.a();
  const double x_hi = e.center().x + (-e.b() * dy + root) / e.a();
  auto lo = static_cast<std::int64_t>(std::ceil((x_lo - grid.x0) / grid.step - 0.5));
  auto hi = static_cast<std::int64_t>(std::floor((x_hi - grid.x0) / grid.step - 0.5));
  lo = std::max<std::int64_t>(lo, 0);
  hi = std::min<std::int64_t>(hi, grid.nx - 1);
  return {lo, hi};
}

}  // namespace detail

struct OverlapCounts {
  std::int64_t first = 0;
  std::int64_t second = 0;
  std::int64_t intersection = 0;

  std::int64_t union_count() const { return first + second - intersection; }
};

/// Counts grid samples inside each region and inside both.
inline OverlapCounts count_overlap(const SecondMomentEllipse& e1, const SecondMomentEllipse& e2,
                                   const OverlapGrid& grid) {
  OverlapCounts counts;
  for (std::int64_t row = 0; row < grid.ny; ++row) {
    const auto [lo1, hi1] = detail::row_span(e1, grid, row);
    const auto [lo2, hi2] = detail::row_span(e2, grid, row);
    const std::int64_t n1 = std::max<std::int64_t>(0, hi1 - lo1 + 1);
    const std::int64_t n2 = std::max<std::int64_t>(0, hi2 - lo2 + 1);
    counts.first += n1;
    counts.second += n2;
    if (n1 > 0 && n2 > 0) {
      counts.intersection += std::max<std::int64_t>(0, std::min(hi1, hi2) - std::max(lo1, lo2) + 1);
    }
  }
  return counts;
}

/// 1 - |e1 n e2| / |e1 u e2| estimated on a regular grid of pitch
/// `grid_step` over the joint bounding box. Swap-symmetric and clamped to
/// [0, 1].
inline double overlap_error(const SecondMomentEllipse& e1, const SecondMomentEllipse& e2,
                            double grid_step) {
  const OverlapGrid grid = overlap_grid(e1, e2, grid_step);
  const OverlapCounts counts = count_overlap(e1, e2, grid);
  const std::int64_t uni = counts.union_count();
  if (uni <= 0) {
    // Both regions fell between samples: the grid is too coarse to see them.
    return (e1.center() == e2.center() && e1.a() == e2.a() && e1.b() == e2.b() &&
            e1.c() == e2.c()) ? 0.0 : 1.0;
  }
  const double ratio = static_cast<double>(counts.intersection) / static_cast<double>(uni);
  return std::clamp(1.0 - ratio, 0.0, 1.0);
}

inline double overlap_error(const SecondMomentEllipse& e1, const SecondMomentEllipse& e2) {
  return overlap_error(e1, e2, default_grid_step(e1, e2));
}

/// Grid estimate of a single region's area (used to check the sampler).
inline double rasterized_area(const SecondMomentEllipse& e, double grid_step) {
  const OverlapGrid grid = overlap_grid(e, e, grid_step);
  const OverlapCounts counts = count_overlap(e, e, grid);
  return static_cast<double>(counts.union_count()) * grid.step * grid.step;
}

}  // namespace repeval
