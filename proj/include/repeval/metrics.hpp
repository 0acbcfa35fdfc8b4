#pragma once

// Repeatability measures. Three rates share one correspondence set and
// differ only in their denominators:
//
//   eq1 = N_rep / min(N_ref, N_test)      (classic repeatability)
//   c1  = N_rep / N_ref                   (fixed reference image)
//   c2  = 2 N_rep / (N_ref + N_test)      (symmetric)
//
// N_ref and N_test count the keypoints of each image lying in the part of
// the scene visible in both images.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "repeval/error.hpp"
#include "repeval/formats.hpp"
#include "repeval/geometry.hpp"

namespace repeval {

enum class Eq1Population { Common, Whole };
enum class MatcherMode { NearestNeighbor, Ratio };

struct EvalConfig {
  double epsilon_px = 1.5;
  double max_overlap_error = 0.40;
  std::optional<double> normalize_radius = kDefaultNormalizeRadius;
  std::optional<double> grid_step;  // unset: default_grid_step() per pair
  Eq1Population eq1_population = Eq1Population::Common;
  MatcherMode matcher = MatcherMode::NearestNeighbor;
  double ratio_threshold = 0.8;

  void validate() const {
    if (!(epsilon_px > 0.0) || !std::isfinite(epsilon_px)) {
      throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    }
    if (!(max_overlap_error > 0.0 && max_overlap_error < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "max-overlap-error must lie in (0, 1)");
    }
    if (normalize_radius && (!(*normalize_radius > 0.0) || !std::isfinite(*normalize_radius))) {
      throw Error(ErrorCode::InvalidArgument, "normalize-radius must be positive");
    }
    if (grid_step && (!(*grid_step > 0.0) || !std::isfinite(*grid_step))) {
      throw Error(ErrorCode::InvalidArgument, "grid-step must be positive");
    }
    if (!(ratio_threshold > 0.0 && ratio_threshold <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "ratio threshold must lie in (0, 1]");
    }
  }
};

struct Correspondence {
  std::size_t ref_index = 0;
  std::size_t test_index = 0;
  double center_distance = 0.0;  // test frame, px
  double overlap_err = 0.0;
};

struct CommonPart {
  std::vector<std::size_t> ref_indices;
  std::vector<std::size_t> test_indices;
  std::size_t excluded_at_infinity = 0;
};

namespace detail {

inline bool inside(const Point2& p, int width, int height) {
  return p.x >= 0.0 && p.x <= static_cast<double>(width) && p.y >= 0.0 &&
         p.y <= static_cast<double>(height);
}

}  // namespace detail

/// Keypoints whose centers land inside the other image (boundary inclusive).
/// Points sent to infinity are dropped and counted in `excluded_at_infinity`.
inline CommonPart common_part_filter(const KeypointSet& ref, const KeypointSet& test,
                                     const Homography& h) {
  CommonPart part;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    try {
      const Point2 p = project_point(h, ref.keypoints[i].region.center());
      if (detail::inside(p, test.width, test.height)) part.ref_indices.push_back(i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity) throw;
      ++part.excluded_at_infinity;
    }
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    try {
      const Point2 p = project_point(h.inverse_matrix(), test.keypoints[i].region.center());
      if (detail::inside(p, ref.width, ref.height)) part.test_indices.push_back(i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity) throw;
      ++part.excluded_at_infinity;
    }
  }
  return part;
}

/// Overlap error between a reference region and a test region after pulling
/// the test region into the reference frame (and normalizing the pair when
/// configured). nullopt when the transport degenerates.
inline std::optional<double> region_overlap_error(const SecondMomentEllipse& ref_region,
                                                  const SecondMomentEllipse& test_region,
                                                  const Homography& h, const EvalConfig& cfg) {
  try {
    SecondMomentEllipse ref_e = ref_region;
    SecondMomentEllipse test_e = map_region_to_reference(h, ref_region.center(), test_region);
    if (cfg.normalize_radius) {
      std::tie(ref_e, test_e) = normalize_pair(ref_e, test_e, *cfg.normalize_radius);
    }
    const double step = cfg.grid_step.value_or(default_grid_step(ref_e, test_e));
    return overlap_error(ref_e, test_e, step);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateRegion || e.code() == ErrorCode::PointAtInfinity ||
        e.code() == ErrorCode::InvalidRegion) {
      return std::nullopt;
    }
    throw;
  }
}

/// The repeatability predicate for one (reference, test) pair: projected
/// center within epsilon in the test frame and overlap error below the
/// threshold.
inline std::optional<Correspondence> check_correspondence(const KeypointSet& ref,
                                                          std::size_t ref_index,
                                                          const KeypointSet& test,
                                                          std::size_t test_index,
                                                          const Homography& h,
                                                          const EvalConfig& cfg) {
  const auto& ref_region = ref.keypoints[ref_index].region;
  const auto& test_region = test.keypoints[test_index].region;
  Point2 projected;
  try {
    projected = project_point(h, ref_region.center());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PointAtInfinity) throw;
    return std::nullopt;
  }
  const double d = distance(projected, test_region.center());
  if (!(d < cfg.epsilon_px)) return std::nullopt;
  const auto err = region_overlap_error(ref_region, test_region, h, cfg);
  if (!err || !(*err < cfg.max_overlap_error)) return std::nullopt;
  return Correspondence{ref_index, test_index, d, *err};
}

/// Orders candidates by overlap error, then center distance, then indices.
inline bool correspondence_precedes(const Correspondence& a, const Correspondence& b) {
  return std::tie(a.overlap_err, a.center_distance, a.ref_index, a.test_index) <
         std::tie(b.overlap_err, b.center_distance, b.ref_index, b.test_index);
}

/// One-to-one selection: walk candidates in precedence order and keep each
/// one whose endpoints are both still free.
inline std::vector<Correspondence> resolve_one_to_one(std::vector<Correspondence> candidates,
                                                      std::size_t n_ref, std::size_t n_test) {
  std::sort(candidates.begin(), candidates.end(), correspondence_precedes);
  std::vector<bool> ref_used(n_ref, false);
  std::vector<bool> test_used(n_test, false);
  std::vector<Correspondence> chosen;
  for (const auto& c : candidates) {
    if (ref_used[c.ref_index] || test_used[c.test_index]) continue;
    ref_used[c.ref_index] = true;
    test_used[c.test_index] = true;
    chosen.push_back(c);
  }
  return chosen;
}

/// All predicate-satisfying pairs between the common-part points.
inline std::vector<Correspondence> candidate_correspondences(const KeypointSet& ref,
                                                             const KeypointSet& test,
                                                             const Homography& h,
                                                             const EvalConfig& cfg,
                                                             const CommonPart& part) {
  // Test points sorted by x so each reference point only scans an
  // epsilon-wide window.
  struct Entry {
    double x;
    std::size_t index;
  };
  std::vector<Entry> sorted;
  sorted.reserve(part.test_indices.size());
  for (std::size_t ti : part.test_indices) {
    sorted.push_back({test.keypoints[ti].region.center().x, ti});
  }
  std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.x, a.index) < std::tie(b.x, b.index);
  });

  std::vector<Correspondence> candidates;
  for (std::size_t ri : part.ref_indices) {
    Point2 projected;
    try {
      projected = project_point(h, ref.keypoints[ri].region.center());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity) throw;
      continue;
    }
    auto it = std::lower_bound(sorted.begin(), sorted.end(), projected.x - cfg.epsilon_px,
                               [](const Entry& e, double x) { return e.x < x; });
    for (; it != sorted.end() && it->x <= projected.x + cfg.epsilon_px; ++it) {
      const Point2& tc = test.keypoints[it->index].region.center();
      if (!(distance(projected, tc) < cfg.epsilon_px)) continue;
      if (auto c = check_correspondence(ref, ri, test, it->index, h, cfg)) {
        candidates.push_back(*c);
      }
    }
  }
  return candidates;
}

inline std::vector<Correspondence> find_correspondences(const KeypointSet& ref,
                                                        const KeypointSet& test,
                                                        const Homography& h,
                                                        const EvalConfig& cfg,
                                                        const CommonPart& part) {
  return resolve_one_to_one(candidate_correspondences(ref, test, h, cfg, part), ref.size(),
                            test.size());
}

inline std::vector<Correspondence> find_correspondences(const KeypointSet& ref,
                                                        const KeypointSet& test,
                                                        const Homography& h,
                                                        const EvalConfig& cfg) {
  cfg.validate();
  return find_correspondences(ref, test, h, cfg, common_part_filter(ref, test, h));
}

inline double eq1_repeatability(std::size_t n_rep, std::size_t n_ref, std::size_t n_test) {
  const std::size_t denom = std::min(n_ref, n_test);
  if (denom == 0) throw Error(ErrorCode::UndefinedMetric, "eq1: min(n_ref, n_test) is zero");
  return static_cast<double>(n_rep) / static_cast<double>(denom);
}

inline double criterion1(std::size_t n_rep, std::size_t n_ref) {
  if (n_ref == 0) throw Error(ErrorCode::UndefinedMetric, "c1: n_ref is zero");
  return static_cast<double>(n_rep) / static_cast<double>(n_ref);
}

inline double criterion2(std::size_t n_rep, std::size_t n_ref, std::size_t n_test) {
  if (n_ref + n_test == 0) throw Error(ErrorCode::UndefinedMetric, "c2: n_ref + n_test is zero");
  return 2.0 * static_cast<double>(n_rep) / static_cast<double>(n_ref + n_test);
}

}  // namespace repeval
