#pragma once

// Descriptor matching and ground-truth verification. The verified match
// count ("true matches") is the reference signal the repeatability rates
// are compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <tuple>
#include <vector>

#include "repeval/error.hpp"
#include "repeval/formats.hpp"
#include "repeval/metrics.hpp"

namespace repeval {

struct DescriptorMatch {
  std::size_t ref_index = 0;
  std::size_t test_index = 0;
  double distance = 0.0;  // Euclidean, descriptor space
};

namespace detail {

inline void require_descriptors(const KeypointSet& ref, const KeypointSet& test) {
  if (ref.descriptor_dim <= 0 || test.descriptor_dim <= 0) {
    throw Error(ErrorCode::DescriptorUnavailable, "keypoint sets carry no descriptors");
  }
  if (ref.descriptor_dim != test.descriptor_dim) {
    throw Error(ErrorCode::DescriptorUnavailable,
                "descriptor dimensions differ (" + std::to_string(ref.descriptor_dim) + " vs " +
                    std::to_string(test.descriptor_dim) + ")");
  }
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

struct Candidate {
  double sq_dist;
  std::size_t ref;
  std::size_t test;

  bool operator>(const Candidate& o) const {
    return std::tie(sq_dist, ref, test) > std::tie(o.sq_dist, o.ref, o.test);
  }
};

/// Nearest still-free test descriptor of `ref_index`; lowest test index wins
/// ties. test == npos when none is free.
inline Candidate best_free(const KeypointSet& ref, std::size_t ref_index, const KeypointSet& test,
                           const std::vector<bool>& test_used) {
  Candidate best{std::numeric_limits<double>::infinity(), ref_index,
                 static_cast<std::size_t>(-1)};
  const auto& d = ref.keypoints[ref_index].descriptor;
  for (std::size_t t = 0; t < test.size(); ++t) {
    if (test_used[t]) continue;
    const double sq = squared_distance(d, test.keypoints[t].descriptor);
    if (sq < best.sq_dist || best.test == static_cast<std::size_t>(-1)) {
      best.sq_dist = sq;
      best.test = t;
    }
  }
  return best;
}

}  // namespace detail

/// Greedy one-to-one nearest-neighbor matching: repeatedly accept the
/// globally smallest remaining descriptor distance, ties broken by
/// (ref_index, test_index).
///
/// Each reference keeps a heap entry for its best free test descriptor; a
/// popped entry whose test was taken in the meantime is refreshed and pushed
/// back. Entries only ever get worse, so the first valid pop is the global
/// minimum. Memory stays O(n_ref + n_test).
inline std::vector<DescriptorMatch> nn_match(const KeypointSet& ref, const KeypointSet& test) {
  detail::require_descriptors(ref, test);
  std::vector<DescriptorMatch> matches;
  if (ref.size() == 0 || test.size() == 0) return matches;

  std::vector<bool> test_used(test.size(), false);
  std::priority_queue<detail::Candidate, std::vector<detail::Candidate>, std::greater<>> heap;
  for (std::size_t r = 0; r < ref.size(); ++r) heap.push(detail::best_free(ref, r, test, test_used));

  const std::size_t limit = std::min(ref.size(), test.size());
  while (!heap.empty() && matches.size() < limit) {
    const detail::Candidate top = heap.top();
    heap.pop();
    if (test_used[top.test]) {
      const auto refreshed = detail::best_free(ref, top.ref, test, test_used);
      if (refreshed.test != static_cast<std::size_t>(-1)) heap.push(refreshed);
      continue;
    }
    test_used[top.test] = true;
    matches.push_back({top.ref, top.test, std::sqrt(top.sq_dist)});
  }
  return matches;
}

/// Nearest neighbor with a distance-ratio test (first/second < ratio), then
/// one-to-one resolution by ascending distance.
inline std::vector<DescriptorMatch> ratio_match(const KeypointSet& ref, const KeypointSet& test,
                                                double ratio = 0.8) {
  detail::require_descriptors(ref, test);
  std::vector<detail::Candidate> candidates;
  for (std::size_t r = 0; r < ref.size(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < test.size(); ++t) {
      const double sq = detail::squared_distance(ref.keypoints[r].descriptor,
                                                 test.keypoints[t].descriptor);
      if (sq < best) {
        second = best;
        best = sq;
        best_t = t;
      } else if (sq < second) {
        second = sq;
      }
    }
    if (test.size() == 0) continue;
    // A lone test descriptor has no second neighbor; the test passes.
    if (test.size() == 1 || std::sqrt(best) < ratio * std::sqrt(second)) {
      candidates.push_back({best, r, best_t});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return b > a; });
  std::vector<bool> test_used(test.size(), false);
  std::vector<DescriptorMatch> matches;
  for (const auto& c : candidates) {
    if (test_used[c.test]) continue;
    test_used[c.test] = true;
    matches.push_back({c.ref, c.test, std::sqrt(c.sq_dist)});
  }
  return matches;
}

inline std::vector<DescriptorMatch> match_descriptors(const KeypointSet& ref,
                                                      const KeypointSet& test,
                                                      const EvalConfig& cfg) {
  return cfg.matcher == MatcherMode::Ratio ? ratio_match(ref, test, cfg.ratio_threshold)
                                           : nn_match(ref, test);
}

/// Number of descriptor matches that also satisfy the repeatability predicate
/// under the ground-truth homography, with both points in the common part.
inline std::size_t verify_matches(const std::vector<DescriptorMatch>& matches,
                                  const KeypointSet& ref, const KeypointSet& test,
                                  const Homography& h, const EvalConfig& cfg,
                                  const CommonPart& part) {
  std::vector<bool> ref_common(ref.size(), false);
  std::vector<bool> test_common(test.size(), false);
  for (std::size_t i : part.ref_indices) ref_common[i] = true;
  for (std::size_t i : part.test_indices) test_common[i] = true;

  std::size_t verified = 0;
  for (const auto& m : matches) {
    if (m.ref_index >= ref.size() || m.test_index >= test.size()) {
      throw Error(ErrorCode::InvalidArgument, "match references a keypoint out of range");
    }
    if (!ref_common[m.ref_index] || !test_common[m.test_index]) continue;
    if (check_correspondence(ref, m.ref_index, test, m.test_index, h, cfg)) ++verified;
  }
  return verified;
}

inline std::size_t verify_matches(const std::vector<DescriptorMatch>& matches,
                                  const KeypointSet& ref, const KeypointSet& test,
                                  const Homography& h, const EvalConfig& cfg) {
  return verify_matches(matches, ref, test, h, cfg, common_part_filter(ref, test, h));
}

}  // namespace repeval
