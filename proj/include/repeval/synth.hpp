#pragma once

// Seeded synthetic detector output. A reference image gets planted regions;
// test images are derived by pushing those regions through a known
// homography with dropout, center jitter, descriptor noise and distractors.
//
// Random numbers come from xorshift64* seeded through splitmix64 (see
// README "Synthetic data" for the recurrences and draw order). Everything is
// reproducible bit-for-bit given the seed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "repeval/error.hpp"
#include "repeval/formats.hpp"
#include "repeval/geometry.hpp"

namespace repeval {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xorshift64* (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D).
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(splitmix64(seed ^ splitmix64(stream))) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  std::uint64_t next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two uniforms, keeps the cosine
  /// branch.
  double gaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_points = 300;
  int image_width = 800;
  int image_height = 640;
  double min_radius = 2.0;  // equivalent radius range, px
  double max_radius = 12.0;
  double jitter_sigma = 0.3;
  double dropout_rate = 0.2;
  int n_distractors = 0;
  int descriptor_dim = 32;
  double descriptor_noise_sigma = 0.05;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw Error(ErrorCode::InvalidArgument, field + ": " + why);
    };
    if (n_points < 0) fail("points", "must be non-negative");
    if (image_width <= 0) fail("width", "must be positive");
    if (image_height <= 0) fail("height", "must be positive");
    if (!(min_radius > 0.0) || !std::isfinite(min_radius)) fail("min-radius", "must be positive");
    if (!(max_radius >= min_radius) || !std::isfinite(max_radius)) {
      fail("max-radius", "must be at least min-radius");
    }
    if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) fail("jitter", "must be non-negative");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout", "must lie in [0, 1)");
    if (n_distractors < 0) fail("distractors", "must be non-negative");
    if (descriptor_dim < 0 || descriptor_dim == 1) fail("descriptor-dim", "must be 0 or at least 2");
    if (!(descriptor_noise_sigma >= 0.0) || !std::isfinite(descriptor_noise_sigma)) {
      fail("descriptor-noise", "must be non-negative");
    }
  }
};

inline constexpr double kMaxAxisRatio = 3.0;
// Distractor descriptors keep at least this angle to every planted one.
inline constexpr double kDistractorMinAngle = std::numbers::pi / 4.0;
inline constexpr int kDistractorMaxAttempts = 64;

namespace detail {

/// Log-uniform equivalent radius, axis ratio uniform in [1, 3], orientation
/// uniform in [0, pi). Three uniforms, in that order.
inline SecondMomentEllipse random_region(Xorshift64Star& rng, Point2 center,
                                         const SynthConfig& cfg) {
  const double radius =
      cfg.min_radius * std::exp(rng.uniform() * std::log(cfg.max_radius / cfg.min_radius));
  const double ratio = 1.0 + (kMaxAxisRatio - 1.0) * rng.uniform();
  const double theta = std::numbers::pi * rng.uniform();
  const double major = radius * std::sqrt(ratio);
  const double minor = radius / std::sqrt(ratio);
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double l1 = 1.0 / (major * major);
  const double l2 = 1.0 / (minor * minor);
  return SecondMomentEllipse(center, cs * cs * l1 + sn * sn * l2, cs * sn * (l1 - l2),
                             sn * sn * l1 + cs * cs * l2);
}

inline std::vector<double> random_unit_vector(Xorshift64Star& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (double& x : v) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

inline double max_cosine(const std::vector<double>& unit, const KeypointSet& planted) {
  double best = -1.0;
  for (const auto& kp : planted.keypoints) {
    double dot = 0.0;
    double norm = 0.0;
    for (std::size_t k = 0; k < unit.size(); ++k) {
      dot += unit[k] * kp.descriptor[k];
      norm += kp.descriptor[k] * kp.descriptor[k];
    }
    if (norm > 0.0) best = std::max(best, dot / std::sqrt(norm));
  }
  return best;
}

inline bool inside_image(const Point2& p, int width, int height) {
  return p.x >= 0.0 && p.x <= static_cast<double>(width) && p.y >= 0.0 &&
         p.y <= static_cast<double>(height);
}

}  // namespace detail

/// Planted reference keypoints. Per point: center x, center y, region (three
/// uniforms), then `descriptor_dim` gaussians normalized to unit length.
inline KeypointSet generate_reference(const SynthConfig& cfg, std::string image_id = "img1") {
  cfg.validate();
  Xorshift64Star rng(cfg.seed, 0);
  KeypointSet set;
  set.image_id = std::move(image_id);
  set.width = cfg.image_width;
  set.height = cfg.image_height;
  set.descriptor_dim = cfg.descriptor_dim;
  set.keypoints.reserve(static_cast<std::size_t>(cfg.n_points));
  for (int i = 0; i < cfg.n_points; ++i) {
    const double x = rng.uniform() * cfg.image_width;
    const double y = rng.uniform() * cfg.image_height;
    SecondMomentEllipse region = detail::random_region(rng, {x, y}, cfg);
    set.keypoints.push_back({region, detail::random_unit_vector(rng, cfg.descriptor_dim)});
  }
  return set;
}

/// Test-image keypoints derived from `ref` through `h`. `stream` selects an
/// independent random sequence (one per test image of a dataset).
///
/// Draw order per reference point: dropout uniform; if kept, jitter x and y
/// gaussians, then `descriptor_dim` noise gaussians. Distractors follow:
/// center x, center y, region, then descriptor attempts until one clears the
/// minimum angle to all planted descriptors (at most 64 attempts; the last
/// attempt is kept). Points outside the image are culled last.
inline KeypointSet derive_test(const KeypointSet& ref, const Homography& h, const SynthConfig& cfg,
                               std::uint64_t stream = 1, std::string image_id = "img2") {
  cfg.validate();
  if (ref.descriptor_dim != cfg.descriptor_dim) {
    throw Error(ErrorCode::InvalidArgument,
                "descriptor-dim: reference set and config disagree");
  }
  Xorshift64Star rng(cfg.seed, stream);
  KeypointSet out;
  out.image_id = std::move(image_id);
  out.width = cfg.image_width;
  out.height = cfg.image_height;
  out.descriptor_dim = cfg.descriptor_dim;

  std::vector<Keypoint> candidates;
  candidates.reserve(ref.size() + static_cast<std::size_t>(cfg.n_distractors));
  for (const Keypoint& kp : ref.keypoints) {
    if (rng.uniform() < cfg.dropout_rate) continue;
    const double jx = cfg.jitter_sigma * rng.gaussian();
    const double jy = cfg.jitter_sigma * rng.gaussian();
    std::vector<double> descriptor = kp.descriptor;
    for (double& d : descriptor) d += cfg.descriptor_noise_sigma * rng.gaussian();
    try {
      const SecondMomentEllipse mapped = map_region_to_test(h, kp.region);
      const Point2 c{mapped.center().x + jx, mapped.center().y + jy};
      candidates.push_back({mapped.with_center(c), std::move(descriptor)});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PointAtInfinity && e.code() != ErrorCode::DegenerateRegion) throw;
    }
  }

  const double max_cos = std::cos(kDistractorMinAngle);
  for (int i = 0; i < cfg.n_distractors; ++i) {
    const double x = rng.uniform() * cfg.image_width;
    const double y = rng.uniform() * cfg.image_height;
    SecondMomentEllipse region = detail::random_region(rng, {x, y}, cfg);
    std::vector<double> descriptor;
    if (cfg.descriptor_dim > 0) {
      for (int attempt = 0; attempt < kDistractorMaxAttempts; ++attempt) {
        descriptor = detail::random_unit_vector(rng, cfg.descriptor_dim);
        if (detail::max_cosine(descriptor, ref) <= max_cos) break;
      }
    }
    candidates.push_back({region, std::move(descriptor)});
  }

  for (auto& kp : candidates) {
    if (detail::inside_image(kp.region.center(), out.width, out.height)) {
      out.keypoints.push_back(std::move(kp));
    }
  }
  return out;
}

}  // namespace repeval
