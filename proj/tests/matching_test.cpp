#include <algorithm>
#include <random>
#include <tuple>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repeval/matching.hpp"

namespace repeval {
namespace {

SecondMomentEllipse circle(Point2 c, double r) { return {c, 1.0 / (r * r), 0.0, 1.0 / (r * r)}; }

KeypointSet with_descriptors(std::vector<std::vector<double>> ds, int w = 100, int h = 100) {
  KeypointSet s{"x", w, h, ds.empty() ? 2 : static_cast<int>(ds[0].size()), {}};
  double x = 5;
  for (auto& d : ds) {
    s.keypoints.push_back({circle({x, 50}, 3), std::move(d)});
    x += 10;
  }
  return s;
}

// Full distance matrix, sorted once, greedy walk.
std::vector<std::tuple<std::size_t, std::size_t>> sorted_matrix_greedy(const KeypointSet& a,
                                                                      const KeypointSet& b) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.keypoints[i].descriptor.size(); ++k) {
        const double d = a.keypoints[i].descriptor[k] - b.keypoints[j].descriptor[k];
        s += d * d;
      }
      all.emplace_back(s, i, j);
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<bool> ua(a.size()), ub(b.size());
  std::vector<std::tuple<std::size_t, std::size_t>> out;
  for (const auto& [d, i, j] : all) {
    if (ua[i] || ub[j]) continue;
    ua[i] = ub[j] = true;
    out.emplace_back(i, j);
  }
  return out;
}

std::vector<std::tuple<std::size_t, std::size_t>> pairs_of(const std::vector<DescriptorMatch>& ms) {
  std::vector<std::tuple<std::size_t, std::size_t>> out;
  for (const auto& m : ms) out.emplace_back(m.ref_index, m.test_index);
  return out;
}

TEST(NnMatch, IdentityDescriptors) {
  const auto s = with_descriptors({{1, 0}, {0, 1}, {0.7, 0.7}});
  const auto m = nn_match(s, s);
  ASSERT_EQ(m.size(), 3u);
  for (const auto& x : m) {
    EXPECT_EQ(x.ref_index, x.test_index);
    EXPECT_EQ(x.distance, 0.0);
  }
}

TEST(NnMatch, TieBreakByIndex) {
  const auto ref = with_descriptors({{0, 0}, {0, 0}});
  const auto test = with_descriptors({{1, 0}, {0, 1}});
  const auto m = pairs_of(nn_match(ref, test));
  EXPECT_EQ(m, (std::vector<std::tuple<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
}

TEST(NnMatch, MatchesSortedMatrixGreedy) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> a(20, std::vector<double>(8)), b(17, std::vector<double>(8));
    for (auto& v : a) for (auto& x : v) x = g(rng);
    for (auto& v : b) for (auto& x : v) x = g(rng);
    const auto ra = with_descriptors(a, 1000, 100);
    const auto rb = with_descriptors(b, 1000, 100);
    auto got = pairs_of(nn_match(ra, rb));
    auto want = sorted_matrix_greedy(ra, rb);
    EXPECT_EQ(got, want);
  }
}

TEST(NnMatch, OrthogonalInvariance) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 1);
  std::vector<std::vector<double>> a(15, std::vector<double>(3)), b(15, std::vector<double>(3));
  for (auto& v : a) for (auto& x : v) x = g(rng);
  for (auto& v : b) for (auto& x : v) x = g(rng);
  const Eigen::Matrix3d q = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  auto rotate = [&](std::vector<std::vector<double>> vs) {
    for (auto& v : vs) {
      const Eigen::Vector3d r = q * Eigen::Vector3d(v[0], v[1], v[2]);
      v = {r[0], r[1], r[2]};
    }
    return vs;
  };
  const auto m1 = pairs_of(nn_match(with_descriptors(a, 1000), with_descriptors(b, 1000)));
  const auto m2 = pairs_of(nn_match(with_descriptors(rotate(a), 1000), with_descriptors(rotate(b), 1000)));
  EXPECT_EQ(m1, m2);
}

TEST(NnMatch, RequiresDescriptors) {
  KeypointSet none{"x", 10, 10, 0, {{circle({1, 1}, 1), {}}}};
  const auto some = with_descriptors({{1, 0}});
  try {
    nn_match(none, some);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DescriptorUnavailable);
  }
  const auto other = with_descriptors({{1, 0, 0}});
  EXPECT_THROW(nn_match(some, other), Error);
}

TEST(RatioMatch, RejectsAmbiguous) {
  const auto ref = with_descriptors({{0, 0}, {10, 10}});
  const auto test = with_descriptors({{1, 0}, {-1, 0}, {10, 10.1}});
  const auto m = pairs_of(ratio_match(ref, test, 0.8));
  EXPECT_EQ(m, (std::vector<std::tuple<std::size_t, std::size_t>>{{1, 2}}));
}

TEST(RatioMatch, LoneTestDescriptorPasses) {
  const auto ref = with_descriptors({{0, 0}});
  const auto test = with_descriptors({{3, 4}});
  const auto m = ratio_match(ref, test, 0.8);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m[0].distance, 5.0);
}

TEST(VerifyMatches, ExcludesGeometricallyWrongMatches) {
  // Descriptors say 0<->0 but the test region sits 10 px away.
  KeypointSet ref{"r", 100, 100, 2, {{circle({20, 20}, 3), {1, 0}}, {circle({60, 60}, 3), {0, 1}}}};
  KeypointSet test{"t", 100, 100, 2, {{circle({30, 20}, 3), {1, 0}}, {circle({60, 60}, 3), {0, 1}}}};
  const auto m = nn_match(ref, test);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(verify_matches(m, ref, test, Homography::identity(), EvalConfig{}), 1u);
}

TEST(VerifyMatches, PlantedOutliers) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> pos(10, 290);
  KeypointSet ref{"r", 300, 300, 4, {}};
  for (int i = 0; i < 40; ++i) {
    std::vector<double> d(4);
    for (auto& x : d) x = g(rng);
    ref.keypoints.push_back({oracle::random_ellipse(rng, {pos(rng), pos(rng)}, 3, 8), d});
  }
  KeypointSet test = ref;
  test.image_id = "t";
  // Move 10 regions far from where their descriptors say they should be.
  for (int i = 0; i < 10; ++i) {
    auto& kp = test.keypoints[static_cast<std::size_t>(i)];
    const Point2 c = kp.region.center();
    kp.region = kp.region.with_center({std::fmod(c.x + 100, 300), c.y});
  }
  const auto m = nn_match(ref, test);
  EXPECT_EQ(m.size(), 40u);
  EXPECT_EQ(verify_matches(m, ref, test, Homography::identity(), EvalConfig{}), 30u);
}

TEST(VerifyMatches, MonotoneInThresholds) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> pos(10, 290);
  KeypointSet ref{"r", 300, 300, 4, {}};
  KeypointSet test{"t", 300, 300, 4, {}};
  for (int i = 0; i < 60; ++i) {
    std::vector<double> d(4);
    for (auto& x : d) x = g(rng);
    const auto e = oracle::random_ellipse(rng, {pos(rng), pos(rng)}, 2, 8);
    ref.keypoints.push_back({e, d});
    test.keypoints.push_back({e.with_center({e.center().x + g(rng), e.center().y + g(rng)}), d});
  }
  const auto m = nn_match(ref, test);
  std::size_t prev = 0;
  for (double eps : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    for (double ov : {0.2, 0.4, 0.6}) {
      EvalConfig cfg;
      cfg.epsilon_px = eps;
      cfg.max_overlap_error = ov;
      const auto n = verify_matches(m, ref, test, Homography::identity(), cfg);
      if (ov == 0.2) {
        EXPECT_GE(n, prev);
        prev = n;
      }
      EvalConfig looser = cfg;
      looser.max_overlap_error = std::min(0.99, ov + 0.2);
      EXPECT_GE(verify_matches(m, ref, test, Homography::identity(), looser), n);
    }
  }
}

}  // namespace
}  // namespace repeval
