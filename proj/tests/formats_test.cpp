#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "repeval/formats.hpp"

namespace repeval {
namespace {

ErrorCode code_of(const std::function<void()>& fn, std::optional<std::size_t>* line = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidArgument;
}

TEST(ParseKeypoints, CircleWithoutDescriptor) {
  const auto set = parse_keypoints("1.0\n1\n10 20 0.01 0 0.01\n", "a", 100, 100);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.descriptor_dim, 0);
  const auto& r = set.keypoints[0].region;
  EXPECT_EQ(r.center(), (Point2{10, 20}));
  EXPECT_EQ(r.a(), 0.01);
  EXPECT_EQ(r.b(), 0.0);
  EXPECT_EQ(r.c(), 0.01);
  EXPECT_TRUE(set.keypoints[0].descriptor.empty());
}

TEST(ParseKeypoints, WithDescriptor) {
  const auto set = parse_keypoints("2\n1\n5 5 1 0 1 0.5 0.5\n", "a", 10, 10);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.descriptor_dim, 2);
  EXPECT_EQ(set.keypoints[0].descriptor, (std::vector<double>{0.5, 0.5}));
}

TEST(ParseKeypoints, InvalidRegionCarriesLine) {
  std::optional<std::size_t> line;
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n10 20 -1 0 1\n", "a", 10, 10); }, &line),
            ErrorCode::InvalidRegion);
  EXPECT_EQ(line, 3u);
}

TEST(ParseKeypoints, StructuralErrors) {
  std::optional<std::size_t> line;
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n2\n1 1 1 0 1\n", "a", 10, 10); }, &line),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 1 1 0 1\n2 2 1 0 1\n", "a", 10, 10); }, &line),
            ErrorCode::ParseError);
  EXPECT_EQ(line, 4u);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 1 1 0\n", "a", 10, 10); }, &line),
            ErrorCode::ParseError);
  EXPECT_EQ(line, 3u);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 1 1 0 1 9\n", "a", 10, 10); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 x 1 0 1\n", "a", 10, 10); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("", "a", 10, 10); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n", "a", 10, 10); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("2.5\n0\n", "a", 10, 10); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n-1\n", "a", 10, 10); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 1 nan 0 1\n", "a", 10, 10); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n1\n1 1 inf 0 1\n", "a", 10, 10); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_keypoints("1.0\n0\n", "a", 0, 10); }), ErrorCode::InvalidArgument);
}

TEST(ParseKeypoints, ToleratesCrlfBlankLinesAndScientific) {
  const auto set = parse_keypoints("1\r\n\r\n2\r\n1e1 +2.5E1 1e-2 0 1E-2\r\n\n 3 4 1 0.5 1 \n", "a", 50, 50);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.keypoints[0].region.center(), (Point2{10, 25}));
  EXPECT_EQ(set.keypoints[1].region.b(), 0.5);
}

TEST(ParseKeypoints, DescriptorDimensionHeuristic) {
  EXPECT_EQ(parse_keypoints("0\n0\n", "a", 1, 1).descriptor_dim, 0);
  EXPECT_EQ(parse_keypoints("1\n0\n", "a", 1, 1).descriptor_dim, 0);
  EXPECT_EQ(parse_keypoints("128\n0\n", "a", 1, 1).descriptor_dim, 128);
  EXPECT_EQ(parse_keypoints("3.0\n0\n", "a", 1, 1).descriptor_dim, 3);
}

TEST(WriteKeypoints, EmptySet) {
  KeypointSet set{"a", 10, 10, 0, {}};
  EXPECT_EQ(write_keypoints(set), "1.0\n0\n");
}

TEST(WriteKeypoints, RoundTripSingleCircle) {
  const std::string text = "1.0\n1\n10 20 0.01 0 0.01\n";
  const auto set = parse_keypoints(text, "a", 100, 100);
  EXPECT_EQ(write_keypoints(set), text);
}

KeypointSet random_set(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(0, 30);
  std::uniform_int_distribution<int> dim(0, 5);  // 0 or 2..6
  std::uniform_real_distribution<double> coord(-1e3, 1e3);
  std::uniform_real_distribution<double> desc(-1e6, 1e6);
  std::uniform_real_distribution<double> logr(-3, 3);
  KeypointSet set{"x", 640, 480, 0, {}};
  const int d = dim(rng);
  set.descriptor_dim = d == 0 ? 0 : d + 1;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double r = std::pow(10.0, logr(rng));
    auto e = oracle::random_ellipse(rng, {coord(rng), coord(rng)}, r, 2 * r);
    std::vector<double> d(static_cast<std::size_t>(set.descriptor_dim));
    for (double& v : d) v = desc(rng) * std::pow(10.0, logr(rng));
    set.keypoints.push_back({e, d});
  }
  return set;
}

TEST(WriteKeypoints, RejectsUnrepresentableDimension) {
  KeypointSet set{"a", 10, 10, 1, {{SecondMomentEllipse({1, 1}, 1, 0, 1), {0.5}}}};
  EXPECT_EQ(code_of([&] { write_keypoints(set); }), ErrorCode::InvalidArgument);
}

TEST(WriteKeypoints, FuzzRoundTrip) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = random_set(rng);
    const auto back = parse_keypoints(write_keypoints(set), "x", 640, 480);
    ASSERT_EQ(back.size(), set.size());
    ASSERT_EQ(back.descriptor_dim, set.descriptor_dim);
    for (std::size_t i = 0; i < set.size(); ++i) {
      const auto& a = set.keypoints[i];
      const auto& b = back.keypoints[i];
      ASSERT_EQ(a.region.center(), b.region.center());
      ASSERT_EQ(a.region.a(), b.region.a());
      ASSERT_EQ(a.region.b(), b.region.b());
      ASSERT_EQ(a.region.c(), b.region.c());
      ASSERT_EQ(a.descriptor, b.descriptor);
    }
  }
}

TEST(ParseKeypoints, FuzzedBytesNeverCrash) {
  std::mt19937_64 rng(99);
  const std::string alphabet = "0123456789 .-+eE\n\r\tnaix";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 80);
  int errors = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += alphabet[pick(rng)];
    try {
      parse_keypoints(s, "f", 10, 10);
    } catch (const Error&) {
      ++errors;
    }
  }
  EXPECT_GT(errors, 0);
}

TEST(ParseHomography, Layouts) {
  EXPECT_TRUE(parse_homography("1 0 0\n0 1 0\n0 0 1\n").matrix().isIdentity(0));
  const auto h = parse_homography("2 0 0 0 2 0 0 0 1");
  EXPECT_EQ(h.matrix()(0, 0), 2);
  EXPECT_EQ(h.matrix()(1, 1), 2);
  EXPECT_EQ(h.matrix()(2, 2), 1);
}

TEST(ParseHomography, Errors) {
  EXPECT_EQ(code_of([] { parse_homography("1 0 0\n0 1 0\n0 0 0\n"); }), ErrorCode::SingularHomography);
  EXPECT_EQ(code_of([] { parse_homography("1 0 0 0 1 0 0 0"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_homography("1 0 0 0 1 0 0 0 1 5"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_homography("1 0 0 0 1 0 0 0 z"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_homography(""); }), ErrorCode::ParseError);
}

TEST(ParseHomography, WriteRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto h = oracle::random_homography(rng);
    EXPECT_EQ(parse_homography(write_homography(h)).matrix(), h.matrix());
  }
}

constexpr const char* kTwoImageManifest = R"({
  "name": "bark",
  "images": [
    {"id": "img1", "width": 765, "height": 512, "keypoints": "img1.haraff"},
    {"id": "img2", "width": 765, "height": 512, "keypoints": "img2.haraff"}
  ],
  "homographies": [{"from": "img1", "to": "img2", "path": "H1to2p"}]
})";

TEST(ParseManifest, Valid) {
  const auto m = parse_manifest(kTwoImageManifest);
  EXPECT_EQ(m.name, "bark");
  ASSERT_EQ(m.images.size(), 2u);
  EXPECT_EQ(m.reference().id, "img1");
  EXPECT_EQ(m.images[1].keypoint_file_path, "img2.haraff");
  EXPECT_EQ(m.homography_to("img2").file_path, "H1to2p");
  EXPECT_FALSE(m.detector.has_value());
}

TEST(ParseManifest, MissingReferenceHomographyNamesImage) {
  const char* text = R"({"name": "x", "images": [
      {"id": "img1", "width": 1, "height": 1, "keypoints": "a"},
      {"id": "img2", "width": 1, "height": 1, "keypoints": "b"},
      {"id": "img3", "width": 1, "height": 1, "keypoints": "c"}],
    "homographies": [{"from": "img1", "to": "img2", "path": "h"}]})";
  try {
    parse_manifest(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ManifestError);
    EXPECT_NE(std::string(e.what()).find("img3"), std::string::npos);
  }
}

TEST(ParseManifest, DeclarationOrderDefinesReference) {
  const char* text = R"({"name": "x", "detector": "surf", "images": [
      {"id": "img4", "width": 1, "height": 1, "keypoints": "d"},
      {"id": "img1", "width": 1, "height": 1, "keypoints": "a", "label": "zoom 1.2"}],
    "homographies": [{"from": "img4", "to": "img1", "path": "h"}]})";
  const auto m = parse_manifest(text);
  EXPECT_EQ(m.reference().id, "img4");
  EXPECT_EQ(m.images[1].id, "img1");
  EXPECT_EQ(m.images[1].label, "zoom 1.2");
  EXPECT_EQ(m.detector, "surf");
}

TEST(ParseManifest, Errors) {
  EXPECT_EQ(code_of([] { parse_manifest("{not json"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_manifest("[]"); }), ErrorCode::ManifestError);
  EXPECT_EQ(code_of([] { parse_manifest(R"({"name": "x", "images": []})"); }), ErrorCode::ManifestError);
  EXPECT_EQ(code_of([] {
              parse_manifest(R"({"name": "x", "images": [{"id": "a", "width": 1, "height": 1}]})");
            }),
            ErrorCode::ManifestError);
  EXPECT_EQ(code_of([] {
              parse_manifest(R"({"name": "x", "images": [
                {"id": "a", "width": 1, "height": 1, "keypoints": "k"},
                {"id": "a", "width": 1, "height": 1, "keypoints": "k"}]})");
            }),
            ErrorCode::ManifestError);
  EXPECT_EQ(code_of([] {
              parse_manifest(R"({"name": "x", "images": [
                {"id": "a", "width": "wide", "height": 1, "keypoints": "k"}]})");
            }),
            ErrorCode::ManifestError);
}

TEST(ParseManifest, WriteRoundTrip) {
  const auto m = parse_manifest(kTwoImageManifest);
  const auto again = parse_manifest(write_manifest(m));
  EXPECT_EQ(write_manifest(again), write_manifest(m));
}

TEST(FileHelpers, MissingFileNamesPath) {
  try {
    load_homography("/nonexistent/H1to2p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/H1to2p"), std::string::npos);
  }
}

}  // namespace
}  // namespace repeval
