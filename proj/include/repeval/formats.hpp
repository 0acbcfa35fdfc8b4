#pragma once

// Text formats: affine-region keypoint files, homography files and dataset
// manifests.
//
// Keypoint file grammar (one record per line, whitespace separated):
//
//   D          descriptor length as a real; values <= 1.0 mean "none"
//   N          number of keypoints
//   u v a b c d_1 ... d_D      (N times)
//
// where a(x-u)^2 + 2b(x-u)(y-v) + c(y-v)^2 = 1 is the region boundary.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "repeval/error.hpp"
#include "repeval/geometry.hpp"

namespace repeval {

struct Keypoint {
  SecondMomentEllipse region;
  std::vector<double> descriptor;  // empty when the set has no descriptors
};

struct KeypointSet {
  std::string image_id;
  int width = 0;
  int height = 0;
  int descriptor_dim = 0;
  std::vector<Keypoint> keypoints;

  std::size_t size() const noexcept { return keypoints.size(); }
  bool has_descriptors() const noexcept { return descriptor_dim > 0; }
};

/// Throws InvalidArgument when the set breaks its invariants.
inline void validate(const KeypointSet& set) {
  if (set.width <= 0 || set.height <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                "image '" + set.image_id + "' must have positive dimensions");
  }
  if (set.descriptor_dim < 0) {
    throw Error(ErrorCode::InvalidArgument, "descriptor dimension must be non-negative");
  }
  // A header of 1 reads back as "no descriptors", so length 1 cannot be stored.
  if (set.descriptor_dim == 1) {
    throw Error(ErrorCode::InvalidArgument, "descriptor dimension 1 is not representable");
  }
  for (const Keypoint& kp : set.keypoints) {
    if (kp.descriptor.size() != static_cast<std::size_t>(set.descriptor_dim)) {
      throw Error(ErrorCode::InvalidArgument, "descriptor length does not match the set dimension");
    }
    for (double v : kp.descriptor) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite descriptor value");
    }
  }
}

/// Shortest decimal form that parses back to the same double. Locale
/// independent.
inline std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::optional<double> parse_real(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty() || token.front() == '+') return std::nullopt;
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value,
                                   std::chars_format::general);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

inline std::optional<long long> parse_integer(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  long long value = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    return std::nullopt;
  }
  return value;
}

inline bool is_space(char ch) {
  return ch == ' ' || ch == '\t' || ch == '\r' || ch == '\v' || ch == '\f';
}

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

struct Line {
  std::size_t number;  // 1-based
  std::vector<std::string_view> tokens;
};

/// Non-blank lines with their original line numbers.
inline std::vector<Line> tokenized_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++number;
    auto tokens = split_tokens(text.substr(pos, end - pos));
    if (!tokens.empty()) lines.push_back({number, std::move(tokens)});
    if (end == text.size()) break;
    pos = end + 1;
  }
  return lines;
}

inline std::string quoted(std::string_view token) {
  constexpr std::size_t kMax = 32;
  std::string s(token.substr(0, kMax));
  if (token.size() > kMax) s += "...";
  return "'" + s + "'";
}

}  // namespace detail

inline KeypointSet parse_keypoints(std::string_view text, std::string image_id, int width,
                                   int height) {
  KeypointSet set;
  set.image_id = std::move(image_id);
  set.width = width;
  set.height = height;
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                "image '" + set.image_id + "' must have positive dimensions");
  }

  const auto lines = detail::tokenized_lines(text);
  if (lines.empty()) throw Error(ErrorCode::ParseError, "missing descriptor dimension header", 1);

  const auto& header = lines[0];
  if (header.tokens.size() != 1) {
    throw Error(ErrorCode::ParseError, "expected a single descriptor dimension value", header.number);
  }
  const auto dim = detail::parse_real(header.tokens[0]);
  if (!dim) {
    throw Error(ErrorCode::ParseError,
                "invalid descriptor dimension " + detail::quoted(header.tokens[0]), header.number);
  }
  if (*dim > 1.0) {
    if (*dim != std::floor(*dim) || *dim > 1e6) {
      throw Error(ErrorCode::ParseError, "descriptor dimension must be an integer",
                  header.number);
    }
    set.descriptor_dim = static_cast<int>(*dim);
  }

  if (lines.size() < 2) {
    throw Error(ErrorCode::ParseError, "missing keypoint count", header.number + 1);
  }
  const auto& count_line = lines[1];
  if (count_line.tokens.size() != 1) {
    throw Error(ErrorCode::ParseError, "expected a single keypoint count", count_line.number);
  }
  const auto count = detail::parse_integer(count_line.tokens[0]);
  if (!count || *count < 0) {
    throw Error(ErrorCode::ParseError,
                "invalid keypoint count " + detail::quoted(count_line.tokens[0]), count_line.number);
  }

  const std::size_t expected_tokens = 5 + static_cast<std::size_t>(set.descriptor_dim);
  const std::size_t records = lines.size() - 2;
  if (records > static_cast<unsigned long long>(*count)) {
    throw Error(ErrorCode::ParseError,
                "found more keypoint lines than the declared count " + std::to_string(*count),
                lines[2 + static_cast<std::size_t>(*count)].number);
  }
  set.keypoints.reserve(records);

  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.tokens.size() != expected_tokens) {
      throw Error(ErrorCode::ParseError,
                  "expected " + std::to_string(expected_tokens) + " values, found " +
                      std::to_string(line.tokens.size()),
                  line.number);
    }
    double values[5];
    for (std::size_t k = 0; k < 5; ++k) {
      const auto v = detail::parse_real(line.tokens[k]);
      if (!v) {
        throw Error(ErrorCode::ParseError, "invalid number " + detail::quoted(line.tokens[k]),
                    line.number);
      }
      values[k] = *v;
    }
    std::vector<double> descriptor;
    descriptor.reserve(static_cast<std::size_t>(set.descriptor_dim));
    for (std::size_t k = 5; k < expected_tokens; ++k) {
      const auto v = detail::parse_real(line.tokens[k]);
      if (!v) {
        throw Error(ErrorCode::ParseError, "invalid number " + detail::quoted(line.tokens[k]),
                    line.number);
      }
      descriptor.push_back(*v);
    }
    if (!SecondMomentEllipse::is_positive_definite(values[2], values[3], values[4])) {
      throw Error(ErrorCode::InvalidRegion, "region (a, b, c) is not positive definite",
                  line.number);
    }
    set.keypoints.push_back(
        {SecondMomentEllipse({values[0], values[1]}, values[2], values[3], values[4]),
         std::move(descriptor)});
  }

  if (set.keypoints.size() != static_cast<std::size_t>(*count)) {
    const std::size_t last = lines.back().number;
    throw Error(ErrorCode::ParseError,
                "declared " + std::to_string(*count) + " keypoints but found " +
                    std::to_string(set.keypoints.size()),
                last + 1);
  }
  return set;
}

inline std::string write_keypoints(const KeypointSet& set) {
  validate(set);
  std::string out;
  out += set.descriptor_dim > 0 ? std::to_string(set.descriptor_dim) : std::string("1.0");
  out += '\n';
  out += std::to_string(set.keypoints.size());
  out += '\n';
  for (const Keypoint& kp : set.keypoints) {
    const auto& r = kp.region;
    out += format_number(r.center().x);
    for (double v : {r.center().y, r.a(), r.b(), r.c()}) {
      out += ' ';
      out += format_number(v);
    }
    for (double v : kp.descriptor) {
      out += ' ';
      out += format_number(v);
    }
    out += '\n';
  }
  return out;
}

inline Homography parse_homography(std::string_view text) {
  const auto lines = detail::tokenized_lines(text);
  Eigen::Matrix3d m;
  std::size_t n = 0;
  for (const auto& line : lines) {
    for (auto token : line.tokens) {
      if (n == 9) {
        throw Error(ErrorCode::ParseError, "homography has more than 9 values", line.number);
      }
      const auto v = detail::parse_real(token);
      if (!v) {
        throw Error(ErrorCode::ParseError, "invalid number " + detail::quoted(token), line.number);
      }
      m(static_cast<Eigen::Index>(n / 3), static_cast<Eigen::Index>(n % 3)) = *v;
      ++n;
    }
  }
  if (n != 9) {
    throw Error(ErrorCode::ParseError,
                "homography needs 9 values, found " + std::to_string(n));
  }
  return Homography(m);
}

inline std::string write_homography(const Homography& h) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (c) out += ' ';
      out += format_number(h.matrix()(r, c));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct ManifestImage {
  std::string id;
  int width = 0;
  int height = 0;
  std::string keypoint_file_path;
  std::optional<std::string> label;
};

struct ManifestHomography {
  std::string from_id;
  std::string to_id;
  std::string file_path;
};

/// Image sequence description. The first image is the reference of every
/// evaluated pair.
struct DatasetManifest {
  std::string name;
  std::optional<std::string> detector;
  std::vector<ManifestImage> images;
  std::vector<ManifestHomography> homographies;

  const ManifestImage& reference() const { return images.front(); }

  /// Homography entry mapping the reference onto `image_id`.
  const ManifestHomography& homography_to(const std::string& image_id) const {
    for (const auto& h : homographies) {
      if (h.from_id == reference().id && h.to_id == image_id) return h;
    }
    throw Error(ErrorCode::ManifestError, "no homography from reference to image " + image_id);
  }
};

namespace detail {

template <typename T>
T manifest_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::ManifestError, where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ManifestError, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline DatasetManifest parse_manifest(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                "malformed manifest JSON at byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) throw Error(ErrorCode::ManifestError, "manifest must be a JSON object");

  DatasetManifest manifest;
  manifest.name = detail::manifest_field<std::string>(doc, "name", "manifest");
  if (doc.contains("detector") && !doc["detector"].is_null()) {
    manifest.detector = detail::manifest_field<std::string>(doc, "detector", "manifest");
  }

  const auto images = detail::manifest_field<nlohmann::json>(doc, "images", "manifest");
  if (!images.is_array() || images.empty()) {
    throw Error(ErrorCode::ManifestError, "manifest: 'images' must be a non-empty array");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    ManifestImage img;
    img.id = detail::manifest_field<std::string>(images[i], "id", where);
    img.width = detail::manifest_field<int>(images[i], "width", where);
    img.height = detail::manifest_field<int>(images[i], "height", where);
    img.keypoint_file_path = detail::manifest_field<std::string>(images[i], "keypoints", where);
    if (images[i].contains("label") && !images[i]["label"].is_null()) {
      img.label = detail::manifest_field<std::string>(images[i], "label", where);
    }
    if (img.width <= 0 || img.height <= 0) {
      throw Error(ErrorCode::ManifestError, "image " + img.id + " must have positive dimensions");
    }
    for (const auto& prev : manifest.images) {
      if (prev.id == img.id) throw Error(ErrorCode::ManifestError, "duplicate image id " + img.id);
    }
    manifest.images.push_back(std::move(img));
  }

  const auto homs = doc.contains("homographies") ? doc["homographies"] : nlohmann::json::array();
  if (!homs.is_array()) {
    throw Error(ErrorCode::ManifestError, "manifest: 'homographies' must be an array");
  }
  auto known = [&](const std::string& id) {
    return std::any_of(manifest.images.begin(), manifest.images.end(),
                       [&](const ManifestImage& im) { return im.id == id; });
  };
  for (std::size_t i = 0; i < homs.size(); ++i) {
    const std::string where = "homographies[" + std::to_string(i) + "]";
    ManifestHomography h;
    h.from_id = detail::manifest_field<std::string>(homs[i], "from", where);
    h.to_id = detail::manifest_field<std::string>(homs[i], "to", where);
    h.file_path = detail::manifest_field<std::string>(homs[i], "path", where);
    if (!known(h.from_id)) throw Error(ErrorCode::ManifestError, where + ": unknown image " + h.from_id);
    if (!known(h.to_id)) throw Error(ErrorCode::ManifestError, where + ": unknown image " + h.to_id);
    manifest.homographies.push_back(std::move(h));
  }

  for (std::size_t i = 1; i < manifest.images.size(); ++i) {
    manifest.homography_to(manifest.images[i].id);
  }
  return manifest;
}

inline std::string write_manifest(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["name"] = manifest.name;
  if (manifest.detector) doc["detector"] = *manifest.detector;
  doc["images"] = nlohmann::ordered_json::array();
  for (const auto& img : manifest.images) {
    nlohmann::ordered_json j;
    j["id"] = img.id;
    j["width"] = img.width;
    j["height"] = img.height;
    j["keypoints"] = img.keypoint_file_path;
    if (img.label) j["label"] = *img.label;
    doc["images"].push_back(std::move(j));
  }
  doc["homographies"] = nlohmann::ordered_json::array();
  for (const auto& h : manifest.homographies) {
    doc["homographies"].push_back({{"from", h.from_id}, {"to", h.to_id}, {"path", h.file_path}});
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "failed reading " + path.string());
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

/// Prefixes errors raised while parsing a file with its path.
template <typename Fn>
auto with_file_context(const std::filesystem::path& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(e.code(), path.string() + ": " + e.detail(), e.line());
  }
}

inline KeypointSet load_keypoints(const std::filesystem::path& path, std::string image_id,
                                  int width, int height) {
  const std::string text = read_text_file(path);
  return with_file_context(path, [&] {
    return parse_keypoints(text, std::move(image_id), width, height);
  });
}

inline Homography load_homography(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return with_file_context(path, [&] { return parse_homography(text); });
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return with_file_context(path, [&] { return parse_manifest(text); });
}

}  // namespace repeval
