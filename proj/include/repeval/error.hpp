#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace repeval {

enum class ErrorCode {
  PointAtInfinity,
  DegenerateRegion,
  InvalidRegion,
  SingularHomography,
  ParseError,
  ManifestError,
  UndefinedMetric,
  DescriptorUnavailable,
  DegenerateSeries,
  LengthMismatch,
  InsufficientData,
  InvalidArgument,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateRegion: return "DegenerateRegion";
    case ErrorCode::InvalidRegion: return "InvalidRegion";
    case ErrorCode::SingularHomography: return "SingularHomography";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::DescriptorUnavailable: return "DescriptorUnavailable";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Structured error raised by every module. `line()` is set for errors that
/// come from a text parser (1-based).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(format(code, message, line)),
        code_(code),
        line_(line),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out(to_string(code));
    if (line) out += " at line " + std::to_string(*line);
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string detail_;
};

}  // namespace repeval
