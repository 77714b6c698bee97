#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace rflab {

enum class ErrorCode {
  InvalidArgument = 1,
  DegenerateMetric,
  Domain,
  ChartMismatch,
  ChartTooSmall,
  ChartExit,
  Unsupported,
  PositivityLoss,
  RejectedStep,
  Stepping,
  Resample,
  Geometry,
  Parse,
  Validation,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

/// Library error. Carries a code for the C boundary and, where a grid node is
/// at fault (degenerate metric, positivity loss), the offending node index.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> node = std::nullopt)
      : std::runtime_error(what), code_(code), node_(node) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> node() const noexcept { return node_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> node_;
};

}  // namespace rflab
