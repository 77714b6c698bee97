#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace rflab {

/// One inequality instance lhs <= rhs.
struct EstimateCheck {
  std::string id;      // unique within a ledger
  std::string anchor;  // registry entry naming what is checked
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;  // absolute
  bool applicable = true;
  std::string reason;  // why not applicable
  std::map<std::string, double> context;

  double margin() const noexcept { return rhs - lhs; }
  bool passed() const noexcept { return !applicable || margin() >= -tolerance; }
};

/// Relative tolerance 1e-6 on the rhs scale.
inline double default_tolerance(double rhs) noexcept { return 1e-6 * std::max(1.0, std::abs(rhs)); }

inline EstimateCheck make_check(std::string id, std::string anchor, double lhs, double rhs) {
  EstimateCheck c;
  c.id = std::move(id);
  c.anchor = std::move(anchor);
  c.lhs = lhs;
  c.rhs = rhs;
  c.tolerance = default_tolerance(rhs);
  return c;
}

struct AnchorInfo {
  std::string_view anchor;
  std::string_view statement;
};

/// Every anchor a check may carry.
std::span<const AnchorInfo> anchor_registry() noexcept;
bool known_anchor(std::string_view anchor) noexcept;

}  // namespace rflab
