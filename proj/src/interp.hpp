#pragma once

#include <cmath>

#include "rflab/grid.hpp"

namespace rflab::detail {

/// Calls fn(node, weight) for the 2^n corners of the periodic cell holding x
/// (multilinear weights).
template <class Fn>
void for_each_corner(const core::ChartGrid& chart, const Point& x, Fn&& fn) {
  const int n = chart.dimension();
  Coords base{};
  double frac[kMaxDim] = {};
  for (int a = 0; a < n; ++a) {
    const double u = x[a] / chart.spacing(a);
    const double f = std::floor(u);
    base[a] = static_cast<int>(f);
    frac[a] = u - f;
  }
  for (int mask = 0; mask < (1 << n); ++mask) {
    Coords c = base;
    double w = 1.0;
    for (int a = 0; a < n; ++a) {
      if (mask & (1 << a)) {
        c[a] += 1;
        w *= frac[a];
      } else {
        w *= 1.0 - frac[a];
      }
    }
    if (w != 0.0) fn(chart.node(c), w);
  }
}

/// Metric at a chart point by multilinear interpolation, full n x n.
inline void interpolate_metric(const core::MetricField& g, const Point& x, double* out) {
  const int n = g.dimension();
  for (int k = 0; k < n * n; ++k) out[k] = 0.0;
  for_each_corner(g.chart(), x, [&](std::size_t node, double w) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out[i * n + j] += w * g(node, i, j);
  });
}

}  // namespace rflab::detail
