#include "rflab/grid.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "rflab/error.hpp"

namespace rflab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::DegenerateMetric: return "degenerate-metric";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::ChartMismatch: return "chart-mismatch";
    case ErrorCode::ChartTooSmall: return "chart-too-small";
    case ErrorCode::ChartExit: return "chart-exit";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::PositivityLoss: return "positivity-loss";
    case ErrorCode::RejectedStep: return "rejected-step";
    case ErrorCode::Stepping: return "stepping";
    case ErrorCode::Resample: return "resample";
    case ErrorCode::Geometry: return "geometry";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

namespace core {

ChartGrid::ChartGrid(std::vector<int> extents, std::vector<double> periods)
    : dim_(static_cast<int>(extents.size())), extents_(std::move(extents)), periods_(std::move(periods)) {
  if (dim_ < 2 || dim_ > kMaxDim)
    throw Error(ErrorCode::Unsupported, "chart dimension must be in [2, " + std::to_string(kMaxDim) + "]");
  if (periods_.size() != extents_.size())
    throw Error(ErrorCode::InvalidArgument, "chart extents and periods differ in length");
  strides_.resize(dim_);
  spacing_.resize(dim_);
  count_ = 1;
  cell_volume_ = 1.0;
  for (int a = dim_ - 1; a >= 0; --a) {
    if (extents_[a] < 4) throw Error(ErrorCode::InvalidArgument, "chart needs at least 4 nodes per axis");
    if (!(periods_[a] > 0.0) || !std::isfinite(periods_[a]))
      throw Error(ErrorCode::InvalidArgument, "chart periods must be positive");
    strides_[a] = count_;
    count_ *= static_cast<std::size_t>(extents_[a]);
    spacing_[a] = periods_[a] / extents_[a];
    cell_volume_ *= spacing_[a];
  }
  auto table = std::make_shared<std::vector<std::uint32_t>>(count_ * dim_ * 2);
  for (std::size_t node = 0; node < count_; ++node)
    for (int a = 0; a < dim_; ++a) {
      (*table)[(node * dim_ + a) * 2 + 0] = static_cast<std::uint32_t>(shifted(node, a, +1));
      (*table)[(node * dim_ + a) * 2 + 1] = static_cast<std::uint32_t>(shifted(node, a, -1));
    }
  neighbors_ = std::move(table);
}

ChartGrid ChartGrid::cube(int dimension, int nodes_per_axis, double period) {
  return ChartGrid(std::vector<int>(dimension, nodes_per_axis), std::vector<double>(dimension, period));
}

double ChartGrid::min_spacing() const {
  double h = spacing_[0];
  for (double s : spacing_) h = std::min(h, s);
  return h;
}

Coords ChartGrid::coords(std::size_t node) const {
  Coords c{};
  for (int a = 0; a < dim_; ++a) c[a] = static_cast<int>((node / strides_[a]) % extents_[a]);
  return c;
}

std::size_t ChartGrid::node(const Coords& c) const {
  std::size_t idx = 0;
  for (int a = 0; a < dim_; ++a) {
    int v = c[a] % extents_[a];
    if (v < 0) v += extents_[a];
    idx += static_cast<std::size_t>(v) * strides_[a];
  }
  return idx;
}

std::size_t ChartGrid::shifted(std::size_t node, int axis, int offset) const {
  const int n = extents_[axis];
  const int c = static_cast<int>((node / strides_[axis]) % n);
  int d = (c + offset) % n;
  if (d < 0) d += n;
  return node + (static_cast<std::ptrdiff_t>(d) - c) * static_cast<std::ptrdiff_t>(strides_[axis]);
}

Point ChartGrid::position(std::size_t node) const {
  const Coords c = coords(node);
  Point x{};
  for (int a = 0; a < dim_; ++a) x[a] = c[a] * spacing_[a];
  return x;
}

std::size_t ChartGrid::nearest_node(const Point& x) const {
  Coords c{};
  for (int a = 0; a < dim_; ++a) c[a] = static_cast<int>(std::lround(x[a] / spacing_[a]));
  return node(c);
}

bool ChartGrid::same_as(const ChartGrid& other) const noexcept {
  return extents_ == other.extents_ && periods_ == other.periods_;
}

SymmetricField::SymmetricField(ChartGrid chart) : chart_(std::move(chart)) {
  data_.assign(chart_.node_count() * static_cast<std::size_t>(packed_size()), 0.0);
}

MetricField::MetricField(ChartGrid chart) : SymmetricField(std::move(chart)) {
  const int n = dimension();
  for (std::size_t node = 0; node < chart_.node_count(); ++node)
    for (int i = 0; i < n; ++i) set(node, i, i, 1.0);
}

MetricField MetricField::sample(const ChartGrid& chart,
                                const std::function<void(const Point&, std::span<double>)>& fill) {
  MetricField g(chart);
  const int n = chart.dimension();
  std::vector<double> buf(static_cast<std::size_t>(n * n));
  for (std::size_t node = 0; node < chart.node_count(); ++node) {
    std::fill(buf.begin(), buf.end(), 0.0);
    fill(chart.position(node), buf);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) g.set(node, i, j, buf[i * n + j]);
  }
  return g;
}

MetricField MetricField::scaled(double c) const {
  MetricField out = *this;
  for (double& v : out.data_) v *= c;
  return out;
}

void MetricField::validate() const {
  const int n = dimension();
  Eigen::MatrixXd m(n, n);
  for (std::size_t node = 0; node < chart_.node_count(); ++node) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = (*this)(node, i, j);
    if (!m.allFinite()) {
      throw Error(ErrorCode::DegenerateMetric, "non-finite metric at node " + std::to_string(node), node);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    if (!(lo >= kMinEigenvalue)) {
      const Coords c = chart_.coords(node);
      std::ostringstream msg;
      msg << "degenerate metric at node " << node << " (";
      for (int a = 0; a < n; ++a) msg << (a ? "," : "") << c[a];
      msg << "): smallest eigenvalue " << lo;
      throw Error(ErrorCode::DegenerateMetric, msg.str(), node);
    }
  }
}

}  // namespace core
}  // namespace rflab
