#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace rflab {

/// Largest chart dimension the tensor kernels are instantiated for.
inline constexpr int kMaxDim = 4;

/// Packed index of the symmetric pair (i, j) in an n x n matrix stored as its
/// upper triangle, row by row.
constexpr int sym_index(int i, int j, int n) noexcept {
  if (i > j) {
    const int t = i;
    i = j;
    j = t;
  }
  return i * n - i * (i - 1) / 2 + (j - i);
}

constexpr int sym_size(int n) noexcept { return n * (n + 1) / 2; }

using Coords = std::array<int, kMaxDim>;
using Point = std::array<double, kMaxDim>;

namespace core {

/// Uniform periodic grid on a rectangular chart (torus topology).
class ChartGrid {
 public:
  ChartGrid() = default;
  ChartGrid(std::vector<int> extents, std::vector<double> periods);

  static ChartGrid cube(int dimension, int nodes_per_axis, double period);

  int dimension() const noexcept { return dim_; }
  int extent(int axis) const { return extents_[axis]; }
  double period(int axis) const { return periods_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double min_spacing() const;
  std::size_t stride(int axis) const { return strides_[axis]; }
  std::size_t node_count() const noexcept { return count_; }
  double cell_volume() const noexcept { return cell_volume_; }
  const std::vector<int>& extents() const noexcept { return extents_; }
  const std::vector<double>& periods() const noexcept { return periods_; }

  Coords coords(std::size_t node) const;
  /// Node for integer coordinates, wrapped periodically.
  std::size_t node(const Coords& c) const;
  /// Neighbor one step along an axis (direction +1 or -1), wrapped.
  std::size_t neighbor(std::size_t node, int axis, int direction) const {
    return (*neighbors_)[(node * dim_ + axis) * 2 + (direction > 0 ? 0 : 1)];
  }
  std::size_t shifted(std::size_t node, int axis, int offset) const;
  Point position(std::size_t node) const;
  /// Node nearest to a chart point (wrapped).
  std::size_t nearest_node(const Point& x) const;

  bool same_as(const ChartGrid& other) const noexcept;

 private:
  int dim_ = 0;
  std::vector<int> extents_;
  std::vector<double> periods_;
  std::vector<double> spacing_;
  std::vector<std::size_t> strides_;
  std::size_t count_ = 0;
  double cell_volume_ = 0.0;
  std::shared_ptr<const std::vector<std::uint32_t>> neighbors_;
};

/// Symmetric 2-tensor per node, stored packed (sym_index order).
class SymmetricField {
 public:
  SymmetricField() = default;
  explicit SymmetricField(ChartGrid chart);

  const ChartGrid& chart() const noexcept { return chart_; }
  int dimension() const noexcept { return chart_.dimension(); }
  int packed_size() const noexcept { return sym_size(chart_.dimension()); }

  double operator()(std::size_t node, int i, int j) const {
    return data_[node * packed_size() + sym_index(i, j, dimension())];
  }
  void set(std::size_t node, int i, int j, double value) {
    data_[node * packed_size() + sym_index(i, j, dimension())] = value;
  }
  std::span<const double> packed(std::size_t node) const {
    return {data_.data() + node * packed_size(), static_cast<std::size_t>(packed_size())};
  }
  std::span<double> packed(std::size_t node) {
    return {data_.data() + node * packed_size(), static_cast<std::size_t>(packed_size())};
  }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 protected:
  ChartGrid chart_;
  std::vector<double> data_;
};

/// Riemannian metric sampled on a periodic chart. Symmetry is structural
/// (packed storage); positive-definiteness is checked by validate().
class MetricField : public SymmetricField {
 public:
  MetricField() = default;
  /// Euclidean metric on the chart.
  explicit MetricField(ChartGrid chart);

  /// Samples fill(x, g) at every node; g is a full row-major n x n buffer and
  /// only its upper triangle is read.
  static MetricField sample(const ChartGrid& chart,
                            const std::function<void(const Point& x, std::span<double> g)>& fill);

  MetricField scaled(double c) const;

  /// Throws ErrorCode::DegenerateMetric naming the first node whose smallest
  /// eigenvalue is below kMinEigenvalue.
  void validate() const;

  static constexpr double kMinEigenvalue = 1e-10;
};

using ScalarField = std::vector<double>;

}  // namespace core
}  // namespace rflab
