#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rflab/grid.hpp"

namespace rflab::core {

/// Connection coefficients Gamma^k_ij per node, symmetric in (i, j).
/// Layout: node * n * sym_size(n) + k * sym_size(n) + sym_index(i, j).
class ChristoffelField {
 public:
  ChristoffelField() = default;
  explicit ChristoffelField(ChartGrid chart);

  const ChartGrid& chart() const noexcept { return chart_; }
  double operator()(std::size_t node, int k, int i, int j) const {
    const int n = chart_.dimension();
    return data_[(node * n + k) * sym_size(n) + sym_index(i, j, n)];
  }
  std::span<const double> at(std::size_t node) const {
    const std::size_t block = static_cast<std::size_t>(chart_.dimension() * sym_size(chart_.dimension()));
    return {data_.data() + node * block, block};
  }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  ChartGrid chart_;
  std::vector<double> data_;
};

/// Curvature of one metric: connection, Riemann (all indices down),
/// Ricci, scalar curvature and pointwise norms taken with the metric itself.
///
/// Conventions: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
/// R_ijkl = <R(d_i, d_j) d_k, d_l>, Ric_jk = R^l_ljk, so the round sphere of
/// radius r has Ric = (n-1)/r^2 g and R_ijkl X^i Y^j Y^k X^l > 0.
/// |Rm| is the full contraction sqrt(R_ijkl R^ijkl); |Ric| is the operator
/// norm (largest |eigenvalue| of g^-1 Ric), with the full contraction kept
/// alongside for quantities that need it.
struct CurvatureBundle {
  ChartGrid chart;
  ChristoffelField christoffel;
  std::vector<double> riemann;      // node * n^4 + ((i*n + j)*n + k)*n + l
  SymmetricField ricci;
  ScalarField scalar;
  ScalarField rm_norm;
  ScalarField ric_norm;             // operator norm
  ScalarField ric_full_norm;        // sqrt(R_ij R^ij)
  ScalarField volume_density;       // sqrt(det g)
  double sup_norm_rm = 0.0;
  double sup_norm_ric = 0.0;
  double sup_full_norm_ric = 0.0;

  double R(std::size_t node, int i, int j, int k, int l) const {
    const int n = chart.dimension();
    return riemann[node * n * n * n * n + ((static_cast<std::size_t>(i) * n + j) * n + k) * n + l];
  }
  std::span<const double> riemann_at(std::size_t node) const {
    const int n = chart.dimension();
    const std::size_t block = static_cast<std::size_t>(n * n * n * n);
    return {riemann.data() + node * block, block};
  }
  /// (integral |Rm|^p dvol)^(1/p) over the whole chart.
  double lp_norm_rm(double p) const;
  /// Same, restricted to a node subset.
  double lp_norm_rm(double p, std::span<const std::size_t> nodes) const;
};

ChristoffelField christoffel(const MetricField& g, int workers = 1);
CurvatureBundle riemann(const MetricField& g, int workers = 1);
/// Ricci tensor only; cheaper than riemann() and identical to bundle.ricci.
SymmetricField ricci(const MetricField& g, int workers = 1);

/// Pointwise operator norm of a symmetric 2-tensor measured in g.
ScalarField operator_norm(const MetricField& g, const SymmetricField& t);

struct CurvatureNorms {
  double sup_rm = 0.0;
  double sup_ric = 0.0;
  double lp_rm = 0.0;
};
CurvatureNorms norms(const CurvatureBundle& bundle, const MetricField& g, double p);

/// Sectional curvature of span{X, Y} at a node.
double sectional_curvature(const CurvatureBundle& bundle, const MetricField& g, std::size_t node,
                           std::span<const double> X, std::span<const double> Y);

/// (1/sqrt g) d_i (sqrt g g^ij d_j u) with centered differences.
ScalarField laplace_beltrami(const MetricField& g, const ScalarField& u, int workers = 1);

/// sup over nodes and g0-unit vectors of |g1(v,v) - g0(v,v)|.
double metric_c0_distance(const MetricField& g1, const MetricField& g0);

/// sqrt(det g) * cell volume summed over the chart.
double total_volume(const MetricField& g);

/// Per-node sqrt(det g).
ScalarField volume_density(const MetricField& g);

}  // namespace rflab::core
