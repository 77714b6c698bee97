#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rflab/grid.hpp"

namespace rflab::zoo {

enum class Family { RoundSphere, FlatTorus, ProductSphereCircle, MilnorSU2, HeisenbergNil };

const char* family_name(Family f) noexcept;
std::optional<Family> parse_family(std::string_view name);

/// Closed-form geometry. Only the fields relevant to the family are read.
///
/// MilnorSU2: frame X1, X2, X3 with [X2,X3] = 2X1 (cyclic) and g(Xi,Xi) = lambda_i;
/// lambda = (l,l,l) is the round S^3 of radius sqrt(l).
/// HeisenbergNil: dx^2 + dy^2 + eps^2 (dz - x dy)^2 on the integer-lattice quotient.
struct ModelMetric {
  Family family = Family::FlatTorus;
  int n = 3;
  double radius = 1.0;
  std::vector<double> periods;
  double circle_length = 1.0;
  std::array<double, 3> lambda{1.0, 1.0, 1.0};
  double epsilon = 1.0;

  static ModelMetric round_sphere(int n, double r);
  static ModelMetric flat_torus(std::vector<double> periods);
  static ModelMetric product_sphere_circle(double r, double circle_length);
  static ModelMetric milnor(double l1, double l2, double l3);
  static ModelMetric heisenberg(double eps);

  int dimension() const noexcept { return n; }
  /// Throws Validation for non-positive or out-of-range parameters.
  void validate() const;
  /// The model for c*g.
  ModelMetric scaled(double c) const;
};

struct ExactCurvature {
  std::vector<double> ricci_eigenvalues;  // of g^-1 Ric, ascending
  double scalar = 0.0;
  double sectional_min = 0.0;
  double sectional_max = 0.0;
  double rm_norm = 0.0;        // sqrt(R_ijkl R^ijkl)
  double ric_norm = 0.0;       // operator norm
  double ric_full_norm = 0.0;  // sqrt(R_ij R^ij)
};

ExactCurvature exact_curvature(const ModelMetric& m);

double model_volume(const ModelMetric& m);
/// Largest |g1(v,v) - g0(v,v)| over g0-unit v for two members of one family.
double model_c0_distance(const ModelMetric& g1, const ModelMetric& g0);

/// Left-invariant orthonormal frame on a 3-dimensional group, [e_a,e_b] = C^c_ab e_c.
struct FrameAlgebra {
  std::array<double, 27> C{};  // C[(a*3+b)*3+c] = C^c_ab

  /// <nabla_{e_a} e_b, e_c> at [(a*3+b)*3+c].
  std::array<double, 27> connection() const;
  /// <R(e_a,e_b)e_c, e_d> at [((a*3+b)*3+c)*3+d].
  std::array<double, 81> riemann() const;
  /// Ric(e_b, e_c) at [b*3+c].
  std::array<double, 9> ricci() const;
};

/// MilnorSU2 and HeisenbergNil only.
FrameAlgebra frame_algebra(const ModelMetric& m);

/// Symmetry-reduced Ricci flow. Reduced state: r^2 (sphere, product), the
/// three lambda_i (Milnor), nothing (flat).
std::vector<double> reduced_state(const ModelMetric& m);
ModelMetric from_reduced(const ModelMetric& like, std::span<const double> state);
/// d(state)/dt under dg/dt = -2 Ric.
std::vector<double> reduced_rhs(const ModelMetric& like, std::span<const double> state);
/// Sup of |dg/dt| in g (full contraction), i.e. 2|Ric|.
double reduced_speed(const ModelMetric& m);

class ExactFlowSolution {
 public:
  explicit ExactFlowSolution(const ModelMetric& initial);

  Family family() const noexcept { return initial_.family; }
  const ModelMetric& initial() const noexcept { return initial_; }
  /// Infinity for the flat torus.
  double t_blowup() const noexcept { return t_blowup_; }
  /// Metric at time t in [0, t_blowup). Milnor values come from a
  /// Runge-Kutta-Fehlberg 7(8) integration at tolerance 1e-13.
  ModelMetric at(double t) const;

 private:
  ModelMetric initial_;
  double t_blowup_ = std::numeric_limits<double>::infinity();
};

/// Throws Unsupported for HeisenbergNil.
ExactFlowSolution exact_flow(const ModelMetric& m);

/// Grid realization on a periodic chart. The chart is centered on the model
/// origin; inside the core box the sampled metric is the exact model metric
/// (stereographic for spheres, Heisenberg coordinates for the nilmanifold),
/// outside it is blended to a constant metric so the chart stays periodic.
struct GridRealization {
  core::MetricField metric;
  /// Nodes whose finite-difference stencils only see core samples.
  std::vector<std::size_t> core_nodes;
  /// Model coordinates of a chart node = position - center.
  Point center{};
};

GridRealization realize(const ModelMetric& m, int nodes_per_axis, double chart_period, double core_half_width);

/// Perturbed flat torus: g = I + A * sum_m S_m cos(2 pi k_m.x / L + phi_m),
/// S_m random symmetric with sum ||S_m||_2 = 1, integer wave vectors with
/// max-norm equal to the frequency. Deterministic in the seed.
struct Perturbation {
  int n = 3;
  int nodes = 24;
  double period = 6.283185307179586;
  double amplitude = 0.1;
  int frequency = 1;
  int modes = 3;
  std::uint64_t seed = 1;
};

core::MetricField perturbed_torus(const Perturbation& p);

/// Uniform double in [0,1) from a 64-bit engine draw, platform independent.
inline double unit_from_bits(std::uint64_t x) noexcept { return static_cast<double>(x >> 11) * 0x1.0p-53; }

}  // namespace rflab::zoo
