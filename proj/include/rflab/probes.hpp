#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rflab/curvature.hpp"
#include "rflab/error.hpp"
#include "rflab/grid.hpp"
#include "rflab/models.hpp"

namespace rflab::probes {

/// A point in one of a geometry's charts.
struct ChartPoint {
  Point x{};
  int chart = 0;
};

/// Local coordinate description of a Riemannian manifold. Index layout:
/// metric g[i*n+j]; connection Gamma^k_ij at [(k*n+i)*n+j] (for frame-based
/// geometries i is the differentiating direction and the table need not be
/// symmetric); riemann R_ijkl at [((i*n+j)*n+k)*n+l].
class LocalGeometry {
 public:
  virtual ~LocalGeometry() = default;
  virtual int dimension() const = 0;
  virtual void metric(const ChartPoint& p, double* g) const = 0;
  virtual void connection(const ChartPoint& p, double* gamma) const = 0;
  virtual void riemann(const ChartPoint& p, double* R) const = 0;
  /// Moves (p, vectors) to a preferred chart. Vectors are n-blocks.
  virtual void normalize(ChartPoint& /*p*/, std::span<double> /*vectors*/) const {}
  /// False once p can no longer be resolved (ChartExit).
  virtual bool resolvable(const ChartPoint& /*p*/) const { return true; }
};

/// Grid metric with multilinear periodic interpolation of g, Gamma and Rm.
class GridGeometry final : public LocalGeometry {
 public:
  explicit GridGeometry(core::MetricField g, int workers = 1);
  int dimension() const override { return g_.dimension(); }
  void metric(const ChartPoint& p, double* g) const override;
  void connection(const ChartPoint& p, double* gamma) const override;
  void riemann(const ChartPoint& p, double* R) const override;
  const core::MetricField& field() const noexcept { return g_; }
  const core::CurvatureBundle& curvature() const noexcept { return bundle_; }

 private:
  template <class Fn>
  void interpolate(const Point& x, Fn&& corner) const;
  core::MetricField g_;
  core::CurvatureBundle bundle_;
};

/// Round sphere in two stereographic charts (chart 0 from the south pole at
/// x = 0, chart 1 related by inversion). Switches chart when |x| > 1.
class SphereGeometry final : public LocalGeometry {
 public:
  SphereGeometry(int n, double r);
  int dimension() const override { return n_; }
  void metric(const ChartPoint& p, double* g) const override;
  void connection(const ChartPoint& p, double* gamma) const override;
  void riemann(const ChartPoint& p, double* R) const override;
  void normalize(ChartPoint& p, std::span<double> vectors) const override;
  double radius() const noexcept { return r_; }
  /// Embedding in R^{n+1} of a chart point.
  std::vector<double> embed(const ChartPoint& p) const;

 private:
  int n_;
  double r_;
};

/// Left-invariant metric in an orthonormal frame (Milnor, Heisenberg).
/// Positions are developments in the Lie algebra and carry no geometry;
/// velocities and transported vectors are frame components.
class LeftInvariantGeometry final : public LocalGeometry {
 public:
  explicit LeftInvariantGeometry(const zoo::FrameAlgebra& algebra);
  int dimension() const override { return 3; }
  void metric(const ChartPoint& p, double* g) const override;
  void connection(const ChartPoint& p, double* gamma) const override;
  void riemann(const ChartPoint& p, double* R) const override;

 private:
  std::array<double, 27> gamma_{};
  std::array<double, 81> R_{};
};

struct GeodesicPath {
  ChartPoint base;
  std::vector<double> s;
  std::vector<ChartPoint> position;
  std::vector<std::array<double, kMaxDim>> velocity;
};

/// Thrown when a geodesic leaves the resolvable region.
class ChartExitError : public Error {
 public:
  ChartExitError(const std::string& what, GeodesicPath partial)
      : Error(ErrorCode::ChartExit, what), partial_(std::move(partial)) {}
  const GeodesicPath& partial() const noexcept { return partial_; }

 private:
  GeodesicPath partial_;
};

/// RK4 integration of x'' + Gamma(x', x') = 0 with arc-length step ds.
/// v must be unit in g (within 1e-6).
GeodesicPath geodesic(const LocalGeometry& geo, const ChartPoint& x, std::span<const double> v, double length,
                      double ds);

struct ConjugateRadius {
  double estimate = 0.0;     // min over directions, or the cap
  bool found = false;        // false: no conjugate point up to the cap
  double margin = 0.0;       // resolution-dependent error bar to subtract
  int directions = 0;
};

/// Integrates the Jacobi system in a parallel orthonormal frame transverse to
/// each sampled geodesic and reports the first zero of the transverse Jacobi
/// determinant (sign change plus bisection, and touching zeros located as
/// minima of the smallest singular value).
ConjugateRadius jacobi_conjugate_radius(const LocalGeometry& geo, const ChartPoint& base, int samples, double cap,
                                        double ds);

/// exp_x(w) by RK4 with at most arc-length step ds.
ChartPoint exp_map(const LocalGeometry& geo, const ChartPoint& x, std::span<const double> w, double ds);

/// Coordinate `dim` (< 5) of the index-th Halton point.
double halton(std::uint64_t index, int dim);

/// Deterministic g-unit directions at a point (axes first, then Halton points).
std::vector<std::vector<double>> sample_directions(const LocalGeometry& geo, const ChartPoint& p, int count);

/// Finite point set with a distance, the common ground of diameter, excess
/// and covering probes.
class MetricSample {
 public:
  virtual ~MetricSample() = default;
  virtual std::size_t size() const = 0;
  virtual std::vector<double> distances_from(std::size_t i) const = 0;
  /// A shorter certified path length between i and j, or `upper`.
  virtual double relaxed(std::size_t /*i*/, std::size_t /*j*/, double upper) const { return upper; }
};

/// Dijkstra on grid nodes; edges join each node to the primitive offsets in
/// [-reach, reach]^n with trapezoidal g-length of the chart segment.
class GraphDistance final : public MetricSample {
 public:
  GraphDistance(const core::MetricField& g, int reach = 2, const LocalGeometry* relax = nullptr);
  std::size_t size() const override { return chart_.node_count(); }
  std::vector<double> distances_from(std::size_t i) const override;
  double relaxed(std::size_t i, std::size_t j, double upper) const override;
  const core::ChartGrid& chart() const noexcept { return chart_; }

 private:
  core::ChartGrid chart_;
  std::vector<std::array<int, kMaxDim>> offsets_;
  std::vector<double> weights_;  // node * offsets + k
  const LocalGeometry* relax_;
};

/// Exact minimum-image distances on a flat torus, sampled at grid nodes.
class FlatTorusSample final : public MetricSample {
 public:
  explicit FlatTorusSample(core::ChartGrid chart) : chart_(std::move(chart)) {}
  std::size_t size() const override { return chart_.node_count(); }
  std::vector<double> distances_from(std::size_t i) const override;
  double distance(std::size_t i, std::size_t j) const;

 private:
  core::ChartGrid chart_;
};

/// Points on the round sphere: the poles of every axis, then a symmetric
/// low-discrepancy set closed under the antipodal map.
class SphereSample final : public MetricSample {
 public:
  SphereSample(int n, double r, std::size_t count);
  std::size_t size() const override { return points_.size(); }
  std::vector<double> distances_from(std::size_t i) const override;
  double distance(std::size_t i, std::size_t j) const;

 private:
  int n_;
  double r_;
  std::vector<std::vector<double>> points_;  // unit vectors in R^{n+1}
};

/// Shooting solve exp_a(w) = b started from the chart displacement; returns
/// |w|_g, or nullopt when Newton does not converge.
std::optional<double> shoot_distance(const LocalGeometry& geo, const ChartPoint& a, const Point& b_unwrapped,
                                     double ds);

struct Diameter {
  double value = 0.0;        // relaxed
  double graph_bound = 0.0;  // sample-distance value of the same pair
  std::size_t a = 0, b = 0;
};

/// Repeated double sweep from `sources` seeds (deterministic).
Diameter diameter(const MetricSample& sample, int sources = 4);

struct Excess {
  double value = 0.0;
  std::size_t p = 0, q = 0;
};

/// max_x d(p,x) + d(x,q) - d(p,q) for one pair.
double excess_for_pair(const MetricSample& sample, std::size_t p, std::size_t q);
/// Min over `pairs` seeded pairs (each p with its farthest point and a random q).
Excess excess(const MetricSample& sample, int pairs, std::uint64_t seed);

double volume(const core::MetricField& g);
/// omega_{n-1} int_0^{pi r} (r sin(s/r))^{n-1} ds by adaptive Gauss-Kronrod.
double sphere_volume_polar(int n, double r);

struct EpsilonNet {
  std::vector<std::size_t> centers;
  std::size_t count = 0;
  std::size_t multiplicity = 0;
};

/// Greedy maximal epsilon-separated subset of B_p(r) (pairwise > epsilon);
/// the closed epsilon-balls around it cover B_p(r). Multiplicity is the
/// largest number of closed balls containing one point of B_p(r).
EpsilonNet epsilon_net(const MetricSample& sample, std::size_t p, double r, double epsilon);

/// Volume of the ball of radius rho in the simply connected space of
/// curvature H, divided by the volume of the unit (n-1)-sphere.
double comparison_ball_volume(int n, double H, double rho);
/// Bishop-Gromov bounds for an epsilon-net of B_p(r) under Ric >= (n-1)H.
double covering_count_bound(int n, double H, double r, double epsilon);
double covering_multiplicity_bound(int n, double H, double epsilon);

/// Polyline in chart coordinates.
struct ChartCurve {
  std::vector<Point> nodes;
};

/// g-length with the metric interpolated at segment midpoints.
double curve_length(const core::MetricField& g, const ChartCurve& c);
/// Deterministic bundle of straight segments and circles in the chart.
std::vector<ChartCurve> curve_bundle(const core::ChartGrid& chart, int count, std::uint64_t seed);

// Sobolev constant -----------------------------------------------------------

/// Box of nodes with a metric and a mask of free nodes. Functions vanish on
/// masked-out nodes; the outer layer of the box is never free.
struct SobolevPatch {
  int n = 3;
  std::vector<int> extents;
  double h = 1.0;
  std::vector<double> metric;  // packed symmetric per node
  std::vector<std::uint8_t> inside;
  double radius = 0.0;  // chart radius of the ball mask, 0 for other masks
  std::size_t node_count() const;
};

/// Flat chart ball of radius `radius` resolved with spacing h.
SobolevPatch flat_ball_patch(int n, double radius, double h);
/// Chart ball around a node of a periodic grid metric (ChartTooSmall when
/// the box would wrap onto itself).
SobolevPatch ball_patch(const core::MetricField& g, std::size_t center, double radius);
/// Same box with a smaller radius mask (for extension-by-zero comparisons).
SobolevPatch restrict_ball(const SobolevPatch& patch, double radius);

struct SobolevOptions {
  int starts = 2;
  int max_iterations = 80;
  double tolerance = 1e-6;  // relative gain below which an ascent stops
  std::span<const double> warm_start;  // on the estimator's mesh
  /// Nodes per axis of an internal tensor mesh over the patch box, stretched
  /// towards the centre by sinh(grading s); 0 uses the patch nodes.
  int graded_nodes = 0;
  double grading = 4.0;
};

struct SobolevEstimate {
  double value = 0.0;           // best quotient found (lower bound on C_S)
  double reference_bump = 0.0;  // best quotient of the bubble family alone
  std::vector<double> maximizer;
  int iterations = 0;
};

/// Quotient ||f||_{2n/(n-2)} / ||grad f||_2 of the piecewise-linear
/// interpolant on the Kuhn triangulation (exact integrals per simplex, metric
/// averaged per simplex). Throws Unsupported for n = 2.
double sobolev_quotient(const SobolevPatch& patch, std::span<const double> f);
SobolevEstimate sobolev_constant(const SobolevPatch& patch, const SobolevOptions& opt = {});

/// Sharp Euclidean constant K(n) = (pi n (n-2))^{-1/2} (Gamma(n)/Gamma(n/2))^{1/n}.
double sharp_sobolev_constant(int n);

/// K(n) (b/a)^{n/4}, where a and b bound the eigenvalues of g on the patch
/// box. An upper bound for C_S when g is close to constant.
double comparison_sobolev_bound(const SobolevPatch& patch);

// Reports --------------------------------------------------------------------

struct GeometryReport {
  double diameter = 0.0;
  double diameter_graph = 0.0;
  double volume = 0.0;
  double excess = 0.0;
  ConjugateRadius conj;
  double sobolev = 0.0;
};

struct MembershipCard {
  double sup_ric = 0.0;
  double conj = 0.0;
  bool conj_exact = false;
  double injectivity_upper = -1.0;  // known upper bound on inj, -1 if none
  bool member = false;
};

/// sup|Ric| and conjugate radius of a model; membership in the class
/// {|Ric| <= 1, conj >= r0}.
MembershipCard membership_card(const zoo::ModelMetric& m, double r0, int samples = 12);

}  // namespace rflab::probes
