#pragma once

#include <functional>
#include <vector>

#include "rflab/checks.hpp"
#include "rflab/grid.hpp"

namespace rflab::moser {

/// Heat-type problem df/dt = Delta_{g(t)} f + b f on the ball N of radius
/// `radius` in R^n with g(t) = sigma(t) * euclidean and f = 0 on the boundary.
struct MoserProblem {
  int n = 3;
  double radius = 1.0;   // chart radius of N (the "2R" ball around its centre)
  int nodes = 32;        // grid nodes across the diameter
  double T = 0.1;
  int steps = 200;
  double q = 4.0;
  double p0 = 5.0;
  double b = 0.0;        // constant coefficient, >= 0
  double beta = -1.0;    // < 0: computed as sup_t (int b^{q/2})^{2/q}
  double cs = -1.0;      // < 0: sharp Euclidean constant (scale invariant, bounds C_S of any ball)
  double l = -1.0;       // < 0: computed from sigma
  /// Metric scale samples (t, sigma), piecewise linear; empty means sigma = 1.
  std::vector<std::pair<double, double>> sigma;
  /// Initial data in chart coordinates; default is a Gaussian bump of width radius/4.
  std::function<double(const Point&)> initial;
  double amplitude = 1.0;

  /// Throws Validation when an invariant fails.
  void validate() const;
  double sigma_at(double t) const;
};

struct IterationSchedule {
  double mu = 0.0;
  std::vector<double> p;    // p_k = p0 mu^k
  std::vector<double> tau;  // tau_k = (1 - mu^-(k+1)) t
  std::vector<double> R;    // R_k = (R/2)(1 + mu^(-k/2))
};
IterationSchedule schedule(int n, double p0, double t, double R, int levels);

/// Space-time solution on the nodes of the box grid (zero off the ball).
struct HeatSolution {
  int n = 3;
  int nodes = 0;
  double h = 0.0;
  double radius = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> frames;  // per time, per node
  std::vector<std::uint8_t> free;           // interior nodes of the ball
  std::vector<double> sigma;                // metric scale per time

  std::size_t node_count() const { return free.size(); }
  Point position(std::size_t node) const;
  std::size_t node_at(const Point& x) const;
  /// int f dv_t over the ball at frame k.
  double mass(std::size_t k) const;
  double sup(std::size_t k) const;
};

/// Backward Euler in the diffusion with exact growth factor:
/// (I - dt/sigma(t+dt) Delta_h) f^{k+1} = e^{b dt} f^k. Nonnegative.
HeatSolution solve_heat(const MoserProblem& problem);

/// (q / (n p beta C_S^2))^{nq / ((q-n)(n-2))}; Domain error for q <= n or n < 3.
double epsilon_choice(int n, double q, double p, double beta, double cs);
/// log of the same; finite where epsilon itself over- or underflows.
double log_epsilon_choice(int n, double q, double p, double beta, double cs);
/// (n/q) eps^{(1-n/q)(n-2)/n} beta C_S^2 evaluated through log eps; equals 1/p.
double epsilon_identity(int n, double q, double p, double beta, double cs);

/// Constant of the basic energy estimate, obtained by multiplying the
/// inequality preceding it by p with the above epsilon:
/// C1(p) = p beta (1 - n/q) eps^{-(n-2)/q} + sqrt(n) l, tending to sqrt(n) l as beta -> 0.
double c1(int n, double q, double p, double beta, double cs, double l);

/// (1+2/n)^{(n^2+2n)/(4p0)} C_S^{n/p0} (C1 + 1/t + e^{lT}/R^2)^{(n+2)/(2p0)}.
double moser_coefficient(int n, double p0, double cs, double c1_value, double t, double l, double T, double R);

struct BoundTerms {
  double R = 0.0;
  double beta = 0.0;
  double cs = 0.0;
  double l = 0.0;
  double c1 = 0.0;
  double coefficient = 0.0;
  double integral = 0.0;  // int_0^T int_{B_R(x)} f^p0 dv_t
  double bound = 0.0;
  double bound_c1_doubled = 0.0;
};

/// Resolved beta, C_S and l of a problem.
double resolved_beta(const MoserProblem& p);
double resolved_cs(const MoserProblem& p);
double resolved_l(const MoserProblem& p);

/// Right side of the sup estimate at (x, t), with R = dist_{g(0)}(x, boundary) / 2.
/// Geometry error when x is within two grid spacings of the boundary.
BoundTerms moser_bound(const MoserProblem& problem, const HeatSolution& sol, double t, const Point& x);

struct MoserReport {
  std::vector<EstimateCheck> checks;
  double worst_margin = 0.0;
  double max_sharpness = 0.0;  // max f / bound
};

/// f(x,t) <= bound on a grid of interior nodes and times.
MoserReport verify_moser(const MoserProblem& problem);
MoserReport verify_moser(const MoserProblem& problem, const HeatSolution& sol);

}  // namespace rflab::moser
