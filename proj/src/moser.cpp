#include "rflab/moser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include "rflab/error.hpp"
#include "rflab/probes.hpp"

namespace rflab::moser {

void MoserProblem::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Validation, "moser problem: " + what); };
  if (n < 3 || n > kMaxDim) fail("dimension must be 3 or 4");
  if (!(radius > 0.0)) fail("radius must be positive");
  if (nodes < 5) fail("need at least 5 nodes across");
  if (!(T > 0.0)) fail("T must be positive");
  if (steps < 1) fail("steps must be >= 1");
  if (!(q > n)) fail("q must exceed n");
  if (!(p0 > 1.0)) fail("p0 must exceed 1");
  if (!(b >= 0.0)) fail("b must be nonnegative");
  if (!(amplitude >= 0.0)) fail("initial data must be nonnegative");
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (!(sigma[k].second > 0.0)) fail("metric scale must be positive");
    if (k > 0 && !(sigma[k].first > sigma[k - 1].first)) fail("metric scale times must increase");
  }
}

double MoserProblem::sigma_at(double t) const {
  if (sigma.empty()) return 1.0;
  if (t <= sigma.front().first) return sigma.front().second;
  if (t >= sigma.back().first) return sigma.back().second;
  const auto it = std::upper_bound(sigma.begin(), sigma.end(), t,
                                   [](double v, const std::pair<double, double>& s) { return v < s.first; });
  const auto& [t1, s1] = *it;
  const auto& [t0, s0] = *(it - 1);
  return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
}

IterationSchedule schedule(int n, double p0, double t, double R, int levels) {
  IterationSchedule s;
  s.mu = 1.0 + 2.0 / n;
  for (int k = 0; k < levels; ++k) {
    s.p.push_back(p0 * std::pow(s.mu, k));
    s.tau.push_back((1.0 - std::pow(s.mu, -(k + 1))) * t);
    s.R.push_back(0.5 * R * (1.0 + std::pow(s.mu, -0.5 * k)));
  }
  return s;
}

Point HeatSolution::position(std::size_t node) const {
  Point x{};
  for (int a = n - 1; a >= 0; --a) {
    x[a] = -radius + static_cast<double>(node % nodes) * h;
    node /= nodes;
  }
  return x;
}

std::size_t HeatSolution::node_at(const Point& x) const {
  std::size_t node = 0;
  for (int a = 0; a < n; ++a) {
    const long i = std::lround((x[a] + radius) / h);
    node = node * nodes + static_cast<std::size_t>(std::clamp<long>(i, 0, nodes - 1));
  }
  return node;
}

double HeatSolution::mass(std::size_t k) const {
  double s = 0.0;
  for (std::size_t v = 0; v < free.size(); ++v)
    if (free[v]) s += frames[k][v];
  return s * std::pow(h, n) * std::pow(sigma[k], 0.5 * n);
}

double HeatSolution::sup(std::size_t k) const { return *std::max_element(frames[k].begin(), frames[k].end()); }

HeatSolution solve_heat(const MoserProblem& problem) {
  problem.validate();
  HeatSolution sol;
  sol.n = problem.n;
  sol.nodes = problem.nodes % 2 == 0 ? problem.nodes + 1 : problem.nodes;
  sol.radius = problem.radius;
  sol.h = 2.0 * problem.radius / (sol.nodes - 1);
  const int n = sol.n, m = sol.nodes;
  std::size_t N = 1;
  for (int a = 0; a < n; ++a) N *= m;
  sol.free.assign(N, 0);
  std::vector<int> index(N, -1);
  int count = 0;
  for (std::size_t v = 0; v < N; ++v) {
    const Point x = sol.position(v);
    double r2 = 0.0;
    bool edge = false;
    std::size_t rem = v;
    for (int a = 0; a < n; ++a) {
      r2 += x[a] * x[a];
      const auto i = rem % m;
      rem /= m;
      edge = edge || i == 0 || i == static_cast<std::size_t>(m - 1);
    }
    if (!edge && r2 < problem.radius * problem.radius * (1.0 - 1e-12)) {
      sol.free[v] = 1;
      index[v] = count++;
    }
  }

  std::vector<std::size_t> stride(n, 1);
  for (int a = n - 2; a >= 0; --a) stride[a] = stride[a + 1] * m;
  std::vector<Eigen::Triplet<double>> trip;
  const double inv_h2 = 1.0 / (sol.h * sol.h);
  for (std::size_t v = 0; v < N; ++v) {
    if (index[v] < 0) continue;
    trip.emplace_back(index[v], index[v], 2.0 * n * inv_h2);
    for (int a = 0; a < n; ++a)
      for (int s : {-1, 1}) {
        const std::size_t w = s > 0 ? v + stride[a] : v - stride[a];
        if (index[w] >= 0) trip.emplace_back(index[v], index[w], -inv_h2);
      }
  }
  Eigen::SparseMatrix<double> L(count, count);  // -Delta_h
  L.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseMatrix<double> I(count, count);
  I.setIdentity();

  auto initial = problem.initial;
  if (!initial) {
    const double w = problem.radius / 4.0;
    initial = [&, w](const Point& x) {
      double r2 = 0.0;
      for (int a = 0; a < n; ++a) r2 += x[a] * x[a];
      return std::exp(-0.5 * r2 / (w * w));
    };
  }
  Eigen::VectorXd f(count);
  for (std::size_t v = 0; v < N; ++v)
    if (index[v] >= 0) {
      const double value = problem.amplitude * initial(sol.position(v));
      if (!(value >= 0.0)) throw Error(ErrorCode::Validation, "moser problem: initial data must be nonnegative");
      f[index[v]] = value;
    }

  auto frame = [&](const Eigen::VectorXd& x) {
    std::vector<double> out(N, 0.0);
    for (std::size_t v = 0; v < N; ++v)
      if (index[v] >= 0) out[v] = x[index[v]];
    return out;
  };
  const double dt = problem.T / problem.steps;
  const double growth = std::exp(problem.b * dt);
  sol.times.push_back(0.0);
  sol.frames.push_back(frame(f));
  sol.sigma.push_back(problem.sigma_at(0.0));
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-14);
  Eigen::SparseMatrix<double> A;  // the solver keeps a reference
  double factored = -1.0;
  for (int k = 1; k <= problem.steps; ++k) {
    const double t = k == problem.steps ? problem.T : k * dt;
    const double sig = problem.sigma_at(t);
    if (sig != factored) {
      A = I + (dt / sig) * L;
      cg.compute(A);
      factored = sig;
    }
    Eigen::VectorXd next = cg.solve(growth * f);
    if (cg.info() != Eigen::Success || !next.allFinite())
      throw Error(ErrorCode::Stepping, "heat solve did not converge");
    f = next.cwiseMax(0.0);
    sol.times.push_back(t);
    sol.frames.push_back(frame(f));
    sol.sigma.push_back(sig);
  }
  return sol;
}

double log_epsilon_choice(int n, double q, double p, double beta, double cs) {
  if (n < 3) throw Error(ErrorCode::Domain, "epsilon choice needs n >= 3");
  if (!(q > n)) throw Error(ErrorCode::Domain, "epsilon choice needs q > n");
  if (!(p > 0.0) || !(beta > 0.0) || !(cs > 0.0))
    throw Error(ErrorCode::Domain, "epsilon choice needs positive p, beta, C_S");
  return n * q / ((q - n) * (n - 2)) * std::log(q / (n * p * beta * cs * cs));
}

double epsilon_choice(int n, double q, double p, double beta, double cs) {
  return std::exp(log_epsilon_choice(n, q, p, beta, cs));
}

double epsilon_identity(int n, double q, double p, double beta, double cs) {
  const double log_eps = log_epsilon_choice(n, q, p, beta, cs);
  return n / q * std::exp((1.0 - n / q) * (n - 2) / n * log_eps) * beta * cs * cs;
}

double c1(int n, double q, double p, double beta, double cs, double l) {
  const double drift = std::sqrt(static_cast<double>(n)) * l;
  if (beta == 0.0) return drift;
  // eps^{-(n-2)/q} = (n p beta C_S^2 / q)^{n/(q-n)}, written without eps to stay finite.
  if (!(q > n)) throw Error(ErrorCode::Domain, "C1 needs q > n");
  return p * beta * (1.0 - n / q) * std::pow(n * p * beta * cs * cs / q, n / (q - n)) + drift;
}

double moser_coefficient(int n, double p0, double cs, double c1_value, double t, double l, double T, double R) {
  if (!(t > 0.0) || !(R > 0.0)) throw Error(ErrorCode::Domain, "Moser coefficient needs t > 0 and R > 0");
  const double mu = 1.0 + 2.0 / n;
  return std::pow(mu, (n * n + 2.0 * n) / (4.0 * p0)) * std::pow(cs, n / p0) *
         std::pow(c1_value + 1.0 / t + std::exp(l * T) / (R * R), (n + 2.0) / (2.0 * p0));
}

double resolved_beta(const MoserProblem& p) {
  if (p.beta >= 0.0) return p.beta;
  if (p.b == 0.0) return 0.0;
  double smax = p.sigma_at(0.0);
  for (const auto& s : p.sigma) smax = std::max(smax, s.second);
  const double ball = std::pow(std::numbers::pi, 0.5 * p.n) / std::tgamma(0.5 * p.n + 1.0) * std::pow(p.radius, p.n);
  return p.b * std::pow(ball * std::pow(smax, 0.5 * p.n), 2.0 / p.q);
}

double resolved_cs(const MoserProblem& p) { return p.cs >= 0.0 ? p.cs : probes::sharp_sobolev_constant(p.n); }

double resolved_l(const MoserProblem& p) {
  if (p.l >= 0.0) return p.l;
  double l = 0.0;
  for (std::size_t k = 1; k < p.sigma.size(); ++k) {
    const auto& [t0, s0] = p.sigma[k - 1];
    const auto& [t1, s1] = p.sigma[k];
    l = std::max(l, std::abs(s1 - s0) / (t1 - t0) / std::min(s0, s1));
  }
  return std::sqrt(static_cast<double>(p.n)) * l;
}

BoundTerms moser_bound(const MoserProblem& problem, const HeatSolution& sol, double t, const Point& x) {
  if (!(t > 0.0) || t > problem.T * (1.0 + 1e-12)) throw Error(ErrorCode::Domain, "bound needs t in (0, T]");
  const int n = sol.n;
  double r2 = 0.0;
  for (int a = 0; a < n; ++a) r2 += x[a] * x[a];
  const double chart_dist = sol.radius - std::sqrt(r2);
  if (chart_dist < 2.0 * sol.h) throw Error(ErrorCode::Geometry, "probe point too close to the boundary");
  BoundTerms out;
  const double s0 = sol.sigma.front();
  out.R = 0.5 * chart_dist * std::sqrt(s0);
  out.beta = resolved_beta(problem);
  out.cs = resolved_cs(problem);
  out.l = resolved_l(problem);
  out.c1 = c1(n, problem.q, problem.p0, out.beta, out.cs, out.l);
  out.coefficient = moser_coefficient(n, problem.p0, out.cs, out.c1, t, out.l, problem.T, out.R);

  const double chart_R = out.R / std::sqrt(s0);
  std::vector<std::size_t> ball;
  for (std::size_t v = 0; v < sol.node_count(); ++v) {
    if (!sol.free[v]) continue;
    const Point y = sol.position(v);
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) d2 += (y[a] - x[a]) * (y[a] - x[a]);
    if (d2 < chart_R * chart_R) ball.push_back(v);
  }
  std::vector<double> slice(sol.times.size(), 0.0);
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    double s = 0.0;
    for (std::size_t v : ball) s += std::pow(sol.frames[k][v], problem.p0);
    slice[k] = s * std::pow(sol.h, n) * std::pow(sol.sigma[k], 0.5 * n);
  }
  for (std::size_t k = 1; k < slice.size(); ++k)
    out.integral += 0.5 * (sol.times[k] - sol.times[k - 1]) * (slice[k] + slice[k - 1]);
  const double root = std::pow(out.integral, 1.0 / problem.p0);
  out.bound = out.coefficient * root;
  out.bound_c1_doubled =
      moser_coefficient(n, problem.p0, out.cs, 2.0 * out.c1, t, out.l, problem.T, out.R) * root;
  return out;
}

MoserReport verify_moser(const MoserProblem& problem) { return verify_moser(problem, solve_heat(problem)); }

MoserReport verify_moser(const MoserProblem& problem, const HeatSolution& sol) {
  MoserReport rep;
  rep.worst_margin = std::numeric_limits<double>::infinity();
  const double fractions[] = {0.0, 0.25, 0.5};
  const double times[] = {0.125, 0.25, 0.5, 1.0};
  for (int i = 0; i < 3; ++i) {
    Point x{};
    x[0] = fractions[i] * sol.radius;
    const std::size_t node = sol.node_at(x);
    x = sol.position(node);
    for (int j = 0; j < 4; ++j) {
      const double target = times[j] * problem.T;
      std::size_t k = 1;
      for (std::size_t m = 1; m < sol.times.size(); ++m)
        if (std::abs(sol.times[m] - target) < std::abs(sol.times[k] - target)) k = m;
      const double t = sol.times[k];
      const auto terms = moser_bound(problem, sol, t, x);
      std::ostringstream id;
      id << "moser.x" << i << ".t" << j;
      auto check = make_check(id.str(), "moser.sup-bound", sol.frames[k][node], terms.bound);
      check.context = {{"t", t},
                       {"x0", x[0]},
                       {"R", terms.R},
                       {"beta", terms.beta},
                       {"cs", terms.cs},
                       {"l", terms.l},
                       {"c1", terms.c1},
                       {"coefficient", terms.coefficient},
                       {"integral", terms.integral},
                       {"bound_c1_doubled", terms.bound_c1_doubled}};
      rep.worst_margin = std::min(rep.worst_margin, check.margin());
      if (terms.bound > 0.0) rep.max_sharpness = std::max(rep.max_sharpness, check.lhs / terms.bound);
      rep.checks.push_back(std::move(check));
    }
  }
  return rep;
}

}  // namespace rflab::moser
