#include "rflab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

#include "rflab/error.hpp"
#include "rflab/parallel.hpp"

namespace rflab::flow {

const char* to_string(Termination t) noexcept {
  switch (t) {
    case Termination::ReachedT: return "reached-T";
    case Termination::Blowup: return "blowup";
    case Termination::PositivityLoss: return "positivity-loss";
  }
  return "unknown";
}

namespace {

void model_diagnostics(FlowState& s) {
  const auto c = zoo::exact_curvature(*s.model);
  s.diag.sup_rm = c.rm_norm;
  s.diag.sup_ric = c.ric_norm;
  s.diag.sup_ric_full = c.ric_full_norm;
  s.diag.c0_distance = zoo::model_c0_distance(*s.model, *s.model0);
  s.diag.volume = zoo::model_volume(*s.model);
  s.diag.scalar_min = s.diag.scalar_max = c.scalar;
  s.diag.l_instant = zoo::reduced_speed(*s.model);
}

void grid_diagnostics(FlowState& s, int workers) {
  auto b = std::make_shared<core::CurvatureBundle>(core::riemann(s.metric, workers));
  s.diag.sup_rm = b->sup_norm_rm;
  s.diag.sup_ric = b->sup_norm_ric;
  s.diag.sup_ric_full = b->sup_full_norm_ric;
  s.diag.c0_distance = core::metric_c0_distance(s.metric, *s.metric0);
  s.diag.volume = core::total_volume(s.metric);
  const auto [lo, hi] = std::minmax_element(b->scalar.begin(), b->scalar.end());
  s.diag.scalar_min = *lo;
  s.diag.scalar_max = *hi;
  s.diag.l_instant = 2.0 * b->sup_full_norm_ric;
  s.curvature = std::move(b);
}

// Snapshot copy of a bundle without the rank-4 and connection arrays.
std::shared_ptr<const core::CurvatureBundle> light(const std::shared_ptr<const core::CurvatureBundle>& b) {
  if (!b) return nullptr;
  auto out = std::make_shared<core::CurvatureBundle>();
  out->chart = b->chart;
  out->ricci = b->ricci;
  out->scalar = b->scalar;
  out->rm_norm = b->rm_norm;
  out->ric_norm = b->ric_norm;
  out->ric_full_norm = b->ric_full_norm;
  out->volume_density = b->volume_density;
  out->sup_norm_rm = b->sup_norm_rm;
  out->sup_norm_ric = b->sup_norm_ric;
  out->sup_full_norm_ric = b->sup_full_norm_ric;
  return out;
}

// DeTurck term L_W g with W^k = g^ij Gamma^k_ij (flat chart background).
void add_deturck(const core::MetricField& g, core::SymmetricField& rhs, int workers) {
  const auto& chart = g.chart();
  const int n = g.dimension();
  const auto gam = core::christoffel(g, workers);
  const std::size_t N = chart.node_count();
  std::vector<double> W(N * n, 0.0);  // lowered W_j
  Eigen::MatrixXd G(n, n);
  for (std::size_t v = 0; v < N; ++v) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = g(v, i, j);
    const Eigen::MatrixXd Gi = G.inverse();
    Eigen::VectorXd up = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) up[k] += Gi(i, j) * gam(v, k, i, j);
    const Eigen::VectorXd down = G * up;
    for (int j = 0; j < n; ++j) W[v * n + j] = down[j];
  }
  parallel_for(N, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v)
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          const double inv2h_i = 0.5 / chart.spacing(i), inv2h_j = 0.5 / chart.spacing(j);
          double d = (W[chart.neighbor(v, i, 1) * n + j] - W[chart.neighbor(v, i, -1) * n + j]) * inv2h_i +
                     (W[chart.neighbor(v, j, 1) * n + i] - W[chart.neighbor(v, j, -1) * n + i]) * inv2h_j;
          for (int k = 0; k < n; ++k) d -= 2.0 * gam(v, k, i, j) * W[v * n + k];
          rhs.set(v, i, j, rhs(v, i, j) + d);
        }
  });
}

core::SymmetricField grid_rhs(const core::MetricField& g, const core::SymmetricField* ric, bool gauge, int workers) {
  core::SymmetricField r = ric ? *ric : core::ricci(g, workers);
  for (double& x : r.data()) x *= -2.0;
  if (gauge) add_deturck(g, r, workers);
  return r;
}

core::MetricField axpy(const core::MetricField& g, double a, const core::SymmetricField& k) {
  core::MetricField out = g;
  auto& d = out.data();
  const auto& kd = k.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * kd[i];
  return out;
}

void check_positive(const core::MetricField& g) {
  try {
    g.validate();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateMetric) throw;
    throw Error(ErrorCode::PositivityLoss, e.what(), e.node());
  }
}

struct StepResult {
  FlowState state;
  double sup_ric_before = 0.0;  // from the stage-1 Ricci (grid) or exact (model)
};

StepResult step_impl(const FlowState& s, double dt, const StepOptions& opt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "step needs dt > 0");
  const double bound = stability_bound(s, opt.kappa);
  if (dt > bound * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "dt = " << dt << " exceeds the stability bound " << bound;
    throw Error(ErrorCode::RejectedStep, msg.str());
  }
  StepResult out;
  FlowState& next = out.state;
  next.model0 = s.model0;
  next.metric0 = s.metric0;
  next.diag = s.diag;
  next.t = s.t + dt;
  if (s.is_model()) {
    out.sup_ric_before = s.diag.sup_ric;
    const auto& m = *s.model;
    const auto y = zoo::reduced_state(m);
    auto shifted = [&](const std::vector<double>& k, double a) {
      std::vector<double> r = y;
      for (std::size_t i = 0; i < r.size(); ++i) r[i] += a * k[i];
      return r;
    };
    auto f = [&](const std::vector<double>& st) {
      zoo::from_reduced(m, st);  // positivity of the stage state
      return zoo::reduced_rhs(m, st);
    };
    const auto k1 = f(y);
    const auto k2 = f(shifted(k1, 0.5 * dt));
    const auto k3 = f(shifted(k2, 0.5 * dt));
    const auto k4 = f(shifted(k3, dt));
    std::vector<double> y1 = y;
    for (std::size_t i = 0; i < y1.size(); ++i) y1[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    next.model = zoo::from_reduced(m, y1);
    model_diagnostics(next);
    return out;
  }
  const core::SymmetricField* ric0 =
      (s.curvature && s.curvature->chart.same_as(s.metric.chart()) && !s.curvature->ricci.data().empty())
          ? &s.curvature->ricci
          : nullptr;
  core::SymmetricField stage_ric = ric0 ? *ric0 : core::ricci(s.metric, opt.workers);
  {
    const auto norms = core::operator_norm(s.metric, stage_ric);
    out.sup_ric_before = *std::max_element(norms.begin(), norms.end());
  }
  const auto k1 = grid_rhs(s.metric, &stage_ric, opt.gauge, opt.workers);
  const auto g2 = axpy(s.metric, 0.5 * dt, k1);
  check_positive(g2);
  const auto k2 = grid_rhs(g2, nullptr, opt.gauge, opt.workers);
  const auto g3 = axpy(s.metric, 0.5 * dt, k2);
  check_positive(g3);
  const auto k3 = grid_rhs(g3, nullptr, opt.gauge, opt.workers);
  const auto g4 = axpy(s.metric, dt, k3);
  check_positive(g4);
  const auto k4 = grid_rhs(g4, nullptr, opt.gauge, opt.workers);
  next.metric = s.metric;
  auto& d = next.metric.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] += dt / 6.0 * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
  check_positive(next.metric);
  if (opt.recompute_curvature) {
    grid_diagnostics(next, opt.workers);
  } else {
    next.curvature = nullptr;
    next.diag.c0_distance = core::metric_c0_distance(next.metric, *next.metric0);
  }
  return out;
}

}  // namespace

FlowState initial_state(const FlowConfig& config) {
  FlowState s;
  if (const auto* m = std::get_if<zoo::ModelMetric>(&config.initial)) {
    m->validate();
    zoo::reduced_state(*m);  // Unsupported for families without a reduction
    s.model = *m;
    s.model0 = std::make_shared<const zoo::ModelMetric>(*m);
    model_diagnostics(s);
  } else {
    const auto& g = std::get<core::MetricField>(config.initial);
    g.validate();
    s.metric = g;
    s.metric0 = std::make_shared<const core::MetricField>(g);
    grid_diagnostics(s, config.workers);
  }
  s.diag.max_sup_ric = s.diag.sup_ric;
  s.diag.max_l = s.diag.l_instant;
  return s;
}

double stability_bound(const FlowState& s, double kappa) {
  const double h = s.is_model() ? 1.0 : s.metric.chart().min_spacing();
  return kappa * h * h / std::max(1.0, s.diag.sup_rm);
}

FlowState step(const FlowState& s, double dt, const StepOptions& opt) { return step_impl(s, dt, opt).state; }

FlowTrace run(const FlowConfig& config) {
  if (!(config.T > 0.0)) throw Error(ErrorCode::Validation, "flow horizon T must be positive");
  if (config.curvature_every < 1) throw Error(ErrorCode::Validation, "curvature_every must be >= 1");
  if (!(config.control.kappa > 0.0) || !(config.control.safety > 0.0) || !(config.control.dt_max > 0.0))
    throw Error(ErrorCode::Validation, "step control needs positive kappa, safety and dt_max");
  FlowState s = initial_state(config);
  const double lambda = config.blowup > 0.0 ? config.blowup : 1e6 * (s.diag.sup_rm + 1.0);
  if (!(lambda > s.diag.sup_rm)) throw Error(ErrorCode::Validation, "blowup threshold must exceed initial sup|Rm|");
  const double every = config.checkpoint_every > 0.0 ? config.checkpoint_every : config.T / 10.0;
  if (config.control.dt_init > stability_bound(s, config.control.kappa) * (1.0 + 1e-12))
    throw Error(ErrorCode::Validation, "initial dt exceeds the stability bound");

  FlowTrace trace;
  trace.cadence = every;
  auto snapshot = [&](const FlowState& st) {
    FlowState copy = st;
    copy.curvature = light(st.curvature);
    if (!config.keep_fields && !st.is_model()) copy.metric = core::MetricField();
    trace.snapshots.push_back(std::move(copy));
  };
  snapshot(s);

  StepOptions opt;
  opt.kappa = config.control.kappa;
  opt.gauge = config.gauge;
  opt.workers = config.workers;
  std::size_t checkpoint = 1;
  int since_curvature = 0;
  double last_rm = s.diag.sup_rm, last_ric = s.diag.sup_ric;
  bool first = true;
  while (s.t < config.T) {
    const double target = std::min(config.T, checkpoint * every);
    double dt = std::min(config.control.dt_max, config.control.safety * stability_bound(s, config.control.kappa));
    if (first && config.control.dt_init > 0.0) dt = std::min(dt, config.control.dt_init);
    first = false;
    bool lands = false;
    if (s.t + dt >= target - 1e-12 * std::max(1.0, target)) {
      dt = target - s.t;
      lands = true;
    }
    if (!(dt > 0.0)) break;
    ++since_curvature;
    opt.recompute_curvature = lands || since_curvature >= config.curvature_every;
    StepResult r;
    try {
      r = step_impl(s, dt, opt);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PositivityLoss) throw;
      trace.termination = Termination::PositivityLoss;
      trace.failed_node = e.node();
      trace.message = e.what();
      if (trace.snapshots.back().t != s.t) snapshot(s);
      break;
    }
    FlowState next = std::move(r.state);
    if (lands) next.t = target;
    ++trace.steps;
    auto& dg = next.diag;
    dg.max_sup_ric = std::max(s.diag.max_sup_ric, r.sup_ric_before);
    const double rm = opt.recompute_curvature || next.is_model() ? dg.sup_rm : last_rm;
    const double ric = opt.recompute_curvature || next.is_model() ? dg.sup_ric : last_ric;
    dg.int_sup_rm = s.diag.int_sup_rm + 0.5 * (next.t - s.t) * (last_rm + rm);
    dg.int_sup_ric = s.diag.int_sup_ric + 0.5 * (next.t - s.t) * (last_ric + ric);
    if (opt.recompute_curvature || next.is_model()) {
      since_curvature = 0;
      dg.max_sup_ric = std::max(dg.max_sup_ric, dg.sup_ric);
      dg.max_l = std::max(s.diag.max_l, dg.l_instant);
      last_rm = rm;
      last_ric = ric;
    } else {
      dg.max_l = s.diag.max_l;
    }
    s = std::move(next);
    if (lands) {
      snapshot(s);
      ++checkpoint;
    }
    if ((opt.recompute_curvature || s.is_model()) && s.diag.sup_rm > lambda) {
      trace.termination = Termination::Blowup;
      std::ostringstream msg;
      msg << std::setprecision(12) << "sup|Rm| = " << s.diag.sup_rm << " exceeded " << lambda << " at t = " << s.t;
      trace.message = msg.str();
      if (!lands) snapshot(s);
      break;
    }
  }
  trace.max_sup_ric = s.diag.max_sup_ric;
  trace.l = s.diag.max_l;
  for (const auto& snap : trace.snapshots) {
    trace.max_sup_ric = std::max(trace.max_sup_ric, snap.diag.sup_ric);
    trace.l = std::max(trace.l, snap.diag.l_instant);
  }
  return trace;
}

// Lifting --------------------------------------------------------------------

std::vector<std::size_t> chart_ball(const core::ChartGrid& chart, std::size_t center, double radius) {
  const int n = chart.dimension();
  const Point c = chart.position(center);
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < chart.node_count(); ++v) {
    const Point x = chart.position(v);
    double r2 = 0.0;
    for (int a = 0; a < n; ++a) {
      const double L = chart.period(a);
      double d = x[a] - c[a];
      d -= L * std::round(d / L);
      r2 += d * d;
    }
    if (r2 < radius * radius) out.push_back(v);
  }
  return out;
}

std::vector<double> ball_lp_norms(const core::CurvatureBundle& b, std::span<const std::size_t> centers, double radius,
                                  double p) {
  std::vector<double> out;
  out.reserve(centers.size());
  for (std::size_t c : centers) out.push_back(b.lp_norm_rm(p, chart_ball(b.chart, c, radius)));
  return out;
}

LiftedPatch lifted_initial_data(const core::MetricField& g, std::size_t center, double r0, const LiftOptions& opt) {
  return lifted_initial_data(g, core::riemann(g, opt.workers), center, r0, opt);
}

LiftedPatch lifted_initial_data(const core::MetricField& g, const core::CurvatureBundle& b, std::size_t center,
                                double r0, const LiftOptions& opt) {
  if (!(r0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "lift radius must be positive");
  const double radius = 0.5 * r0;
  const auto& chart = g.chart();
  for (int a = 0; a < chart.dimension(); ++a)
    if (radius > 0.5 * chart.period(a))
      throw Error(ErrorCode::ChartTooSmall, "lifted ball exceeds half the chart period");
  LiftedPatch out;
  out.patch = probes::ball_patch(g, center, radius);
  out.ball_nodes = chart_ball(chart, center, radius);
  out.lp_norm = b.lp_norm_rm(opt.p0, out.ball_nodes);
  if (opt.sobolev) {
    auto est = probes::sobolev_constant(out.patch, opt.sobolev_options);
    out.sobolev = est.value;
    out.maximizer = std::move(est.maximizer);
  }
  if (opt.discrepancy) {
    const probes::GridGeometry geo(g, opt.workers);
    const int n = chart.dimension();
    probes::ChartPoint x0;
    x0.x = chart.position(center);
    double worst = 0.0;
    for (int a = 0; a < n; ++a)
      for (int sign : {1, -1}) {
        std::vector<double> v(n, 0.0);
        v[a] = sign / std::sqrt(g(center, a, a));
        const auto path = probes::geodesic(geo, x0, v, radius, radius / 64.0);
        const auto& end = path.position.back().x;
        double e2 = 0.0;
        for (int k = 0; k < n; ++k) {
          const double d = end[k] - (x0.x[k] + radius * v[k]);
          e2 += d * d;
        }
        worst = std::max(worst, std::sqrt(e2) / radius);
      }
    out.lift_discrepancy = worst;
  }
  return out;
}

// Residuals ------------------------------------------------------------------

namespace {

// d/dt along the reduced flow of a model quantity, by a centred difference in
// the reduced state.
template <class Fn>
double model_rate(const zoo::ModelMetric& m, Fn&& q) {
  const auto y = zoo::reduced_state(m);
  if (y.empty()) return 0.0;
  const auto f = zoo::reduced_rhs(m, y);
  double scale = 0.0;
  for (double v : y) scale = std::max(scale, std::abs(v));
  double fn = 0.0;
  for (double v : f) fn = std::max(fn, std::abs(v));
  if (fn == 0.0) return 0.0;
  const double eps = 1e-4 * scale / fn;
  std::vector<double> yp = y, ym = y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    yp[i] += eps * f[i];
    ym[i] -= eps * f[i];
  }
  return (q(zoo::from_reduced(m, yp)) - q(zoo::from_reduced(m, ym))) / (2.0 * eps);
}

}  // namespace

ResidualReport evolution_residuals(const FlowTrace& trace, int workers) {
  const auto& snaps = trace.snapshots;
  if (snaps.size() < 3) throw Error(ErrorCode::Resample, "residuals need at least three snapshots");
  const double dt = snaps[1].t - snaps[0].t;
  for (std::size_t k = 1; k < snaps.size(); ++k)
    if (std::abs((snaps[k].t - snaps[k - 1].t) - dt) > 1e-9 * std::max(1.0, dt))
      throw Error(ErrorCode::Resample, "snapshots are not at a uniform cadence");

  ResidualReport rep;
  rep.c_min = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
    const auto& s = snaps[k];
    ResidualRow row;
    row.t = s.t;
    row.c_min = -std::numeric_limits<double>::infinity();
    if (s.is_model()) {
      const auto c = zoo::exact_curvature(*s.model);
      const double dR = model_rate(*s.model, [](const zoo::ModelMetric& m) { return zoo::exact_curvature(m).scalar; });
      row.scalar_residual = std::abs(dR - 2.0 * c.ric_full_norm * c.ric_full_norm);
      if (c.rm_norm > 0.0) {
        const double dRm =
            model_rate(*s.model, [](const zoo::ModelMetric& m) { return zoo::exact_curvature(m).rm_norm; });
        row.c_min = dRm / (c.rm_norm * c.rm_norm);
      }
    } else {
      const auto& prev = snaps[k - 1];
      const auto& next = snaps[k + 1];
      if (!s.curvature || !prev.curvature || !next.curvature || s.metric.data().empty())
        throw Error(ErrorCode::InvalidArgument, "residuals need curvature and metric fields at snapshots");
      const auto& b = *s.curvature;
      const auto lap_R = core::laplace_beltrami(s.metric, b.scalar, workers);
      const auto lap_Rm = core::laplace_beltrami(s.metric, b.rm_norm, workers);
      const double floor = 1e-6 * std::max(b.sup_norm_rm, 1e-300);
      for (std::size_t v = 0; v < b.scalar.size(); ++v) {
        const double dR = (next.curvature->scalar[v] - prev.curvature->scalar[v]) / (2.0 * dt);
        const double res = dR - lap_R[v] - 2.0 * b.ric_full_norm[v] * b.ric_full_norm[v];
        row.scalar_residual = std::max(row.scalar_residual, std::abs(res));
        const double rm = b.rm_norm[v];
        if (rm > floor) {
          const double dRm = (next.curvature->rm_norm[v] - prev.curvature->rm_norm[v]) / (2.0 * dt);
          row.c_min = std::max(row.c_min, (dRm - lap_Rm[v]) / (rm * rm));
        }
      }
    }
    rep.max_scalar_residual = std::max(rep.max_scalar_residual, row.scalar_residual);
    rep.c_min = std::max(rep.c_min, row.c_min);
    rep.rows.push_back(row);
  }
  if (!std::isfinite(rep.c_min)) rep.c_min = 0.0;
  for (auto& row : rep.rows)
    if (!std::isfinite(row.c_min)) row.c_min = 0.0;

  const double phi0 = snaps.front().diag.sup_ric;
  for (const auto& s : snaps) {
    const double integral = s.diag.int_sup_rm;
    if (!(integral > 0.0)) continue;
    if (phi0 > 0.0)
      rep.c_fit = std::max(rep.c_fit, std::log(s.diag.sup_ric / phi0) / integral);
    else if (s.diag.sup_ric > 0.0)
      rep.c_fit = std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace rflab::flow
