#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "rflab/error.hpp"
#include "rflab/harness.hpp"
#include "rflab/parallel.hpp"

namespace rflab::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string idx(const std::string& prefix, std::size_t k) { return prefix + "." + std::to_string(k); }

EstimateCheck exact_check(std::string id, std::string anchor, double lhs, double rhs) {
  auto c = make_check(std::move(id), std::move(anchor), lhs, rhs);
  c.tolerance = 0.0;
  return c;
}

EstimateCheck not_applicable(std::string id, std::string anchor, std::string reason) {
  EstimateCheck c;
  c.id = std::move(id);
  c.anchor = std::move(anchor);
  c.applicable = false;
  c.reason = std::move(reason);
  return c;
}

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

std::vector<std::size_t> probe_indices(const flow::FlowTrace& trace, const std::vector<double>& times) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    if (times.empty()) {
      out.push_back(k);
      continue;
    }
    for (double t : times)
      if (same_time(trace.snapshots[k].t, t)) {
        out.push_back(k);
        break;
      }
  }
  if (out.empty() || out.front() != 0) out.insert(out.begin(), 0);
  return out;
}

std::string blowup_reason(const flow::FlowTrace& trace) {
  return std::string("flow terminated by ") + flow::to_string(trace.termination) + ": " + trace.message;
}

}  // namespace

// Theorem --------------------------------------------------------------------

std::vector<EstimateCheck> verify_theorem_main(const flow::FlowTrace& trace, const TheoremOptions& opt) {
  std::vector<EstimateCheck> out;
  const auto& snaps = trace.snapshots;
  if (snaps.empty()) throw Error(ErrorCode::InvalidArgument, "empty trace");
  const bool ended = trace.termination != flow::Termination::ReachedT;
  const double phi0 = snaps.front().diag.sup_ric;

  for (std::size_t k = 1; k < snaps.size(); ++k) {
    const auto& s = snaps[k];
    auto drift = make_check(idx("flow.drift", k), "flow.metric-drift", s.diag.c0_distance, 4.0 * s.t);
    drift.context = {{"t", s.t}, {"max_sup_ric", s.diag.max_sup_ric}};
    if (s.diag.max_sup_ric > 2.0) {
      drift.applicable = false;
      drift.reason = "sup|Ric| exceeded 2 before this time";
    }
    auto ric = make_check(idx("flow.ricci", k), "flow.ricci-bound", s.diag.sup_ric, 2.0);
    ric.context = {{"t", s.t}, {"initial_sup_ric", phi0}};
    if (phi0 > 1.0) {
      ric.applicable = false;
      ric.reason = "initial sup|Ric| exceeds 1";
    }
    if (ended) {
      drift.applicable = ric.applicable = false;
      drift.reason = ric.reason = blowup_reason(trace);
    }
    out.push_back(std::move(drift));
    out.push_back(std::move(ric));
  }

  if (ended) {
    out.push_back(not_applicable("flow.smoothing", "flow.curvature-smoothing", blowup_reason(trace)));
  } else if (!opt.smoothing) {
    out.push_back(not_applicable("flow.smoothing", "flow.curvature-smoothing",
                                 "the product bound is asserted on the perturbed-torus suite only"));
  } else {
    std::size_t k1 = 0;
    for (std::size_t k = 1; k < snaps.size() && k1 == 0; ++k)
      if (opt.smoothing_t1 > 0.0 ? same_time(snaps[k].t, opt.smoothing_t1) : snaps[k].t > 0.0) k1 = k;
    if (k1 == 0) {
      out.push_back(not_applicable("flow.smoothing", "flow.curvature-smoothing", "no snapshot at the first probe time"));
    } else {
      const double base = snaps[k1].diag.sup_rm * std::sqrt(snaps[k1].t);
      double worst = 0.0, at = snaps[k1].t;
      for (std::size_t k = k1; k < snaps.size(); ++k) {
        const double v = snaps[k].diag.sup_rm * std::sqrt(snaps[k].t);
        if (v > worst) {
          worst = v;
          at = snaps[k].t;
        }
      }
      auto c = make_check("flow.smoothing", "flow.curvature-smoothing", worst, 3.0 * base);
      c.context = {{"t1", snaps[k1].t}, {"product_t1", base}, {"argmax_t", at}, {"T", snaps.back().t}};
      out.push_back(std::move(c));
    }
  }

  auto horizon = exact_check("flow.horizon", "flow.reached-horizon", ended ? 1.0 : 0.0, 0.0);
  horizon.context = {{"t_end", snaps.back().t}, {"steps", static_cast<double>(trace.steps)}};
  out.push_back(std::move(horizon));
  return out;
}

// Geometric evolution ----------------------------------------------------------

namespace {

struct GeometryValues {
  bool diameter = false, excess = false, distance = false, lengths = false;
  double D = 0.0, vol = 0.0, ex = 0.0;
  std::vector<double> d;
};

void sandwich(std::vector<EstimateCheck>& out, const std::string& id, const std::string& anchor, double v0, double v,
              double rate, double t, bool applicable) {
  auto lo = make_check(id + ".lower", anchor, std::exp(-rate * t) * v0, v);
  auto hi = make_check(id + ".upper", anchor, v, std::exp(rate * t) * v0);
  for (auto* c : {&lo, &hi}) {
    c->context = {{"t", t}, {"initial", v0}};
    if (!applicable) {
      c->applicable = false;
      c->reason = "sup|Ric| exceeded 2 before this time";
    }
  }
  out.push_back(std::move(lo));
  out.push_back(std::move(hi));
}

}  // namespace

std::vector<EstimateCheck> verify_geometric_evolution(const flow::FlowTrace& trace, const GeometryOptions& opt) {
  std::vector<EstimateCheck> out;
  const auto& snaps = trace.snapshots;
  if (snaps.empty()) throw Error(ErrorCode::InvalidArgument, "empty trace");
  const int n = snaps.front().dimension();
  const auto probes_at = probe_indices(trace, opt.times);
  std::map<std::size_t, GeometryValues> values;
  std::map<std::string, double> extra;  // context shared by the t = 0 data
  std::vector<double> length_ratio(snaps.size(), 0.0);  // max |ln(l_k / l_{k-1})|
  bool have_lengths = false;

  if (snaps.front().is_model()) {
    const auto family = snaps.front().model->family;
    for (std::size_t k : probes_at) {
      const auto& m = *snaps[k].model;
      GeometryValues v;
      v.vol = zoo::model_volume(m);
      if (family == zoo::Family::RoundSphere) {
        v.diameter = v.excess = v.distance = true;
        v.D = std::numbers::pi * m.radius;
        v.ex = 0.0;
        v.d = {0.5 * std::numbers::pi * m.radius};
      } else if (family == zoo::Family::ProductSphereCircle) {
        v.diameter = v.distance = true;
        v.D = std::hypot(std::numbers::pi * m.radius, 0.5 * m.circle_length);
        v.d = {0.5 * std::numbers::pi * m.radius, 0.5 * m.circle_length};
      } else if (family == zoo::Family::FlatTorus) {
        const probes::FlatTorusSample sample(core::ChartGrid(std::vector<int>(n, 8), m.periods));
        v.diameter = v.excess = v.distance = true;
        v.D = probes::diameter(sample, opt.diameter_sources).graph_bound;
        v.ex = probes::excess(sample, opt.excess_pairs, opt.seed).value;
        std::mt19937_64 rng(opt.seed);
        for (int i = 0; i < opt.distance_pairs; ++i) {
          const auto a = static_cast<std::size_t>(zoo::unit_from_bits(rng()) * sample.size());
          const auto b = static_cast<std::size_t>(zoo::unit_from_bits(rng()) * sample.size());
          v.d.push_back(sample.distance(std::min(a, sample.size() - 1), std::min(b, sample.size() - 1)));
        }
      }
      values[k] = std::move(v);
    }
    // Every curve of a homothetic family scales with r; flat metrics do not move.
    if (family == zoo::Family::RoundSphere || family == zoo::Family::FlatTorus) {
      have_lengths = true;
      for (std::size_t k = 1; k < snaps.size(); ++k)
        length_ratio[k] = family == zoo::Family::FlatTorus
                              ? 0.0
                              : std::abs(std::log(snaps[k].model->radius / snaps[k - 1].model->radius));
    }
  } else {
    const auto& g0 = snaps.front().metric;
    const probes::GraphDistance G0(g0, opt.reach);
    const std::size_t N = G0.size();
    std::mt19937_64 rng(opt.seed);
    auto pick = [&] { return std::min(N - 1, static_cast<std::size_t>(zoo::unit_from_bits(rng()) * N)); };

    const auto dia = probes::diameter(G0, opt.diameter_sources);
    std::vector<std::size_t> sources{dia.a, dia.b};
    std::vector<std::pair<std::size_t, std::size_t>> ex_pairs, d_pairs;
    for (int i = 0; i < opt.excess_pairs; ++i) {
      const std::size_t p = pick();
      const auto dp = G0.distances_from(p);
      const std::size_t q = static_cast<std::size_t>(std::max_element(dp.begin(), dp.end()) - dp.begin());
      ex_pairs.emplace_back(p, q);
      sources.push_back(p);  // keeps d(p, q) <= D(0)
    }
    for (int i = 0; i < opt.distance_pairs; ++i) {
      std::size_t p = pick(), q = pick();
      if (q == p) q = (p + N / 2) % N;
      d_pairs.emplace_back(p, q);
    }
    std::vector<std::size_t> roots = sources;
    for (auto [p, q] : ex_pairs) roots.push_back(q);
    for (auto [p, q] : d_pairs) roots.push_back(p);
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
    auto root_index = [&](std::size_t r) {
      return static_cast<std::size_t>(std::lower_bound(roots.begin(), roots.end(), r) - roots.begin());
    };

    {
      const probes::GridGeometry geo(g0, opt.workers);
      const probes::GraphDistance relaxed(g0, opt.reach, &geo);
      extra["diameter_probe_bias"] = dia.graph_bound - relaxed.relaxed(dia.a, dia.b, dia.graph_bound);
    }

    for (std::size_t k : probes_at) {
      const probes::GraphDistance G(snaps[k].metric, opt.reach);
      std::vector<std::vector<double>> dist(roots.size());
      parallel_for(roots.size(), opt.workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) dist[i] = G.distances_from(roots[i]);
      });
      GeometryValues v;
      v.diameter = v.excess = v.distance = true;
      v.vol = probes::volume(snaps[k].metric);
      for (std::size_t s : sources) {
        const auto& d = dist[root_index(s)];
        v.D = std::max(v.D, *std::max_element(d.begin(), d.end()));
      }
      v.ex = kInf;
      for (auto [p, q] : ex_pairs) {
        const auto& dp = dist[root_index(p)];
        const auto& dq = dist[root_index(q)];
        double worst = 0.0;
        for (std::size_t x = 0; x < N; ++x) worst = std::max(worst, dp[x] + dq[x] - dp[q]);
        v.ex = std::min(v.ex, worst);
      }
      for (auto [p, q] : d_pairs) v.d.push_back(dist[root_index(p)][q]);
      values[k] = std::move(v);
    }

    if (opt.curves > 0) {
      have_lengths = true;
      const auto bundle = probes::curve_bundle(g0.chart(), opt.curves, opt.seed);
      std::vector<double> prev;
      for (std::size_t k = 0; k < snaps.size(); ++k) {
        std::vector<double> cur;
        for (const auto& c : bundle) cur.push_back(probes::curve_length(snaps[k].metric, c));
        if (k > 0)
          for (std::size_t i = 0; i < cur.size(); ++i)
            length_ratio[k] = std::max(length_ratio[k], std::abs(std::log(cur[i] / prev[i])));
        prev = std::move(cur);
      }
    }
  }

  const auto& v0 = values.at(0);
  for (std::size_t k : probes_at) {
    if (k == 0) continue;
    const auto& s = snaps[k];
    const auto& v = values.at(k);
    const bool ok = s.diag.max_sup_ric <= 2.0;
    const double t = s.t;
    if (v.diameter) {
      sandwich(out, idx("geometry.diameter", k), "geometry.diameter", v0.D, v.D, 2.0, t, ok);
      for (auto& [key, val] : extra) out[out.size() - 2].context[key] = out.back().context[key] = val;
    } else {
      out.push_back(not_applicable(idx("geometry.diameter", k), "geometry.diameter",
                                   "no diameter oracle for this model family"));
    }
    sandwich(out, idx("geometry.volume", k), "geometry.volume", v0.vol, v.vol, 4.0 * n, t, ok);
    if (v.excess) {
      const double rhs = std::exp(2.0 * t) * v0.ex + (std::exp(2.0 * t) - std::exp(-2.0 * t)) * v0.D;
      auto c = make_check(idx("geometry.excess", k), "geometry.excess", v.ex, rhs);
      c.context = {{"t", t}, {"initial", v0.ex}, {"initial_diameter", v0.D}};
      if (!ok) {
        c.applicable = false;
        c.reason = "sup|Ric| exceeded 2 before this time";
      }
      out.push_back(std::move(c));
    } else {
      out.push_back(not_applicable(idx("geometry.excess", k), "geometry.excess",
                                   "no excess oracle for this model family"));
    }
    if (v.distance)
      for (std::size_t i = 0; i < v.d.size(); ++i)
        sandwich(out, "geometry.distance." + std::to_string(i) + "." + std::to_string(k), "geometry.distance",
                 v0.d[i], v.d[i], 2.0, t, ok);
  }
  for (std::size_t k = 1; k < snaps.size(); ++k) {
    if (!have_lengths) {
      out.push_back(not_applicable(idx("geometry.length", k), "geometry.length-rate",
                                   "no curve bundle for this model family"));
      continue;
    }
    const double dt = snaps[k].t - snaps[k - 1].t;
    auto c = make_check(idx("geometry.length", k), "geometry.length-rate", length_ratio[k], 2.0 * dt);
    c.context = {{"t0", snaps[k - 1].t}, {"t1", snaps[k].t}, {"curves", static_cast<double>(opt.curves)}};
    if (snaps[k].diag.max_sup_ric > 2.0) {
      c.applicable = false;
      c.reason = "sup|Ric| exceeded 2 before this time";
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Propagation lemmas --------------------------------------------------------

namespace {

std::vector<std::size_t> lattice_bases(const core::ChartGrid& chart, int count) {
  const int n = chart.dimension();
  std::vector<std::size_t> out;
  for (int mask = 0; mask < (1 << n) && static_cast<int>(out.size()) < count; ++mask) {
    Coords c{};
    for (int a = 0; a < n; ++a) c[a] = ((mask >> a) & 1) * chart.extent(a) / 2;
    out.push_back(chart.node(c));
  }
  return out;
}

}  // namespace

LemmaSeries lemma_series(const flow::FlowTrace& trace, const LemmaOptions& opt, bool discrepancy) {
  const auto& snaps = trace.snapshots;
  if (snaps.empty() || snaps.front().is_model())
    throw Error(ErrorCode::InvalidArgument, "lemma series need a grid trace");
  LemmaSeries s;
  const auto& chart = snaps.front().metric.chart();
  s.bases = lattice_bases(chart, opt.bases);
  const auto K0 = flow::ball_lp_norms(*snaps.front().curvature, s.bases, 0.5 * opt.r0, opt.p0);
  s.K = *std::max_element(K0.begin(), K0.end());

  std::vector<std::size_t> order(s.bases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return K0[a] > K0[b]; });
  for (int i = 0; i < opt.sobolev_bases && i < static_cast<int>(order.size()); ++i)
    s.sobolev_bases.push_back(s.bases[order[i]]);

  for (const auto& st : snaps) {
    s.t.push_back(st.t);
    s.sup_rm.push_back(st.diag.sup_rm);
    s.sup_ric.push_back(st.diag.sup_ric);
    s.int_sup_rm.push_back(st.diag.int_sup_rm);
    s.int_sup_ric.push_back(st.diag.int_sup_ric);
    const auto q = flow::ball_lp_norms(*st.curvature, s.bases, 0.25 * opt.r0, opt.p0);
    s.lp_quarter.push_back(*std::max_element(q.begin(), q.end()));
  }

  std::vector<double> times = opt.sobolev_times;
  if (times.empty()) times = {0.0, 0.5 * snaps.back().t, snaps.back().t};
  std::vector<std::vector<double>> warm(s.sobolev_bases.size());
  for (double t : times) {
    std::size_t k = snaps.size();
    for (std::size_t j = 0; j < snaps.size(); ++j)
      if (same_time(snaps[j].t, t)) k = j;
    if (k == snaps.size()) throw Error(ErrorCode::Validation, "Sobolev probe time is not a snapshot time");
    std::vector<double> row;
    for (std::size_t b = 0; b < s.sobolev_bases.size(); ++b) {
      flow::LiftOptions lo;
      lo.p0 = opt.p0;
      lo.workers = opt.workers;
      lo.discrepancy = discrepancy && k == 0 && b == 0;
      lo.sobolev_options.graded_nodes = opt.graded_nodes;
      lo.sobolev_options.tolerance = opt.sobolev_tolerance;
      lo.sobolev_options.warm_start = warm[b];
      auto lift = flow::lifted_initial_data(snaps[k].metric, *snaps[k].curvature, s.sobolev_bases[b], opt.r0, lo);
      if (lo.discrepancy) s.lift_discrepancy = lift.lift_discrepancy;
      row.push_back(lift.sobolev);
      warm[b] = std::move(lift.maximizer);
    }
    s.sobolev_t.push_back(snaps[k].t);
    s.sobolev.push_back(std::move(row));
  }
  return s;
}

LemmaFit fit_lemmas(const LemmaSeries& s, int n, double p0) {
  LemmaFit f;
  const double a = (n + 2.0) / (2.0 * p0);
  const double alpha = (2.0 * p0 - n - 2.0) / (2.0 * p0);
  const double phi0 = s.sup_ric.front();
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    const double t = s.t[k];
    if (!(t > 0.0)) continue;
    f.pointwise = std::max(f.pointwise, s.sup_rm[k] * std::pow(t, a) / s.K);
    if (s.lp_quarter[k] > 0.0) f.lp = std::max(f.lp, (1.0 - s.K / s.lp_quarter[k]) / t);
    if (phi0 > 0.0) {
      const double growth = std::log(s.sup_ric[k] / phi0);
      f.ricci = std::max(f.ricci, growth / (s.K * std::pow(t, alpha)));
      if (s.int_sup_rm[k] > 0.0) f.ricci_integral = std::max(f.ricci_integral, growth / s.int_sup_rm[k]);
    }
  }
  if (!s.sobolev.empty()) {
    const double chi = *std::max_element(s.sobolev.front().begin(), s.sobolev.front().end());
    for (std::size_t j = 1; j < s.sobolev.size(); ++j) {
      const double t = s.sobolev_t[j];
      if (!(t > 0.0)) continue;
      const double cs = *std::max_element(s.sobolev[j].begin(), s.sobolev[j].end());
      f.sobolev = std::max(f.sobolev, std::log(cs / chi) / (s.K * std::pow(t, alpha)));
    }
  }
  return f;
}

std::vector<EstimateCheck> verify_propagation_lemmas(const flow::FlowTrace& calibration,
                                                     const flow::FlowTrace& holdout, const LemmaOptions& opt) {
  std::vector<EstimateCheck> out;
  const int n = holdout.snapshots.front().dimension();
  const double H = opt.headroom;
  const double a = (n + 2.0) / (2.0 * opt.p0);
  const double alpha = (2.0 * opt.p0 - n - 2.0) / (2.0 * opt.p0);

  const auto cal = lemma_series(calibration, opt, false);
  const auto hold = lemma_series(holdout, opt, true);
  const std::map<std::string, double> fit_context{{"calibration_K", cal.K},
                                                  {"holdout_K", hold.K},
                                                  {"calibration_amplitude", opt.calibration_amplitude},
                                                  {"headroom", H}};

  if (!(cal.K > 0.0) || !(hold.K > 0.0)) {
    for (const char* name : {"pointwise", "lp", "ricci", "sobolev", "ricci-integral"})
      out.push_back(not_applicable(std::string("lemma.fit.") + name, "lemma.fit-bounded",
                                   "initial ||Rm||_{p0} vanishes, the K-normalized forms are void"));
    return out;
  }

  auto fit = fit_lemmas(cal, n, opt.p0);
  const std::pair<const char*, double*> fits[] = {{"pointwise", &fit.pointwise},
                                                  {"lp", &fit.lp},
                                                  {"ricci", &fit.ricci},
                                                  {"sobolev", &fit.sobolev},
                                                  {"ricci-integral", &fit.ricci_integral}};
  for (auto [name, value] : fits) {
    auto c = exact_check(std::string("lemma.fit.") + name, "lemma.fit-bounded", std::isfinite(*value) ? 0.0 : 1.0, 0.0);
    c.context = fit_context;
    c.context["raw"] = *value;
    *value = std::max(0.0, *value);
    c.context["fitted"] = *value;
    out.push_back(std::move(c));
  }
  const double T = holdout.snapshots.back().t;
  {
    auto c = make_check("lemma.fit.lp-horizon", "lemma.fit-bounded", H * fit.lp * T, 1.0);
    c.context = {{"T", T}, {"fitted", fit.lp}};
    out.push_back(std::move(c));
  }

  const double phi0 = hold.sup_ric.front();
  for (std::size_t k = 1; k < hold.t.size(); ++k) {
    const double t = hold.t[k];
    if (!(t > 0.0)) continue;
    {
      auto c = make_check(idx("lemma.pointwise", k), "lemma.pointwise-smoothing", hold.sup_rm[k],
                          H * fit.pointwise * hold.K * std::pow(t, -a));
      c.context = {{"t", t}, {"K", hold.K}, {"fitted", fit.pointwise}};
      out.push_back(std::move(c));
    }
    {
      const double den = 1.0 - H * fit.lp * t;
      auto c = make_check(idx("lemma.lp", k), "lemma.lp-propagation", hold.lp_quarter[k], den > 0.0 ? hold.K / den : kInf);
      c.context = {{"t", t}, {"K", hold.K}, {"fitted", fit.lp}};
      out.push_back(std::move(c));
    }
    {
      auto c = make_check(idx("lemma.ricci", k), "lemma.ricci-growth", hold.sup_ric[k],
                          phi0 * std::exp(H * fit.ricci * hold.K * std::pow(t, alpha)));
      c.context = {{"t", t}, {"K", hold.K}, {"initial_sup_ric", phi0}, {"fitted", fit.ricci}};
      out.push_back(std::move(c));
    }
    {
      auto c = make_check(idx("evolution.ricci-integral", k), "evolution.ricci-integral", hold.sup_ric[k],
                          phi0 * std::exp(H * fit.ricci_integral * hold.int_sup_rm[k]));
      c.context = {{"t", t}, {"int_sup_rm", hold.int_sup_rm[k]}, {"fitted", fit.ricci_integral}};
      out.push_back(std::move(c));
    }
  }

  if (!hold.sobolev.empty()) {
    const double chi = *std::max_element(hold.sobolev.front().begin(), hold.sobolev.front().end());
    for (std::size_t j = 1; j < hold.sobolev.size(); ++j) {
      const double t = hold.sobolev_t[j];
      const double cs = *std::max_element(hold.sobolev[j].begin(), hold.sobolev[j].end());
      auto c = make_check(idx("lemma.sobolev", j), "lemma.sobolev-growth", cs,
                          chi * std::exp(H * fit.sobolev * hold.K * std::pow(t, alpha)));
      c.context = {{"t", t}, {"chi", chi}, {"K", hold.K}, {"fitted", fit.sobolev}};
      if (hold.lift_discrepancy >= 0.0) c.context["lift_discrepancy"] = hold.lift_discrepancy;
      out.push_back(std::move(c));
    }
  }

  // The squared quotient moves at rate <= 2n sup|Ric|, so C_S moves at <= n sup|Ric|.
  const std::pair<const char*, const LemmaSeries*> runs[] = {{"calibration", &cal}, {"holdout", &hold}};
  for (auto [name, series] : runs) {
    for (std::size_t j = 1; j < series->sobolev.size(); ++j) {
      const double t = series->sobolev_t[j];
      std::size_t k = 0;
      for (std::size_t m = 0; m < series->t.size(); ++m)
        if (same_time(series->t[m], t)) k = m;
      for (std::size_t b = 0; b < series->sobolev_bases.size(); ++b) {
        const double cs0 = series->sobolev.front()[b];
        auto c = make_check(std::string("sobolev.quotient.") + name + "." + std::to_string(b) + "." + std::to_string(j),
                            "sobolev.quotient-evolution", series->sobolev[j][b],
                            cs0 * std::exp(n * series->int_sup_ric[k]));
        c.context = {{"t", t}, {"int_sup_ric", series->int_sup_ric[k]}, {"base", static_cast<double>(series->sobolev_bases[b])}};
        out.push_back(std::move(c));
      }
    }
  }

  // Covering bookkeeping at t = 0 on the holdout: an (r0/4)-net of the
  // (r0/2)-ball around the base with the largest K.
  {
    const auto& g0 = holdout.snapshots.front().metric;
    const auto& b0 = *holdout.snapshots.front().curvature;
    const std::size_t center = hold.sobolev_bases.empty() ? hold.bases.front() : hold.sobolev_bases.front();
    const probes::GraphDistance G(g0, 2);
    const double r = 0.5 * opt.r0, eps = 0.25 * opt.r0;
    const auto net = probes::epsilon_net(G, center, r, eps);
    const auto dp = G.distances_from(center);
    std::vector<std::size_t> ball;
    for (std::size_t x = 0; x < dp.size(); ++x)
      if (dp[x] <= r) ball.push_back(x);
    const double lhs = std::pow(b0.lp_norm_rm(opt.p0, ball), opt.p0);
    double rhs = 0.0;
    for (std::size_t y : net.centers) {
      const auto dy = G.distances_from(y);
      std::vector<std::size_t> cell;
      for (std::size_t x = 0; x < dy.size(); ++x)
        if (dy[x] <= eps) cell.push_back(x);
      rhs += std::pow(b0.lp_norm_rm(opt.p0, cell), opt.p0);
    }
    auto c = make_check("covering.lp-sum", "covering.lp-sum", lhs, rhs);
    c.context = {{"r", r},
                 {"epsilon", eps},
                 {"centers", static_cast<double>(net.count)},
                 {"multiplicity", static_cast<double>(net.multiplicity)},
                 {"p0", opt.p0}};
    out.push_back(std::move(c));
  }
  return out;
}

// Covering -------------------------------------------------------------------

std::vector<EstimateCheck> covering_check(const probes::MetricSample& sample, int n, double H, std::size_t p,
                                          double r, double epsilon, const std::string& id) {
  const auto net = probes::epsilon_net(sample, p, r, epsilon);
  auto count = make_check(id + ".count", "covering.count", static_cast<double>(net.count),
                          probes::covering_count_bound(n, H, r, epsilon));
  auto mult = make_check(id + ".multiplicity", "covering.multiplicity", static_cast<double>(net.multiplicity),
                         probes::covering_multiplicity_bound(n, H, epsilon));
  for (auto* c : {&count, &mult}) c->context = {{"r", r}, {"epsilon", epsilon}, {"H", H}};
  return {std::move(count), std::move(mult)};
}

// Residuals ------------------------------------------------------------------

std::vector<EstimateCheck> verify_residuals(const flow::FlowTrace& trace, int workers) {
  std::vector<EstimateCheck> out;
  const auto& snaps = trace.snapshots;
  if (snaps.empty()) throw Error(ErrorCode::InvalidArgument, "empty trace");
  const bool model = snaps.front().is_model();

  if (model && snaps.front().model->family != zoo::Family::HeisenbergNil) {
    const auto exact = zoo::exact_flow(*snaps.front().model);
    double worst = 0.0;
    for (const auto& s : snaps) {
      const auto a = zoo::reduced_state(*s.model);
      const auto b = zoo::reduced_state(exact.at(s.t));
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(b[i]));
    }
    auto c = exact_check("model.exact-flow", "model.exact-flow", worst, 1e-8);
    c.context = {{"T", snaps.back().t}};
    out.push_back(std::move(c));
  }

  flow::ResidualReport rep;
  try {
    rep = flow::evolution_residuals(trace, workers);
  } catch (const Error& e) {
    out.push_back(not_applicable("evolution.scalar", "evolution.scalar-identity", e.what()));
    return out;
  }

  if (model) {
    auto c = exact_check("evolution.scalar", "evolution.scalar-identity", rep.max_scalar_residual, 1e-6);
    c.context = {{"rows", static_cast<double>(rep.rows.size())}};
    out.push_back(std::move(c));
    if (snaps.front().model->family == zoo::Family::RoundSphere) {
      const int n = snaps.front().model->n;
      const double oracle = std::sqrt(2.0 * (n - 1.0) / n);
      auto r = exact_check("evolution.rm-constant", "evolution.rm-inequality", std::abs(rep.c_min - oracle), 1e-4);
      r.context = {{"c_min", rep.c_min}, {"model_value", oracle}};
      out.push_back(std::move(r));
    }
  } else if (snaps.front().diag.sup_rm <= 1e-12) {
    auto c = exact_check("evolution.scalar", "evolution.scalar-identity", rep.max_scalar_residual, 1e-12);
    c.context = {{"rows", static_cast<double>(rep.rows.size())}};
    out.push_back(std::move(c));
  } else {
    auto c = not_applicable("evolution.scalar", "evolution.scalar-identity",
                            "grid residuals are asserted through the refinement order");
    c.lhs = rep.max_scalar_residual;
    c.context = {{"max_scalar_residual", rep.max_scalar_residual}, {"c_min", rep.c_min}, {"c_fit", rep.c_fit}};
    out.push_back(std::move(c));
  }
  return out;
}

// Membership -----------------------------------------------------------------

std::vector<EstimateCheck> verify_membership(const zoo::ModelMetric& m, double r0, int samples) {
  std::vector<EstimateCheck> out;
  const auto card = probes::membership_card(m, r0, samples);
  auto ric = make_check("membership.ric", "model.membership", card.sup_ric, 1.0);
  auto conj = make_check("membership.conj", "model.membership", r0, card.conj);
  conj.context = {{"exact", card.conj_exact ? 1.0 : 0.0}};
  out.push_back(std::move(ric));
  out.push_back(std::move(conj));

  if (m.family == zoo::Family::RoundSphere) {
    const probes::SphereGeometry geo(m.n, m.radius);
    const double expected = std::numbers::pi * m.radius;
    const auto est = probes::jacobi_conjugate_radius(geo, probes::ChartPoint{}, samples, 1.5 * expected, expected / 2000.0);
    auto c = exact_check("conjugate.jacobi", "conjugate.radius", est.found ? std::abs(est.estimate - expected) : kInf, 1e-4);
    c.context = {{"estimate", est.estimate}, {"model_value", expected}, {"directions", static_cast<double>(est.directions)}};
    out.push_back(std::move(c));
  } else if (m.family == zoo::Family::FlatTorus) {
    const core::MetricField flat(core::ChartGrid(std::vector<int>(m.n, 8), m.periods));
    const probes::GridGeometry geo(flat);
    double d2 = 0.0;
    for (double L : m.periods) d2 += 0.25 * L * L;
    const double cap = 10.0 * std::sqrt(d2);
    const auto est = probes::jacobi_conjugate_radius(geo, probes::ChartPoint{}, samples, cap, cap / 2000.0);
    auto c = exact_check("conjugate.jacobi", "conjugate.radius", est.found ? 1.0 : 0.0, 0.0);
    c.context = {{"cap", cap}, {"estimate", est.estimate}};
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<EstimateCheck> verify_membership(const core::MetricField& g, double r0, int samples, int workers) {
  std::vector<EstimateCheck> out;
  const probes::GridGeometry geo(g, workers);
  probes::ChartPoint base;
  base.x = g.chart().position(0);
  const double cap = 2.0 * r0;
  const auto est = probes::jacobi_conjugate_radius(geo, base, samples, cap, g.chart().min_spacing() / 8.0);
  const double conj = est.found ? est.estimate - est.margin : cap;
  auto ric = make_check("membership.ric", "model.membership", geo.curvature().sup_norm_ric, 1.0);
  auto c = make_check("membership.conj", "model.membership", r0, conj);
  c.context = {{"found", est.found ? 1.0 : 0.0}, {"cap", cap}, {"margin", est.margin}};
  out.push_back(std::move(ric));
  out.push_back(std::move(c));
  return out;
}

// Refinement -----------------------------------------------------------------

RefinementResult refinement_study(const Scenario& s, int workers) {
  RefinementResult r;
  const double T = s.refinement.T;
  for (int N : s.refinement.levels) {
    zoo::Perturbation p;
    p.n = s.geometry.n;
    p.nodes = N;
    p.period = s.geometry.period;
    p.amplitude = s.geometry.amplitude;
    p.frequency = s.geometry.frequency;
    p.modes = s.geometry.modes;
    p.seed = s.seed_or_throw();
    flow::FlowConfig cfg = s.flow;
    cfg.initial = zoo::perturbed_torus(p);
    cfg.T = T;
    cfg.checkpoint_every = T / (N / 8);
    cfg.keep_fields = true;
    cfg.workers = workers;
    const auto trace = flow::run(cfg);
    if (trace.termination != flow::Termination::ReachedT)
      throw Error(ErrorCode::Stepping, "refinement level " + std::to_string(N) + " did not reach T: " + trace.message);
    const auto rep = flow::evolution_residuals(trace, workers);
    double mid = -1.0, c_min = rep.c_min;
    for (const auto& row : rep.rows)
      if (same_time(row.t, 0.5 * T)) mid = row.scalar_residual;
    if (mid < 0.0) throw Error(ErrorCode::Resample, "no residual row at T/2");
    r.levels.push_back(N);
    r.residual.push_back(mid);
    r.c_min.push_back(c_min);
  }
  for (std::size_t i = 1; i < r.levels.size(); ++i)
    r.order.push_back(std::log(r.residual[i - 1] / r.residual[i]) /
                      std::log(static_cast<double>(r.levels[i]) / r.levels[i - 1]));
  return r;
}

std::vector<EstimateCheck> verify_refinement(const RefinementResult& r, double min_order) {
  std::vector<EstimateCheck> out;
  for (std::size_t i = 0; i < r.order.size(); ++i) {
    auto c = exact_check(idx("refinement.order", i), "evolution.scalar-identity", min_order, r.order[i]);
    c.context = {{"coarse", static_cast<double>(r.levels[i])},
                 {"fine", static_cast<double>(r.levels[i + 1])},
                 {"coarse_residual", r.residual[i]},
                 {"fine_residual", r.residual[i + 1]}};
    out.push_back(std::move(c));
    auto d = exact_check(idx("refinement.decrease", i), "evolution.scalar-identity", r.residual[i + 1], r.residual[i]);
    d.context = {{"coarse", static_cast<double>(r.levels[i])}, {"fine", static_cast<double>(r.levels[i + 1])}};
    out.push_back(std::move(d));
  }
  return out;
}

// Moser ----------------------------------------------------------------------

namespace {

std::string case_name(double q, double b) {
  std::ostringstream s;
  s << "q" << q << "-b" << b;
  return s.str();
}

void append_case(std::vector<EstimateCheck>& out, moser::MoserReport rep, const std::string& name) {
  for (auto& c : rep.checks) {
    c.id = "moser." + name + c.id.substr(std::string("moser").size());
    c.context["max_sharpness"] = rep.max_sharpness;
    out.push_back(std::move(c));
  }
}

}  // namespace

std::vector<EstimateCheck> verify_moser_suite(const MoserSpec& spec, std::uint64_t seed) {
  std::vector<EstimateCheck> out;
  auto base = [&] {
    moser::MoserProblem p;
    p.n = spec.n;
    p.radius = spec.radius;
    p.nodes = spec.nodes;
    p.T = spec.T;
    p.steps = spec.steps;
    p.p0 = spec.p0;
    return p;
  };
  for (auto [q, b] : spec.cases) {
    auto p = base();
    p.q = q;
    p.b = b;
    append_case(out, moser::verify_moser(p), case_name(q, b));
  }

  if (spec.evolving_radius > 0.0) {
    flow::FlowConfig cfg;
    cfg.initial = zoo::ModelMetric::round_sphere(spec.n, spec.evolving_radius);
    cfg.T = spec.T;
    cfg.checkpoint_every = spec.T / 20.0;
    const auto trace = flow::run(cfg);
    auto p = base();
    p.q = spec.cases.empty() ? 2.0 * spec.n : spec.cases.front().first;
    const double r0sq = spec.evolving_radius * spec.evolving_radius;
    for (const auto& s : trace.snapshots) p.sigma.emplace_back(s.t, s.model->radius * s.model->radius / r0sq);
    p.l = trace.l;
    append_case(out, moser::verify_moser(p), "evolving");
  }

  if (spec.sweep > 0) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * zoo::unit_from_bits(rng()); };
    const int n = spec.n;
    double worst = 0.0;
    for (int i = 0; i < spec.sweep; ++i) {
      double q = uniform(n, 3.0 * n);
      if (q <= n) q = std::nextafter(static_cast<double>(n), kInf);
      const double p = uniform(2.0, 50.0), beta = uniform(0.1, 10.0), cs = uniform(0.1, 10.0);
      worst = std::max(worst, std::abs(moser::epsilon_identity(n, q, p, beta, cs) - 1.0 / p));
    }
    auto c = exact_check("moser.epsilon-identity", "moser.epsilon-identity", worst, 1e-12);
    c.context = {{"tuples", static_cast<double>(spec.sweep)}, {"n", static_cast<double>(n)}};
    out.push_back(std::move(c));

    // Relative decrease of the coefficient along each monotone direction.
    double dR = 0.0, dbeta = 0.0, dl = 0.0, dT = 0.0;
    auto coef = [&](double q, double beta, double cs, double l, double t, double T, double R) {
      return moser::moser_coefficient(n, spec.p0, cs, moser::c1(n, q, spec.p0, beta, cs, l), t, l, T, R);
    };
    for (int i = 0; i < spec.sweep; ++i) {
      const double q = uniform(n + 0.5, 3.0 * n), beta = uniform(0.1, 10.0), cs = uniform(0.1, 10.0);
      const double l = uniform(0.0, 5.0), T = uniform(0.01, 1.0), t = uniform(0.01, 1.0) * T,
                   R = uniform(0.1, 2.0);
      const double step = uniform(1.01, 2.0);
      const double c0 = coef(q, beta, cs, l, t, T, R);
      dR = std::max(dR, (coef(q, beta, cs, l, t, T, R * step) - c0) / c0);
      dbeta = std::max(dbeta, (c0 - coef(q, beta * step, cs, l, t, T, R)) / c0);
      dl = std::max(dl, (c0 - coef(q, beta, cs, l * step + 0.01, t, T, R)) / c0);
      dT = std::max(dT, (c0 - coef(q, beta, cs, l, t, T * step, R)) / c0);
    }
    const std::pair<const char*, double> mono[] = {{"R", dR}, {"beta", dbeta}, {"l", dl}, {"T", dT}};
    for (auto [name, v] : mono) {
      auto m = exact_check(std::string("moser.monotone.") + name, "moser.coefficient-monotone", v, 0.0);
      m.tolerance = 1e-12;
      m.context = {{"tuples", static_cast<double>(spec.sweep)}};
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace rflab::harness
