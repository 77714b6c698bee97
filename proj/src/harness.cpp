#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rflab/error.hpp"
#include "rflab/harness.hpp"

namespace rflab::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double from_number(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

// Ledger ---------------------------------------------------------------------

void Ledger::summarize() {
  summary = {};
  summary.worst_margin = kInf;
  for (const auto& c : checks) {
    ++summary.total;
    if (!c.applicable) {
      ++summary.not_applicable;
      continue;
    }
    if (c.passed())
      ++summary.passed;
    else
      ++summary.failed;
    double scaled = c.margin() / std::max(1.0, std::abs(c.rhs));
    if (std::isinf(c.rhs) && std::isfinite(c.lhs)) scaled = c.rhs;
    if (std::isnan(scaled) || scaled < summary.worst_margin) {
      summary.worst_margin = scaled;
      summary.worst_check = c.id;
    }
  }
}

std::string ledger_json(const Ledger& ledger) {
  json checks = json::array();
  for (const auto& c : ledger.checks) {
    json ctx = json::object();
    for (const auto& [k, v] : c.context) ctx[k] = number(v);
    json item = {{"id", c.id},
                 {"anchor", c.anchor},
                 {"applicable", c.applicable},
                 {"lhs", number(c.lhs)},
                 {"rhs", number(c.rhs)},
                 {"margin", number(c.margin())},
                 {"tolerance", number(c.tolerance)},
                 {"passed", c.passed()},
                 {"context", ctx}};
    if (!c.reason.empty()) item["reason"] = c.reason;
    checks.push_back(std::move(item));
  }
  const auto& s = ledger.summary;
  json out = {{"version", ledger.version},
              {"scenario", ledger.scenario},
              {"scenario_digest", ledger.scenario_digest},
              {"checks", checks},
              {"summary",
               {{"total", s.total},
                {"passed", s.passed},
                {"failed", s.failed},
                {"not_applicable", s.not_applicable},
                {"worst_margin", number(s.worst_margin)},
                {"worst_check", s.worst_check}}}};
  return out.dump(2) + "\n";
}

Ledger parse_ledger(const std::string& text) {
  Ledger l;
  try {
    const auto j = json::parse(text);
    l.version = j.at("version").get<std::string>();
    l.scenario = j.at("scenario").get<std::string>();
    l.scenario_digest = j.at("scenario_digest").get<std::string>();
    for (const auto& item : j.at("checks")) {
      EstimateCheck c;
      c.id = item.at("id").get<std::string>();
      c.anchor = item.at("anchor").get<std::string>();
      c.applicable = item.at("applicable").get<bool>();
      c.lhs = from_number(item.at("lhs"));
      c.rhs = from_number(item.at("rhs"));
      c.tolerance = from_number(item.at("tolerance"));
      if (item.contains("reason")) c.reason = item.at("reason").get<std::string>();
      for (const auto& [k, v] : item.at("context").items()) c.context[k] = from_number(v);
      l.checks.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("ledger: ") + e.what());
  }
  l.summarize();
  return l;
}

std::string render_report(const Ledger& ledger) {
  std::ostringstream out;
  const auto& s = ledger.summary;
  out << "scenario  " << ledger.scenario << "\n";
  out << "digest    " << ledger.scenario_digest << "\n";
  out << "version   " << ledger.version << "\n";
  out << "result    " << (s.failed == 0 ? "PASS" : "FAIL") << "\n";
  out << "checks    " << s.total << " total, " << s.passed << " passed, " << s.failed << " failed, "
      << s.not_applicable << " not applicable\n";
  if (!s.worst_check.empty())
    out << "worst     " << s.worst_check << " (scaled margin " << short_fmt(s.worst_margin) << ")\n";

  struct Row {
    std::size_t count = 0, passed = 0, failed = 0, na = 0;
    double worst = kInf;
  };
  std::map<std::string, Row> rows;
  for (const auto& c : ledger.checks) {
    auto& r = rows[c.anchor];
    ++r.count;
    if (!c.applicable) {
      ++r.na;
      continue;
    }
    c.passed() ? ++r.passed : ++r.failed;
    if (!(std::isinf(c.rhs) && std::isfinite(c.lhs)))
      r.worst = std::min(r.worst, c.margin() / std::max(1.0, std::abs(c.rhs)));
  }
  out << "\n" << std::left << std::setw(30) << "anchor" << std::right << std::setw(7) << "checks" << std::setw(7)
      << "pass" << std::setw(7) << "fail" << std::setw(7) << "n/a" << std::setw(14) << "worst" << "\n";
  for (const auto& [anchor, r] : rows)
    out << std::left << std::setw(30) << anchor << std::right << std::setw(7) << r.count << std::setw(7) << r.passed
        << std::setw(7) << r.failed << std::setw(7) << r.na << std::setw(14)
        << (r.passed + r.failed ? short_fmt(r.worst) : std::string("-")) << "\n";

  bool header = false;
  for (const auto& c : ledger.checks) {
    if (c.passed()) continue;
    if (!header) out << "\nfailed checks\n";
    header = true;
    out << "  " << c.id << "  lhs " << short_fmt(c.lhs) << "  rhs " << short_fmt(c.rhs) << "  margin "
        << short_fmt(c.margin()) << "\n";
  }
  return out.str();
}

// Traces ---------------------------------------------------------------------

std::string trace_csv(const flow::FlowTrace& trace) {
  std::ostringstream out;
  out << "t,sup_rm,sup_ric,sup_ric_full,c0_distance,volume,scalar_min,scalar_max,l_instant,status\n";
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    const auto& s = trace.snapshots[k];
    const auto& d = s.diag;
    const bool last = k + 1 == trace.snapshots.size();
    out << fmt(s.t) << ',' << fmt(d.sup_rm) << ',' << fmt(d.sup_ric) << ',' << fmt(d.sup_ric_full) << ','
        << fmt(d.c0_distance) << ',' << fmt(d.volume) << ',' << fmt(d.scalar_min) << ',' << fmt(d.scalar_max) << ','
        << fmt(d.l_instant) << ',' << (last ? flow::to_string(trace.termination) : "running") << '\n';
  }
  return out.str();
}

namespace {

json model_json(const zoo::ModelMetric& m) {
  json j = {{"family", zoo::family_name(m.family)}, {"n", m.n}};
  switch (m.family) {
    case zoo::Family::RoundSphere: j["radius"] = m.radius; break;
    case zoo::Family::FlatTorus: j["periods"] = m.periods; break;
    case zoo::Family::ProductSphereCircle:
      j["radius"] = m.radius;
      j["circle_length"] = m.circle_length;
      break;
    case zoo::Family::MilnorSU2: j["lambda"] = m.lambda; break;
    case zoo::Family::HeisenbergNil: j["epsilon"] = m.epsilon; break;
  }
  return j;
}

}  // namespace

std::string trace_json(const flow::FlowTrace& trace, bool fields) {
  json snaps = json::array();
  for (const auto& s : trace.snapshots) {
    const auto& d = s.diag;
    json item = {{"t", number(s.t)},
                 {"sup_rm", number(d.sup_rm)},
                 {"sup_ric", number(d.sup_ric)},
                 {"sup_ric_full", number(d.sup_ric_full)},
                 {"c0_distance", number(d.c0_distance)},
                 {"volume", number(d.volume)},
                 {"scalar_min", number(d.scalar_min)},
                 {"scalar_max", number(d.scalar_max)},
                 {"l_instant", number(d.l_instant)},
                 {"max_sup_ric", number(d.max_sup_ric)},
                 {"max_l", number(d.max_l)},
                 {"int_sup_rm", number(d.int_sup_rm)},
                 {"int_sup_ric", number(d.int_sup_ric)}};
    if (s.is_model()) item["model"] = model_json(*s.model);
    if (fields && !s.is_model() && !s.metric.data().empty()) {
      item["metric"] = {{"n", s.metric.dimension()},
                        {"extents", s.metric.chart().extents()},
                        {"periods", s.metric.chart().periods()},
                        {"g", s.metric.data()}};
    }
    snaps.push_back(std::move(item));
  }
  json out = {{"termination", flow::to_string(trace.termination)},
              {"message", trace.message},
              {"steps", trace.steps},
              {"max_sup_ric", number(trace.max_sup_ric)},
              {"l", number(trace.l)},
              {"cadence", number(trace.cadence)},
              {"snapshots", snaps}};
  if (trace.failed_node) out["failed_node"] = *trace.failed_node;
  return out.dump(1) + "\n";
}

void atomic_write(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot rename onto '" + path + "'");
  }
}

// Orchestration --------------------------------------------------------------

namespace {

flow::FlowTrace integrate(const Scenario& s, int workers) {
  flow::FlowConfig cfg = s.flow;
  cfg.initial = build_initial(s);
  cfg.keep_fields = true;
  cfg.workers = workers;
  return flow::run(cfg);
}

void append(std::vector<EstimateCheck>& out, std::vector<EstimateCheck> more) {
  for (auto& c : more) out.push_back(std::move(c));
}

}  // namespace

RunResult execute(const Scenario& s, const RunOptions& opt) {
  validate(s);
  RunResult r;
  r.dump_fields = s.dump_fields;
  r.ledger.scenario = s.name;
  r.ledger.scenario_digest = hex64(scenario_digest(s));
  auto& checks = r.ledger.checks;

  if (s.kind == Kind::Moser) {
    if (opt.verify) checks = verify_moser_suite(s.moser, s.seed.value_or(0));
    r.ledger.summarize();
    return r;
  }

  r.trace = integrate(s, opt.workers);
  const auto& trace = *r.trace;
  if (opt.verify) {
    const bool perturbed = s.geometry.family == "perturbed-torus";
    if (s.selected("theorem")) {
      TheoremOptions t;
      t.smoothing_t1 = s.probes.smoothing_t1;
      t.smoothing = perturbed;
      append(checks, verify_theorem_main(trace, t));
    }
    if (s.selected("geometry")) {
      GeometryOptions g;
      g.times = s.probes.times;
      g.diameter_sources = s.probes.diameter_sources;
      g.excess_pairs = s.probes.excess_pairs;
      g.distance_pairs = s.probes.distance_pairs;
      g.curves = s.probes.curves;
      g.reach = s.probes.reach;
      g.seed = s.seed.value_or(1);
      g.workers = opt.workers;
      append(checks, verify_geometric_evolution(trace, g));
    }
    if (s.selected("residuals")) append(checks, verify_residuals(trace, opt.workers));
    if (s.selected("lemmas")) {
      Scenario cal = s;
      cal.geometry.amplitude = s.lemmas.calibrate_amplitude;
      const auto cal_trace = integrate(cal, opt.workers);
      LemmaOptions l;
      l.r0 = s.lemmas.r0;
      l.p0 = s.lemmas.p0;
      l.bases = s.lemmas.bases;
      l.sobolev_bases = s.lemmas.sobolev_bases;
      l.sobolev_times = s.lemmas.sobolev_times;
      l.graded_nodes = s.lemmas.graded_nodes;
      l.sobolev_tolerance = s.lemmas.sobolev_tolerance;
      l.headroom = s.lemmas.headroom;
      l.calibration_amplitude = s.lemmas.calibrate_amplitude;
      l.workers = opt.workers;
      append(checks, verify_propagation_lemmas(cal_trace, trace, l));
    }
    if (s.selected("covering")) {
      const auto& first = trace.snapshots.front();
      const int n = first.dimension();
      const bool flat = first.diag.sup_rm == 0.0;
      const double H = flat ? 0.0 : -first.diag.sup_ric / (n - 1);
      std::unique_ptr<probes::MetricSample> sample;
      if (first.is_model()) {
        if (first.model->family != zoo::Family::FlatTorus)
          throw Error(ErrorCode::Unsupported, "covering on the model route needs a flat torus");
        sample = std::make_unique<probes::FlatTorusSample>(
            core::ChartGrid(std::vector<int>(n, s.geometry.nodes), first.model->periods));
      } else if (flat) {
        sample = std::make_unique<probes::FlatTorusSample>(first.metric.chart());
      } else {
        sample = std::make_unique<probes::GraphDistance>(first.metric, s.probes.reach);
      }
      for (std::size_t i = 0; i < s.covering.pairs.size(); ++i) {
        const auto [rr, eps] = s.covering.pairs[i];
        append(checks, covering_check(*sample, n, H, s.covering.center, rr, eps, "covering." + std::to_string(i)));
      }
    }
    if (s.selected("membership")) {
      const auto& first = trace.snapshots.front();
      if (first.is_model())
        append(checks, verify_membership(*first.model, s.probes.r0, s.probes.conj_samples));
      else
        append(checks, verify_membership(first.metric, s.probes.r0, s.probes.conj_samples, opt.workers));
    }
    if (s.selected("refinement"))
      append(checks, verify_refinement(refinement_study(s, opt.workers), s.refinement.min_order));
  }
  for (const auto& c : checks)
    if (!known_anchor(c.anchor)) throw Error(ErrorCode::InvalidArgument, "check " + c.id + " has an unknown anchor");
  r.ledger.summarize();
  return r;
}

void write_artifacts(const RunResult& r, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + dir + "'");
  const fs::path base(dir);
  if (r.trace) {
    atomic_write((base / "trace.csv").string(), trace_csv(*r.trace));
    atomic_write((base / "trace.json").string(), trace_json(*r.trace, r.dump_fields));
  }
  atomic_write((base / "ledger.json").string(), ledger_json(r.ledger));
  atomic_write((base / "report.txt").string(), render_report(r.ledger));
}

// Probe ----------------------------------------------------------------------

std::string probe_report(const Scenario& s, int workers) {
  validate(s);
  const auto initial = build_initial(s);
  json out = {{"scenario", s.name}};
  const std::uint64_t seed = s.seed.value_or(1);
  if (const auto* m = std::get_if<zoo::ModelMetric>(&initial)) {
    const auto curv = zoo::exact_curvature(*m);
    out["model"] = model_json(*m);
    out["sup_rm"] = number(curv.rm_norm);
    out["sup_ric"] = number(curv.ric_norm);
    out["volume"] = number(zoo::model_volume(*m));
    std::unique_ptr<probes::MetricSample> sample;
    if (m->family == zoo::Family::RoundSphere)
      sample = std::make_unique<probes::SphereSample>(m->n, m->radius, 400);
    else if (m->family == zoo::Family::FlatTorus)
      sample = std::make_unique<probes::FlatTorusSample>(
          core::ChartGrid(std::vector<int>(m->n, s.geometry.nodes), m->periods));
    if (sample) {
      const auto d = probes::diameter(*sample, s.probes.diameter_sources);
      out["diameter"] = number(d.value);
      out["diameter_graph"] = number(d.graph_bound);
      out["excess"] = number(probes::excess(*sample, s.probes.excess_pairs, seed).value);
    } else {
      out["diameter"] = nullptr;
      out["excess"] = nullptr;
    }
    const auto card = probes::membership_card(*m, s.probes.r0, s.probes.conj_samples);
    out["conj"] = number(card.conj);
    out["conj_exact"] = card.conj_exact;
    out["member"] = card.member;
    out["r0"] = s.probes.r0;
    out["sobolev"] = nullptr;
    return out.dump(2) + "\n";
  }

  const auto& g = std::get<core::MetricField>(initial);
  const probes::GridGeometry geo(g, workers);
  const auto& b = geo.curvature();
  out["n"] = g.dimension();
  out["extents"] = g.chart().extents();
  out["sup_rm"] = number(b.sup_norm_rm);
  out["sup_ric"] = number(b.sup_norm_ric);
  out["volume"] = number(probes::volume(g));
  const probes::GraphDistance G(g, s.probes.reach, &geo);
  const auto d = probes::diameter(G, s.probes.diameter_sources);
  out["diameter"] = number(d.value);
  out["diameter_graph"] = number(d.graph_bound);
  out["excess"] = number(probes::excess(G, s.probes.excess_pairs, seed).value);
  double half = kInf;
  for (double L : g.chart().periods()) half = std::min(half, 0.5 * L);
  const double cap = s.probes.r0 > 0.0 ? 2.0 * s.probes.r0 : half;
  probes::ChartPoint base;
  base.x = g.chart().position(0);
  const auto conj = probes::jacobi_conjugate_radius(geo, base, s.probes.conj_samples, cap, g.chart().min_spacing() / 8.0);
  out["conj"] = number(conj.found ? conj.estimate : cap);
  out["conj_found"] = conj.found;
  out["conj_margin"] = number(conj.margin);
  if (g.dimension() >= 3) {
    const double radius = s.probes.sobolev_radius > 0.0 ? s.probes.sobolev_radius : g.chart().period(0) / 8.0;
    probes::SobolevOptions so;
    so.graded_nodes = s.lemmas.graded_nodes;
    so.tolerance = s.lemmas.sobolev_tolerance;
    const auto est = probes::sobolev_constant(probes::ball_patch(g, 0, radius), so);
    out["sobolev"] = number(est.value);
    out["sobolev_radius"] = radius;
  } else {
    out["sobolev"] = nullptr;
  }
  return out.dump(2) + "\n";
}

}  // namespace rflab::harness
