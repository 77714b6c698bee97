// Acceptance suite: one PASS/FAIL line per criterion.
//
// Ledger-based criteria go through the rflab CLI exactly as a user would run
// it; the rest call the library directly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rflab/flow.hpp"
#include "rflab/harness.hpp"
#include "rflab/probes.hpp"

using namespace rflab;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(RFLAB_CLI) + " " + args + " > /dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<fs::path> bundled() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(RFLAB_SCENARIOS))
    if (e.path().extension() == ".ini") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

int verify_into(const std::vector<fs::path>& scenarios, const fs::path& out) {
  fs::remove_all(out);
  std::string args = "verify --out " + out.string();
  for (const auto& s : scenarios) args += " --scenario " + s.string();
  return cli(args);
}

struct Ledgers {
  std::map<std::string, harness::Ledger> by_name;
  const harness::Ledger* get(const std::string& name) const {
    auto it = by_name.find(name);
    return it == by_name.end() ? nullptr : &it->second;
  }
};

Ledgers load(const fs::path& dir) {
  Ledgers l;
  if (!fs::exists(dir)) return l;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto p = e.path() / "ledger.json";
    if (fs::exists(p)) l.by_name[e.path().filename().string()] = harness::parse_ledger(read(p));
  }
  return l;
}

// All checks with this anchor (optionally id prefix) are applicable and pass.
struct Tally {
  std::size_t count = 0, failed = 0, skipped = 0;
  double worst = INFINITY;
  bool ok() const { return count > 0 && failed == 0 && skipped == 0; }
};

Tally tally(const harness::Ledger& l, const std::function<bool(const EstimateCheck&)>& pick) {
  Tally t;
  for (const auto& c : l.checks) {
    if (!pick(c)) continue;
    ++t.count;
    if (!c.applicable) {
      ++t.skipped;
      continue;
    }
    if (!c.passed()) ++t.failed;
    if (std::isfinite(c.rhs)) t.worst = std::min(t.worst, c.margin() / std::max(1.0, std::abs(c.rhs)));
  }
  return t;
}

auto anchor_is(std::string a) {
  return [a](const EstimateCheck& c) { return c.anchor == a; };
}

auto id_starts(std::string p) {
  return [p](const EstimateCheck& c) { return c.id.rfind(p, 0) == 0; };
}

const std::vector<std::string> kSuite = {"sphere-suite", "perturbed-torus-a005", "perturbed-torus-a010",
                                         "perturbed-torus-a020"};

Verdict suite_anchor(const Ledgers& L, const std::string& anchor, std::size_t per_ledger_min) {
  Verdict v{true, ""};
  for (const auto& name : kSuite) {
    const auto* l = L.get(name);
    if (!l) return {false, name + " ledger missing"};
    const auto t = tally(*l, anchor_is(anchor));
    v.pass = v.pass && t.ok() && t.count >= per_ledger_min;
    v.detail += name + ": " + std::to_string(t.count - t.failed) + "/" + std::to_string(t.count) +
                fmt(" worst %.3g; ", t.worst);
  }
  return v;
}

// 1
Verdict sphere_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  flow::FlowConfig c;
  c.initial = zoo::ModelMetric::round_sphere(2, 1.0);
  c.T = 0.4;
  c.control.dt_init = 1e-4;
  c.control.dt_max = 1e-4;
  c.checkpoint_every = 0.01;
  const auto tr = flow::run(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  for (const auto& s : tr.snapshots) {
    const double r2 = s.model->radius * s.model->radius;
    worst = std::max(worst, std::abs(r2 - (1.0 - 2.0 * s.t)) / (1.0 - 2.0 * s.t));
  }
  const bool reached = tr.termination == flow::Termination::ReachedT && std::abs(tr.snapshots.back().t - 0.4) < 1e-12;
  return {reached && worst <= 1e-8 && secs < 1.0,
          fmt("max relative error %.2e", worst) + fmt(", %.3f s", secs) + ", steps " + std::to_string(tr.steps)};
}

// 2
Verdict stationarity() {
  double worst_c0 = 0.0, worst_curv = 0.0;
  auto scan = [&](const flow::FlowTrace& tr) {
    for (const auto& s : tr.snapshots) {
      worst_c0 = std::max(worst_c0, s.diag.c0_distance);
      worst_curv = std::max({worst_curv, s.diag.sup_rm, s.diag.sup_ric, s.diag.sup_ric_full, std::abs(s.diag.scalar_min),
                             std::abs(s.diag.scalar_max)});
    }
    return tr.termination == flow::Termination::ReachedT;
  };
  flow::FlowConfig c;
  c.T = 1.0;
  c.checkpoint_every = 0.1;
  c.initial = zoo::ModelMetric::flat_torus({2 * kPi, 3.0, 5.0});
  bool ok = scan(flow::run(c));
  // Non-orthogonal lattice: a constant metric on the grid route.
  const double G[9] = {1.3, 0.2, -0.1, 0.2, 0.9, 0.05, -0.1, 0.05, 1.1};
  c.initial = core::MetricField::sample(core::ChartGrid::cube(3, 16, 2 * kPi), [&](const Point&, std::span<double> g) {
    for (int i = 0; i < 9; ++i) g[i] = G[i];
  });
  ok = scan(flow::run(c)) && ok;
  return {ok && worst_c0 <= 1e-10 && worst_curv <= 1e-10,
          fmt("max c0 %.2e", worst_c0) + fmt(", max curvature norm %.2e", worst_curv) + " (model and grid routes)"};
}

// 5
Verdict smoothing(const Ledgers& L) {
  const auto* l = L.get("smoothing-48");
  if (!l) return {false, "smoothing-48 ledger missing"};
  for (const auto& c : l->checks)
    if (c.id == "flow.smoothing")
      return {c.applicable && c.passed(), fmt("max sup|Rm| t^1/2 = %.4g", c.lhs) + fmt(", 3x base = %.4g", c.rhs)};
  return {false, "flow.smoothing check missing"};
}

// 6
Verdict refinement(const Ledgers& L) {
  const auto* l = L.get("residual-order");
  if (!l) return {false, "residual-order ledger missing"};
  const auto orders = tally(*l, id_starts("refinement.order."));
  const auto dec = tally(*l, id_starts("refinement.decrease."));
  std::string d = "orders:";
  for (const auto& c : l->checks)
    if (c.id.rfind("refinement.order.", 0) == 0) d += fmt(" %.3f", c.rhs);
  return {orders.ok() && dec.ok() && orders.count == 2, d + " (min 1.8), three levels"};
}

// 7
Verdict lemmas(const Ledgers& L) {
  const auto* l = L.get("perturbed-torus-a020");
  if (!l) return {false, "perturbed-torus-a020 ledger missing"};
  std::size_t count = 0, failed = 0;
  std::set<std::string> anchors;
  for (const auto& c : l->checks) {
    const bool lemma = c.anchor.rfind("lemma.", 0) == 0 || c.anchor == "evolution.ricci-integral" ||
                       c.anchor == "sobolev.quotient-evolution" || c.anchor == "covering.lp-sum";
    if (!lemma) continue;
    ++count;
    anchors.insert(c.anchor);
    if (!c.applicable || !c.passed()) ++failed;
  }
  const bool all_forms = anchors.count("lemma.pointwise-smoothing") && anchors.count("lemma.lp-propagation") &&
                         anchors.count("lemma.ricci-growth") && anchors.count("lemma.sobolev-growth");
  return {count > 0 && failed == 0 && all_forms,
          std::to_string(count - failed) + "/" + std::to_string(count) + " holdout and fit checks pass, headroom 1.5"};
}

// 8
Verdict geometry(const Ledgers& L) {
  const auto* s = L.get("sphere-suite");
  if (!s) return {false, "sphere-suite ledger missing"};
  std::set<double> times;
  for (const auto& c : s->checks)
    if (c.anchor == "geometry.diameter" && c.applicable) times.insert(c.context.at("t"));
  const auto sd = tally(*s, anchor_is("geometry.diameter"));
  const auto sv = tally(*s, anchor_is("geometry.volume"));
  bool ok = sd.ok() && sv.ok() && times.size() >= 20;
  std::string d = "sphere: " + std::to_string(times.size()) + " probe times";
  for (const auto& name : {"perturbed-torus-a005", "perturbed-torus-a010", "perturbed-torus-a020"}) {
    const auto* l = L.get(name);
    if (!l) return {false, std::string(name) + " ledger missing"};
    for (const char* a : {"geometry.diameter", "geometry.volume", "geometry.excess", "geometry.length-rate"}) {
      const auto t = tally(*l, anchor_is(a));
      ok = ok && t.ok();
    }
    for (const auto& c : l->checks)
      if (c.anchor == "geometry.length-rate") ok = ok && c.context.at("curves") >= 16;
  }
  return {ok, d + "; tori diameter/volume/excess/length-rate all pass (16-curve bundle)"};
}

// 9
Verdict conjugate() {
  std::string d;
  bool ok = true;
  for (double r : {1.0, 2.0}) {
    probes::SphereGeometry geo(3, r);
    const auto c = probes::jacobi_conjugate_radius(geo, {}, 12, 1.5 * kPi * r, kPi * r / 2000);
    const double err = std::abs(c.estimate - kPi * r);
    ok = ok && c.found && err <= 1e-4;
    d += fmt("r=%g", r) + fmt(": |conj - pi r| = %.1e; ", err);
  }
  const std::vector<double> periods = {2 * kPi, 2 * kPi, 2 * kPi};
  const double diam = std::sqrt(3.0) * kPi;
  probes::GridGeometry flat(core::MetricField(core::ChartGrid({24, 24, 24}, periods)));
  const auto c = probes::jacobi_conjugate_radius(flat, {}, 12, 10 * diam, 0.01);
  ok = ok && !c.found;
  d += std::string("flat torus: ") + (c.found ? "conjugate point found" : "none") + fmt(" up to %.3g", 10 * diam);
  return {ok, d};
}

// 10
Verdict moser_suite(const Ledgers& L) {
  const auto* l = L.get("moser-flat");
  if (!l) return {false, "moser-flat ledger missing"};
  const auto sup = tally(*l, anchor_is("moser.sup-bound"));
  const auto eps = tally(*l, anchor_is("moser.epsilon-identity"));
  const auto mono = tally(*l, anchor_is("moser.coefficient-monotone"));
  std::set<std::string> cases;
  for (const auto& c : l->checks)
    if (c.anchor == "moser.sup-bound" && c.id.rfind("moser.q", 0) == 0) cases.insert(c.id.substr(0, c.id.find('.', 6)));
  double tuples = 0, worst = 0;
  for (const auto& c : l->checks)
    if (c.anchor == "moser.epsilon-identity") tuples = c.context.at("tuples"), worst = c.lhs;
  return {sup.ok() && eps.ok() && mono.ok() && cases.size() == 4 && tuples >= 1000,
          std::to_string(sup.count) + " sup-bound checks over " + std::to_string(cases.size()) +
              " cases; epsilon identity worst " + fmt("%.1e", worst) + fmt(" over %.0f tuples; ", tuples) +
              std::to_string(mono.count) + " monotonicity sweeps"};
}

// 11
Verdict covering(const Ledgers& L) {
  const auto* l = L.get("flat-torus");
  if (!l) return {false, "flat-torus ledger missing"};
  const auto count = tally(*l, anchor_is("covering.count"));
  const auto mult = tally(*l, anchor_is("covering.multiplicity"));
  return {count.ok() && mult.ok() && count.count == 5 && mult.count == 5,
          std::to_string(count.count) + " count and " + std::to_string(mult.count) + " multiplicity checks pass"};
}

// 12
Verdict determinism(const fs::path& a, const fs::path& b, int rc_a, int rc_b) {
  std::size_t compared = 0, differ = 0;
  for (const auto& s : bundled()) {
    const auto name = harness::load_scenario(s.string()).name;
    const auto pa = a / name / "ledger.json", pb = b / name / "ledger.json";
    if (!fs::exists(pa) || !fs::exists(pb)) return {false, name + " ledger missing"};
    ++compared;
    differ += read(pa) != read(pb);
  }
  return {rc_a == 0 && rc_b == 0 && differ == 0 && compared > 0,
          std::to_string(compared - differ) + "/" + std::to_string(compared) + " ledgers byte-identical"};
}

}  // namespace

int main() {
  const fs::path out = RFLAB_ACCEPTANCE_OUT;
  const auto t0 = std::chrono::steady_clock::now();
  const auto scenarios = bundled();
  const int rc_a = verify_into(scenarios, out / "first");
  const int rc_b = verify_into(scenarios, out / "second");
  const fs::path long_dir = fs::path(RFLAB_SCENARIOS) / "long";
  verify_into({long_dir / "smoothing-48.ini", long_dir / "residual-order.ini"}, out / "long");
  const auto L = load(out / "first");
  const auto Llong = load(out / "long");

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"sphere flow exactness", sphere_exactness},
      {"flat torus stationarity", stationarity},
      {"metric drift |g(t) - g0| <= 4t", [&] { return suite_anchor(L, "flow.metric-drift", 10); }},
      {"Ricci bound sup|Ric| <= 2", [&] {
         auto v = suite_anchor(L, "flow.ricci-bound", 10);
         for (const auto& name : kSuite)
           if (const auto* l = L.get(name)) v.pass = v.pass && tally(*l, anchor_is("flow.reached-horizon")).ok();
         return v;
       }},
      {"curvature smoothing (property form)", [&] { return smoothing(Llong); }},
      {"scalar identity refinement order", [&] { return refinement(Llong); }},
      {"calibrated lemma suite", [&] { return lemmas(L); }},
      {"geometric evolution sandwiches", [&] { return geometry(L); }},
      {"conjugate radius", conjugate},
      {"Moser suite", [&] { return moser_suite(L); }},
      {"covering bounds", [&] { return covering(L); }},
      {"ledger determinism", [&] { return determinism(out / "first", out / "second", rc_a, rc_b); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass (%.0f s)\n", criteria.size() - failed, criteria.size(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return failed ? 1 : 0;
}
