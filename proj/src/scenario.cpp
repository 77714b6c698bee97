#include "rflab/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rflab/error.hpp"

namespace rflab::harness {

namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

struct Cursor {
  std::string source;
  int line = 0;
  [[noreturn]] void fail(ErrorCode code, const std::string& what) const {
    throw Error(code, source + ":" + std::to_string(line) + ": " + what);
  }
};

double to_double(const Cursor& c, const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end || !std::isfinite(x))
    c.fail(ErrorCode::Parse, key + ": expected a decimal number, got '" + v + "'");
  return x;
}

long long to_int(const Cursor& c, const std::string& key, const std::string& v) {
  long long x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end) c.fail(ErrorCode::Parse, key + ": expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const Cursor& c, const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end)
    c.fail(ErrorCode::Parse, key + ": expected an unsigned integer, got '" + v + "'");
  return x;
}

bool to_bool(const Cursor& c, const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  c.fail(ErrorCode::Parse, key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_doubles(const Cursor& c, const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(c, key, item));
  return out;
}

std::vector<std::pair<double, double>> to_pairs(const Cursor& c, const std::string& key, const std::string& v) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) c.fail(ErrorCode::Parse, key + ": expected a:b items, got '" + item + "'");
    out.emplace_back(to_double(c, key, parts[0]), to_double(c, key, parts[1]));
  }
  return out;
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) {
    return std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.';
  });
}

using Setter = std::function<void(Scenario&, const Cursor&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["name"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      if (!valid_name(v)) c.fail(ErrorCode::Parse, k + ": names use letters, digits, '-', '_' and '.'");
      s.name = v;
    };
    t["seed"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) { s.seed = to_u64(c, k, v); };
    t["kind"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      if (v == "flow") s.kind = Kind::Flow;
      else if (v == "moser") s.kind = Kind::Moser;
      else c.fail(ErrorCode::Parse, k + ": expected flow or moser");
    };

    auto g_num = [&t](const std::string& key, double GeometrySpec::*field) {
      t["geometry." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.geometry.*field = to_double(c, k, v);
      };
    };
    auto g_int = [&t](const std::string& key, int GeometrySpec::*field) {
      t["geometry." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.geometry.*field = static_cast<int>(to_int(c, k, v));
      };
    };
    t["geometry.family"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      if (!zoo::parse_family(v) && v != "perturbed-torus" && v != "file")
        c.fail(ErrorCode::Parse, k + ": unknown family '" + v + "'");
      s.geometry.family = v;
    };
    g_int("n", &GeometrySpec::n);
    g_num("radius", &GeometrySpec::radius);
    g_num("circle_length", &GeometrySpec::circle_length);
    g_num("epsilon", &GeometrySpec::epsilon);
    g_int("nodes", &GeometrySpec::nodes);
    g_num("period", &GeometrySpec::period);
    g_num("core", &GeometrySpec::core);
    t["geometry.periods"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.geometry.periods = to_doubles(c, k, v);
    };
    t["geometry.lambda"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      const auto l = to_doubles(c, k, v);
      if (l.size() != 3) c.fail(ErrorCode::Parse, k + ": expected three values");
      std::copy(l.begin(), l.end(), s.geometry.lambda.begin());
    };
    t["geometry.route"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      if (v == "model") s.geometry.route = Route::Model;
      else if (v == "grid") s.geometry.route = Route::Grid;
      else c.fail(ErrorCode::Parse, k + ": expected model or grid");
    };
    t["geometry.file"] = [](Scenario& s, const Cursor&, const std::string&, const std::string& v) {
      std::filesystem::path p(v);
      if (p.is_relative() && !s.source.empty()) p = std::filesystem::path(s.source).parent_path() / p;
      s.geometry.file = p.string();
    };

    t["perturbation.amplitude"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.geometry.amplitude = to_double(c, k, v);
    };
    t["perturbation.frequency"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.geometry.frequency = static_cast<int>(to_int(c, k, v));
    };
    t["perturbation.modes"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.geometry.modes = static_cast<int>(to_int(c, k, v));
    };

    t["flow.T"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) { s.flow.T = to_double(c, k, v); };
    t["flow.checkpoint_every"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.checkpoint_every = to_double(c, k, v);
    };
    t["flow.kappa"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.control.kappa = to_double(c, k, v);
    };
    t["flow.safety"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.control.safety = to_double(c, k, v);
    };
    t["flow.dt_init"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.control.dt_init = to_double(c, k, v);
    };
    t["flow.dt_max"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.control.dt_max = to_double(c, k, v);
    };
    t["flow.blowup"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.blowup = to_double(c, k, v);
    };
    t["flow.curvature_every"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.curvature_every = static_cast<int>(to_int(c, k, v));
    };
    t["flow.gauge"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.flow.gauge = to_bool(c, k, v);
    };

    auto p_int = [&t](const std::string& key, int ProbeSpec::*field) {
      t["probes." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.probes.*field = static_cast<int>(to_int(c, k, v));
      };
    };
    auto p_num = [&t](const std::string& key, double ProbeSpec::*field) {
      t["probes." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.probes.*field = to_double(c, k, v);
      };
    };
    t["probes.times"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.probes.times = v == "all" ? std::vector<double>{} : to_doubles(c, k, v);
    };
    p_int("diameter_sources", &ProbeSpec::diameter_sources);
    p_int("excess_pairs", &ProbeSpec::excess_pairs);
    p_int("distance_pairs", &ProbeSpec::distance_pairs);
    p_int("curves", &ProbeSpec::curves);
    p_int("reach", &ProbeSpec::reach);
    p_num("r0", &ProbeSpec::r0);
    p_int("conj_samples", &ProbeSpec::conj_samples);
    p_num("smoothing_t1", &ProbeSpec::smoothing_t1);
    p_num("sobolev_radius", &ProbeSpec::sobolev_radius);

    auto l_num = [&t](const std::string& key, double LemmaSpec::*field) {
      t["lemmas." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.lemmas.*field = to_double(c, k, v);
        s.lemmas.enabled = true;
      };
    };
    auto l_int = [&t](const std::string& key, int LemmaSpec::*field) {
      t["lemmas." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.lemmas.*field = static_cast<int>(to_int(c, k, v));
        s.lemmas.enabled = true;
      };
    };
    l_num("calibrate_amplitude", &LemmaSpec::calibrate_amplitude);
    l_num("r0", &LemmaSpec::r0);
    l_num("p0", &LemmaSpec::p0);
    l_int("bases", &LemmaSpec::bases);
    l_int("sobolev_bases", &LemmaSpec::sobolev_bases);
    l_int("graded_nodes", &LemmaSpec::graded_nodes);
    l_num("sobolev_tolerance", &LemmaSpec::sobolev_tolerance);
    l_num("headroom", &LemmaSpec::headroom);
    t["lemmas.sobolev_times"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.lemmas.sobolev_times = to_doubles(c, k, v);
      s.lemmas.enabled = true;
    };

    t["covering.pairs"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.covering.pairs = to_pairs(c, k, v);
    };
    t["covering.center"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.covering.center = static_cast<std::size_t>(to_u64(c, k, v));
    };

    t["refinement.levels"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.refinement.levels.clear();
      for (const auto& item : split(v, ',')) s.refinement.levels.push_back(static_cast<int>(to_int(c, k, item)));
    };
    t["refinement.T"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.refinement.T = to_double(c, k, v);
    };
    t["refinement.min_order"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.refinement.min_order = to_double(c, k, v);
    };

    auto m_num = [&t](const std::string& key, double MoserSpec::*field) {
      t["moser." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.moser.*field = to_double(c, k, v);
      };
    };
    auto m_int = [&t](const std::string& key, int MoserSpec::*field) {
      t["moser." + key] = [field](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
        s.moser.*field = static_cast<int>(to_int(c, k, v));
      };
    };
    m_int("n", &MoserSpec::n);
    m_num("radius", &MoserSpec::radius);
    m_int("nodes", &MoserSpec::nodes);
    m_num("T", &MoserSpec::T);
    m_int("steps", &MoserSpec::steps);
    m_num("p0", &MoserSpec::p0);
    m_num("evolving_radius", &MoserSpec::evolving_radius);
    m_int("sweep", &MoserSpec::sweep);
    t["moser.cases"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.moser.cases = to_pairs(c, k, v);
    };

    t["verify.select"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      static const std::vector<std::string> known{"theorem", "geometry", "lemmas",  "covering",
                                                  "residuals", "membership", "refinement", "moser"};
      s.select = split(v, ',');
      for (const auto& f : s.select)
        if (std::find(known.begin(), known.end(), f) == known.end())
          c.fail(ErrorCode::Parse, k + ": unknown verifier '" + f + "'");
    };
    t["output.dir"] = [](Scenario& s, const Cursor&, const std::string&, const std::string& v) { s.output_dir = v; };
    t["output.fields"] = [](Scenario& s, const Cursor& c, const std::string& k, const std::string& v) {
      s.dump_fields = to_bool(c, k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

bool Scenario::selected(const std::string& family) const {
  return std::find(select.begin(), select.end(), family) != select.end();
}

std::uint64_t Scenario::seed_or_throw() const {
  if (!seed) throw Error(ErrorCode::Validation, source + ": a seed is required for randomized probes");
  return *seed;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  Scenario s;
  s.source = source == "<text>" ? "" : source;
  Cursor c{source, 0};
  std::istringstream in(text);
  std::string raw, section;
  static const std::vector<std::string> sections{"geometry", "perturbation", "flow",       "probes", "lemmas",
                                                 "covering", "refinement",   "moser",      "verify", "output"};
  while (std::getline(in, raw)) {
    ++c.line;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') c.fail(ErrorCode::Parse, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        c.fail(ErrorCode::Parse, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) c.fail(ErrorCode::Parse, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) c.fail(ErrorCode::Parse, "missing key");
    if (value.empty()) c.fail(ErrorCode::Parse, "missing value for '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = setters().find(full);
    if (it == setters().end())
      c.fail(ErrorCode::Parse, section.empty() ? "unknown key '" + key + "'"
                                               : "unknown key '" + key + "' in [" + section + "]");
    if (s.lines.count(full)) c.fail(ErrorCode::Parse, "duplicate key '" + full + "'");
    it->second(s, c, full, value);
    s.lines[full] = c.line;
    s.canonical[full] = value;
  }
  if (s.name.empty()) {
    c.line = 0;
    c.fail(ErrorCode::Parse, "missing required key 'name'");
  }
  if (s.select.empty()) {
    if (s.kind == Kind::Moser) {
      s.select = {"moser"};
    } else {
      s.select = {"theorem", "geometry", "residuals"};
      if (s.lemmas.enabled) s.select.push_back("lemmas");
      if (!s.covering.pairs.empty()) s.select.push_back("covering");
      if (s.probes.r0 > 0.0) s.select.push_back("membership");
      if (!s.refinement.levels.empty()) s.select.push_back("refinement");
    }
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read scenario '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path);
}

void validate(const Scenario& s) {
  auto fail = [&](const std::string& key, const std::string& what) {
    const auto it = s.lines.find(key);
    const int line = it == s.lines.end() ? 0 : it->second;
    throw Error(ErrorCode::Validation,
                (s.source.empty() ? std::string("<text>") : s.source) + ":" + std::to_string(line) + ": " + what);
  };
  const auto& g = s.geometry;
  if (s.kind == Kind::Moser) {
    const auto& m = s.moser;
    if (m.n < 3 || m.n > kMaxDim) fail("moser.n", "[moser] n must be 3 or 4");
    if (!(m.radius > 0.0)) fail("moser.radius", "[moser] radius must be positive");
    if (m.nodes < 9) fail("moser.nodes", "[moser] nodes must be at least 9");
    if (!(m.T > 0.0)) fail("moser.T", "[moser] T must be positive");
    if (m.steps < 4) fail("moser.steps", "[moser] steps must be at least 4");
    if (!(m.p0 > 1.0)) fail("moser.p0", "[moser] p0 must exceed 1");
    if (m.cases.empty()) fail("moser.cases", "[moser] cases must list at least one q:b pair");
    for (const auto& [q, b] : m.cases) {
      if (!(q > m.n)) fail("moser.cases", "[moser] every q must exceed n");
      if (!(b >= 0.0)) fail("moser.cases", "[moser] every b must be nonnegative");
    }
    if (m.evolving_radius < 0.0) fail("moser.evolving_radius", "[moser] evolving_radius must be nonnegative");
    if (m.evolving_radius > 0.0 && 2.0 * (m.n - 1) * m.T >= m.evolving_radius * m.evolving_radius)
      fail("moser.evolving_radius", "[moser] the driving sphere must survive past T");
    if (m.sweep < 0) fail("moser.sweep", "[moser] sweep must be nonnegative");
    if (m.sweep > 0 && !s.seed) fail("moser.sweep", "a seed is required for the randomized sweeps");
    return;
  }

  const auto& f = s.flow;
  if (!(f.T > 0.0)) fail("flow.T", "[flow] T must be positive");
  if (f.checkpoint_every < 0.0) fail("flow.checkpoint_every", "[flow] checkpoint_every must be nonnegative");
  if (f.checkpoint_every > f.T) fail("flow.checkpoint_every", "[flow] checkpoint_every must not exceed T");
  if (!(f.control.kappa > 0.0)) fail("flow.kappa", "[flow] kappa must be positive");
  if (!(f.control.safety > 0.0) || f.control.safety > 1.0) fail("flow.safety", "[flow] safety must be in (0, 1]");
  if (f.control.dt_init < 0.0) fail("flow.dt_init", "[flow] dt_init must be nonnegative");
  if (!(f.control.dt_max > 0.0)) fail("flow.dt_max", "[flow] dt_max must be positive");
  if (f.blowup < 0.0) fail("flow.blowup", "[flow] blowup must be nonnegative");
  if (f.curvature_every < 1) fail("flow.curvature_every", "[flow] curvature_every must be >= 1");

  const bool perturbed = g.family == "perturbed-torus";
  const bool from_file = g.family == "file";
  if (g.n < 2 || g.n > kMaxDim) fail("geometry.n", "[geometry] n must be between 2 and 4");
  if (!(g.radius > 0.0)) fail("geometry.radius", "[geometry] radius must be positive");
  if (g.nodes < 4) fail("geometry.nodes", "[geometry] nodes must be at least 4");
  if (!(g.period > 0.0)) fail("geometry.period", "[geometry] period must be positive");
  if (g.core < 0.0) fail("geometry.core", "[geometry] core must be nonnegative");
  if ((perturbed || from_file) && g.route != Route::Grid && s.lines.count("geometry.route"))
    fail("geometry.route", "[geometry] " + g.family + " geometries run on the grid route");
  if (from_file) {
    if (g.file.empty()) fail("geometry.family", "[geometry] family = file needs a file key");
    if (!std::filesystem::exists(g.file)) fail("geometry.file", "[geometry] metric file '" + g.file + "' does not exist");
  }
  if (perturbed) {
    if (!(g.amplitude >= 0.0)) fail("perturbation.amplitude", "[perturbation] amplitude must be nonnegative");
    if (g.frequency < 1) fail("perturbation.frequency", "[perturbation] frequency must be >= 1");
    if (g.modes < 1) fail("perturbation.modes", "[perturbation] modes must be >= 1");
    if (!s.seed) fail("perturbation.amplitude", "a seed is required for perturbed geometries");
  }
  if (!perturbed && !from_file) {
    try {
      model_of(g).validate();
    } catch (const Error& e) {
      fail("geometry.family", std::string("[geometry] ") + e.what());
    }
  }

  const double every = f.checkpoint_every > 0.0 ? f.checkpoint_every : f.T / 10.0;
  auto on_snapshot = [&](double t) {
    if (t < 0.0 || t > f.T * (1.0 + 1e-12)) return false;
    if (std::abs(t - f.T) <= 1e-12 * f.T) return true;
    const double k = t / every;
    return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
  };
  for (double t : s.probes.times)
    if (!on_snapshot(t)) fail("probes.times", "[probes] probe time " + std::to_string(t) + " is not a snapshot time");
  for (double t : s.lemmas.sobolev_times)
    if (!on_snapshot(t))
      fail("lemmas.sobolev_times", "[lemmas] Sobolev time " + std::to_string(t) + " is not a snapshot time");
  const auto& p = s.probes;
  if (p.diameter_sources < 1) fail("probes.diameter_sources", "[probes] diameter_sources must be >= 1");
  if (p.excess_pairs < 1) fail("probes.excess_pairs", "[probes] excess_pairs must be >= 1");
  if (p.distance_pairs < 0) fail("probes.distance_pairs", "[probes] distance_pairs must be >= 0");
  if (p.curves < 0) fail("probes.curves", "[probes] curves must be >= 0");
  if (p.reach < 1 || p.reach > 3) fail("probes.reach", "[probes] reach must be 1, 2 or 3");
  if (p.r0 < 0.0) fail("probes.r0", "[probes] r0 must be nonnegative");
  if (p.conj_samples < 2 * g.n) fail("probes.conj_samples", "[probes] conj_samples must be at least 2n");
  if (p.smoothing_t1 < 0.0 || p.smoothing_t1 >= f.T) fail("probes.smoothing_t1", "[probes] smoothing_t1 must be in [0, T)");
  if (p.smoothing_t1 > 0.0 && !on_snapshot(p.smoothing_t1))
    fail("probes.smoothing_t1", "[probes] smoothing_t1 must be a snapshot time");
  if (p.sobolev_radius < 0.0) fail("probes.sobolev_radius", "[probes] sobolev_radius must be nonnegative");
  const bool grid = g.route == Route::Grid || perturbed || from_file;
  if (grid && s.selected("geometry") && !s.seed)
    fail("verify.select", "a seed is required for sampled geometry probes on the grid route");

  if (s.selected("lemmas")) {
    const auto& l = s.lemmas;
    if (!perturbed) fail("verify.select", "[lemmas] the calibrated lemma suite needs a perturbed-torus geometry");
    if (!(l.calibrate_amplitude >= 0.0)) fail("lemmas.calibrate_amplitude", "[lemmas] calibrate_amplitude must be >= 0");
    if (!(l.r0 > 0.0) || l.r0 > g.period) fail("lemmas.r0", "[lemmas] r0 must be in (0, period]");
    if (!(l.p0 > 1.0)) fail("lemmas.p0", "[lemmas] p0 must exceed 1");
    if (l.bases < 1) fail("lemmas.bases", "[lemmas] bases must be >= 1");
    if (l.sobolev_bases < 0 || l.sobolev_bases > l.bases)
      fail("lemmas.sobolev_bases", "[lemmas] sobolev_bases must be in [0, bases]");
    if (l.graded_nodes != 0 && l.graded_nodes < 9) fail("lemmas.graded_nodes", "[lemmas] graded_nodes must be 0 or >= 9");
    if (!(l.sobolev_tolerance > 0.0)) fail("lemmas.sobolev_tolerance", "[lemmas] sobolev_tolerance must be positive");
    if (!(l.headroom >= 1.0)) fail("lemmas.headroom", "[lemmas] headroom must be >= 1");
    if (g.n < 3) fail("geometry.n", "[lemmas] the lemma suite needs n >= 3");
  }
  if (s.selected("covering")) {
    if (s.covering.pairs.empty()) fail("verify.select", "[covering] pairs must list r:epsilon items");
    for (const auto& [r, e] : s.covering.pairs)
      if (!(e > 0.0) || !(e <= r)) fail("covering.pairs", "[covering] every pair needs 0 < epsilon <= r");
  }
  if (s.selected("refinement")) {
    const auto& r = s.refinement;
    if (!perturbed) fail("verify.select", "[refinement] the refinement study needs a perturbed-torus geometry");
    if (r.levels.size() < 3) fail("refinement.levels", "[refinement] levels needs at least three grids");
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      if (r.levels[i] < 8 || r.levels[i] % 8 != 0) fail("refinement.levels", "[refinement] levels must be multiples of 8");
      if (i > 0 && r.levels[i] <= r.levels[i - 1]) fail("refinement.levels", "[refinement] levels must increase");
    }
    if (!(r.T > 0.0)) fail("refinement.T", "[refinement] T must be positive");
    if (!(r.min_order > 0.0)) fail("refinement.min_order", "[refinement] min_order must be positive");
  }
  if (s.selected("membership") && !(p.r0 > 0.0)) fail("verify.select", "[probes] membership needs r0 > 0");
  if (s.selected("moser")) fail("verify.select", "the moser verifier needs kind = moser");
}

zoo::ModelMetric model_of(const GeometrySpec& g) {
  const auto family = zoo::parse_family(g.family);
  if (!family) throw Error(ErrorCode::Validation, "'" + g.family + "' is not a model family");
  zoo::ModelMetric m;
  switch (*family) {
    case zoo::Family::RoundSphere: m.family = *family; m.n = g.n; m.radius = g.radius; break;
    case zoo::Family::FlatTorus:
      m.family = *family;
      m.n = g.n;
      m.periods = g.periods.empty() ? std::vector<double>(g.n, g.period) : g.periods;
      break;
    case zoo::Family::ProductSphereCircle:
      m.family = *family;
      m.n = 3;
      m.radius = g.radius;
      m.circle_length = g.circle_length;
      break;
    case zoo::Family::MilnorSU2: m.family = *family; m.n = 3; m.lambda = g.lambda; break;
    case zoo::Family::HeisenbergNil: m.family = *family; m.n = 3; m.epsilon = g.epsilon; break;
  }
  return m;
}

std::variant<zoo::ModelMetric, core::MetricField> build_initial(const Scenario& s) {
  const auto& g = s.geometry;
  if (g.family == "perturbed-torus") {
    zoo::Perturbation p;
    p.n = g.n;
    p.nodes = g.nodes;
    p.period = g.period;
    p.amplitude = g.amplitude;
    p.frequency = g.frequency;
    p.modes = g.modes;
    p.seed = s.seed_or_throw();
    return zoo::perturbed_torus(p);
  }
  if (g.family == "file") return read_metric_file(g.file);
  const auto m = model_of(g);
  if (g.route == Route::Model) return m;
  return zoo::realize(m, g.nodes, g.period, g.core > 0.0 ? g.core : g.period / 4.0).metric;
}

core::MetricField read_metric_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read metric file '" + path + "'");
  json j;
  try {
    in >> j;
    const int n = j.at("n").get<int>();
    const auto extents = j.at("extents").get<std::vector<int>>();
    const auto periods = j.at("periods").get<std::vector<double>>();
    const auto data = j.at("g").get<std::vector<double>>();
    if (n < 2 || n > kMaxDim || static_cast<int>(extents.size()) != n || static_cast<int>(periods.size()) != n)
      throw Error(ErrorCode::Parse, "metric file '" + path + "': inconsistent dimension");
    core::MetricField g(core::ChartGrid(extents, periods));
    if (data.size() != g.data().size())
      throw Error(ErrorCode::Parse, "metric file '" + path + "': expected " + std::to_string(g.data().size()) +
                                        " packed components");
    g.data() = data;
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, "metric file '" + path + "': " + e.what());
  }
}

std::string metric_json(const core::MetricField& g) {
  json j;
  j["n"] = g.dimension();
  j["extents"] = g.chart().extents();
  j["periods"] = g.chart().periods();
  j["g"] = g.data();
  return j.dump();
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::uint64_t scenario_digest(const Scenario& s) {
  std::string text;
  for (const auto& [k, v] : s.canonical) text += k + "=" + v + "\n";
  text += "seed=" + (s.seed ? std::to_string(*s.seed) : std::string("none")) + "\n";
  std::ostringstream every;
  every << std::setprecision(17) << s.flow.checkpoint_every;
  text += "checkpoint_every=" + every.str() + "\n";
  return fnv1a(text);
}

}  // namespace rflab::harness
