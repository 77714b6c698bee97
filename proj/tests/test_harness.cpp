#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rflab/error.hpp"
#include "rflab/harness.hpp"

using namespace rflab;
using namespace rflab::harness;
namespace fs = std::filesystem;

namespace {

const std::string kSmoke = R"(name = smoke
[geometry]
family = round-sphere
n = 2
radius = 1.4142135623730951
route = model
[flow]
T = 0.1
checkpoint_every = 0.01
[probes]
r0 = 1
)";

ErrorCode code_of(const std::string& text) {
  try {
    validate(parse_scenario(text));
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel: nothing thrown
}

std::string message_of(const std::string& text) {
  try {
    validate(parse_scenario(text, "case.ini"));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rflab-test-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("anchor registry is unique and documented") {
  std::set<std::string_view> seen;
  for (const auto& a : anchor_registry()) {
    CHECK(seen.insert(a.anchor).second);
    CHECK(!a.statement.empty());
    CHECK(known_anchor(a.anchor));
  }
  CHECK(!known_anchor("no.such-anchor"));
}

TEST_CASE("scenario parsing") {
  const auto s = parse_scenario(kSmoke);
  CHECK(s.name == "smoke");
  CHECK(s.geometry.family == "round-sphere");
  CHECK(s.geometry.route == Route::Model);
  CHECK(s.flow.T == 0.1);
  CHECK(s.probes.r0 == 1.0);
  CHECK_NOTHROW(validate(s));
}

TEST_CASE("scenario errors carry source and line") {
  CHECK(code_of(kSmoke + "bogus = 1\n") == ErrorCode::Parse);
  CHECK(code_of("name = x\n[geometry]\nfamily = moebius\n") != ErrorCode::InvalidArgument);
  const auto bad_T = std::string(kSmoke).replace(kSmoke.find("T = 0.1"), 7, "T = -1");
  CHECK(code_of(bad_T) == ErrorCode::Validation);
  const auto msg = message_of(bad_T);
  CHECK(msg.rfind("case.ini:8:", 0) == 0);
  CHECK(code_of(kSmoke + "[flow]\ncheckpoint_every = abc\n") == ErrorCode::Parse);
  CHECK(code_of("name = x\n[geometry\n") == ErrorCode::Parse);
}

TEST_CASE("seed is part of the digest") {
  auto a = parse_scenario("seed = 1\n" + kSmoke);
  auto b = parse_scenario("seed = 2\n" + kSmoke);
  CHECK(scenario_digest(a) != scenario_digest(b));
  CHECK(scenario_digest(a) == scenario_digest(parse_scenario("seed = 1\n" + kSmoke)));
  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("execute: every check carries a registry anchor and runs are reproducible") {
  const auto s = parse_scenario(kSmoke);
  const auto a = execute(s);
  const auto b = execute(s);
  REQUIRE(!a.ledger.checks.empty());
  for (const auto& c : a.ledger.checks) CHECK(known_anchor(c.anchor));
  std::set<std::string> ids;
  for (const auto& c : a.ledger.checks) CHECK(ids.insert(c.id).second);
  CHECK(a.ledger.passed());
  CHECK(ledger_json(a.ledger) == ledger_json(b.ledger));
  CHECK(a.ledger.summary.total == a.ledger.checks.size());
  CHECK(a.ledger.summary.passed + a.ledger.summary.failed + a.ledger.summary.not_applicable == a.ledger.summary.total);
}

TEST_CASE("ledger JSON round-trips, including non-finite numbers") {
  Ledger l;
  l.scenario = "x";
  l.scenario_digest = "00";
  auto c = make_check("a.1", "conjugate.radius", 1.0, std::numeric_limits<double>::infinity());
  c.context["nan"] = std::nan("");
  l.checks.push_back(c);
  l.checks.push_back(make_check("a.2", "conjugate.radius", 2.0, 1.0));
  l.summarize();
  CHECK(l.summary.failed == 1);
  CHECK(l.summary.worst_check == "a.2");
  const auto text = ledger_json(l);
  CHECK(text.find("\"inf\"") != std::string::npos);
  CHECK(text.find("\"nan\"") != std::string::npos);
  CHECK(text.back() == '\n');
  const auto back = parse_ledger(text);
  CHECK(std::isinf(back.checks[0].rhs));
  CHECK(ledger_json(back) == text);
  CHECK(render_report(back).find("a.2") != std::string::npos);
}

TEST_CASE("trace CSV layout") {
  auto s = parse_scenario(kSmoke);
  RunOptions opt;
  opt.verify = false;
  const auto r = execute(s, opt);
  REQUIRE(r.trace);
  const auto csv = trace_csv(*r.trace);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,sup_rm,sup_ric,sup_ric_full,c0_distance,volume,scalar_min,scalar_max,l_instant,status");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(in, line)) ++rows, last = line;
  CHECK(rows == r.trace->snapshots.size());
  CHECK(last.substr(last.rfind(',') + 1) == "reached-T");
}

TEST_CASE("artifacts are written atomically and only after success") {
  const auto dir = scratch("artifacts");
  const auto r = execute(parse_scenario(kSmoke));
  write_artifacts(r, dir.string());
  for (auto f : {"trace.csv", "trace.json", "ledger.json", "report.txt"}) CHECK(fs::exists(dir / f));
  std::size_t files = 0;
  for (auto& e : fs::directory_iterator(dir)) {
    ++files;
    CHECK(e.path().extension() != ".tmp");
  }
  CHECK(files == 4);

  auto bad = parse_scenario(std::string(kSmoke).replace(kSmoke.find("T = 0.1"), 7, "T = -1"));
  const auto dir2 = scratch("artifacts-bad");
  CHECK_THROWS_AS(write_artifacts(execute(bad), dir2.string()), Error);
  CHECK(!fs::exists(dir2));
  fs::remove_all(dir);
}

TEST_CASE("metric files round-trip") {
  const auto g = zoo::perturbed_torus({3, 6, 6.283185307179586, 0.1, 1, 2, 3});
  const auto path = scratch("metric.json");
  atomic_write(path.string(), metric_json(g));
  const auto back = read_metric_file(path.string());
  CHECK(back.chart().same_as(g.chart()));
  CHECK(back.data() == g.data());
  fs::remove(path);
}

TEST_CASE("covering check on a flat torus") {
  probes::FlatTorusSample s(core::ChartGrid::cube(3, 12, 6.0));
  const auto checks = covering_check(s, 3, 0.0, 0, 2.0, 0.7, "covering.t");
  REQUIRE(checks.size() == 2);
  for (const auto& c : checks) {
    CHECK(c.passed());
    CHECK(known_anchor(c.anchor));
  }
}

TEST_CASE("refinement verdicts") {
  RefinementResult r;
  r.levels = {16, 32, 64};
  r.residual = {1.0, 0.25, 0.0625};
  r.order = {2.0, 2.0};
  for (const auto& c : verify_refinement(r, 1.8)) CHECK(c.passed());
  r.residual = {1.0, 0.5, 0.3};
  r.order = {1.0, 0.74};
  bool failed = false;
  for (const auto& c : verify_refinement(r, 1.8)) failed |= !c.passed();
  CHECK(failed);
}

TEST_CASE("workers do not change the ledger") {
  auto s = parse_scenario(R"(name = flat
seed = 3
[geometry]
family = flat-torus
n = 3
periods = 6.283185307179586, 6.283185307179586, 6.283185307179586
nodes = 12
route = model
[flow]
T = 0.2
checkpoint_every = 0.1
[covering]
pairs = 2:1
)");
  RunOptions one, two;
  two.workers = 2;
  CHECK(ledger_json(execute(s, one).ledger) == ledger_json(execute(s, two).ledger));
}
