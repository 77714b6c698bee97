#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <thread>

#include "rflab/rflab.h"

namespace fs = std::filesystem;

namespace {

const char* kSmoke = R"(name = capi
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

const char* kMoser = R"(name = capi-moser
kind = moser
seed = 1
[moser]
n = 3
nodes = 13
steps = 20
cases = 4:0
sweep = 10
)";

std::string take(char* s) {
  std::string out = s;
  rflab_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("version and null handling") {
  CHECK(std::strcmp(rflab_version(), "1.0.0") == 0);
  rflab_scenario* s = nullptr;
  CHECK(rflab_scenario_parse(nullptr, &s) == RFLAB_INVALID_ARGUMENT);
  CHECK(std::strlen(rflab_last_error()) > 0);
  CHECK(rflab_verify(nullptr, 1, nullptr) == RFLAB_INVALID_ARGUMENT);
  rflab_scenario_free(nullptr);
  rflab_run_free(nullptr);
  rflab_string_free(nullptr);
}

TEST_CASE("parse errors map to codes") {
  rflab_scenario* s = nullptr;
  CHECK(rflab_scenario_parse("name = x\nnonsense\n", &s) == RFLAB_PARSE);
  CHECK(s == nullptr);
  CHECK(std::string(rflab_last_error()).find("<text>:2") == 0);
  CHECK(rflab_scenario_load("/definitely/missing.ini", &s) != RFLAB_OK);
}

TEST_CASE("invalid scenario fails before touching the filesystem") {
  std::string text = kSmoke;
  text.replace(text.find("T = 0.1"), 7, "T = -1");
  rflab_scenario* s = nullptr;
  REQUIRE(rflab_scenario_parse(text.c_str(), &s) == RFLAB_OK);
  CHECK(rflab_scenario_validate(s) == RFLAB_VALIDATION);
  rflab_run* r = nullptr;
  CHECK(rflab_verify(s, 1, &r) == RFLAB_VALIDATION);
  CHECK(r == nullptr);
  rflab_scenario_free(s);
}

TEST_CASE("verify, inspect and write") {
  rflab_scenario* s = nullptr;
  REQUIRE(rflab_scenario_parse(kSmoke, &s) == RFLAB_OK);
  char* name = nullptr;
  REQUIRE(rflab_scenario_name(s, &name) == RFLAB_OK);
  CHECK(take(name) == "capi");
  rflab_kind kind;
  CHECK(rflab_scenario_kind(s, &kind) == RFLAB_OK);
  CHECK(kind == RFLAB_KIND_FLOW);

  rflab_run* r = nullptr;
  REQUIRE(rflab_verify(s, 1, &r) == RFLAB_OK);
  rflab_summary sum{};
  REQUIRE(rflab_run_summary(r, &sum) == RFLAB_OK);
  CHECK(sum.total > 0);
  CHECK(sum.failed == 0);
  size_t count = 0;
  REQUIRE(rflab_run_snapshot_count(r, &count) == RFLAB_OK);
  CHECK(count == 11);
  rflab_diagnostics d{};
  REQUIRE(rflab_run_snapshot(r, count - 1, &d) == RFLAB_OK);
  CHECK(d.t == doctest::Approx(0.1));
  CHECK(d.sup_ric == doctest::Approx(1.0 / (2.0 - 0.2)));
  CHECK(rflab_run_snapshot(r, count, &d) == RFLAB_INVALID_ARGUMENT);
  rflab_termination term;
  CHECK(rflab_run_termination(r, &term) == RFLAB_OK);
  CHECK(term == RFLAB_REACHED_T);

  const auto dir = fs::temp_directory_path() / "rflab-capi";
  fs::remove_all(dir);
  REQUIRE(rflab_run_write(r, dir.c_str(), RFLAB_WRITE_LEDGER) == RFLAB_OK);
  CHECK(fs::exists(dir / "ledger.json"));
  CHECK(!fs::exists(dir / "trace.csv"));
  REQUIRE(rflab_run_write(r, dir.c_str(), RFLAB_WRITE_ALL) == RFLAB_OK);
  CHECK(fs::exists(dir / "trace.csv"));

  char* json = nullptr;
  REQUIRE(rflab_run_ledger_json(r, &json) == RFLAB_OK);
  char* text = nullptr;
  size_t failed = 99;
  REQUIRE(rflab_report_render(json, &text, &failed) == RFLAB_OK);
  CHECK(failed == 0);
  char* direct = nullptr;
  REQUIRE(rflab_run_report(r, &direct) == RFLAB_OK);
  CHECK(take(text) == take(direct));
  rflab_string_free(json);

  char* probe = nullptr;
  REQUIRE(rflab_probe(s, 1, &probe) == RFLAB_OK);
  CHECK(take(probe).front() == '{');

  rflab_run_free(r);
  rflab_scenario_free(s);
  fs::remove_all(dir);
}

TEST_CASE("flow refuses Moser scenarios; verify runs them") {
  rflab_scenario* s = nullptr;
  REQUIRE(rflab_scenario_parse(kMoser, &s) == RFLAB_OK);
  rflab_kind kind;
  rflab_scenario_kind(s, &kind);
  CHECK(kind == RFLAB_KIND_MOSER);
  rflab_run* r = nullptr;
  CHECK(rflab_flow(s, 1, &r) == RFLAB_INVALID_ARGUMENT);
  REQUIRE(rflab_verify(s, 1, &r) == RFLAB_OK);
  rflab_termination term;
  rflab_run_termination(r, &term);
  CHECK(term == RFLAB_NO_TRACE);
  rflab_summary sum{};
  rflab_run_summary(r, &sum);
  CHECK(sum.failed == 0);
  CHECK(sum.total > 0);
  rflab_run_free(r);
  rflab_scenario_free(s);
}

TEST_CASE("overrides change the digest, not the scenario name") {
  rflab_scenario* s = nullptr;
  REQUIRE(rflab_scenario_parse(kSmoke, &s) == RFLAB_OK);
  CHECK(rflab_scenario_set_checkpoint_every(s, -1.0) == RFLAB_INVALID_ARGUMENT);
  CHECK(rflab_scenario_set_checkpoint_every(s, 0.05) == RFLAB_OK);
  CHECK(rflab_scenario_set_seed(s, 42) == RFLAB_OK);
  rflab_run* r = nullptr;
  REQUIRE(rflab_flow(s, 1, &r) == RFLAB_OK);
  size_t count = 0;
  rflab_run_snapshot_count(r, &count);
  CHECK(count == 3);
  rflab_run_free(r);
  rflab_scenario_free(s);
}

TEST_CASE("last error is per thread") {
  rflab_scenario* s = nullptr;
  CHECK(rflab_scenario_parse("garbage line\n", &s) == RFLAB_PARSE);
  std::string other;
  std::thread([&] { other = rflab_last_error(); }).join();
  CHECK(other.empty());
  CHECK(std::strlen(rflab_last_error()) > 0);
}
