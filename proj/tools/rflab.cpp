#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rflab/rflab.h"

namespace {

enum Exit { kPass = 0, kFailed = 1, kError = 2 };

struct Options {
  std::vector<std::string> scenarios;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
  std::optional<double> checkpoint_every;
  std::string ledger;
};

std::mutex io;

void say(std::FILE* f, const std::string& text) {
  std::lock_guard lock(io);
  std::fputs(text.c_str(), f);
  std::fflush(f);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  rflab_string_free(s);
  return out;
}

struct Scenario {
  rflab_scenario* h = nullptr;
  ~Scenario() { rflab_scenario_free(h); }
};

struct Run {
  rflab_run* h = nullptr;
  ~Run() { rflab_run_free(h); }
};

int error(const std::string& what) {
  say(stderr, "error: " + what + "\n");
  return kError;
}

// Loads a scenario and applies command-line overrides.
bool prepare(const std::string& path, const Options& o, Scenario& s, std::string& name, std::string& dir,
             std::size_t batch) {
  if (rflab_scenario_load(path.c_str(), &s.h) != RFLAB_OK) return false;
  if (o.seed) rflab_scenario_set_seed(s.h, *o.seed);
  if (o.checkpoint_every && rflab_scenario_set_checkpoint_every(s.h, *o.checkpoint_every) != RFLAB_OK) return false;
  char* n = nullptr;
  rflab_scenario_name(s.h, &n);
  name = take(n);
  char* d = nullptr;
  rflab_scenario_output(s.h, &d);
  const std::string configured = take(d);
  namespace fs = std::filesystem;
  if (!o.out.empty())
    dir = batch > 1 ? (fs::path(o.out) / name).string() : o.out;
  else if (!configured.empty())
    dir = configured;
  else
    dir = (fs::path("out") / name).string();
  return true;
}

int run_one(const std::string& cmd, const std::string& path, const Options& o, std::size_t batch) {
  Scenario s;
  std::string name, dir;
  if (!prepare(path, o, s, name, dir, batch)) return error(path + ": " + rflab_last_error());

  rflab_kind kind = RFLAB_KIND_FLOW;
  rflab_scenario_kind(s.h, &kind);
  if (cmd == "moser" && kind != RFLAB_KIND_MOSER) return error(path + ": not a moser scenario (kind = moser)");
  if (cmd == "flow" && kind != RFLAB_KIND_FLOW) return error(path + ": not a flow scenario");

  if (cmd == "probe") {
    char* json = nullptr;
    if (rflab_probe(s.h, o.workers, &json) != RFLAB_OK) return error(path + ": " + rflab_last_error());
    const std::string text = take(json);
    if (!o.out.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      std::ofstream((std::filesystem::path(dir) / "probe.json").string()) << text;
    }
    say(stdout, text);
    return kPass;
  }

  Run r;
  const rflab_status st = cmd == "flow" ? rflab_flow(s.h, o.workers, &r.h) : rflab_verify(s.h, o.workers, &r.h);
  if (st != RFLAB_OK) return error(path + ": " + rflab_last_error());
  const unsigned what = cmd == "flow" ? RFLAB_WRITE_TRACE : RFLAB_WRITE_ALL;
  if (rflab_run_write(r.h, dir.c_str(), what) != RFLAB_OK) return error(path + ": " + rflab_last_error());

  if (cmd == "flow") {
    size_t count = 0;
    rflab_run_snapshot_count(r.h, &count);
    rflab_diagnostics last{};
    if (count) rflab_run_snapshot(r.h, count - 1, &last);
    rflab_termination term = RFLAB_REACHED_T;
    rflab_run_termination(r.h, &term);
    static const char* names[] = {"reached-T", "blowup", "positivity-loss", "none"};
    std::ostringstream msg;
    msg << name << ": " << count << " snapshots, t = " << last.t << ", " << names[term] << ", wrote " << dir << "\n";
    say(stdout, msg.str());
    return term == RFLAB_REACHED_T ? kPass : kFailed;
  }

  rflab_summary sum{};
  rflab_run_summary(r.h, &sum);
  std::ostringstream msg;
  msg << (sum.failed ? "FAIL " : "PASS ") << name << ": " << sum.passed << " passed, " << sum.failed << " failed, "
      << sum.not_applicable << " not applicable; wrote " << dir << "\n";
  say(stdout, msg.str());
  return sum.failed ? kFailed : kPass;
}

int run_batch(const std::string& cmd, const Options& o) {
  if (o.scenarios.empty()) return error("at least one --scenario is required");
  std::vector<int> codes(o.scenarios.size(), kPass);
  const std::size_t lanes =
      std::min<std::size_t>(o.scenarios.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> threads;
  for (std::size_t lane = 0; lane < lanes; ++lane)
    threads.emplace_back([&, lane] {
      for (std::size_t i = lane; i < o.scenarios.size(); i += lanes)
        codes[i] = run_one(cmd, o.scenarios[i], o, o.scenarios.size());
    });
  for (auto& t : threads) t.join();
  int worst = kPass;
  for (int c : codes) worst = std::max(worst, c);
  return worst;
}

int report(const Options& o) {
  std::string path = o.ledger;
  if (path.empty() && !o.out.empty()) path = (std::filesystem::path(o.out) / "ledger.json").string();
  if (path.empty()) return error("report needs a ledger path or --out <dir>");
  std::ifstream in(path);
  if (!in) return error("cannot read ledger '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  char* rendered = nullptr;
  size_t failed = 0;
  if (rflab_report_render(text.str().c_str(), &rendered, &failed) != RFLAB_OK)
    return error(path + ": " + rflab_last_error());
  say(stdout, take(rendered));
  return failed ? kFailed : kPass;
}

void common(CLI::App* app, Options& o) {
  app->add_option("--scenario", o.scenarios, "scenario file (repeatable; batches run in parallel)")->required();
  app->add_option("--seed", o.seed, "override the scenario seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--workers", o.workers, "worker threads per scenario")->check(CLI::PositiveNumber);
  app->add_option("--checkpoint-every", o.checkpoint_every, "snapshot cadence")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ricci-flow laboratory"};
  app.set_version_flag("--version", std::string(rflab_version()));
  app.require_subcommand(1);
  Options o;
  auto* flow = app.add_subcommand("flow", "integrate the flow and write trace.csv / trace.json");
  auto* probe = app.add_subcommand("probe", "geometry report of the initial metric");
  auto* moser = app.add_subcommand("moser", "run a Moser suite scenario");
  auto* verify = app.add_subcommand("verify", "integrate, verify and write the ledger");
  auto* rep = app.add_subcommand("report", "render a persisted ledger");
  for (auto* sub : {flow, probe, moser, verify}) common(sub, o);
  rep->add_option("ledger", o.ledger, "ledger.json path");
  rep->add_option("--out", o.out, "directory holding ledger.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kError;
  }
  if (*rep) return report(o);
  for (auto* sub : {flow, probe, moser, verify})
    if (*sub) return run_batch(sub->get_name(), o);
  return kError;
}
