#include "rflab/rflab.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "rflab/error.hpp"
#include "rflab/harness.hpp"

struct rflab_scenario {
  rflab::harness::Scenario s;
};

struct rflab_run {
  rflab::harness::RunResult r;
};

namespace {

thread_local std::string last_error;

rflab_status fail(rflab_status code, const std::string& what) {
  last_error = what;
  return code;
}

template <class Fn>
rflab_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    fn();
    return RFLAB_OK;
  } catch (const rflab::Error& e) {
    return fail(static_cast<rflab_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RFLAB_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RFLAB_INTERNAL, e.what());
  } catch (...) {
    return fail(RFLAB_INTERNAL, "unknown error");
  }
}

char* copy(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define RFLAB_REQUIRE(cond, msg) \
  if (!(cond)) return fail(RFLAB_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* rflab_version(void) { return rflab::harness::kVersion; }

const char* rflab_last_error(void) { return last_error.c_str(); }

void rflab_string_free(char* s) { delete[] s; }

rflab_status rflab_scenario_load(const char* path, rflab_scenario** out) {
  RFLAB_REQUIRE(path && out, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new rflab_scenario{rflab::harness::load_scenario(path)}; });
}

rflab_status rflab_scenario_parse(const char* text, rflab_scenario** out) {
  RFLAB_REQUIRE(text && out, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new rflab_scenario{rflab::harness::parse_scenario(text)}; });
}

void rflab_scenario_free(rflab_scenario* s) { delete s; }

rflab_status rflab_scenario_set_seed(rflab_scenario* s, uint64_t seed) {
  RFLAB_REQUIRE(s, "null scenario");
  s->s.seed = seed;
  return RFLAB_OK;
}

rflab_status rflab_scenario_set_checkpoint_every(rflab_scenario* s, double dt) {
  RFLAB_REQUIRE(s, "null scenario");
  RFLAB_REQUIRE(dt > 0.0, "checkpoint interval must be positive");
  s->s.flow.checkpoint_every = dt;
  return RFLAB_OK;
}

rflab_status rflab_scenario_set_output(rflab_scenario* s, const char* dir) {
  RFLAB_REQUIRE(s && dir, "null argument");
  s->s.output_dir = dir;
  return RFLAB_OK;
}

rflab_status rflab_scenario_name(const rflab_scenario* s, char** out) {
  RFLAB_REQUIRE(s && out, "null argument");
  return guarded([&] { *out = copy(s->s.name); });
}

rflab_status rflab_scenario_output(const rflab_scenario* s, char** out) {
  RFLAB_REQUIRE(s && out, "null argument");
  return guarded([&] { *out = copy(s->s.output_dir); });
}

rflab_status rflab_scenario_kind(const rflab_scenario* s, rflab_kind* out) {
  RFLAB_REQUIRE(s && out, "null argument");
  *out = s->s.kind == rflab::harness::Kind::Moser ? RFLAB_KIND_MOSER : RFLAB_KIND_FLOW;
  return RFLAB_OK;
}

rflab_status rflab_scenario_validate(const rflab_scenario* s) {
  RFLAB_REQUIRE(s, "null scenario");
  return guarded([&] { rflab::harness::validate(s->s); });
}

rflab_status rflab_flow(const rflab_scenario* s, int workers, rflab_run** out) {
  RFLAB_REQUIRE(s && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    if (s->s.kind != rflab::harness::Kind::Flow)
      throw rflab::Error(rflab::ErrorCode::InvalidArgument, "scenario '" + s->s.name + "' is not a flow scenario");
    rflab::harness::RunOptions opt;
    opt.workers = workers;
    opt.verify = false;
    *out = new rflab_run{rflab::harness::execute(s->s, opt)};
  });
}

rflab_status rflab_verify(const rflab_scenario* s, int workers, rflab_run** out) {
  RFLAB_REQUIRE(s && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    rflab::harness::RunOptions opt;
    opt.workers = workers;
    *out = new rflab_run{rflab::harness::execute(s->s, opt)};
  });
}

void rflab_run_free(rflab_run* r) { delete r; }

rflab_status rflab_run_write(const rflab_run* r, const char* dir, unsigned what) {
  RFLAB_REQUIRE(r && dir, "null argument");
  return guarded([&] {
    const rflab::harness::RunResult* src = &r->r;
    if (what != RFLAB_WRITE_ALL) {
      namespace fs = std::filesystem;
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw rflab::Error(rflab::ErrorCode::Io, std::string("cannot create output directory '") + dir + "'");
      const fs::path base(dir);
      if ((what & RFLAB_WRITE_TRACE) && src->trace) {
        rflab::harness::atomic_write((base / "trace.csv").string(), rflab::harness::trace_csv(*src->trace));
        rflab::harness::atomic_write((base / "trace.json").string(),
                                     rflab::harness::trace_json(*src->trace, src->dump_fields));
      }
      if (what & RFLAB_WRITE_LEDGER) {
        rflab::harness::atomic_write((base / "ledger.json").string(), rflab::harness::ledger_json(src->ledger));
        rflab::harness::atomic_write((base / "report.txt").string(), rflab::harness::render_report(src->ledger));
      }
      return;
    }
    rflab::harness::write_artifacts(*src, dir);
  });
}

rflab_status rflab_run_snapshot_count(const rflab_run* r, size_t* out) {
  RFLAB_REQUIRE(r && out, "null argument");
  *out = r->r.trace ? r->r.trace->snapshots.size() : 0;
  return RFLAB_OK;
}

rflab_status rflab_run_snapshot(const rflab_run* r, size_t k, rflab_diagnostics* out) {
  RFLAB_REQUIRE(r && out, "null argument");
  if (!r->r.trace || k >= r->r.trace->snapshots.size()) return fail(RFLAB_INVALID_ARGUMENT, "snapshot out of range");
  const auto& s = r->r.trace->snapshots[k];
  const auto& d = s.diag;
  *out = {s.t, d.sup_rm, d.sup_ric, d.sup_ric_full, d.c0_distance, d.volume, d.scalar_min, d.scalar_max, d.l_instant};
  return RFLAB_OK;
}

rflab_status rflab_run_termination(const rflab_run* r, rflab_termination* out) {
  RFLAB_REQUIRE(r && out, "null argument");
  if (!r->r.trace) {
    *out = RFLAB_NO_TRACE;
    return RFLAB_OK;
  }
  switch (r->r.trace->termination) {
    case rflab::flow::Termination::ReachedT: *out = RFLAB_REACHED_T; break;
    case rflab::flow::Termination::Blowup: *out = RFLAB_BLOWUP; break;
    case rflab::flow::Termination::PositivityLoss: *out = RFLAB_POSITIVITY; break;
  }
  return RFLAB_OK;
}

rflab_status rflab_run_summary(const rflab_run* r, rflab_summary* out) {
  RFLAB_REQUIRE(r && out, "null argument");
  const auto& s = r->r.ledger.summary;
  *out = {s.total, s.passed, s.failed, s.not_applicable, s.worst_margin};
  return RFLAB_OK;
}

rflab_status rflab_run_ledger_json(const rflab_run* r, char** out) {
  RFLAB_REQUIRE(r && out, "null argument");
  return guarded([&] { *out = copy(rflab::harness::ledger_json(r->r.ledger)); });
}

rflab_status rflab_run_report(const rflab_run* r, char** out) {
  RFLAB_REQUIRE(r && out, "null argument");
  return guarded([&] { *out = copy(rflab::harness::render_report(r->r.ledger)); });
}

rflab_status rflab_probe(const rflab_scenario* s, int workers, char** json_out) {
  RFLAB_REQUIRE(s && json_out, "null argument");
  return guarded([&] { *json_out = copy(rflab::harness::probe_report(s->s, workers)); });
}

rflab_status rflab_report_render(const char* ledger_json, char** text_out, size_t* failed) {
  RFLAB_REQUIRE(ledger_json && text_out, "null argument");
  return guarded([&] {
    const auto ledger = rflab::harness::parse_ledger(ledger_json);
    *text_out = copy(rflab::harness::render_report(ledger));
    if (failed) *failed = ledger.summary.failed;
  });
}

}  // extern "C"
