#ifndef RFLAB_H
#define RFLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RFLAB_API __declspec(dllexport)
#else
#define RFLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. Every call returning rflab_status leaves a message for
   rflab_last_error() on the calling thread when it fails. */
typedef enum rflab_status {
  RFLAB_OK = 0,
  RFLAB_INVALID_ARGUMENT = 1,
  RFLAB_DEGENERATE_METRIC = 2,
  RFLAB_DOMAIN = 3,
  RFLAB_CHART_MISMATCH = 4,
  RFLAB_CHART_TOO_SMALL = 5,
  RFLAB_CHART_EXIT = 6,
  RFLAB_UNSUPPORTED = 7,
  RFLAB_POSITIVITY_LOSS = 8,
  RFLAB_REJECTED_STEP = 9,
  RFLAB_STEPPING = 10,
  RFLAB_RESAMPLE = 11,
  RFLAB_GEOMETRY = 12,
  RFLAB_PARSE = 13,
  RFLAB_VALIDATION = 14,
  RFLAB_IO = 15,
  RFLAB_INTERNAL = 99
} rflab_status;

typedef enum rflab_kind { RFLAB_KIND_FLOW = 0, RFLAB_KIND_MOSER = 1 } rflab_kind;

typedef enum rflab_termination {
  RFLAB_REACHED_T = 0,
  RFLAB_BLOWUP = 1,
  RFLAB_POSITIVITY = 2,
  RFLAB_NO_TRACE = 3
} rflab_termination;

/* Artifact selection for rflab_run_write. */
enum { RFLAB_WRITE_TRACE = 1, RFLAB_WRITE_LEDGER = 2, RFLAB_WRITE_ALL = 3 };

typedef struct rflab_scenario rflab_scenario;
typedef struct rflab_run rflab_run;

typedef struct rflab_diagnostics {
  double t;
  double sup_rm;
  double sup_ric;
  double sup_ric_full;
  double c0_distance;
  double volume;
  double scalar_min;
  double scalar_max;
  double l_instant;
} rflab_diagnostics;

typedef struct rflab_summary {
  size_t total;
  size_t passed;
  size_t failed;
  size_t not_applicable;
  double worst_margin;
} rflab_summary;

RFLAB_API const char* rflab_version(void);
/* Message of the last failed call on this thread, "" if none. */
RFLAB_API const char* rflab_last_error(void);
/* Frees strings returned through char** out-parameters. */
RFLAB_API void rflab_string_free(char* s);

/* Scenarios */
RFLAB_API rflab_status rflab_scenario_load(const char* path, rflab_scenario** out);
RFLAB_API rflab_status rflab_scenario_parse(const char* text, rflab_scenario** out);
RFLAB_API void rflab_scenario_free(rflab_scenario* s);
RFLAB_API rflab_status rflab_scenario_set_seed(rflab_scenario* s, uint64_t seed);
RFLAB_API rflab_status rflab_scenario_set_checkpoint_every(rflab_scenario* s, double dt);
RFLAB_API rflab_status rflab_scenario_set_output(rflab_scenario* s, const char* dir);
RFLAB_API rflab_status rflab_scenario_name(const rflab_scenario* s, char** out);
/* Output directory from the scenario, "" when unset. */
RFLAB_API rflab_status rflab_scenario_output(const rflab_scenario* s, char** out);
RFLAB_API rflab_status rflab_scenario_kind(const rflab_scenario* s, rflab_kind* out);
/* Parse and validation without running anything. */
RFLAB_API rflab_status rflab_scenario_validate(const rflab_scenario* s);

/* Runs. Nothing touches the filesystem until rflab_run_write. */
RFLAB_API rflab_status rflab_flow(const rflab_scenario* s, int workers, rflab_run** out);
RFLAB_API rflab_status rflab_verify(const rflab_scenario* s, int workers, rflab_run** out);
RFLAB_API void rflab_run_free(rflab_run* r);
RFLAB_API rflab_status rflab_run_write(const rflab_run* r, const char* dir, unsigned what);
RFLAB_API rflab_status rflab_run_snapshot_count(const rflab_run* r, size_t* out);
RFLAB_API rflab_status rflab_run_snapshot(const rflab_run* r, size_t k, rflab_diagnostics* out);
RFLAB_API rflab_status rflab_run_termination(const rflab_run* r, rflab_termination* out);
RFLAB_API rflab_status rflab_run_summary(const rflab_run* r, rflab_summary* out);
RFLAB_API rflab_status rflab_run_ledger_json(const rflab_run* r, char** out);
RFLAB_API rflab_status rflab_run_report(const rflab_run* r, char** out);

/* Single-metric geometry report of the scenario's initial metric (JSON). */
RFLAB_API rflab_status rflab_probe(const rflab_scenario* s, int workers, char** json_out);

/* Renders a persisted ledger; *failed receives the number of failed checks. */
RFLAB_API rflab_status rflab_report_render(const char* ledger_json, char** text_out, size_t* failed);

#ifdef __cplusplus
}
#endif

#endif
