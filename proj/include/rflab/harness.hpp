#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rflab/checks.hpp"
#include "rflab/flow.hpp"
#include "rflab/moser.hpp"
#include "rflab/probes.hpp"
#include "rflab/scenario.hpp"

namespace rflab::harness {

inline constexpr const char* kVersion = "1.0.0";

struct LedgerSummary {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t not_applicable = 0;
  double worst_margin = 0.0;  // smallest margin / max(1, |rhs|) over applicable checks
  std::string worst_check;
};

struct Ledger {
  std::string scenario;
  std::string scenario_digest;
  std::string version = kVersion;
  std::vector<EstimateCheck> checks;
  LedgerSummary summary;

  void summarize();
  bool passed() const { return summary.failed == 0; }
};

/// Sorted-key JSON, two-space indent, trailing newline. Non-finite numbers
/// are written as the strings "inf", "-inf" and "nan".
std::string ledger_json(const Ledger& ledger);
Ledger parse_ledger(const std::string& text);
std::string render_report(const Ledger& ledger);

/// One row per snapshot (see docs/formats.md).
std::string trace_csv(const flow::FlowTrace& trace);
/// Diagnostics per snapshot plus, when requested, packed metric fields.
std::string trace_json(const flow::FlowTrace& trace, bool fields);

/// Writes through a temporary in the same directory and renames.
void atomic_write(const std::string& path, const std::string& content);

// Verifiers -------------------------------------------------------------------

struct TheoremOptions {
  double smoothing_t1 = 0.0;  // 0: first positive snapshot
  bool smoothing = true;      // property form applies (perturbed-torus suite)
};

/// Per-snapshot |g(t) - g0| <= 4t and sup|Ric| <= 2, the bounded product
/// sup|Rm| t^{1/2}, and the horizon check.
std::vector<EstimateCheck> verify_theorem_main(const flow::FlowTrace& trace, const TheoremOptions& opt = {});

struct GeometryOptions {
  std::vector<double> times;  // probe times, empty: every snapshot
  int diameter_sources = 4;
  int excess_pairs = 4;
  int distance_pairs = 4;
  int curves = 16;
  int reach = 2;
  std::uint64_t seed = 1;
  int workers = 1;
};

/// Diameter, volume, excess, distance sandwiches at probe times and the
/// curve-length rate between adjacent snapshots. Grid traces use fixed
/// source and pair sets on the graph metric; the round sphere and the flat
/// torus on the model route use closed forms.
std::vector<EstimateCheck> verify_geometric_evolution(const flow::FlowTrace& trace, const GeometryOptions& opt);

struct LemmaOptions {
  double r0 = 2.0;
  double p0 = 5.0;
  int bases = 8;
  int sobolev_bases = 1;
  std::vector<double> sobolev_times;  // empty: 0, T/2, T
  int graded_nodes = 25;
  double sobolev_tolerance = 1e-8;
  double headroom = 1.5;
  double calibration_amplitude = 0.0;  // recorded in the context only
  int workers = 1;
};

/// Lemma quantities along one grid trace.
struct LemmaSeries {
  std::vector<double> t;
  std::vector<double> sup_rm, sup_ric, int_sup_rm, int_sup_ric;
  std::vector<double> lp_quarter;  // max over bases of ||Rm||_{p0, B(r0/4)}
  double K = 0.0;                  // max over bases of ||Rm||_{p0, B(r0/2)} at t = 0
  std::vector<std::size_t> bases;
  std::vector<std::size_t> sobolev_bases;
  std::vector<double> sobolev_t;
  std::vector<std::vector<double>> sobolev;  // per time, per Sobolev base
  double lift_discrepancy = -1.0;
};

LemmaSeries lemma_series(const flow::FlowTrace& trace, const LemmaOptions& opt, bool discrepancy);

struct LemmaFit {
  double pointwise = 0.0;   // sup|Rm| t^{(n+2)/(2p0)} <= c K
  double lp = 0.0;          // K / (1 - c t)
  double ricci = 0.0;       // exp(c K t^alpha)
  double sobolev = 0.0;     // exp(c K t^alpha)
  double ricci_integral = 0.0;  // exp(c int sup|Rm|)
};

/// Smallest constants making each form hold on the series, clamped at 0.
LemmaFit fit_lemmas(const LemmaSeries& s, int n, double p0);

/// Fits on the calibration trace, asserts the fitted forms with headroom on
/// the holdout trace, and checks the Sobolev-quotient evolution on both.
std::vector<EstimateCheck> verify_propagation_lemmas(const flow::FlowTrace& calibration,
                                                     const flow::FlowTrace& holdout, const LemmaOptions& opt);

/// epsilon-net of B_p(r) against the Bishop-Gromov bounds for Ric >= (n-1)H.
std::vector<EstimateCheck> covering_check(const probes::MetricSample& sample, int n, double H, std::size_t p,
                                          double r, double epsilon, const std::string& id);

/// Scalar identity and the |Rm| inequality constant on model traces; the flat
/// grid residual; curved grid residuals are reported, not asserted.
std::vector<EstimateCheck> verify_residuals(const flow::FlowTrace& trace, int workers = 1);

/// sup|Ric| <= 1 and conj >= r0 for a model, plus the exact conjugate radius
/// of round spheres.
std::vector<EstimateCheck> verify_membership(const zoo::ModelMetric& m, double r0, int samples);
/// Same for a grid metric (Jacobi fields on the interpolated metric at node 0).
std::vector<EstimateCheck> verify_membership(const core::MetricField& g, double r0, int samples, int workers = 1);

struct RefinementResult {
  std::vector<int> levels;
  std::vector<double> residual;  // scalar residual at t = T/2
  std::vector<double> c_min;
  std::vector<double> order;     // between consecutive levels
};

/// Scalar-curvature identity residual under paired (h, dt) refinement.
RefinementResult refinement_study(const Scenario& s, int workers = 1);
std::vector<EstimateCheck> verify_refinement(const RefinementResult& r, double min_order);

/// Flat-ball Moser problems, the evolving-metric case, the epsilon-identity
/// sweep and the coefficient monotonicity sweeps.
std::vector<EstimateCheck> verify_moser_suite(const MoserSpec& spec, std::uint64_t seed);

// Orchestration ---------------------------------------------------------------

struct RunOptions {
  int workers = 1;
  bool verify = true;  // false: integrate only
};

struct RunResult {
  Ledger ledger;
  std::optional<flow::FlowTrace> trace;
  bool dump_fields = false;
};

/// Validates, integrates and verifies in memory. No files are touched.
RunResult execute(const Scenario& s, const RunOptions& opt = {});

/// Writes trace.csv, trace.json (flow runs), ledger.json and report.txt.
void write_artifacts(const RunResult& r, const std::string& dir);

/// Single-metric report of the scenario's initial geometry, as JSON.
std::string probe_report(const Scenario& s, int workers = 1);

}  // namespace rflab::harness
