#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rflab/curvature.hpp"
#include "rflab/grid.hpp"
#include "rflab/models.hpp"
#include "rflab/probes.hpp"

namespace rflab::flow {

enum class Termination { ReachedT, Blowup, PositivityLoss };
const char* to_string(Termination t) noexcept;

struct StepControl {
  double dt_init = 0.0;  // 0: start at the controller's choice
  double dt_max = std::numeric_limits<double>::infinity();
  double safety = 1.0;
  double kappa = 0.1;
};

struct FlowConfig {
  std::variant<zoo::ModelMetric, core::MetricField> initial;
  double T = 0.1;
  StepControl control;
  double blowup = 0.0;            // 0: 1e6 * (initial sup|Rm| + 1)
  double checkpoint_every = 0.0;  // 0: T / 10
  int curvature_every = 1;        // steps between full curvature recomputes
  bool gauge = false;             // DeTurck term against the flat chart metric
  bool keep_fields = true;        // store metrics at snapshots
  int workers = 1;
};

struct Diagnostics {
  double sup_rm = 0.0;
  double sup_ric = 0.0;       // operator norm
  double sup_ric_full = 0.0;  // full contraction
  double c0_distance = 0.0;   // |g(t) - g0| in g0
  double volume = 0.0;
  double scalar_min = 0.0;
  double scalar_max = 0.0;
  double l_instant = 0.0;     // sup |dg/dt| measured in g(t)
  // Running quantities over every step taken so far, not just snapshots.
  double max_sup_ric = 0.0;
  double max_l = 0.0;
  double int_sup_rm = 0.0;    // integral of sup|Rm| ds
  double int_sup_ric = 0.0;   // integral of sup|Ric| ds
};

struct FlowState {
  double t = 0.0;
  std::optional<zoo::ModelMetric> model;  // model route
  core::MetricField metric;               // grid route
  std::shared_ptr<const core::CurvatureBundle> curvature;
  Diagnostics diag;
  std::shared_ptr<const zoo::ModelMetric> model0;
  std::shared_ptr<const core::MetricField> metric0;

  bool is_model() const noexcept { return model.has_value(); }
  int dimension() const { return model ? model->n : metric.dimension(); }
};

struct FlowTrace {
  std::vector<FlowState> snapshots;
  Termination termination = Termination::ReachedT;
  std::optional<std::size_t> failed_node;
  std::string message;
  std::size_t steps = 0;
  double max_sup_ric = 0.0;
  double l = 0.0;
  double max_cs = 0.0;  // filled when Sobolev probes run on the trace
  double cadence = 0.0;
};

FlowState initial_state(const FlowConfig& config);

/// kappa h^2 / max(1, sup|Rm|); h = 1 on the model route.
double stability_bound(const FlowState& s, double kappa);

struct StepOptions {
  double kappa = 0.1;
  bool gauge = false;
  bool recompute_curvature = true;
  int workers = 1;
};

/// One classical RK4 step of dg/dt = -2 Ric. Throws RejectedStep when dt
/// exceeds the stability bound and PositivityLoss (with node) when a stage
/// metric stops being positive definite.
FlowState step(const FlowState& s, double dt, const StepOptions& opt = {});

FlowTrace run(const FlowConfig& config);

/// Restriction of a grid metric to the chart ball of radius r0/2 around a
/// node, standing in for the exponential lift of that ball.
struct LiftedPatch {
  probes::SobolevPatch patch;            // box around the node with the ball mask
  std::vector<std::size_t> ball_nodes;   // ball nodes on the source chart
  double lp_norm = 0.0;                  // ||Rm||_{p0} over the ball
  double sobolev = 0.0;                  // C_S lower estimate on the ball, 0 if not measured
  std::vector<double> maximizer;         // on the estimator's mesh, for warm starts
  double lift_discrepancy = -1.0;        // geodesic vs chart-line endpoint mismatch (relative), -1 if not measured
};

struct LiftOptions {
  double p0 = 5.0;
  bool sobolev = true;
  bool discrepancy = false;
  probes::SobolevOptions sobolev_options;
  int workers = 1;
};

LiftedPatch lifted_initial_data(const core::MetricField& g, std::size_t center, double r0, const LiftOptions& opt = {});
/// Same with a precomputed curvature bundle of g.
LiftedPatch lifted_initial_data(const core::MetricField& g, const core::CurvatureBundle& b, std::size_t center,
                                double r0, const LiftOptions& opt = {});

/// ||Rm||_p over chart balls (fixed chart radius) around each center.
std::vector<double> ball_lp_norms(const core::CurvatureBundle& b, std::span<const std::size_t> centers, double radius,
                                  double p);

/// Nodes of the chart ball (periodic distance in chart coordinates).
std::vector<std::size_t> chart_ball(const core::ChartGrid& chart, std::size_t center, double radius);

struct ResidualRow {
  double t = 0.0;
  double scalar_residual = 0.0;  // max |dR/dt - Delta R - 2|Ric|^2|
  double c_min = 0.0;            // smallest c with d|Rm|/dt <= Delta|Rm| + c|Rm|^2
};

struct ResidualReport {
  std::vector<ResidualRow> rows;  // interior snapshots
  double max_scalar_residual = 0.0;
  double c_min = 0.0;
  double c_fit = 0.0;  // sup|Ric|(t) <= sup|Ric|(0) exp(c int sup|Rm|)
};

/// Needs >= 3 snapshots at uniform cadence (Resample error otherwise) and
/// stored fields on the grid route.
ResidualReport evolution_residuals(const FlowTrace& trace, int workers = 1);

}  // namespace rflab::flow
