#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rflab/flow.hpp"
#include "rflab/models.hpp"

namespace rflab::harness {

enum class Kind { Flow, Moser };
enum class Route { Model, Grid };

struct GeometrySpec {
  std::string family = "flat-torus";  // a model family, "perturbed-torus" or "file"
  int n = 3;
  double radius = 1.0;
  std::vector<double> periods;  // flat torus
  double circle_length = 1.0;
  std::array<double, 3> lambda{1.0, 1.0, 1.0};
  double epsilon = 1.0;
  Route route = Route::Model;
  int nodes = 24;
  double period = 6.283185307179586;
  double core = 0.0;  // core half-width of grid realizations, 0: period / 4
  std::string file;   // resolved path of a metric file
  // perturbed torus
  double amplitude = 0.0;
  int frequency = 1;
  int modes = 3;
};

struct ProbeSpec {
  std::vector<double> times;  // empty: every snapshot
  int diameter_sources = 4;
  int excess_pairs = 4;
  int distance_pairs = 4;
  int curves = 16;
  int reach = 2;
  double r0 = 0.0;  // membership radius, 0: no membership check
  int conj_samples = 12;
  double smoothing_t1 = 0.0;  // 0: first positive snapshot
  double sobolev_radius = 0.0;  // probe subcommand, 0: period / 8
};

struct LemmaSpec {
  bool enabled = false;
  double calibrate_amplitude = 0.1;
  double r0 = 2.0;
  double p0 = 5.0;
  int bases = 8;
  int sobolev_bases = 1;
  std::vector<double> sobolev_times;  // empty: 0, T/2, T
  int graded_nodes = 25;
  double sobolev_tolerance = 1e-8;
  double headroom = 1.5;
};

struct CoveringSpec {
  std::vector<std::pair<double, double>> pairs;  // (r, epsilon)
  std::size_t center = 0;
};

struct RefinementSpec {
  std::vector<int> levels;
  double T = 0.02;
  double min_order = 1.8;
};

struct MoserSpec {
  int n = 3;
  double radius = 1.0;
  int nodes = 33;
  double T = 0.1;
  int steps = 200;
  double p0 = 5.0;
  std::vector<std::pair<double, double>> cases;  // (q, b)
  double evolving_radius = 0.0;  // round-sphere radius driving a homothetic metric, 0: none
  int sweep = 1000;
};

struct Scenario {
  std::string name;
  std::optional<std::uint64_t> seed;
  Kind kind = Kind::Flow;
  GeometrySpec geometry;
  flow::FlowConfig flow;  // `initial` is filled by build_initial
  ProbeSpec probes;
  LemmaSpec lemmas;
  CoveringSpec covering;
  RefinementSpec refinement;
  MoserSpec moser;
  std::vector<std::string> select;  // verifier families
  std::string output_dir;
  bool dump_fields = false;
  std::string source;  // path the scenario was read from, "" for text
  /// Canonical key = value listing, the input of the scenario digest.
  std::map<std::string, std::string> canonical;
  /// Line of each key, for anchoring validation errors.
  std::map<std::string, int> lines;

  bool selected(const std::string& family) const;
  std::uint64_t seed_or_throw() const;
};

/// Parses the line-oriented scenario format (see docs/scenario-format.md).
/// Errors are Parse or Validation and start with "<source>:<line>:".
Scenario parse_scenario(const std::string& text, const std::string& source = "<text>");
Scenario load_scenario(const std::string& path);

/// Semantic checks (positivity, probe times on snapshots, seed presence,
/// referenced files). Throws Validation anchored at the offending line.
void validate(const Scenario& s);

/// Model metric of the geometry section (model families only).
zoo::ModelMetric model_of(const GeometrySpec& g);
/// Initial metric for the flow: the model itself on the model route, its grid
/// realization, a perturbed torus, or a metric file on the grid route.
std::variant<zoo::ModelMetric, core::MetricField> build_initial(const Scenario& s);

/// Metric file: JSON {"n", "extents", "periods", "g"} with g packed per node.
core::MetricField read_metric_file(const std::string& path);
std::string metric_json(const core::MetricField& g);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);
std::uint64_t scenario_digest(const Scenario& s);

}  // namespace rflab::harness
