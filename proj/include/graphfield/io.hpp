#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphfield/inference.hpp"
#include "graphfield/simstudy.hpp"

namespace graphfield::io {

// Shortest round-trip decimal representation; used for every numeric field
// so that write -> read -> write is byte-identical.
std::string format_double(double v);

struct GraphFile {
  MetricGraph graph;
  std::optional<std::vector<double>> edge_covariate;  // per-edge values
  std::string crs;  // informational tag only
};

GraphFile read_graph_json(const std::string& path);
void write_graph_json(const std::string& path, const MetricGraph& g,
                      const std::optional<std::vector<double>>& edge_covariate = {},
                      const std::string& crs = "");

// Path specs: either waypoints {start, via edges, end} or an XY polyline.
struct PathSpec {
  int id = 0;
  bool is_polyline = false;
  GraphLocation start, end;
  std::vector<int> via;
  std::vector<EuclideanPoint> polyline;
  double snap_tol = 1e-6;
};

std::vector<PathSpec> read_paths_json(const std::string& path);
void write_paths_json(const std::string& path, const std::vector<PathSpec>& specs);
std::vector<GraphPath> resolve_paths(const MetricGraph& g,
                                     const std::vector<PathSpec>& specs);

// Observation CSV: header type,edge,t,path_id,replicate,value with
// P rows filling edge/t and L rows filling path_id.
Observations read_obs_csv(const std::string& path,
                          const std::vector<GraphPath>& paths);
void write_obs_csv(const std::string& path, const Observations& obs,
                   const std::vector<GraphPath>& paths);

struct RunConfig {
  double mesh_h = 0.05;
  Support support = Support::IM;
  Link link = Link::Identity;
  LineScale scale = LineScale::InverseSq;
  int averaged_lines = -1;
  PriorSpec prior;
  OptimizerOptions opt;
  std::uint64_t seed = 1;
};

RunConfig read_run_config(const std::string& path);

struct SimulateConfig {
  double mesh_h = 0.05;
  double rho = 0.35;
  double sigma2 = 1.0;
  int replicates = 1;
  double beta0 = 1.0;
  double beta1 = 1.0;
  double sigma2_line = 0.25;
  double sigma2_point = 0.01;
  Link link = Link::Identity;
  LineScale scale = LineScale::InverseSq;
  std::uint64_t seed = 1;
  // covariate: sampled unless the graph file provides per-edge values
  double cov_rho = 2.1;
  double cov_sigma2 = 3.0;
  std::uint64_t cov_seed = 7;
  bool use_graph_covariate = false;
};

SimulateConfig read_simulate_config(const std::string& path);

struct StudyConfig {
  std::string graph = "desk";  // "desk" or a graph JSON path
  double mesh_h = 0.07;
  double stop_spacing = 0.95;
  std::vector<Scenario> scenarios;
  bool run_im = true;
  bool run_sm = true;
  double cov_rho_factor = 6.0;  // rho_cov = factor * smallest scenario range
  double cov_sigma2 = 3.0;
  std::uint64_t seed = 1;
  int jobs = 1;
};

StudyConfig read_study_config(const std::string& path);

void write_scores_csv(const std::string& path, const std::vector<StudyRow>& rows);
void write_long_csv(const std::string& path, const std::vector<LongRow>& rows);

// Fit dump: hyperparameter summaries plus pointers to the inputs so that
// predict/estimand can rebuild the latent conditional at the stored mode.
struct FitRecord {
  Eigen::Vector4d hyper_mode;
  Eigen::Matrix4d hyper_cov;
  Eigen::Vector2d fixed_mean, fixed_sd;
  int iterations = 0;
  int taylor_iterations = 0;
  double final_step_norm = 0;
  bool converged = false;
  Eigen::VectorXd linearization_point;  // log link only; empty otherwise
  std::string graph_path, obs_path, paths_path, config_path;
};

void write_fit_json(const std::string& path, const FitRecord& rec);
FitRecord read_fit_json(const std::string& path);

void write_predictions_csv(const std::string& path, const Mesh& mesh,
                           const std::vector<Prediction>& preds);

}  // namespace graphfield::io
