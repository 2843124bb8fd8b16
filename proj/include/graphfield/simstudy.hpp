#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphfield/inference.hpp"

namespace graphfield {

struct Scenario {
  std::string name = "medium";
  double rho_true = 0.35;
  double sigma2_true = 1.0;
  int replicates = 1;  // R
  int n_realizations = 25;
  double sigma2_line = 0.25;
  double sigma2_point = 0.01;
  double beta0_true = 1.0;
  double beta1_true = 1.0;
  std::uint64_t seed_base = 1;
};

struct StudyRow {
  std::string scenario;
  std::string model;  // "IM" or "SM"
  int R = 0;
  int realization = 0;
  double rmse = 0, crps = 0, coverage = 0;
  double rho_hat = 0, sigma2_hat = 0;
  double beta0_hat = 0, beta1_hat = 0;
  double sigma2_point_hat = 0, sigma2_line_hat = 0;
  bool converged = true;
};

struct LongRow {
  std::string scenario;
  std::string model;
  int R = 0;
  int realization = 0;
  std::string metric;
  double value = 0;
};

// One GRF draw standardized to sample mean 0, sd 1, used as the fixed
// spatial covariate of the study.
CovariateField generate_covariate(const Mesh& mesh, std::uint64_t seed,
                                  double rho_cov, double sigma2_cov = 3.0);

// Fixed observation design shared by every realization of a scenario.
struct StudyDesign {
  std::vector<GraphLocation> point_locs;
  std::vector<GraphPath> paths;
};

// Simulates n_realizations draws of (w_1..w_R, observations), fits the
// requested models, and scores the latent field against the truth at every
// mesh vertex. Realizations run as independent jobs with derived seeds.
std::vector<StudyRow> run_scenario(const Scenario& scn, const Mesh& mesh,
                                   const CovariateField& x,
                                   const StudyDesign& design, bool run_im,
                                   bool run_sm, int jobs = 1);

// Long (boxplot-ready) format: one row per score metric.
std::vector<LongRow> summarize(const std::vector<StudyRow>& rows);

// Deterministic synthetic road network at desk scale: jittered street grid
// with curved blocks and a few dead-end spurs, ~22 km total.
std::vector<std::vector<EuclideanPoint>> desk_segments();

// Four bus routes split into consecutive-stop segments plus six measurement
// stations on the desk network.
StudyDesign desk_design(const MetricGraph& g, const Mesh& mesh,
                        double stop_spacing = 0.95);

// Splits a path into consecutive pieces of roughly seg_len arc length; a
// short tail is merged into the previous piece.
std::vector<GraphPath> split_path(const MetricGraph& g, const GraphPath& path,
                                  double seg_len);

}  // namespace graphfield
