#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <vector>

#include "graphfield/paths.hpp"

namespace graphfield {

// Piecewise-linear covariate given by its values at the mesh vertices.
using CovariateField = Eigen::VectorXd;

enum class Link { Identity, Log };

enum class LineScale { Unit, InverseSq };

struct NoiseModel {
  double sigma2_point = 0.01;
  double sigma2_line = 0.25;
  LineScale scale = LineScale::InverseSq;
  // h(|L|) so that Var(eps_i) = h(|L_i|) sigma2_line.
  double line_factor(double len) const {
    return scale == LineScale::Unit ? 1.0 : 1.0 / (len * len);
  }
};

struct PointObs {
  GraphLocation location;
  double value = 0.0;
  int replicate = 0;
};

struct LineObs {
  GraphPath path;
  double value = 0.0;
  int replicate = 0;
};

struct Observations {
  std::vector<PointObs> points;
  std::vector<LineObs> lines;
};

struct SparseDesign {
  Eigen::SparseMatrix<double> A;  // rows = observations, cols = K
  std::vector<int> block;         // row -> observation id
};

// Row j = hat-basis weights at locs[j].
SparseDesign point_matrix(const Mesh& mesh, const std::vector<GraphLocation>& locs);

// Row i = Simpson quadrature of the basis along paths[i]; rows sum to |L_i|,
// or to 1 when averaged.
SparseDesign line_matrix(const Mesh& mesh, const std::vector<GraphPath>& paths,
                         bool averaged);

// (1/|L|) times the line integral of the piecewise-linear covariate.
double average_covariate(const Mesh& mesh, const CovariateField& x,
                         const GraphPath& path);

// Draws eta_r = beta0 + x beta1 + w_r and observes it: points get
// g(eta_r(s_j)) + noise, lines get the Simpson integral of g(eta_r), raw for
// the identity link and length-averaged for the log link unless
// averaged_override (0 or 1) says otherwise.
Observations simulate_observations(const Mesh& mesh,
                                   const std::vector<Eigen::VectorXd>& w,
                                   double beta0, double beta1,
                                   const CovariateField& x, Link link,
                                   const NoiseModel& noise,
                                   const std::vector<GraphLocation>& point_locs,
                                   const std::vector<GraphPath>& paths,
                                   std::uint64_t seed,
                                   int averaged_override = -1);

}  // namespace graphfield
