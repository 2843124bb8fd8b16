#include "graphfield/observe.hpp"

#include <cmath>
#include <vector>

#include "graphfield/errors.hpp"
#include "graphfield/rng.hpp"

namespace graphfield {

SparseDesign point_matrix(const Mesh& mesh, const std::vector<GraphLocation>& locs) {
  SparseDesign d;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * locs.size());
  for (std::size_t j = 0; j < locs.size(); ++j) {
    const BasisEvaluation b = mesh.basis(locs[j]);
    for (int i = 0; i < b.count; ++i)
      trips.emplace_back(static_cast<int>(j), b.index[i], b.weight[i]);
    d.block.push_back(static_cast<int>(j));
  }
  d.A.resize(static_cast<int>(locs.size()), mesh.num_vertices());
  d.A.setFromTriplets(trips.begin(), trips.end());
  return d;
}

SparseDesign line_matrix(const Mesh& mesh, const std::vector<GraphPath>& paths,
                         bool averaged) {
  SparseDesign d;
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const IntegrationScheme s = simpson_scheme(mesh, paths[i], static_cast<int>(i));
    const double scale = averaged ? 1.0 / paths[i].length() : 1.0;
    for (std::size_t q = 0; q < s.points.size(); ++q) {
      const BasisEvaluation b = mesh.basis(s.points[q]);
      for (int k = 0; k < b.count; ++k)
        trips.emplace_back(static_cast<int>(i), b.index[k],
                           scale * s.weights[q] * b.weight[k]);
    }
    d.block.push_back(static_cast<int>(i));
  }
  d.A.resize(static_cast<int>(paths.size()), mesh.num_vertices());
  d.A.setFromTriplets(trips.begin(), trips.end());
  return d;
}

double average_covariate(const Mesh& mesh, const CovariateField& x,
                         const GraphPath& path) {
  if (x.size() != mesh.num_vertices())
    throw DimensionMismatch("average_covariate: covariate length != K");
  const IntegrationScheme s = simpson_scheme(mesh, path);
  double integral = 0.0;
  for (std::size_t q = 0; q < s.points.size(); ++q) {
    const BasisEvaluation b = mesh.basis(s.points[q]);
    double v = 0.0;
    for (int k = 0; k < b.count; ++k) v += b.weight[k] * x[b.index[k]];
    integral += s.weights[q] * v;
  }
  return integral / path.length();
}

Observations simulate_observations(const Mesh& mesh,
                                   const std::vector<Eigen::VectorXd>& w,
                                   double beta0, double beta1,
                                   const CovariateField& x, Link link,
                                   const NoiseModel& noise,
                                   const std::vector<GraphLocation>& point_locs,
                                   const std::vector<GraphPath>& paths,
                                   std::uint64_t seed, int averaged_override) {
  const int K = mesh.num_vertices();
  if (x.size() != K)
    throw DimensionMismatch("simulate_observations: covariate length != K");
  for (const auto& wr : w) {
    if (wr.size() != K)
      throw DimensionMismatch("simulate_observations: weight vector length != K");
  }
  const bool averaged =
      averaged_override < 0 ? (link == Link::Log) : averaged_override != 0;
  auto g_of = [&](double eta) { return link == Link::Log ? std::exp(eta) : eta; };

  std::vector<IntegrationScheme> schemes;
  schemes.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i)
    schemes.push_back(simpson_scheme(mesh, paths[i], static_cast<int>(i)));

  Rng rng(seed);
  Observations obs;
  for (std::size_t r = 0; r < w.size(); ++r) {
    const Eigen::VectorXd eta =
        (beta0 + beta1 * x.array() + w[r].array()).matrix();
    for (const GraphLocation& loc : point_locs) {
      const BasisEvaluation b = mesh.basis(loc);
      double v = 0.0;
      for (int k = 0; k < b.count; ++k) v += b.weight[k] * eta[b.index[k]];
      const double y =
          g_of(v) + std::sqrt(noise.sigma2_point) * rng.normal();
      obs.points.push_back({loc, y, static_cast<int>(r)});
    }
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const IntegrationScheme& s = schemes[i];
      double integral = 0.0;
      for (std::size_t q = 0; q < s.points.size(); ++q) {
        const BasisEvaluation b = mesh.basis(s.points[q]);
        double v = 0.0;
        for (int k = 0; k < b.count; ++k) v += b.weight[k] * eta[b.index[k]];
        integral += s.weights[q] * g_of(v);
      }
      if (averaged) integral /= paths[i].length();
      const double sd =
          std::sqrt(noise.line_factor(paths[i].length()) * noise.sigma2_line);
      obs.lines.push_back({paths[i], integral + sd * rng.normal(),
                           static_cast<int>(r)});
    }
  }
  return obs;
}

}  // namespace graphfield
