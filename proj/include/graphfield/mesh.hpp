#pragma once

#include <Eigen/Core>
#include <array>
#include <utility>
#include <vector>

#include "graphfield/graph.hpp"

namespace graphfield {

// Hat-function evaluation: at most two nonzero weights summing to 1.
struct BasisEvaluation {
  int count = 0;
  std::array<int, 2> index{{-1, -1}};
  std::array<double, 2> weight{{0.0, 0.0}};
};

struct MeshInterval {
  int edge = -1;
  int left = -1;   // global mesh-vertex index at the lower-t end
  int right = -1;  // global mesh-vertex index at the higher-t end
  double width = 0.0;
};

// Regular refinement of every edge. Global mesh-vertex indexing is fixed:
// graph vertices take 0..m-1, then interior points edge by edge from t=0
// to t=1, so assembled matrices are reproducible across runs.
class Mesh {
 public:
  const MetricGraph& graph() const { return *graph_; }
  double h_target() const { return h_target_; }
  int num_vertices() const { return num_vertices_; }  // K
  int num_intervals() const { return static_cast<int>(intervals_.size()); }
  int intervals_on_edge(int e) const { return n_e_[e]; }
  int interval_offset(int e) const { return interval_offset_[e]; }
  const MeshInterval& interval(int i) const { return intervals_[i]; }
  const std::vector<MeshInterval>& intervals() const { return intervals_; }

  // Global index of the j-th grid point on edge e, j in 0..n_e.
  int node(int e, int j) const;

  GraphLocation vertex_location(int k) const { return locations_[k]; }
  EuclideanPoint vertex_xy(int k) const { return graph_->pte_to_xy(locations_[k]); }

  // Interval containing loc and the local coordinate within it. Shared
  // boundaries resolve to the left interval except at t=0.
  std::pair<int, double> locate(const GraphLocation& loc) const;

  BasisEvaluation basis(const GraphLocation& loc) const;

 private:
  friend Mesh build_mesh(const MetricGraph&, double);
  const MetricGraph* graph_ = nullptr;
  double h_target_ = 0.0;
  int num_vertices_ = 0;
  std::vector<int> n_e_;
  std::vector<int> interior_offset_;  // global index of first interior node per edge
  std::vector<int> interval_offset_;
  std::vector<MeshInterval> intervals_;
  std::vector<GraphLocation> locations_;  // canonical location per mesh vertex
};

// n_e = max(1, ceil(l_e / h_target)): actual spacing never exceeds h_target.
// The mesh keeps a pointer to g, which must outlive it.
Mesh build_mesh(const MetricGraph& g, double h_target);

// Field values sum_k w_k phi_k at the given locations; |w| must equal K.
Eigen::VectorXd evaluate_field(const Mesh& mesh,
                               const std::vector<GraphLocation>& locs,
                               const Eigen::VectorXd& w);

}  // namespace graphfield
