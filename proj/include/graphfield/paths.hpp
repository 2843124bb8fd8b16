#pragma once

#include <vector>

#include "graphfield/mesh.hpp"

namespace graphfield {

// Directed piece of a single edge; traversal order is (t_start -> t_end).
struct InterEdgeInterval {
  int edge = -1;
  double t_start = 0.0;
  double t_end = 0.0;
};

// Chain of inter-edge intervals whose consecutive endpoints meet at shared
// vertices. Total length is strictly positive.
class GraphPath {
 public:
  GraphPath(const MetricGraph& g, std::vector<InterEdgeInterval> intervals);
  const std::vector<InterEdgeInterval>& intervals() const { return intervals_; }
  double length() const { return length_; }

 private:
  std::vector<InterEdgeInterval> intervals_;
  double length_ = 0.0;
};

// Path from a start location through fully traversed via edges to an end
// location. Consecutive edges must share exactly one vertex.
GraphPath path_from_waypoints(const MetricGraph& g, const GraphLocation& start,
                              const std::vector<int>& via,
                              const GraphLocation& end);

// Path traced by a polyline lying on the graph (within snap_tol). Consecutive
// polyline points must stay on one edge or hand over through a shared vertex.
GraphPath path_from_polyline(const MetricGraph& g,
                             const std::vector<EuclideanPoint>& polyline,
                             double snap_tol);

std::vector<GraphPath> paths_from_polylines(
    const MetricGraph& g, const std::vector<std::vector<EuclideanPoint>>& polylines,
    double snap_tol);

struct IntegrationScheme {
  std::vector<GraphLocation> points;
  std::vector<double> weights;  // sum to the path length
  int block = 0;
};

// Composite Simpson rule aligned to the mesh: every covered mesh interval is
// split into two half-steps (1-4-2-...-4-1 pattern); partial end pieces get
// their own 3-point cell. Exact for degree <= 3 polynomials per edge.
IntegrationScheme simpson_scheme(const Mesh& mesh, const GraphPath& path,
                                 int block = 0);

// Location at arc length |L|/2 measured along the path.
GraphLocation midpoint(const MetricGraph& g, const GraphPath& path);

}  // namespace graphfield
