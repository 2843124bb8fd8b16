#pragma once

#include <cmath>
#include <vector>

#include "graphfield/errors.hpp"

namespace graphfield {

struct EuclideanPoint {
  double x = 0.0;
  double y = 0.0;
};

// Location on the graph as (edge index, normalized distance in [0,1]).
struct GraphLocation {
  int edge = -1;
  double t = 0.0;
};

struct Edge {
  int id = -1;
  int v_start = -1;
  int v_end = -1;
  std::vector<EuclideanPoint> geometry;  // >= 2 points, ends at the vertices
  std::vector<double> cum_length;        // arc length up to geometry[i]; [0]=0
  double length() const { return cum_length.back(); }
};

struct IncidentEdge {
  int edge = -1;
  bool at_start = false;  // vertex sits at t=0 of the edge (else t=1)
};

// Connected network of polyline edges; immutable after build_graph.
class MetricGraph {
 public:
  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const EuclideanPoint& vertex(int v) const { return vertices_[v]; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<IncidentEdge>& incident(int v) const { return adjacency_[v]; }
  int degree(int v) const { return static_cast<int>(adjacency_[v].size()); }
  double total_length() const { return total_length_; }

  // Vertex id if loc sits at an edge endpoint (|t| or |1-t| within 1e-12),
  // otherwise -1.
  int vertex_at(const GraphLocation& loc) const;

  EuclideanPoint pte_to_xy(const GraphLocation& loc) const;
  GraphLocation xy_to_pte(const EuclideanPoint& p, double snap_tol) const;

  // Endpoint locations are rewritten onto the lowest incident edge id;
  // interior locations pass through unchanged.
  GraphLocation canonicalize(const GraphLocation& loc) const;

  // Endpoint coordinate (0 or 1) of vertex v on edge e; requires incidence.
  double endpoint_t(int e, int v) const;

 private:
  friend MetricGraph build_graph(const std::vector<std::vector<EuclideanPoint>>&,
                                 double);
  std::vector<EuclideanPoint> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<IncidentEdge>> adjacency_;
  double total_length_ = 0.0;
};

// Fuses segment endpoints within merge_tol into shared vertices and checks
// connectivity. Segments must intersect only at their endpoints.
MetricGraph build_graph(const std::vector<std::vector<EuclideanPoint>>& segments,
                        double merge_tol = 1e-9);

inline double distance(const EuclideanPoint& a, const EuclideanPoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace graphfield
