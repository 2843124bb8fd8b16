#include "graphfield/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace graphfield {

namespace {

constexpr double kEndpointTol = 1e-12;

double segment_length(const std::vector<EuclideanPoint>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

}  // namespace

int MetricGraph::vertex_at(const GraphLocation& loc) const {
  const Edge& e = edges_[loc.edge];
  if (std::abs(loc.t) <= kEndpointTol) return e.v_start;
  if (std::abs(1.0 - loc.t) <= kEndpointTol) return e.v_end;
  return -1;
}

double MetricGraph::endpoint_t(int e, int v) const {
  const Edge& ed = edges_[e];
  if (ed.v_start == v) return 0.0;
  if (ed.v_end == v) return 1.0;
  throw Error("vertex " + std::to_string(v) + " is not an endpoint of edge " +
              std::to_string(e));
}

EuclideanPoint MetricGraph::pte_to_xy(const GraphLocation& loc) const {
  const Edge& e = edges_[loc.edge];
  if (loc.t <= 0.0) return e.geometry.front();
  if (loc.t >= 1.0) return e.geometry.back();
  const double target = loc.t * e.length();
  auto it = std::upper_bound(e.cum_length.begin(), e.cum_length.end(), target);
  std::size_t seg = static_cast<std::size_t>(it - e.cum_length.begin());
  if (seg == 0) seg = 1;
  if (seg >= e.geometry.size()) seg = e.geometry.size() - 1;
  const double s0 = e.cum_length[seg - 1];
  const double s1 = e.cum_length[seg];
  const double a = s1 > s0 ? (target - s0) / (s1 - s0) : 0.0;
  const EuclideanPoint& p = e.geometry[seg - 1];
  const EuclideanPoint& q = e.geometry[seg];
  return {p.x + a * (q.x - p.x), p.y + a * (q.y - p.y)};
}

GraphLocation MetricGraph::xy_to_pte(const EuclideanPoint& p, double snap_tol) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  GraphLocation best;
  for (const Edge& e : edges_) {
    for (std::size_t i = 1; i < e.geometry.size(); ++i) {
      const EuclideanPoint& a = e.geometry[i - 1];
      const EuclideanPoint& b = e.geometry[i];
      const double ux = b.x - a.x, uy = b.y - a.y;
      const double len2 = ux * ux + uy * uy;
      double s = 0.0;
      if (len2 > 0.0) {
        s = ((p.x - a.x) * ux + (p.y - a.y) * uy) / len2;
        s = std::clamp(s, 0.0, 1.0);
      }
      const double cx = a.x + s * ux - p.x;
      const double cy = a.y + s * uy - p.y;
      const double d2 = cx * cx + cy * cy;
      const double seg_len = e.cum_length[i] - e.cum_length[i - 1];
      double t = (e.cum_length[i - 1] + s * seg_len) / e.length();
      t = std::clamp(t, 0.0, 1.0);
      const bool better =
          d2 < best_d2 ||
          (d2 == best_d2 && (e.id < best.edge || (e.id == best.edge && t < best.t)));
      if (better) {
        best_d2 = d2;
        best = {e.id, t};
      }
    }
  }
  if (!(best_d2 <= snap_tol * snap_tol)) {
    throw PointOffGraph("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                        ") is farther than snap_tol from every edge");
  }
  return best;
}

GraphLocation MetricGraph::canonicalize(const GraphLocation& loc) const {
  const int v = vertex_at(loc);
  if (v < 0) return loc;
  int best_edge = edges_.size();
  bool at_start = true;
  for (const IncidentEdge& inc : adjacency_[v]) {
    if (inc.edge < best_edge) {
      best_edge = inc.edge;
      at_start = inc.at_start;
    } else if (inc.edge == best_edge && inc.at_start) {
      at_start = true;  // self-loop: prefer t = 0
    }
  }
  return {best_edge, at_start ? 0.0 : 1.0};
}

MetricGraph build_graph(const std::vector<std::vector<EuclideanPoint>>& segments,
                        double merge_tol) {
  if (segments.empty()) throw Error("build_graph: no segments");
  MetricGraph g;
  auto find_or_add_vertex = [&](const EuclideanPoint& p) -> int {
    for (int v = 0; v < static_cast<int>(g.vertices_.size()); ++v) {
      if (distance(g.vertices_[v], p) <= merge_tol) return v;
    }
    g.vertices_.push_back(p);
    g.adjacency_.emplace_back();
    return static_cast<int>(g.vertices_.size()) - 1;
  };

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& pts = segments[s];
    if (pts.size() < 2)
      throw Error("build_graph: segment " + std::to_string(s) + " has < 2 points");
    const double len = segment_length(pts);
    if (len <= merge_tol)
      throw DegenerateEdge("segment " + std::to_string(s) + " has length " +
                           std::to_string(len) + " <= merge_tol");
    Edge e;
    e.id = static_cast<int>(s);
    e.v_start = find_or_add_vertex(pts.front());
    e.v_end = find_or_add_vertex(pts.back());
    e.geometry = pts;
    e.geometry.front() = g.vertices_[e.v_start];
    e.geometry.back() = g.vertices_[e.v_end];
    e.cum_length.resize(e.geometry.size());
    e.cum_length[0] = 0.0;
    for (std::size_t i = 1; i < e.geometry.size(); ++i) {
      e.cum_length[i] =
          e.cum_length[i - 1] + distance(e.geometry[i - 1], e.geometry[i]);
    }
    g.adjacency_[e.v_start].push_back({e.id, true});
    g.adjacency_[e.v_end].push_back({e.id, false});
    g.total_length_ += e.length();
    g.edges_.push_back(std::move(e));
  }

  // connectivity over vertices
  std::vector<bool> seen(g.vertices_.size(), false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int reached = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (const IncidentEdge& inc : g.adjacency_[v]) {
      const Edge& e = g.edges_[inc.edge];
      const int u = inc.at_start ? e.v_end : e.v_start;
      if (!seen[u]) {
        seen[u] = true;
        ++reached;
        frontier.push(u);
      }
    }
  }
  if (reached != static_cast<int>(g.vertices_.size()))
    throw DisconnectedGraph("graph has " +
                            std::to_string(g.vertices_.size() - reached) +
                            " unreachable vertices");
  return g;
}

}  // namespace graphfield
