#include "graphfield/paths.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "graphfield/errors.hpp"

namespace graphfield {

namespace {

constexpr double kTol = 1e-12;

bool same_location(const MetricGraph& g, const GraphLocation& a,
                   const GraphLocation& b) {
  const GraphLocation ca = g.canonicalize(a);
  const GraphLocation cb = g.canonicalize(b);
  return ca.edge == cb.edge && std::abs(ca.t - cb.t) <= kTol;
}

// Vertices shared by two edges (each listed once).
std::vector<int> shared_vertices(const MetricGraph& g, int e1, int e2) {
  const Edge& a = g.edge(e1);
  const Edge& b = g.edge(e2);
  std::vector<int> out;
  for (int v : {a.v_start, a.v_end}) {
    if ((v == b.v_start || v == b.v_end) &&
        std::find(out.begin(), out.end(), v) == out.end())
      out.push_back(v);
  }
  return out;
}

void append_interval(std::vector<InterEdgeInterval>& intervals, int edge,
                     double t0, double t1) {
  if (std::abs(t1 - t0) <= kTol) return;  // zero-length steps dropped
  if (!intervals.empty() && intervals.back().edge == edge &&
      std::abs(intervals.back().t_end - t0) <= kTol) {
    const double dir_prev = intervals.back().t_end - intervals.back().t_start;
    const double dir_new = t1 - t0;
    if (dir_prev * dir_new > 0.0) {  // same direction: extend
      intervals.back().t_end = t1;
      return;
    }
  }
  intervals.push_back({edge, t0, t1});
}

}  // namespace

GraphPath::GraphPath(const MetricGraph& g, std::vector<InterEdgeInterval> intervals)
    : intervals_(std::move(intervals)) {
  if (intervals_.empty()) throw DegeneratePath("path has no intervals");
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    const InterEdgeInterval& iv = intervals_[i];
    if (iv.edge < 0 || iv.edge >= g.num_edges())
      throw Error("path interval references invalid edge");
    if (iv.t_start < -kTol || iv.t_start > 1.0 + kTol || iv.t_end < -kTol ||
        iv.t_end > 1.0 + kTol)
      throw Error("path interval coordinates outside [0,1]");
    if (std::abs(iv.t_end - iv.t_start) <= kTol)
      throw DegeneratePath("zero-length interval on edge " +
                           std::to_string(iv.edge));
    if (i > 0) {
      const GraphLocation prev_end{intervals_[i - 1].edge, intervals_[i - 1].t_end};
      const GraphLocation next_start{iv.edge, iv.t_start};
      if (!same_location(g, prev_end, next_start))
        throw BrokenChain("path intervals " + std::to_string(i - 1) + " and " +
                          std::to_string(i) + " are not spatially connected");
    }
    length_ += std::abs(iv.t_end - iv.t_start) * g.edge(iv.edge).length();
  }
  if (!(length_ > 0.0)) throw DegeneratePath("path has zero length");
}

GraphPath path_from_waypoints(const MetricGraph& g, const GraphLocation& start,
                              const std::vector<int>& via,
                              const GraphLocation& end) {
  std::vector<int> chain;
  chain.push_back(start.edge);
  chain.insert(chain.end(), via.begin(), via.end());
  chain.push_back(end.edge);

  std::vector<InterEdgeInterval> intervals;
  if (chain.size() == 2 && chain[0] == chain[1]) {
    append_interval(intervals, start.edge, start.t, end.t);
    return GraphPath(g, std::move(intervals));
  }

  // connection vertex between consecutive chain edges
  std::vector<int> joints(chain.size() - 1);
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const std::vector<int> shared = shared_vertices(g, chain[i], chain[i + 1]);
    if (shared.empty())
      throw BrokenChain("edges " + std::to_string(chain[i]) + " and " +
                        std::to_string(chain[i + 1]) + " share no vertex");
    if (shared.size() > 1)
      throw AmbiguousChain("edges " + std::to_string(chain[i]) + " and " +
                           std::to_string(chain[i + 1]) +
                           " share two vertices; orientation is ambiguous");
    joints[i] = shared.front();
  }

  append_interval(intervals, chain.front(), start.t,
                  g.endpoint_t(chain.front(), joints.front()));
  for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
    const Edge& e = g.edge(chain[i]);
    double t_in, t_out;
    if (e.v_start == e.v_end) {  // self-loop: full traversal forward
      t_in = 0.0;
      t_out = 1.0;
    } else {
      t_in = g.endpoint_t(chain[i], joints[i - 1]);
      t_out = g.endpoint_t(chain[i], joints[i]);
      if (t_in == t_out)
        throw BrokenChain("via edge " + std::to_string(chain[i]) +
                          " enters and leaves at the same vertex");
    }
    append_interval(intervals, chain[i], t_in, t_out);
  }
  append_interval(intervals, chain.back(),
                  g.endpoint_t(chain.back(), joints.back()), end.t);
  return GraphPath(g, std::move(intervals));
}

namespace {

// Candidate edges a snapped location may lie on: the single containing edge
// for interior points, every incident edge for vertex points.
std::vector<std::pair<int, double>> candidate_edges(const MetricGraph& g,
                                                    const GraphLocation& loc) {
  const int v = g.vertex_at(loc);
  if (v < 0) return {{loc.edge, loc.t}};
  std::vector<std::pair<int, double>> out;
  for (const IncidentEdge& inc : g.incident(v))
    out.emplace_back(inc.edge, inc.at_start ? 0.0 : 1.0);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

GraphPath path_from_polyline(const MetricGraph& g,
                             const std::vector<EuclideanPoint>& polyline,
                             double snap_tol) {
  if (polyline.size() < 2) throw Error("path_from_polyline: need >= 2 points");
  std::vector<GraphLocation> locs;
  locs.reserve(polyline.size());
  for (const EuclideanPoint& p : polyline) {
    GraphLocation loc = g.xy_to_pte(p, snap_tol);
    if (locs.empty() || !same_location(g, locs.back(), loc))
      locs.push_back(loc);
  }
  if (locs.size() < 2) throw DegeneratePath("polyline collapses to a point");

  std::vector<InterEdgeInterval> intervals;
  GraphLocation cur = locs.front();
  for (std::size_t i = 1; i < locs.size(); ++i) {
    const GraphLocation nxt = locs[i];
    const auto ca = candidate_edges(g, cur);
    const auto cb = candidate_edges(g, nxt);

    // same edge: step within it
    bool done = false;
    for (const auto& [ea, ta] : ca) {
      for (const auto& [eb, tb] : cb) {
        if (ea == eb) {
          append_interval(intervals, ea, ta, tb);
          cur = {eb, tb};
          done = true;
          break;
        }
      }
      if (done) break;
    }
    if (done) continue;

    // hand over through a shared vertex; choose the geometrically shortest
    double best_len = std::numeric_limits<double>::infinity();
    int be1 = -1, be2 = -1, bv = -1;
    for (const auto& [ea, ta] : ca) {
      for (const auto& [eb, tb] : cb) {
        for (int v : shared_vertices(g, ea, eb)) {
          const double tva = g.endpoint_t(ea, v);
          const double tvb = g.endpoint_t(eb, v);
          const double len = std::abs(ta - tva) * g.edge(ea).length() +
                             std::abs(tb - tvb) * g.edge(eb).length();
          if (len < best_len) {
            best_len = len;
            be1 = ea;
            be2 = eb;
            bv = v;
          }
        }
      }
    }
    if (bv < 0)
      throw BrokenChain(
          "consecutive polyline points are not connectable along one edge or "
          "through one shared vertex; trace the graph more densely");
    double ta = cur.t;
    for (const auto& [e, t] : ca) {
      if (e == be1) ta = t;
    }
    double tb = nxt.t;
    for (const auto& [e, t] : cb) {
      if (e == be2) tb = t;
    }
    append_interval(intervals, be1, ta, g.endpoint_t(be1, bv));
    append_interval(intervals, be2, g.endpoint_t(be2, bv), tb);
    cur = {be2, tb};
  }
  return GraphPath(g, std::move(intervals));
}

std::vector<GraphPath> paths_from_polylines(
    const MetricGraph& g, const std::vector<std::vector<EuclideanPoint>>& polylines,
    double snap_tol) {
  std::vector<GraphPath> out;
  out.reserve(polylines.size());
  for (const auto& pl : polylines) out.push_back(path_from_polyline(g, pl, snap_tol));
  return out;
}

namespace {

// Append a 3-point Simpson cell over [t0, t1] (normalized on edge e).
void simpson_cell(IntegrationScheme& s, int edge, double t0, double t1,
                  double edge_len) {
  const double len = std::abs(t1 - t0) * edge_len;
  s.points.push_back({edge, t0});
  s.points.push_back({edge, 0.5 * (t0 + t1)});
  s.points.push_back({edge, t1});
  s.weights.push_back(len / 6.0);
  s.weights.push_back(4.0 * len / 6.0);
  s.weights.push_back(len / 6.0);
}

void merge_duplicate_points(IntegrationScheme& s) {
  IntegrationScheme out;
  out.block = s.block;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (!out.points.empty() && out.points.back().edge == s.points[i].edge &&
        std::abs(out.points.back().t - s.points[i].t) <= 1e-15) {
      out.weights.back() += s.weights[i];
    } else {
      out.points.push_back(s.points[i]);
      out.weights.push_back(s.weights[i]);
    }
  }
  s = std::move(out);
}

}  // namespace

IntegrationScheme simpson_scheme(const Mesh& mesh, const GraphPath& path,
                                 int block) {
  IntegrationScheme s;
  s.block = block;
  const MetricGraph& g = mesh.graph();
  for (const InterEdgeInterval& iv : path.intervals()) {
    const int n = mesh.intervals_on_edge(iv.edge);
    const double edge_len = g.edge(iv.edge).length();
    const double lo = std::min(iv.t_start, iv.t_end);
    const double hi = std::max(iv.t_start, iv.t_end);
    double ulo = lo * n;
    double uhi = hi * n;
    // snap to the grid when within rounding distance of a mesh vertex
    if (std::abs(ulo - std::round(ulo)) <= 1e-9) ulo = std::round(ulo);
    if (std::abs(uhi - std::round(uhi)) <= 1e-9) uhi = std::round(uhi);

    IntegrationScheme piece;
    double u = ulo;
    while (u < uhi - 1e-15) {
      const double cell_end = std::min(std::floor(u) == u ? u + 1.0 : std::ceil(u),
                                       uhi);
      simpson_cell(piece, iv.edge, u / n, cell_end / n, edge_len);
      u = cell_end;
    }
    merge_duplicate_points(piece);
    s.points.insert(s.points.end(), piece.points.begin(), piece.points.end());
    s.weights.insert(s.weights.end(), piece.weights.begin(), piece.weights.end());
  }
  return s;
}

GraphLocation midpoint(const MetricGraph& g, const GraphPath& path) {
  const double target = 0.5 * path.length();
  double cum = 0.0;
  for (const InterEdgeInterval& iv : path.intervals()) {
    const double len = std::abs(iv.t_end - iv.t_start) * g.edge(iv.edge).length();
    if (cum + len >= target) {
      const double frac = len > 0.0 ? (target - cum) / len : 0.0;
      return {iv.edge, iv.t_start + frac * (iv.t_end - iv.t_start)};
    }
    cum += len;
  }
  const InterEdgeInterval& last = path.intervals().back();
  return {last.edge, last.t_end};
}

}  // namespace graphfield
