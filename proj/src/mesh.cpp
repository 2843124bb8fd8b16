#include "graphfield/mesh.hpp"

#include <cmath>

#include "graphfield/errors.hpp"

namespace graphfield {

int Mesh::node(int e, int j) const {
  const Edge& ed = graph_->edge(e);
  if (j == 0) return ed.v_start;
  if (j == n_e_[e]) return ed.v_end;
  return interior_offset_[e] + j - 1;
}

std::pair<int, double> Mesh::locate(const GraphLocation& loc) const {
  const int n = n_e_[loc.edge];
  const double u = loc.t * n;
  int k = static_cast<int>(std::floor(u));
  double local = u - k;
  if (k >= n) {  // t == 1 (or above by rounding)
    k = n - 1;
    local = 1.0;
  } else if (local == 0.0 && k > 0) {  // shared boundary goes left
    k -= 1;
    local = 1.0;
  }
  return {interval_offset_[loc.edge] + k, local};
}

BasisEvaluation Mesh::basis(const GraphLocation& loc) const {
  const auto [ival, local] = locate(loc);
  const MeshInterval& mi = intervals_[ival];
  BasisEvaluation out;
  if (local == 0.0) {
    out.count = 1;
    out.index[0] = mi.left;
    out.weight[0] = 1.0;
  } else if (local == 1.0) {
    out.count = 1;
    out.index[0] = mi.right;
    out.weight[0] = 1.0;
  } else {
    out.count = 2;
    out.index = {mi.left, mi.right};
    out.weight = {1.0 - local, local};
  }
  return out;
}

Mesh build_mesh(const MetricGraph& g, double h_target) {
  if (!(h_target > 0.0)) throw Error("build_mesh: h_target must be > 0");
  Mesh mesh;
  mesh.graph_ = &g;
  mesh.h_target_ = h_target;
  const int m = g.num_vertices();
  const int M = g.num_edges();
  mesh.n_e_.resize(M);
  mesh.interior_offset_.resize(M);
  mesh.interval_offset_.resize(M);

  int next = m;
  int ival = 0;
  for (int e = 0; e < M; ++e) {
    const double le = g.edge(e).length();
    const int n = std::max(1, static_cast<int>(std::ceil(le / h_target)));
    mesh.n_e_[e] = n;
    mesh.interior_offset_[e] = next;
    mesh.interval_offset_[e] = ival;
    next += n - 1;
    ival += n;
  }
  mesh.num_vertices_ = next;

  mesh.locations_.resize(next);
  for (int v = 0; v < m; ++v) {
    const IncidentEdge& inc = g.incident(v).front();
    GraphLocation loc{inc.edge, inc.at_start ? 0.0 : 1.0};
    mesh.locations_[v] = g.canonicalize(loc);
  }
  mesh.intervals_.reserve(ival);
  for (int e = 0; e < M; ++e) {
    const int n = mesh.n_e_[e];
    const double w = g.edge(e).length() / n;
    for (int j = 1; j < n; ++j) {
      mesh.locations_[mesh.interior_offset_[e] + j - 1] =
          GraphLocation{e, static_cast<double>(j) / n};
    }
    for (int j = 0; j < n; ++j) {
      mesh.intervals_.push_back({e, mesh.node(e, j), mesh.node(e, j + 1), w});
    }
  }
  return mesh;
}

Eigen::VectorXd evaluate_field(const Mesh& mesh,
                               const std::vector<GraphLocation>& locs,
                               const Eigen::VectorXd& w) {
  if (w.size() != mesh.num_vertices())
    throw DimensionMismatch("evaluate_field: |w| = " + std::to_string(w.size()) +
                            " but mesh has K = " +
                            std::to_string(mesh.num_vertices()));
  Eigen::VectorXd out(locs.size());
  for (std::size_t j = 0; j < locs.size(); ++j) {
    const BasisEvaluation b = mesh.basis(locs[j]);
    double v = 0.0;
    for (int i = 0; i < b.count; ++i) v += b.weight[i] * w[b.index[i]];
    out[j] = v;
  }
  return out;
}

}  // namespace graphfield
