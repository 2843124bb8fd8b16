#include <doctest.h>

#include <cmath>
#include <functional>

#include "graphfield/paths.hpp"
#include "graphfield/rng.hpp"
#include "helpers.hpp"

using namespace graphfield;

namespace {

double integrate(const IntegrationScheme& s,
                 const std::function<double(const GraphLocation&)>& f) {
  double acc = 0.0;
  for (std::size_t q = 0; q < s.points.size(); ++q)
    acc += s.weights[q] * f(s.points[q]);
  return acc;
}

}  // namespace

TEST_CASE("path_from_waypoints chains intervals through shared vertices") {
  const MetricGraph g = testutil::thirteen_sixteen();
  // chain edges 0-1-2-3-4 along the backbone
  const GraphPath p =
      path_from_waypoints(g, {0, 0.7}, {1, 2, 3}, {4, 0.75});
  CHECK(p.intervals().size() == 5);
  CHECK(p.length() > 0.0);
  // connectivity is part of the constructor contract; re-validate explicitly
  for (std::size_t i = 1; i < p.intervals().size(); ++i) {
    const auto& a = p.intervals()[i - 1];
    const auto& b = p.intervals()[i];
    const GraphLocation ca = g.canonicalize({a.edge, a.t_end});
    const GraphLocation cb = g.canonicalize({b.edge, b.t_start});
    CHECK(ca.edge == cb.edge);
    CHECK(ca.t == doctest::Approx(cb.t));
  }
}

TEST_CASE("single-edge path and broken chains") {
  const MetricGraph g = testutil::thirteen_sixteen();
  const GraphPath p = path_from_waypoints(g, {3, 0.2}, {}, {3, 0.9});
  CHECK(p.intervals().size() == 1);
  CHECK(p.length() == doctest::Approx(0.7 * g.edge(3).length()).epsilon(1e-12));

  CHECK_THROWS_AS(path_from_waypoints(g, {0, 0.5}, {5}, {6, 0.5}), BrokenChain);
  CHECK_THROWS_AS(path_from_waypoints(g, {3, 0.2}, {}, {3, 0.2}), DegeneratePath);
}

TEST_CASE("parallel edges make waypoint chains ambiguous") {
  const MetricGraph g = testutil::demo_block();  // edges 0 and 4 coincide
  CHECK_THROWS_AS(path_from_waypoints(g, {0, 0.5}, {4}, {1, 0.5}),
                  AmbiguousChain);
}

TEST_CASE("path_from_polyline traces edges and hands over at vertices") {
  const MetricGraph g = testutil::l_graph();
  {
    const GraphPath p =
        path_from_polyline(g, {{0.1, 0.0}, {0.5, 0.0}, {0.9, 0.0}}, 1e-6);
    CHECK(p.intervals().size() == 1);
    CHECK(p.intervals()[0].edge == 0);
    CHECK(p.intervals()[0].t_start == doctest::Approx(0.1));
    CHECK(p.intervals()[0].t_end == doctest::Approx(0.9));
  }
  {
    const GraphPath p = path_from_polyline(
        g, {{0.5, 0.0}, {0.9, 0.0}, {1.0, 0.3}, {1.0, 0.8}}, 1e-6);
    CHECK(p.intervals().size() == 2);
    CHECK(p.intervals()[0].edge == 0);
    CHECK(p.intervals()[1].edge == 1);
  }
  CHECK_THROWS_AS(path_from_polyline(g, {{0.5, 0.0}, {0.5, 0.5}}, 0.05),
                  PointOffGraph);
}

TEST_CASE("polyline round trip: densely sampled path geometry returns the path") {
  const MetricGraph g = testutil::demo_block();
  const GraphPath p = path_from_waypoints(g, {1, 0.3}, {7}, {6, 0.6});
  std::vector<EuclideanPoint> sampled;
  for (const InterEdgeInterval& iv : p.intervals()) {
    for (int s = 0; s <= 20; ++s) {
      const double t = iv.t_start + (iv.t_end - iv.t_start) * s / 20.0;
      sampled.push_back(g.pte_to_xy({iv.edge, t}));
    }
  }
  const GraphPath q = path_from_polyline(g, sampled, 1e-9);
  CHECK(q.length() == doctest::Approx(p.length()).epsilon(1e-9));
  CHECK(q.intervals().size() == p.intervals().size());
  for (std::size_t i = 0; i < p.intervals().size(); ++i) {
    CHECK(q.intervals()[i].edge == p.intervals()[i].edge);
    CHECK(q.intervals()[i].t_start ==
          doctest::Approx(p.intervals()[i].t_start).epsilon(1e-9));
    CHECK(q.intervals()[i].t_end ==
          doctest::Approx(p.intervals()[i].t_end).epsilon(1e-9));
  }
}

TEST_CASE("simpson scheme: weights sum to length, all positive") {
  const MetricGraph g = testutil::demo_block();
  const Mesh mesh = build_mesh(g, 0.13);
  Rng rng(21);
  for (int rep = 0; rep < 25; ++rep) {
    const int e = static_cast<int>(rng.next_u64() % g.num_edges());
    double a = rng.uniform(), b = rng.uniform();
    if (std::abs(a - b) < 1e-3) b = a + 0.1 * (b < 0.9 ? 1 : -1);
    const GraphPath p(g, {{e, a, b}});
    const IntegrationScheme s = simpson_scheme(mesh, p);
    double total = 0.0;
    for (double w : s.weights) {
      CHECK(w > 0.0);
      total += w;
    }
    CHECK(total == doctest::Approx(p.length()).epsilon(1e-10));
  }
}

TEST_CASE("simpson exactness for cubics in per-edge arc length") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.25);
  const GraphPath p(g, {{0, 0.0, 1.0}});
  const IntegrationScheme s = simpson_scheme(mesh, p);

  CHECK(integrate(s, [](const GraphLocation&) { return 1.0; }) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(integrate(s, [](const GraphLocation& q) { return q.t * q.t; }) ==
        doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(integrate(s, [](const GraphLocation& q) {
          return 2.0 * q.t * q.t * q.t - q.t + 0.25;
        }) == doctest::Approx(2.0 / 4 - 0.5 + 0.25).epsilon(1e-12));

  // partial pieces keep cubic exactness
  const GraphPath part(g, {{0, 0.1, 0.63}});
  const IntegrationScheme sp = simpson_scheme(mesh, part);
  const auto cubic = [](const GraphLocation& q) {
    return q.t * q.t * q.t;
  };
  const double analytic = (std::pow(0.63, 4) - std::pow(0.1, 4)) / 4.0;
  CHECK(integrate(sp, cubic) == doctest::Approx(analytic).epsilon(1e-12));
}

TEST_CASE("simpson integrates a hat basis function to its analytic integral") {
  const MetricGraph g = testutil::single_edge(1.0);
  const Mesh mesh = build_mesh(g, 0.25);
  // full hat at interior node 2 (t = 0.5): integral = h_e
  const GraphPath p(g, {{0, 0.0, 1.0}});
  const IntegrationScheme s = simpson_scheme(mesh, p);
  const double integral = integrate(s, [&](const GraphLocation& q) {
    const BasisEvaluation b = mesh.basis(q);
    double v = 0.0;
    for (int i = 0; i < b.count; ++i)
      if (b.index[i] == mesh.node(0, 2)) v += b.weight[i];
    return v;
  });
  CHECK(integral == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("reversing a path leaves the integration weights unchanged") {
  const MetricGraph g = testutil::l_graph();
  const Mesh mesh = build_mesh(g, 0.21);
  const GraphPath fwd(g, {{0, 0.3, 1.0}, {1, 0.0, 0.8}});
  const GraphPath rev(g, {{1, 0.8, 0.0}, {0, 1.0, 0.3}});
  const IntegrationScheme sf = simpson_scheme(mesh, fwd);
  const IntegrationScheme sr = simpson_scheme(mesh, rev);
  double wf = 0.0, wr = 0.0;
  for (double w : sf.weights) wf += w;
  for (double w : sr.weights) wr += w;
  CHECK(wf == doctest::Approx(wr).epsilon(1e-14));
  CHECK(fwd.length() == doctest::Approx(rev.length()).epsilon(1e-14));
}

TEST_CASE("midpoint of paths") {
  const MetricGraph g = testutil::l_graph();
  {
    const GraphPath p(g, {{0, 0.2, 0.8}});
    const GraphLocation m = midpoint(g, p);
    CHECK(m.edge == 0);
    CHECK(m.t == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    // two intervals of lengths 0.25 and 0.75: midpoint sits 0.25 into the
    // second interval
    const GraphPath p(g, {{0, 0.75, 1.0}, {1, 0.0, 0.75}});
    const GraphLocation m = midpoint(g, p);
    CHECK(m.edge == 1);
    CHECK(m.t == doctest::Approx(0.25).epsilon(1e-12));
  }
  {
    // symmetric around the corner vertex
    const GraphPath p(g, {{0, 0.6, 1.0}, {1, 0.0, 0.4}});
    const GraphLocation m = midpoint(g, p);
    const GraphLocation c = g.canonicalize(m);
    CHECK(g.vertex_at(c) == g.edge(0).v_end);
  }
}
