#include <doctest.h>

#include "graphfield/graph.hpp"
#include "graphfield/rng.hpp"
#include "helpers.hpp"

using namespace graphfield;

TEST_CASE("build_graph fuses endpoints and computes lengths") {
  const MetricGraph g = testutil::l_graph();
  CHECK(g.num_vertices() == 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.edge(0).length() == doctest::Approx(1.0));
  CHECK(g.edge(1).length() == doctest::Approx(1.0));
  CHECK(g.total_length() == doctest::Approx(2.0));
}

TEST_CASE("demo block: six vertices, eight edges") {
  const MetricGraph g = testutil::demo_block();
  CHECK(g.num_vertices() == 6);
  CHECK(g.num_edges() == 8);
  // vertex at the origin joins the two parallel streets, the vertical street
  // and the arc
  const GraphLocation origin = g.xy_to_pte({0, 0}, 1e-9);
  const int v = g.vertex_at(g.canonicalize(origin));
  REQUIRE(v >= 0);
  CHECK(g.degree(v) == 4);
}

TEST_CASE("thirteen vertices, sixteen edges, connected") {
  const MetricGraph g = testutil::thirteen_sixteen();
  CHECK(g.num_vertices() == 13);
  CHECK(g.num_edges() == 16);
}

TEST_CASE("build_graph error cases") {
  CHECK_THROWS_AS(build_graph({{{0, 0}, {1, 0}}, {{5, 5}, {6, 5}}}),
                  DisconnectedGraph);
  CHECK_THROWS_AS(build_graph({{{0, 0}, {0, 0}}}), DegenerateEdge);
  CHECK_THROWS_AS(build_graph({}), Error);
}

TEST_CASE("pte_to_xy on straight and polyline edges") {
  const MetricGraph g = testutil::single_edge(2.0);
  CHECK(g.pte_to_xy({0, 0.5}).x == doctest::Approx(1.0));
  CHECK(g.pte_to_xy({0, 0.5}).y == doctest::Approx(0.0));
  CHECK(g.pte_to_xy({0, 0.0}).x == doctest::Approx(0.0));
  CHECK(g.pte_to_xy({0, 1.0}).x == doctest::Approx(2.0));

  // polyline (0,0)-(1,0)-(1,1): t = 0.75 is half way up the second leg
  const MetricGraph lg = build_graph({{{0, 0}, {1, 0}, {1, 1}}});
  const EuclideanPoint p = lg.pte_to_xy({0, 0.75});
  CHECK(p.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("xy_to_pte inverse, ties and errors") {
  const MetricGraph g = testutil::single_edge(2.0);
  const GraphLocation loc = g.xy_to_pte({1.0, 0.0}, 1e-6);
  CHECK(loc.edge == 0);
  CHECK(loc.t == doctest::Approx(0.5));

  // vertex shared by several edges snaps to the lowest edge id
  const MetricGraph block = testutil::demo_block();
  const GraphLocation shared = block.xy_to_pte({1.0, 0.0}, 1e-9);
  CHECK(shared.edge == 0);
  CHECK(shared.t == doctest::Approx(1.0));

  CHECK_THROWS_AS(g.xy_to_pte({1.0, 0.1}, 0.05), PointOffGraph);
}

TEST_CASE("canonicalize endpoint and interior rules") {
  const MetricGraph g = testutil::l_graph();
  // the shared corner is (e0, t=1) and (e1, t=0); e0 wins
  const GraphLocation c = g.canonicalize({1, 0.0});
  CHECK(c.edge == 0);
  CHECK(c.t == 1.0);

  const GraphLocation interior = g.canonicalize({1, 0.4});
  CHECK(interior.edge == 1);
  CHECK(interior.t == 0.4);

  // idempotent
  const GraphLocation cc = g.canonicalize(c);
  CHECK(cc.edge == c.edge);
  CHECK(cc.t == c.t);

  // degree-4 vertex in the block: any endpoint representation maps to the
  // lowest incident edge id
  const MetricGraph block = testutil::demo_block();
  const GraphLocation via_arc = block.canonicalize({3, 0.0});  // arc start
  CHECK(via_arc.edge == 0);
  CHECK(via_arc.t == 0.0);
}

TEST_CASE("pte/xy round trip on random interior points") {
  const MetricGraph g = testutil::demo_block();
  Rng rng(2024);
  for (int i = 0; i < 200; ++i) {
    const int e = static_cast<int>(rng.next_u64() % g.num_edges());
    const double t = 0.05 + 0.9 * rng.uniform();
    const EuclideanPoint p = g.pte_to_xy({e, t});
    const GraphLocation back = g.xy_to_pte(p, 1e-9);
    const EuclideanPoint q = g.pte_to_xy(back);
    CHECK(distance(p, q) < 1e-9);
  }
}

TEST_CASE("total length matches input geometry") {
  const MetricGraph g = testutil::demo_block();
  double direct = 0.0;
  for (int e = 0; e < g.num_edges(); ++e) {
    const Edge& ed = g.edge(e);
    for (std::size_t i = 1; i < ed.geometry.size(); ++i)
      direct += distance(ed.geometry[i - 1], ed.geometry[i]);
  }
  CHECK(g.total_length() == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("adjacency lists every incidence once per endpoint") {
  const MetricGraph g = testutil::demo_block();
  for (int v = 0; v < g.num_vertices(); ++v) {
    int count = 0;
    for (int e = 0; e < g.num_edges(); ++e) {
      if (g.edge(e).v_start == v) ++count;
      if (g.edge(e).v_end == v) ++count;
    }
    CHECK(g.degree(v) == count);
  }
}
