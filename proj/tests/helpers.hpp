#pragma once

#include <cmath>
#include <vector>

#include "graphfield/graph.hpp"

namespace testutil {

using graphfield::EuclideanPoint;
using graphfield::MetricGraph;

inline MetricGraph single_edge(double length) {
  return graphfield::build_graph({{{0.0, 0.0}, {length, 0.0}}});
}

inline MetricGraph l_graph() {
  return graphfield::build_graph({{{0, 0}, {1, 0}}, {{1, 0}, {1, 1}}});
}

inline MetricGraph square_graph() {
  return graphfield::build_graph(
      {{{0, 0}, {1, 0}}, {{1, 0}, {1, 1}}, {{1, 1}, {0, 1}}, {{0, 1}, {0, 0}}});
}

// Unit block with an arc bypass, a duplicated street and two spurs; six
// vertices and eight edges.
inline MetricGraph demo_block() {
  std::vector<std::vector<EuclideanPoint>> segs;
  segs.push_back({{0, 0}, {1, 0}});
  segs.push_back({{0, 0}, {0, 1}});
  segs.push_back({{0, 1}, {-1, 1}});
  std::vector<EuclideanPoint> arc;
  for (int i = 0; i < 20; ++i) {
    const double th = M_PI + (M_PI / 2) * i / 19.0;
    arc.push_back({std::sin(th), 1 + std::cos(th)});
  }
  segs.push_back(arc);
  segs.push_back({{0, 0}, {1, 0}});
  segs.push_back({{1, 0}, {1, 1}});
  segs.push_back({{1, 1}, {2, 1}});
  segs.push_back({{0, 1}, {1, 1}});
  return graphfield::build_graph(segs);
}

// 13 vertices, 16 edges: a 13-vertex loop-free chain plus four chords.
inline MetricGraph thirteen_sixteen() {
  std::vector<std::vector<EuclideanPoint>> segs;
  std::vector<EuclideanPoint> v;
  for (int i = 0; i < 13; ++i)
    v.push_back({0.9 * i, 0.4 * ((i * 5) % 3)});
  for (int i = 0; i + 1 < 13; ++i) segs.push_back({v[i], v[i + 1]});
  segs.push_back({v[0], v[4]});
  segs.push_back({v[3], v[7]});
  segs.push_back({v[6], v[11]});
  segs.push_back({v[9], v[12]});
  return graphfield::build_graph(segs);
}

inline MetricGraph star_graph(int legs, double leg_len) {
  std::vector<std::vector<EuclideanPoint>> segs;
  for (int i = 0; i < legs; ++i) {
    const double th = 2.0 * M_PI * i / legs;
    segs.push_back({{0, 0}, {leg_len * std::cos(th), leg_len * std::sin(th)}});
  }
  return graphfield::build_graph(segs);
}

}  // namespace testutil
