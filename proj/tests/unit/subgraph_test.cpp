// SPDX-License-Identifier: Apache-2.0
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "snri/log.hpp"
#include "snri/subgraph.hpp"

namespace snri {
namespace {

std::map<EntityId, int> sorted(const std::unordered_map<EntityId, int>& m) { return {m.begin(), m.end()}; }

TEST(KHop, PathGraph) {
  KGraph g(3, 1, {{0, 0, 1}, {1, 0, 2}});
  EXPECT_EQ(sorted(k_hop_neighbors(g, 1, 1)), (std::map<EntityId, int>{{0, 1}, {1, 0}, {2, 1}}));
  EXPECT_EQ(sorted(k_hop_neighbors(g, 0, 2)), (std::map<EntityId, int>{{0, 0}, {1, 1}, {2, 2}}));
  EXPECT_EQ(sorted(k_hop_neighbors(g, 0, 1)), (std::map<EntityId, int>{{0, 0}, {1, 1}}));
  EXPECT_THROW(k_hop_neighbors(g, 0, 0), Error);
}

TEST(KHop, MatchesAllPairsOracle) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 150; ++rep) {
    const std::size_t n = 2 + rng() % 50;
    auto triples = testing::random_triples(n, 3, rng() % (2 * n), rng);
    KGraph g(n, 3, triples);
    const int k = 1 + static_cast<int>(rng() % 4);
    const EntityId src = static_cast<EntityId>(rng() % n);
    EXPECT_EQ(sorted(k_hop_neighbors(g, src, k)), testing::hop_ball(n, triples, src, k)) << "rep " << rep;
  }
}

TEST(Extract, TriangleWithDirectEdge) {
  // u=0, v=1, x=2
  KGraph g(3, 2, {{0, 0, 2}, {2, 0, 1}, {0, 1, 1}});
  Subgraph sg = extract_enclosing(g, {0, 1, 1}, {.hops = 2});
  EXPECT_EQ(sg.nodes, (std::vector<EntityId>{0, 1, 2}));
  EXPECT_EQ(sg.dist_to_u[2], 1);
  EXPECT_EQ(sg.dist_to_v[2], 1);
  EXPECT_EQ(sg.dist_to_u[1], 2);
  EXPECT_EQ(sg.edges, (std::vector<SubgraphEdge>{{0, 0, 2}, {2, 0, 1}}));

  Subgraph kept = extract_enclosing(g, {0, 1, 1}, {.hops = 2, .drop_target_edge = false});
  EXPECT_EQ(kept.edges.size(), 3u);
  EXPECT_EQ(kept.dist_to_u[1], 1);
}

TEST(Extract, DisjointComponents) {
  KGraph g(4, 1, {{0, 0, 2}, {1, 0, 3}});
  Subgraph sg = extract_enclosing(g, {0, 0, 1}, {.hops = 3});
  EXPECT_EQ(sg.nodes, (std::vector<EntityId>{0, 1}));
  EXPECT_TRUE(sg.edges.empty());
  EXPECT_EQ(sg.dist_to_v[0], 4);
  EXPECT_EQ(sg.dist_to_u[1], 4);
  EXPECT_EQ(sg.neighbor_rels[0], (std::vector<std::uint32_t>{0}));
}

TEST(Extract, TargetRelationsExcludeTargetEdge) {
  KGraph g(3, 2, {{0, 0, 1}, {0, 1, 2}, {2, 1, 1}});
  Subgraph sg = extract_enclosing(g, {0, 0, 1});
  EXPECT_EQ(sg.neighbor_rels[0], (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(sg.neighbor_rels[1], (std::vector<std::uint32_t>{3}));
  for (const auto& e : sg.edges) EXPECT_FALSE(e.head == 0 && e.relation == 0 && e.tail == 1);
}

TEST(Extract, DegenerateSelfTarget) {
  const auto level = log::level();
  log::set_level(log::Level::kError);
  KGraph g(2, 1, {{0, 0, 1}});
  Subgraph sg = extract_enclosing(g, {0, 0, 0}, {.hops = 2});
  log::set_level(level);
  EXPECT_TRUE(sg.degenerate);
  EXPECT_EQ(sg.num_nodes(), 2u);
  EXPECT_EQ(sg.dist_to_u, (std::vector<int>{0, 3}));
  EXPECT_EQ(sg.dist_to_v, (std::vector<int>{3, 0}));
}

TEST(Extract, OutOfRangeThrows) {
  KGraph g(2, 1, {{0, 0, 1}});
  EXPECT_THROW(extract_enclosing(g, {0, 0, 5}), Error);
  EXPECT_THROW(extract_enclosing(g, {0, 0, 1}, {.hops = 0}), Error);
}

TEST(Extract, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng() % 40;
    const std::size_t R = 1 + rng() % 4;
    auto triples = testing::random_triples(n, R, rng() % (3 * n), rng);
    KGraph g(n, R, triples);
    const int k = 1 + static_cast<int>(rng() % 3);
    Triple target{static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % R),
                  static_cast<EntityId>(rng() % n)};
    if (target.head == target.tail) continue;
    if (rng() % 2 && !triples.empty()) target = triples[rng() % triples.size()];
    if (target.head == target.tail) continue;
    const bool drop = rng() % 4 != 0;
    Subgraph sg = extract_enclosing(g, target, {.hops = k, .drop_target_edge = drop});
    auto oracle = testing::brute_force_extract(n, triples, target, k, drop);
    ASSERT_EQ(sg.nodes, oracle.nodes) << "rep " << rep;
    ASSERT_EQ(sg.edges, oracle.edges) << "rep " << rep;
    ASSERT_EQ(sg.dist_to_u, oracle.dist_to_u) << "rep " << rep;
    ASSERT_EQ(sg.dist_to_v, oracle.dist_to_v) << "rep " << rep;
    for (std::size_t i = 2; i < sg.num_nodes(); ++i) {
      EXPECT_LE(sg.dist_to_u[i], k);
      EXPECT_LE(sg.dist_to_v[i], k);
    }
  }
}

TEST(Extract, PureFunctionOfInputs) {
  std::mt19937_64 rng(5);
  auto triples = testing::random_triples(60, 3, 200, rng);
  KGraph g(60, 3, triples);
  for (const auto& t : triples) {
    if (t.head == t.tail) continue;
    EXPECT_EQ(extract_enclosing(g, t), extract_enclosing(g, t));
    EXPECT_EQ(extract_enclosing(g, t, {.max_nodes = 5, .seed = 3}),
              extract_enclosing(g, t, {.max_nodes = 5, .seed = 3}));
    EXPECT_LE(extract_enclosing(g, t, {.max_nodes = 5}).num_nodes(), 5u);
  }
}

TEST(Onehot, Layout) {
  Subgraph sg;
  sg.hops = 3;
  sg.nodes = {0, 1, 2, 3};
  sg.dist_to_u = {0, 2, 1, 4};
  sg.dist_to_v = {2, 0, 2, 4};
  auto x = double_radius_onehot(sg, 2);
  ASSERT_EQ(x.size(), 10u);
  std::vector<double> expect(10, 0.0);
  expect[1] = expect[7] = 1.0;
  EXPECT_EQ(x, expect);
  auto head = double_radius_onehot(sg, 0);
  EXPECT_EQ(head[0], 1.0);
  EXPECT_EQ(head[5 + 2], 1.0);
  auto far = double_radius_onehot(sg, 3);
  EXPECT_EQ(far[4], 1.0);
  EXPECT_EQ(far[9], 1.0);
  EXPECT_THROW(double_radius_onehot(sg, 4), Error);
}

TEST(Onehot, UnitL1NormEverywhere) {
  std::mt19937_64 rng(6);
  auto triples = testing::random_triples(40, 2, 90, rng);
  KGraph g(40, 2, triples);
  for (const auto& t : triples) {
    if (t.head == t.tail) continue;
    Subgraph sg = extract_enclosing(g, t, {.hops = 2});
    ASSERT_GE(sg.num_nodes(), 2u);
    for (std::uint32_t i = 0; i < sg.num_nodes(); ++i) {
      auto x = double_radius_onehot(sg, i);
      EXPECT_EQ(std::accumulate(x.begin(), x.end(), 0.0), 2.0);
    }
  }
}

TEST(Dump, ListsNodesAndEdges) {
  KGraph g(3, 2, {{0, 0, 2}, {2, 0, 1}, {0, 1, 1}});
  std::ostringstream out;
  write_subgraph_dump(out, extract_enclosing(g, {0, 1, 1}, {.hops = 2}));
  const std::string s = out.str();
  EXPECT_NE(s.find("# nodes\t3"), std::string::npos);
  EXPECT_NE(s.find("edge\t0\t0\t2"), std::string::npos);
  EXPECT_NE(s.find("label=(1,1)"), std::string::npos);
}

}  // namespace
}  // namespace snri
