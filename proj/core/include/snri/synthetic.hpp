// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Offline test data: a planted-rule knowledge graph written in the
 *         standard inductive split layout, and a sparse target-pair fixture.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "snri/kg_store.hpp"

namespace snri {

/// Relations are named rt, r1, r2, r3, r4 (ids 0..4). rt(a, c) holds iff some
/// b has r1(a, b) and r2(b, c); r3 and r4 are uniform noise.
struct SyntheticOptions {
  std::size_t num_entities = 1000;   ///< transductive world
  std::size_t test_entities = 500;   ///< inductive world, disjoint names
  std::size_t body_edges = 700;      ///< r1 and r2 each, scaled to the entity count
  std::size_t noise_edges = 300;     ///< r3 and r4 each, scaled likewise
  double valid_fraction = 0.2;       ///< rt triples held out of the train graph
  double test_fraction = 0.5;        ///< rt triples held out of the inductive graph
  std::uint64_t seed = 0;
};

struct SyntheticWorld {
  std::vector<Triple> facts;     ///< r1..r4 edges
  std::vector<Triple> derived;   ///< every rt triple implied by the rule
};

/// One world over `num_entities` ids; deterministic in `seed`.
SyntheticWorld generate_world(std::size_t num_entities, std::size_t body_edges,
                              std::size_t noise_edges, std::uint64_t seed);

struct SyntheticSummary {
  std::size_t train = 0, valid = 0, ind_train = 0, ind_test = 0;
};

/// Writes `dir`/{train,valid,test}.txt and `dir`_ind/{train,valid,test}.txt.
SyntheticSummary write_synthetic_dataset(const std::filesystem::path& dir,
                                         const SyntheticOptions& options = {});

/// Two target nodes with no path between them. The head carries one edge per
/// relation in head_rels and the tail one per relation in tail_rels, each to a
/// fresh leaf. Target relation is 0.
struct SparsePairFixture {
  KGraph graph;
  Triple target;
};

SparsePairFixture make_sparse_pair_fixture(std::size_t num_relations,
                                           const std::vector<RelationId>& head_rels,
                                           const std::vector<RelationId>& tail_rels);

}  // namespace snri
