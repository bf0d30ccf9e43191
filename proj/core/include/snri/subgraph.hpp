// SPDX-License-Identifier: Apache-2.0
/**
 * @file   subgraph.hpp
 * @brief  Enclosing-subgraph extraction with double-radius labels.
 *
 * Neighborhoods are taken over the undirected view of the multigraph.
 * Extraction of (u, r, v) with hop count k:
 *   1. S = (N_k(u) ∩ N_k(v)) ∪ {u, v} on the full graph;
 *   2. repeat until stable: distances to u and v are computed inside the
 *      subgraph induced by S (minus the target edge when it is dropped) and
 *      every non-target node farther than k from either target is removed;
 *   3. labels are the final in-subgraph distances, clamped to k + 1.
 * Isolated non-target nodes cannot survive step 2, since they are unreachable.
 */
#pragma once

#include <cstdint>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "snri/kg_store.hpp"

namespace snri {

/// Undirected BFS distances of every node within k hops (node itself at 0).
std::unordered_map<EntityId, int> k_hop_neighbors(const KGraph& g, EntityId node, int k);

struct SubgraphEdge {
  std::uint32_t head;
  RelationId relation;
  std::uint32_t tail;
  friend bool operator==(const SubgraphEdge&, const SubgraphEdge&) = default;
  friend auto operator<=>(const SubgraphEdge&, const SubgraphEdge&) = default;
};

struct Subgraph {
  /// Local -> global ids. Local 0 is the target head, local 1 the target tail,
  /// the rest ascend by global id.
  std::vector<EntityId> nodes;
  /// Sorted local edges.
  std::vector<SubgraphEdge> edges;
  RelationId target_relation = 0;
  int hops = 3;
  std::vector<int> dist_to_u;
  std::vector<int> dist_to_v;
  /// Relation tokens of each node in the full graph.
  std::vector<std::vector<std::uint32_t>> neighbor_rels;
  /// Set when head == tail; the subgraph is then two copies of that node.
  bool degenerate = false;

  static constexpr std::uint32_t kHead = 0;
  static constexpr std::uint32_t kTail = 1;
  std::size_t num_nodes() const noexcept { return nodes.size(); }

  friend bool operator==(const Subgraph&, const Subgraph&) = default;
};

struct ExtractOptions {
  int hops = 3;
  /// Remove every copy of the target edge (no label leakage). The target's
  /// own contribution is also removed from the two targets' relation tokens.
  bool drop_target_edge = true;
  /// 0 = no cap. Otherwise non-target nodes of the intersection are
  /// uniformly subsampled before pruning.
  std::size_t max_nodes = 0;
  std::uint64_t seed = 0;
};

Subgraph extract_enclosing(const KGraph& g, const Triple& target, const ExtractOptions& options = {});

/// one-hot(dist_to_u) ⊕ one-hot(dist_to_v), each of length hops + 2.
std::vector<double> double_radius_onehot(const Subgraph& sg, std::uint32_t local_node);

/// Text edge list with label annotations, for inspection.
void write_subgraph_dump(std::ostream& out, const Subgraph& sg, const Vocabulary* relation_names = nullptr,
                         const Vocabulary* entity_names = nullptr);

}  // namespace snri
