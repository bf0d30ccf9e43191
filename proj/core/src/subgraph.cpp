// SPDX-License-Identifier: Apache-2.0
#include "snri/subgraph.hpp"

#include <algorithm>
#include <deque>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "snri/log.hpp"

namespace snri {

std::unordered_map<EntityId, int> k_hop_neighbors(const KGraph& g, EntityId node, int k) {
  if (k < 1) throw Error(fmt::format("k_hop_neighbors: k must be >= 1, got {}", k));
  if (node >= g.num_entities()) throw Error(fmt::format("k_hop_neighbors: node {} out of range", node));
  std::unordered_map<EntityId, int> dist{{node, 0}};
  std::vector<EntityId> frontier{node};
  for (int d = 1; d <= k && !frontier.empty(); ++d) {
    std::vector<EntityId> next;
    for (EntityId x : frontier) {
      auto visit = [&](EntityId y) {
        if (dist.emplace(y, d).second) next.push_back(y);
      };
      for (const AdjEdge& e : g.out_edges(x)) visit(e.neighbor);
      for (const AdjEdge& e : g.in_edges(x)) visit(e.neighbor);
    }
    frontier = std::move(next);
  }
  return dist;
}

namespace {

struct Induced {
  std::vector<SubgraphEdge> edges;
  std::vector<std::vector<std::uint32_t>> adj;  // undirected, local ids
};

Induced induce(const KGraph& g, const std::vector<EntityId>& nodes, const Triple& target, bool drop_target) {
  std::unordered_map<EntityId, std::uint32_t> local;
  local.reserve(nodes.size() * 2);
  for (std::uint32_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], i);
  Induced out;
  out.adj.resize(nodes.size());
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    for (const AdjEdge& e : g.out_edges(nodes[i])) {
      auto it = local.find(e.neighbor);
      if (it == local.end()) continue;
      if (drop_target && nodes[i] == target.head && e.neighbor == target.tail &&
          e.relation == target.relation) {
        continue;
      }
      out.edges.push_back({i, e.relation, it->second});
      out.adj[i].push_back(it->second);
      out.adj[it->second].push_back(i);
    }
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

std::vector<int> bfs(const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t src) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<std::uint32_t> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    auto x = q.front();
    q.pop_front();
    for (auto y : adj[x]) {
      if (dist[y] < 0) {
        dist[y] = dist[x] + 1;
        q.push_back(y);
      }
    }
  }
  return dist;
}

int clamp_dist(int d, int k) { return (d < 0 || d > k) ? k + 1 : d; }

std::uint64_t mix(std::uint64_t seed, const Triple& t) {
  return seed ^ (TripleHash{}(t) * 0x9E3779B97F4A7C15ull);
}

}  // namespace

Subgraph extract_enclosing(const KGraph& g, const Triple& target, const ExtractOptions& options) {
  const int k = options.hops;
  if (k < 1) throw Error(fmt::format("extract_enclosing: hops must be >= 1, got {}", k));
  const EntityId u = target.head, v = target.tail;
  if (u >= g.num_entities() || v >= g.num_entities()) {
    throw Error(fmt::format("extract_enclosing: target ({}, {}, {}) out of range", u, target.relation, v));
  }

  Subgraph sg;
  sg.target_relation = target.relation;
  sg.hops = k;

  if (u == v) {
    log::warn(fmt::format("extract_enclosing: head == tail ({}), using degenerate two-node form", u));
    sg.degenerate = true;
    sg.nodes = {u, u};
    sg.dist_to_u = {0, k + 1};
    sg.dist_to_v = {k + 1, 0};
    auto rels = options.drop_target_edge ? neighboring_relations_without(g, u, target)
                                         : g.neighbor_relations(u);
    sg.neighbor_rels = {rels, rels};
    return sg;
  }

  const auto nu = k_hop_neighbors(g, u, k);
  const auto nv = k_hop_neighbors(g, v, k);
  std::vector<EntityId> others;
  const auto& smaller = nu.size() <= nv.size() ? nu : nv;
  const auto& larger = nu.size() <= nv.size() ? nv : nu;
  for (const auto& [x, _] : smaller) {
    if (x != u && x != v && larger.count(x)) others.push_back(x);
  }
  std::sort(others.begin(), others.end());

  if (options.max_nodes > 0 && others.size() + 2 > options.max_nodes) {
    const std::size_t keep = options.max_nodes > 2 ? options.max_nodes - 2 : 0;
    std::mt19937_64 rng(mix(options.seed, target));
    std::shuffle(others.begin(), others.end(), rng);
    others.resize(keep);
    std::sort(others.begin(), others.end());
  }

  std::vector<EntityId> nodes{u, v};
  nodes.insert(nodes.end(), others.begin(), others.end());

  Induced ind;
  std::vector<int> du, dv;
  while (true) {
    ind = induce(g, nodes, target, options.drop_target_edge);
    du = bfs(ind.adj, Subgraph::kHead);
    dv = bfs(ind.adj, Subgraph::kTail);
    std::vector<EntityId> kept{u, v};
    for (std::uint32_t i = 2; i < nodes.size(); ++i) {
      if (du[i] >= 0 && du[i] <= k && dv[i] >= 0 && dv[i] <= k) kept.push_back(nodes[i]);
    }
    if (kept.size() == nodes.size()) break;
    nodes = std::move(kept);
  }

  sg.nodes = std::move(nodes);
  sg.edges = std::move(ind.edges);
  sg.dist_to_u.resize(sg.nodes.size());
  sg.dist_to_v.resize(sg.nodes.size());
  sg.neighbor_rels.resize(sg.nodes.size());
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
    sg.dist_to_u[i] = clamp_dist(du[i], k);
    sg.dist_to_v[i] = clamp_dist(dv[i], k);
    if (options.drop_target_edge && i < 2) {
      sg.neighbor_rels[i] = neighboring_relations_without(g, sg.nodes[i], target);
    } else {
      sg.neighbor_rels[i] = g.neighbor_relations(sg.nodes[i]);
    }
  }
  return sg;
}

std::vector<double> double_radius_onehot(const Subgraph& sg, std::uint32_t local_node) {
  if (local_node >= sg.num_nodes()) {
    throw Error(fmt::format("double_radius_onehot: node {} not in subgraph of {} nodes", local_node,
                            sg.num_nodes()));
  }
  const int width = sg.hops + 2;
  std::vector<double> out(2 * static_cast<std::size_t>(width), 0.0);
  out[static_cast<std::size_t>(std::min(sg.dist_to_u[local_node], sg.hops + 1))] = 1.0;
  out[static_cast<std::size_t>(width + std::min(sg.dist_to_v[local_node], sg.hops + 1))] = 1.0;
  return out;
}

void write_subgraph_dump(std::ostream& out, const Subgraph& sg, const Vocabulary* relation_names,
                         const Vocabulary* entity_names) {
  auto ent = [&](std::uint32_t local) {
    const EntityId gid = sg.nodes[local];
    return entity_names && gid < entity_names->size() ? entity_names->name(gid) : std::to_string(gid);
  };
  auto rel = [&](RelationId r) {
    return relation_names && r < relation_names->size() ? relation_names->name(r) : std::to_string(r);
  };
  fmt::print(out, "# target\t{}\t{}\t{}\n", ent(Subgraph::kHead), rel(sg.target_relation),
             ent(Subgraph::kTail));
  fmt::print(out, "# hops\t{}\n# nodes\t{}\n", sg.hops, sg.num_nodes());
  for (std::uint32_t i = 0; i < sg.num_nodes(); ++i) {
    fmt::print(out, "node\t{}\t{}\tlabel=({},{})\trels={}\n", i, ent(i), sg.dist_to_u[i],
               sg.dist_to_v[i], sg.neighbor_rels[i].size());
  }
  for (const auto& e : sg.edges) {
    fmt::print(out, "edge\t{}\t{}\t{}\n", e.head, rel(e.relation), e.tail);
  }
}

}  // namespace snri
