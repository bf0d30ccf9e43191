// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kg_store.hpp
 * @brief  Knowledge-graph storage: vocabularies, triple files, the immutable
 *         directed multigraph, neighboring-relation sets and negative sampling.
 *
 * Relation tokens: an outgoing edge of relation r contributes token r to its
 * head; an incoming edge contributes r + |R| to its tail. A graph over |R|
 * relations therefore uses 2|R| tokens.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "snri/tensor.hpp"

namespace snri {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = t.head;
    h = h * 0x9E3779B97F4A7C15ull ^ t.relation;
    h = h * 0x9E3779B97F4A7C15ull ^ t.tail;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

/// String <-> dense id dictionary with first-seen ids.
class Vocabulary {
 public:
  /// Id of `name`, inserting it unless frozen. Frozen lookups of unknown
  /// names throw.
  std::uint32_t intern(const std::string& name);
  std::optional<std::uint32_t> find(const std::string& name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
  bool frozen_ = false;
};

struct AdjEdge {
  EntityId neighbor;
  RelationId relation;
};

class KGraph {
 public:
  KGraph() = default;
  /// Throws when a triple references an entity or relation out of range.
  KGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> triples);

  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  std::size_t num_tokens() const noexcept { return 2 * num_relations_; }
  const std::vector<Triple>& triples() const noexcept { return triples_; }

  const std::vector<AdjEdge>& out_edges(EntityId node) const { return out_adj_.at(node); }
  const std::vector<AdjEdge>& in_edges(EntityId node) const { return in_adj_.at(node); }
  std::size_t degree(EntityId node) const { return out_edges(node).size() + in_edges(node).size(); }

  /// Sorted relation tokens incident to `node` in this (full) graph.
  const std::vector<std::uint32_t>& neighbor_relations(EntityId node) const;

  bool contains(const Triple& t) const { return known_.count(t) != 0; }
  std::size_t count(const Triple& t) const;

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Triple> triples_;
  std::vector<std::vector<AdjEdge>> out_adj_;
  std::vector<std::vector<AdjEdge>> in_adj_;
  std::vector<std::vector<std::uint32_t>> neighbor_rels_;
  std::unordered_map<Triple, std::uint32_t, TripleHash> known_;
};

/// Free-function form of KGraph::neighbor_relations with range checking.
const std::vector<std::uint32_t>& neighboring_relations(const KGraph& g, EntityId node);

/// Tokens of `node` when every copy of `excluded` is removed from the graph.
std::vector<std::uint32_t> neighboring_relations_without(const KGraph& g, EntityId node,
                                                         const Triple& excluded);

struct GraphStats {
  std::size_t relations = 0;
  std::size_t nodes = 0;
  std::size_t triples = 0;
  friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

/// Distinct relations and entities appearing in triples, plus triple count.
GraphStats stats(const KGraph& g);

/// Reads "head<TAB>relation<TAB>tail" lines. Blank lines are skipped.
std::vector<Triple> load_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations);

/// Corrupts head or tail (fair coin) with a uniformly drawn different entity,
/// retrying up to 100 times while the candidate is a known positive of `g`
/// (or of `extra_known`) or a self-loop of a non-loop triple. Requires at
/// least two entities.
Triple negative_sample(const Triple& t, const KGraph& g, std::mt19937_64& rng,
                       const TripleSet* extra_known = nullptr);

struct DatasetSplit {
  std::string name;
  Vocabulary relations;
  Vocabulary train_entities;
  Vocabulary test_entities;
  KGraph train_graph;
  KGraph test_graph;
  std::vector<Triple> train;  ///< supervision triples (train.txt)
  std::vector<Triple> valid;  ///< ids in the train entity space
  std::vector<Triple> test;   ///< ids in the test entity space
};

struct DatasetOptions {
  /// Add valid.txt triples to the message-passing train graph.
  bool merge_valid_into_graph = false;
};

/// Directory of a dataset id inside data_dir. Accepts the on-disk name
/// directly (e.g. "WN18RR_v1", "fb237_v2") or lower-case aliases
/// ("wn18rr_v1", "fb15k237_v2").
std::filesystem::path resolve_dataset_dir(const std::filesystem::path& data_dir,
                                          const std::string& dataset_id);

/// Loads <dir>/{train,valid}.txt and <dir>_ind/{train,test}.txt.
DatasetSplit load_dataset(const std::filesystem::path& dataset_dir,
                          const DatasetOptions& options = {});

/// Table-2 style counts of one split directory: the union of whichever of
/// train.txt, valid.txt and test.txt it contains, under one fresh vocabulary.
GraphStats directory_stats(const std::filesystem::path& split_dir);

/// Binary graph cache (docs/formats.md).
void save_graph_cache(const std::filesystem::path& path, const KGraph& g,
                      const Vocabulary& entities, const Vocabulary& relations);
struct CachedGraph {
  KGraph graph;
  Vocabulary entities;
  Vocabulary relations;
};
CachedGraph load_graph_cache(const std::filesystem::path& path);

}  // namespace snri
