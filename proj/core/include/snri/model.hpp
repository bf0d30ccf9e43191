// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  The SNRI scorer: neighboring-relational node features, attentive
 *         relational GNN, relational-path encoder, triple scorer, and the
 *         supervised and subgraph-graph mutual-information objectives.
 *
 * Conventions: node states and relation embeddings are row vectors, so every
 * linear map is `x * W` with W stored as (in x out). A graph over |R| relations
 * has 2|R| relation tokens (inverse direction = r + |R|), and message passing
 * runs along both directions of every subgraph edge: node i receives from j
 * under token r when (i, r, j) is an edge, and under r + |R| when (j, r, i) is.
 */
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "snri/autograd.hpp"
#include "snri/gru.hpp"
#include "snri/kg_store.hpp"
#include "snri/params.hpp"
#include "snri/subgraph.hpp"

namespace snri {

enum class Fusion { kSubtract, kMultiply, kAdd };
std::string fusion_name(Fusion f);
Fusion parse_fusion(const std::string& s);

enum class NodeGruOrder {
  /// One GRU step per node from a zero hidden state; order-free.
  kIndependent,
  /// A GRU sequence over nodes sorted by (dist_to_u, dist_to_v, local id).
  kPositional,
};

struct ModelConfig {
  std::size_t num_relations = 0;
  std::size_t dim = 32;
  int layers = 3;
  int hops = 3;
  /// Basis decomposition of the per-relation message matrices kicks in when
  /// num_relations exceeds basis_threshold.
  std::size_t num_bases = 4;
  std::size_t basis_threshold = 32;
  std::size_t max_paths = 200;
  double dropout = 0.5;
  Fusion fusion = Fusion::kSubtract;
  NodeGruOrder node_gru = NodeGruOrder::kIndependent;
  bool use_nrf = true;
  bool use_nrp = true;
  std::uint64_t seed = 0;

  std::size_t num_tokens() const { return 2 * num_relations; }
  std::size_t pos_dim() const { return 2 * static_cast<std::size_t>(hops + 2); }
  bool uses_bases() const { return num_relations > basis_threshold; }

  /// Canonical "key = value" text; stored in checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Xavier-initialised parameters for `cfg`.
ParamStore init_params(const ModelConfig& cfg, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Relational paths

using RelationPath = std::vector<std::uint32_t>;

/// All (r_u, r_t, r_v) with r_u in rels_u and r_v in rels_v, lexicographic.
/// An empty side drops out of the sequence: (r_t, r_v), (r_u, r_t) or (r_t).
/// When more than max_paths exist, a uniform sample seeded by `seed` is kept.
std::vector<RelationPath> enumerate_paths(const std::vector<std::uint32_t>& rels_u,
                                          RelationId target_relation,
                                          const std::vector<std::uint32_t>& rels_v,
                                          std::size_t max_paths, std::uint64_t seed);

struct PathOptions {
  /// Ignore the target edge itself when collecting the targets' relations.
  bool exclude_target_edge = true;
  std::size_t max_paths = 200;
  std::uint64_t seed = 0;
};

/// Paths across the target nodes built from the full graph's relation sets.
std::vector<RelationPath> enumerate_paths(const KGraph& g, const Triple& target,
                                          const PathOptions& options = {});

// ---------------------------------------------------------------------------
// Forward pieces

struct NodeInit {
  Var h0;     ///< n x d
  Var h_rel;  ///< n x d
  Var alpha;  ///< attention over each node's relation tokens (column); invalid when none
  std::vector<std::size_t> offsets;  ///< segment bounds of alpha per node
};

NodeInit init_node_features(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                            RelationId target_relation);

struct LayerOutput {
  Var h;           ///< n x d
  Var rel;         ///< 2|R| x d
  Var edge_alpha;  ///< per message arc (column); invalid when there are none
};

LayerOutput gnn_layer(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg, Var h_prev,
                      Var rel_prev, RelationId target_relation, int layer);

struct PathEncoding {
  Var p_graph;  ///< 1 x d
  Var beta;     ///< attention over paths (column)
};

PathEncoding encode_paths(ParamBinder& bind, const ModelConfig& cfg,
                          std::span<const RelationPath> paths, RelationId target_relation);

struct EncodedSubgraph {
  Var node_states;  ///< H^L after the node GRU, n x d
  Var rel_states;   ///< e^L for every token, 2|R| x d
  Var h_graph;      ///< mean readout, 1 x d
  Var p_graph;      ///< path summary, 1 x d (zeros without paths)
  Var s_graph;      ///< h_graph ⊕ p_graph, 1 x 2d
  Var path_beta;    ///< invalid when no paths were encoded
};

/// Runs layers, node GRU, readout and path encoder from given initial
/// features. `rng` is required when train is true and dropout > 0.
EncodedSubgraph encode_from_features(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                                     Var h0, std::span<const RelationPath> paths, bool train,
                                     std::mt19937_64* rng);

EncodedSubgraph encode_subgraph(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                                std::span<const RelationPath> paths, bool train,
                                std::mt19937_64* rng);

/// Linear scorer over h_u ⊕ h_v ⊕ e^L_rt ⊕ s_G (5d inputs), 1 x 1.
Var score_triple(ParamBinder& bind, const EncodedSubgraph& enc, RelationId target_relation);

/// Σ max(0, neg - pos + margin) over paired 1 x 1 scores.
Var supervised_loss(std::span<const Var> pos_scores, std::span<const Var> neg_scores, double margin);

/// Rows of x permuted by a seeded uniform permutation.
std::vector<std::uint32_t> random_permutation(std::size_t n, std::mt19937_64& rng);
Var corrupt_features(Var x, std::mt19937_64& rng);

/// Bilinear discriminator sigmoid(s W_MI g^T) for every row of reps, n x 1.
Var discriminator(ParamBinder& bind, Var reps, Var global_summary);

/// Jensen-Shannon MI loss against the batch summary (mean of positives).
Var mi_loss(ParamBinder& bind, std::span<const Var> pos_reps, std::span<const Var> neg_reps);

// ---------------------------------------------------------------------------
// Convenience

/// Subgraph plus paths for one triple.
struct SampleInput {
  Triple triple;
  Subgraph subgraph;
  std::vector<RelationPath> paths;
};

/// Path sampling is seeded by cfg.seed and the triple, so it is reproducible.
SampleInput prepare_sample(const KGraph& g, const Triple& t, const ModelConfig& cfg,
                           bool drop_target_edge, std::size_t max_nodes = 0);

class SnriModel {
 public:
  SnriModel() = default;
  SnriModel(ModelConfig cfg, ParamStore params);
  static SnriModel initialize(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  /// Eval-mode score of a prepared sample.
  double score(const SampleInput& sample) const;
  /// Eval-mode encoding values (h_G, p_G, s_G, path β) of a prepared sample.
  struct Summary {
    Tensor h_graph, p_graph, s_graph, path_beta;
    double score = 0.0;
  };
  Summary summarize(const SampleInput& sample) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

/// Throws unless `params` has every tensor `cfg` needs, with matching shapes.
void validate_params(const ModelConfig& cfg, const ParamStore& params);

}  // namespace snri
