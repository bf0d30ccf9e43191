// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Ranking metrics, the link-prediction evaluation protocol, density
 *         buckets and relational-path importance tables.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "snri/kg_store.hpp"
#include "snri/model.hpp"

namespace snri {

/// Average precision: items sorted by (score desc, positives first) and
/// AP = Σ_k precision@k · Δrecall@k. Throws on empty input.
double auc_pr(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// 1 + #(neg > pos) + #(neg == pos); ties count against the positive.
std::size_t pessimistic_rank(double pos_score, std::span<const double> neg_scores);
bool hits_at_10(double pos_score, std::span<const double> neg_scores);

struct DensityBucket {
  std::size_t min_nodes = 0;
  std::optional<std::size_t> max_nodes;  ///< inclusive; none = unbounded
  std::size_t count = 0;
  std::size_t hits = 0;
  std::optional<double> hits_at_10;      ///< none for an empty bucket

  std::string label() const;
};

/// Buckets by subgraph node count. `upper_bounds` are inclusive upper edges of
/// all but the last bucket; {3, 10} gives ≤3, 4–10, >10.
std::vector<DensityBucket> density_buckets(std::span<const std::size_t> node_counts,
                                           std::span<const bool> hits,
                                           std::span<const std::size_t> upper_bounds);

struct PathImportanceRow {
  RelationId target_relation = 0;
  RelationPath path;
  double beta = 0.0;
};

/// Mean path attention over `triples` with the given target relation (a path
/// absent for a triple counts as 0), highest first, truncated to top_n.
std::vector<PathImportanceRow> path_importance(const SnriModel& model, const KGraph& graph,
                                               std::span<const Triple> triples,
                                               RelationId target_relation, std::size_t top_n);

/// "(a, b, c)" with inverse tokens written as "name^-1".
std::string format_path(const RelationPath& path, const Vocabulary& relations);

struct TripleRank {
  Triple triple;
  double score = 0.0;
  std::size_t rank = 0;
  std::size_t subgraph_nodes = 0;
};

struct EvalOptions {
  std::size_t num_candidates = 50;
  std::uint64_t seed = 0;
  std::vector<std::size_t> bucket_upper_bounds{3, 10};
  std::size_t workers = 1;
  std::size_t max_nodes = 0;
  bool with_ranking = true;
};

struct EvalReport {
  std::string dataset;
  std::size_t num_positives = 0;
  double auc_pr = 0.0;
  std::optional<double> hits_at_10;
  std::vector<std::size_t> bucket_upper_bounds;
  std::vector<DensityBucket> buckets;
  std::vector<PathImportanceRow> paths;
  std::vector<TripleRank> ranks;
};

/// AUC-PR against one sampled negative per positive and (with_ranking)
/// Hits@10 against num_candidates sampled negatives. Negatives corrupt head
/// or tail and are filtered against `graph` and the positives. Sampling is
/// seeded per triple, so results do not depend on `workers`.
EvalReport evaluate(const SnriModel& model, const KGraph& graph, std::span<const Triple> positives,
                    const EvalOptions& options);

/// Pretty-printed JSON document.
std::string to_json(const EvalReport& report, const Vocabulary* relations = nullptr);
void write_text_table(std::ostream& out, const EvalReport& report, const Vocabulary* relations = nullptr);
void write_ranks_csv(std::ostream& out, const EvalReport& report);

/// Runs fn(i) for i in [0, n) over `workers` threads (static interleaving).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace snri
