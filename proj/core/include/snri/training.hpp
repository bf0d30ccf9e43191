// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Joint supervised + mutual-information training loop, ablation
 *         switches, validation and best-checkpoint selection.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "snri/adam.hpp"
#include "snri/kg_store.hpp"
#include "snri/kv_config.hpp"
#include "snri/model.hpp"

namespace snri {

struct TrainConfig {
  double lr = 1e-3;
  double dropout = 0.5;
  std::size_t dim = 32;
  double margin = 10.0;
  double lambda = 5.0;
  int epochs = 30;
  int hops = 3;
  int layers = 3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool no_nrf = false;
  bool no_nrp = false;
  bool no_mi = false;
  double clip_norm = 10.0;
  std::size_t num_bases = 4;
  std::size_t max_paths = 200;
  std::size_t max_nodes = 0;  ///< 0 = no cap on subgraph size
  std::size_t workers = 1;
  bool merge_valid = false;
  bool cache_subgraphs = true;
  Fusion fusion = Fusion::kSubtract;
  NodeGruOrder node_gru = NodeGruOrder::kIndependent;
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;

  /// Known keys only; unknown keys throw.
  static TrainConfig from_kv(const KeyValues& kv, TrainConfig base);
  static TrainConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
  /// Throws snri::Error on non-positive sizes, rates or epochs.
  void validate() const;
  /// Sets no_nrf / no_nrp / no_mi from a comma list ("" and "none" clear all).
  void set_flags(const std::string& csv);
  std::string flags_string() const;
};

/// Model assembly derived from a training config.
struct Assembly {
  ModelConfig model;
  double lambda = 0.0;
};

/// Base assembly from the config, before ablation.
Assembly base_assembly(const TrainConfig& config, std::size_t num_relations);
/// no_nrf drops the relational node feature, no_nrp zeroes the path summary,
/// no_mi sets lambda to 0. Shapes of every parameter are unchanged.
Assembly apply_ablation(const TrainConfig& config, Assembly assembly);

/// Positive sample and its paired negative.
struct TrainPair {
  SampleInput pos;
  SampleInput neg;
};

struct BatchLosses {
  double sup = 0.0;
  double mi = 0.0;
  double total = 0.0;
  GradientMap grads;
};

/// Forward and backward of L_sup + lambda L_MI over one batch in train mode.
/// The MI term is skipped entirely when lambda is 0.
BatchLosses batch_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const TrainPair> batch,
                       double margin, double lambda, std::mt19937_64& rng);

/// Mean discriminator output on positive and corrupted representations of
/// `samples`, with the summary taken as the mean positive representation.
struct DiscriminatorGap {
  double positive = 0.0;
  double corrupted = 0.0;
};
DiscriminatorGap discriminator_gap(const SnriModel& model, std::span<const SampleInput> samples,
                                   std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double l_sup = 0.0;
  double l_mi = 0.0;
  double valid_auc_pr = 0.0;
  std::size_t batches = 0;
  double seconds = 0.0;
};

std::string to_jsonl(const EpochRecord& r);

struct TrainResult {
  SnriModel best;
  int best_epoch = 0;
  double best_valid_auc_pr = 0.0;
  std::vector<EpochRecord> epochs;
  std::optional<std::filesystem::path> checkpoint;
};

/// Pairs for `triples` against `graph`: positives drop their own edge, each
/// negative corrupts head or tail (filtered), sampled with a per-triple seed.
std::vector<TrainPair> build_pairs(const KGraph& graph, std::span<const Triple> triples, const ModelConfig& cfg,
                                   std::uint64_t seed, std::size_t max_nodes, std::size_t workers,
                                   const TripleSet* known = nullptr);

/// AUC-PR of the model over prepared pairs.
double pairs_auc_pr(const SnriModel& model, std::span<const TrainPair> pairs, std::size_t workers = 1);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on data.train over data.train_graph and selects the best epoch by
/// validation AUC-PR. With out_dir set, writes checkpoint.bin, metrics.jsonl
/// and train.conf there. Throws on a non-finite loss.
TrainResult train(const TrainConfig& config, const DatasetSplit& data, const EpochCallback& on_epoch = {});

/// Sample cache for prepared pairs (docs/formats.md).
void save_pairs(const std::filesystem::path& path, std::span<const TrainPair> pairs, std::uint64_t key);
std::optional<std::vector<TrainPair>> load_pairs(const std::filesystem::path& path, std::uint64_t key);

}  // namespace snri
