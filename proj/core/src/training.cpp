// SPDX-License-Identifier: Apache-2.0
#include "snri/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "snri/binary_io.hpp"
#include "snri/checkpoint.hpp"
#include "snri/evaluation.hpp"
#include "snri/log.hpp"

namespace snri {

// ---------------------------------------------------------------------------
// Config

namespace {

const std::set<std::string> kKnownKeys = {
    "lr",        "dropout",    "dim",       "margin",    "lambda",      "epochs",
    "hops",      "layers",     "batch_size", "seed",     "flags",       "no_nrf",
    "no_nrp",    "no_mi",      "clip_norm", "num_bases", "max_paths",   "max_nodes",
    "workers",   "merge_valid", "cache_subgraphs", "fusion", "node_gru", "dataset_dir",
    "out_dir"};

}  // namespace

TrainConfig TrainConfig::from_kv(const KeyValues& kv, TrainConfig c) {
  for (const auto& [key, value] : kv.values()) {
    if (!kKnownKeys.count(key)) throw Error(fmt::format("unknown config key '{}'", key));
  }
  if (kv.has("lr")) c.lr = kv.get_double("lr");
  if (kv.has("dropout")) c.dropout = kv.get_double("dropout");
  if (kv.has("dim")) c.dim = kv.get_uint("dim");
  if (kv.has("margin")) c.margin = kv.get_double("margin");
  if (kv.has("lambda")) c.lambda = kv.get_double("lambda");
  if (kv.has("epochs")) c.epochs = static_cast<int>(kv.get_int("epochs"));
  if (kv.has("hops")) c.hops = static_cast<int>(kv.get_int("hops"));
  if (kv.has("layers")) c.layers = static_cast<int>(kv.get_int("layers"));
  if (kv.has("batch_size")) c.batch_size = kv.get_uint("batch_size");
  if (kv.has("seed")) c.seed = kv.get_uint("seed");
  if (kv.has("flags")) c.set_flags(kv.get_string("flags"));
  if (kv.has("no_nrf")) c.no_nrf = kv.get_bool("no_nrf");
  if (kv.has("no_nrp")) c.no_nrp = kv.get_bool("no_nrp");
  if (kv.has("no_mi")) c.no_mi = kv.get_bool("no_mi");
  if (kv.has("clip_norm")) c.clip_norm = kv.get_double("clip_norm");
  if (kv.has("num_bases")) c.num_bases = kv.get_uint("num_bases");
  if (kv.has("max_paths")) c.max_paths = kv.get_uint("max_paths");
  if (kv.has("max_nodes")) c.max_nodes = kv.get_uint("max_nodes");
  if (kv.has("workers")) c.workers = kv.get_uint("workers");
  if (kv.has("merge_valid")) c.merge_valid = kv.get_bool("merge_valid");
  if (kv.has("cache_subgraphs")) c.cache_subgraphs = kv.get_bool("cache_subgraphs");
  if (kv.has("fusion")) c.fusion = parse_fusion(kv.get_string("fusion"));
  if (kv.has("node_gru")) {
    const auto s = kv.get_string("node_gru");
    if (s == "independent") {
      c.node_gru = NodeGruOrder::kIndependent;
    } else if (s == "positional") {
      c.node_gru = NodeGruOrder::kPositional;
    } else {
      throw Error(fmt::format("unknown node_gru '{}' (independent, positional)", s));
    }
  }
  if (kv.has("dataset_dir")) c.dataset_dir = kv.get_string("dataset_dir");
  if (kv.has("out_dir")) c.out_dir = kv.get_string("out_dir");
  return c;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) { return from_kv(kv, TrainConfig{}); }

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("lr", fmt::format("{:.17g}", lr));
  kv.set("dropout", fmt::format("{:.17g}", dropout));
  kv.set("dim", std::to_string(dim));
  kv.set("margin", fmt::format("{:.17g}", margin));
  kv.set("lambda", fmt::format("{:.17g}", lambda));
  kv.set("epochs", std::to_string(epochs));
  kv.set("hops", std::to_string(hops));
  kv.set("layers", std::to_string(layers));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  kv.set("flags", flags_string());
  kv.set("clip_norm", fmt::format("{:.17g}", clip_norm));
  kv.set("num_bases", std::to_string(num_bases));
  kv.set("max_paths", std::to_string(max_paths));
  kv.set("max_nodes", std::to_string(max_nodes));
  kv.set("workers", std::to_string(workers));
  kv.set("merge_valid", merge_valid ? "true" : "false");
  kv.set("cache_subgraphs", cache_subgraphs ? "true" : "false");
  kv.set("fusion", fusion_name(fusion));
  kv.set("node_gru", node_gru == NodeGruOrder::kIndependent ? "independent" : "positional");
  if (!dataset_dir.empty()) kv.set("dataset_dir", dataset_dir.string());
  if (!out_dir.empty()) kv.set("out_dir", out_dir.string());
  return kv;
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(fmt::format("invalid training config: {}", what));
  };
  need(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  need(dim > 0, "dim must be positive");
  need(margin > 0.0, "margin must be positive");
  need(lambda >= 0.0 && std::isfinite(lambda), "lambda must be non-negative");
  need(epochs > 0, "epochs must be positive");
  need(hops > 0, "hops must be positive");
  need(layers > 0, "layers must be positive");
  need(batch_size > 0, "batch_size must be positive");
  need(clip_norm > 0.0, "clip_norm must be positive");
  need(num_bases > 0, "num_bases must be positive");
  need(max_paths > 0, "max_paths must be positive");
  need(workers > 0, "workers must be positive");
}

void TrainConfig::set_flags(const std::string& csv) {
  no_nrf = no_nrp = no_mi = false;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }),
               item.end());
    if (item.empty() || item == "none") continue;
    if (item == "no_nrf") {
      no_nrf = true;
    } else if (item == "no_nrp") {
      no_nrp = true;
    } else if (item == "no_mi") {
      no_mi = true;
    } else {
      throw Error(fmt::format("unknown ablation flag '{}' (no_nrf, no_nrp, no_mi)", item));
    }
  }
}

std::string TrainConfig::flags_string() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(no_nrf, "no_nrf");
  add(no_nrp, "no_nrp");
  add(no_mi, "no_mi");
  return s.empty() ? "none" : s;
}

Assembly base_assembly(const TrainConfig& config, std::size_t num_relations) {
  Assembly a;
  a.model.num_relations = num_relations;
  a.model.dim = config.dim;
  a.model.layers = config.layers;
  a.model.hops = config.hops;
  a.model.num_bases = config.num_bases;
  a.model.max_paths = config.max_paths;
  a.model.dropout = config.dropout;
  a.model.fusion = config.fusion;
  a.model.node_gru = config.node_gru;
  a.model.seed = config.seed;
  a.lambda = config.lambda;
  return a;
}

Assembly apply_ablation(const TrainConfig& config, Assembly a) {
  if (config.no_nrf) a.model.use_nrf = false;
  if (config.no_nrp) a.model.use_nrp = false;
  if (config.no_mi) a.lambda = 0.0;
  return a;
}

// ---------------------------------------------------------------------------
// Losses

BatchLosses batch_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const TrainPair> batch,
                       double margin, double lambda, std::mt19937_64& rng) {
  using namespace ops;
  if (batch.empty()) throw Error("batch_loss: empty batch");
  Tape tape;
  ParamBinder bind(tape, params);
  std::vector<Var> pos_scores, neg_scores, pos_reps, cor_reps;
  for (const TrainPair& p : batch) {
    const Subgraph& sg = p.pos.subgraph;
    const RelationId rt = p.pos.triple.relation;
    NodeInit init = init_node_features(bind, cfg, sg, rt);
    EncodedSubgraph enc = encode_from_features(bind, cfg, sg, init.h0, p.pos.paths, true, &rng);
    pos_scores.push_back(score_triple(bind, enc, rt));
    EncodedSubgraph neg = encode_subgraph(bind, cfg, p.neg.subgraph, p.neg.paths, true, &rng);
    neg_scores.push_back(score_triple(bind, neg, p.neg.triple.relation));
    if (lambda > 0.0) {
      pos_reps.push_back(enc.s_graph);
      EncodedSubgraph cor =
          encode_from_features(bind, cfg, sg, corrupt_features(init.h0, rng), p.pos.paths, true, &rng);
      cor_reps.push_back(cor.s_graph);
    }
  }
  Var sup = supervised_loss(pos_scores, neg_scores, margin);
  Var total = sup;
  BatchLosses out;
  if (lambda > 0.0) {
    Var mi = mi_loss(bind, pos_reps, cor_reps);
    total = add(sup, affine(mi, lambda));
    out.mi = mi.value().item();
  }
  out.sup = sup.value().item();
  out.total = total.value().item();
  out.grads = tape.backward(total);
  return out;
}

DiscriminatorGap discriminator_gap(const SnriModel& model, std::span<const SampleInput> samples,
                                   std::uint64_t seed) {
  if (samples.empty()) throw Error("discriminator_gap: no samples");
  const ModelConfig& cfg = model.config();
  const std::size_t width = 2 * cfg.dim;
  Tensor pos(std::vector<std::size_t>{samples.size(), width}, 0.0);
  Tensor cor(std::vector<std::size_t>{samples.size(), width}, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleInput& s = samples[i];
    Tape tape;
    ParamBinder bind(tape, model.params());
    std::mt19937_64 rng(seed + i);
    NodeInit init = init_node_features(bind, cfg, s.subgraph, s.triple.relation);
    EncodedSubgraph enc = encode_from_features(bind, cfg, s.subgraph, init.h0, s.paths, false, nullptr);
    EncodedSubgraph bad = encode_from_features(bind, cfg, s.subgraph, corrupt_features(init.h0, rng),
                                               s.paths, false, nullptr);
    for (std::size_t j = 0; j < width; ++j) {
      pos(i, j) = enc.s_graph.value()[j];
      cor(i, j) = bad.s_graph.value()[j];
    }
  }
  Tape tape;
  ParamBinder bind(tape, model.params());
  Var p = tape.constant(pos);
  Var g = ops::mean_rows(p);
  const Tensor dp = discriminator(bind, p, g).value();
  const Tensor dc = discriminator(bind, tape.constant(cor), g).value();
  DiscriminatorGap gap;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    gap.positive += dp[i];
    gap.corrupted += dc[i];
  }
  gap.positive /= static_cast<double>(samples.size());
  gap.corrupted /= static_cast<double>(samples.size());
  return gap;
}

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"L_sup", r.l_sup},
                   {"L_MI", r.l_mi},
                   {"valid_auc_pr", r.valid_auc_pr},
                   {"batches", r.batches},
                   {"seconds", r.seconds}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// Pairs

std::vector<TrainPair> build_pairs(const KGraph& graph, std::span<const Triple> triples, const ModelConfig& cfg,
                                   std::uint64_t seed, std::size_t max_nodes, std::size_t workers,
                                   const TripleSet* known) {
  std::vector<TrainPair> pairs(triples.size());
  parallel_for(triples.size(), workers, [&](std::size_t i) {
    std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ull + i);
    const Triple& t = triples[i];
    pairs[i].pos = prepare_sample(graph, t, cfg, true, max_nodes);
    pairs[i].neg = prepare_sample(graph, negative_sample(t, graph, rng, known), cfg, true, max_nodes);
  });
  return pairs;
}

double pairs_auc_pr(const SnriModel& model, std::span<const TrainPair> pairs, std::size_t workers) {
  std::vector<double> pos(pairs.size()), neg(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    pos[i] = model.score(pairs[i].pos);
    neg[i] = model.score(pairs[i].neg);
  });
  return auc_pr(pos, neg);
}

namespace {

constexpr char kPairsMagic[8] = {'S', 'N', 'R', 'I', 'P', 'A', 'I', 'R'};
constexpr std::uint32_t kPairsVersion = 1;

template <typename T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
  io::write_le<std::uint64_t>(out, v.size());
  for (const T& x : v) io::write_le<T>(out, x);
}

template <typename T>
std::vector<T> read_vec(std::istream& in) {
  const auto n = io::read_le<std::uint64_t>(in);
  if (n > (1ull << 32)) throw Error("sample cache: vector length out of range");
  std::vector<T> v(n);
  for (T& x : v) x = io::read_le<T>(in);
  return v;
}

void write_sample(std::ostream& out, const SampleInput& s) {
  io::write_le(out, s.triple.head);
  io::write_le(out, s.triple.relation);
  io::write_le(out, s.triple.tail);
  const Subgraph& g = s.subgraph;
  write_vec(out, g.nodes);
  io::write_le<std::uint64_t>(out, g.edges.size());
  for (const auto& e : g.edges) {
    io::write_le(out, e.head);
    io::write_le(out, e.relation);
    io::write_le(out, e.tail);
  }
  io::write_le(out, g.target_relation);
  io::write_le<std::int32_t>(out, g.hops);
  write_vec(out, g.dist_to_u);
  write_vec(out, g.dist_to_v);
  io::write_le<std::uint64_t>(out, g.neighbor_rels.size());
  for (const auto& r : g.neighbor_rels) write_vec(out, r);
  io::write_le<std::uint8_t>(out, g.degenerate ? 1 : 0);
  io::write_le<std::uint64_t>(out, s.paths.size());
  for (const auto& p : s.paths) write_vec(out, p);
}

SampleInput read_sample(std::istream& in) {
  SampleInput s;
  s.triple.head = io::read_le<EntityId>(in);
  s.triple.relation = io::read_le<RelationId>(in);
  s.triple.tail = io::read_le<EntityId>(in);
  Subgraph& g = s.subgraph;
  g.nodes = read_vec<EntityId>(in);
  const auto ne = io::read_le<std::uint64_t>(in);
  if (ne > (1ull << 32)) throw Error("sample cache: edge count out of range");
  g.edges.resize(ne);
  for (auto& e : g.edges) {
    e.head = io::read_le<std::uint32_t>(in);
    e.relation = io::read_le<RelationId>(in);
    e.tail = io::read_le<std::uint32_t>(in);
  }
  g.target_relation = io::read_le<RelationId>(in);
  g.hops = io::read_le<std::int32_t>(in);
  g.dist_to_u = read_vec<int>(in);
  g.dist_to_v = read_vec<int>(in);
  const auto nr = io::read_le<std::uint64_t>(in);
  if (nr != g.nodes.size()) throw Error("sample cache: relation lists do not match nodes");
  g.neighbor_rels.resize(nr);
  for (auto& r : g.neighbor_rels) r = read_vec<std::uint32_t>(in);
  g.degenerate = io::read_le<std::uint8_t>(in) != 0;
  const auto np = io::read_le<std::uint64_t>(in);
  if (np > (1ull << 32)) throw Error("sample cache: path count out of range");
  s.paths.resize(np);
  for (auto& p : s.paths) p = read_vec<std::uint32_t>(in);
  return s;
}

}  // namespace

void save_pairs(const std::filesystem::path& path, std::span<const TrainPair> pairs, std::uint64_t key) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write sample cache '{}'", path.string()));
    out.write(kPairsMagic, sizeof kPairsMagic);
    io::write_le(out, kPairsVersion);
    io::write_le(out, key);
    io::write_le<std::uint64_t>(out, pairs.size());
    for (const auto& p : pairs) {
      write_sample(out, p.pos);
      write_sample(out, p.neg);
    }
    if (!out) throw Error(fmt::format("failed writing sample cache '{}'", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::optional<std::vector<TrainPair>> load_pairs(const std::filesystem::path& path, std::uint64_t key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kPairsMagic)) return std::nullopt;
  try {
    if (io::read_le<std::uint32_t>(in) != kPairsVersion) return std::nullopt;
    if (io::read_le<std::uint64_t>(in) != key) return std::nullopt;
    const auto n = io::read_le<std::uint64_t>(in);
    if (n > (1ull << 32)) return std::nullopt;
    std::vector<TrainPair> pairs(n);
    for (auto& p : pairs) {
      p.pos = read_sample(in);
      p.neg = read_sample(in);
    }
    return pairs;
  } catch (const Error&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Loop

namespace {

std::vector<TrainPair> cached_pairs(const TrainConfig& config, const std::string& tag, const KGraph& graph,
                                    std::span<const Triple> triples, const ModelConfig& cfg, std::uint64_t seed,
                                    const TripleSet* known) {
  const bool use_cache = config.cache_subgraphs && !config.out_dir.empty();
  std::filesystem::path path;
  std::uint64_t key = 0;
  if (use_cache) {
    std::string id = fmt::format("{}|{}|hops={}|nrp={}|max_nodes={}|max_paths={}|seed={}|n={}",
                                 config.dataset_dir.empty() ? "" : std::filesystem::absolute(config.dataset_dir).string(),
                                 tag, cfg.hops,
                                 cfg.use_nrp, config.max_nodes, cfg.max_paths, seed, triples.size());
    for (const auto& t : triples) id += fmt::format(";{},{},{}", t.head, t.relation, t.tail);
    key = fnv1a64(id);
    path = config.out_dir / "cache" / fmt::format("{}-{:016x}.bin", tag, key);
    if (auto loaded = load_pairs(path, key)) {
      log::info(fmt::format("loaded {} {} pairs from {}", loaded->size(), tag, path.string()));
      return std::move(*loaded);
    }
  }
  auto pairs = build_pairs(graph, triples, cfg, seed, config.max_nodes, config.workers, known);
  if (use_cache) {
    std::filesystem::create_directories(path.parent_path());
    save_pairs(path, pairs, key);
  }
  return pairs;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetSplit& data, const EpochCallback& on_epoch) {
  config.validate();
  if (data.valid.empty()) throw Error("training needs at least one validation triple");
  const Assembly a = apply_ablation(config, base_assembly(config, data.relations.size()));
  SnriModel model = SnriModel::initialize(a.model);

  TripleSet known(data.train.begin(), data.train.end());
  known.insert(data.valid.begin(), data.valid.end());
  auto pairs = cached_pairs(config, "train", data.train_graph, data.train, a.model, config.seed, &known);
  const auto valid_pairs =
      cached_pairs(config, "valid", data.train_graph, data.valid, a.model, config.seed + 0x5EED, &known);

  std::ofstream metrics;
  TrainResult result;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::string conf;
    const KeyValues kv = config.to_kv();
    for (const auto& [k, v] : kv.values()) conf += fmt::format("{} = {}\n", k, v);
    write_text(config.out_dir / "train.conf", conf);
    metrics.open(config.out_dir / "metrics.jsonl");
    if (!metrics) throw Error(fmt::format("cannot write '{}'", (config.out_dir / "metrics.jsonl").string()));
    result.checkpoint = config.out_dir / "checkpoint.bin";
  }

  AdamState adam;
  adam.lr = config.lr;
  bool have_best = false;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
    std::shuffle(pairs.begin(), pairs.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double sup = 0.0, mi = 0.0;
    for (std::size_t lo = 0; lo < pairs.size() || (lo == 0 && pairs.empty()); lo += config.batch_size) {
      const std::size_t hi = std::min(pairs.size(), lo + config.batch_size);
      if (hi <= lo) {
        log::warn(fmt::format("epoch {}: empty batch skipped", epoch));
        break;
      }
      const std::span<const TrainPair> batch(pairs.data() + lo, hi - lo);
      BatchLosses losses;
      try {
        losses = batch_loss(a.model, model.params(), batch, config.margin, a.lambda, rng);
      } catch (const Error& e) {
        throw Error(fmt::format("training aborted at epoch {} batch {}: {}", epoch, rec.batches + 1, e.what()));
      }
      if (!std::isfinite(losses.total)) {
        throw Error(fmt::format("training aborted at epoch {} batch {}: non-finite loss (L_sup={}, L_MI={})", epoch,
                                rec.batches + 1, losses.sup, losses.mi));
      }
      clip_grad_norm(losses.grads, config.clip_norm);
      adam_step(model.params(), losses.grads, adam);
      sup += losses.sup;
      mi += losses.mi;
      ++rec.batches;
    }
    if (rec.batches) {
      rec.l_sup = sup / static_cast<double>(rec.batches);
      rec.l_mi = mi / static_cast<double>(rec.batches);
    }
    rec.valid_auc_pr = pairs_auc_pr(model, valid_pairs, config.workers);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!have_best || rec.valid_auc_pr > result.best_valid_auc_pr) {
      have_best = true;
      result.best = model;
      result.best_epoch = epoch;
      result.best_valid_auc_pr = rec.valid_auc_pr;
      if (result.checkpoint) save_checkpoint(*result.checkpoint, Checkpoint{model.params(), adam, a.model.to_text()});
    }
    if (metrics.is_open()) metrics << to_jsonl(rec) << '\n' << std::flush;
    log::info(fmt::format("epoch {:>3}  L_sup {:.4f}  L_MI {:.4f}  valid AUC-PR {:.4f}  ({:.1f}s)", epoch, rec.l_sup,
                          rec.l_mi, rec.valid_auc_pr, rec.seconds));
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace snri
