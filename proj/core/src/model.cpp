// SPDX-License-Identifier: Apache-2.0
#include "snri/model.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "snri/kv_config.hpp"

namespace snri {

std::string fusion_name(Fusion f) {
  switch (f) {
    case Fusion::kSubtract: return "subtract";
    case Fusion::kMultiply: return "multiply";
    case Fusion::kAdd: return "add";
  }
  return "subtract";
}

Fusion parse_fusion(const std::string& s) {
  if (s == "subtract") return Fusion::kSubtract;
  if (s == "multiply") return Fusion::kMultiply;
  if (s == "add") return Fusion::kAdd;
  throw Error(fmt::format("unknown fusion '{}' (subtract, multiply, add)", s));
}

namespace {

std::string layer_key(int layer, const char* name) { return fmt::format("layer{}.{}", layer, name); }

std::uint64_t triple_seed(std::uint64_t seed, const Triple& t) {
  return seed ^ (TripleHash{}(t) * 0xBF58476D1CE4E5B9ull);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string ModelConfig::to_text() const {
  std::string s;
  s += fmt::format("num_relations = {}\n", num_relations);
  s += fmt::format("dim = {}\n", dim);
  s += fmt::format("layers = {}\n", layers);
  s += fmt::format("hops = {}\n", hops);
  s += fmt::format("num_bases = {}\n", num_bases);
  s += fmt::format("basis_threshold = {}\n", basis_threshold);
  s += fmt::format("max_paths = {}\n", max_paths);
  s += fmt::format("dropout = {:.17g}\n", dropout);
  s += fmt::format("fusion = {}\n", fusion_name(fusion));
  s += fmt::format("node_gru = {}\n", node_gru == NodeGruOrder::kIndependent ? "independent" : "positional");
  s += fmt::format("use_nrf = {}\n", use_nrf);
  s += fmt::format("use_nrp = {}\n", use_nrp);
  s += fmt::format("seed = {}\n", seed);
  return s;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  auto kv = KeyValues::parse(text, "model config");
  ModelConfig c;
  c.num_relations = kv.get_uint("num_relations");
  c.dim = kv.get_uint("dim");
  c.layers = static_cast<int>(kv.get_int("layers"));
  c.hops = static_cast<int>(kv.get_int("hops"));
  c.num_bases = kv.get_uint("num_bases");
  c.basis_threshold = kv.get_uint("basis_threshold");
  c.max_paths = kv.get_uint("max_paths");
  c.dropout = kv.get_double("dropout");
  c.fusion = parse_fusion(kv.get_string("fusion"));
  const auto order = kv.get_string("node_gru");
  if (order == "independent") {
    c.node_gru = NodeGruOrder::kIndependent;
  } else if (order == "positional") {
    c.node_gru = NodeGruOrder::kPositional;
  } else {
    throw Error(fmt::format("unknown node_gru '{}'", order));
  }
  c.use_nrf = kv.get_bool("use_nrf");
  c.use_nrp = kv.get_bool("use_nrp");
  c.seed = kv.get_uint("seed");
  return c;
}

ParamStore init_params(const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.num_relations == 0) throw Error("model config: num_relations must be positive");
  if (cfg.dim == 0 || cfg.layers < 1 || cfg.hops < 1) throw Error("model config: dim, layers, hops must be positive");
  const std::size_t d = cfg.dim, T = cfg.num_tokens();
  ParamStore p;
  p.add("rel_emb", xavier_uniform(T, d, rng));
  p.add("w0", xavier_uniform(d + cfg.pos_dim(), d, rng));
  for (int k = 0; k < cfg.layers; ++k) {
    if (cfg.uses_bases()) {
      p.add(layer_key(k, "basis"), xavier_uniform(cfg.num_bases, d * d, rng, d, d));
      p.add(layer_key(k, "coef"), xavier_uniform(T, cfg.num_bases, rng));
    } else {
      p.add(layer_key(k, "w_r"), xavier_uniform(T, d * d, rng, d, d));
    }
    p.add(layer_key(k, "w_self"), xavier_uniform(d, d, rng));
    p.add(layer_key(k, "w_rel"), xavier_uniform(d, d, rng));
    p.add(layer_key(k, "w1"), xavier_uniform(4 * d, d, rng));
    p.add(layer_key(k, "b1"), Tensor::zeros(1, d));
    p.add(layer_key(k, "w2"), xavier_uniform(d, 1, rng));
    p.add(layer_key(k, "b2"), Tensor::zeros(1, 1));
  }
  init_gru(p, "node_gru", d, d, rng);
  init_gru(p, "path_gru", d, d, rng);
  p.add("w_s", xavier_uniform(5 * d, 1, rng));
  p.add("w_mi", xavier_uniform(2 * d, 2 * d, rng));
  return p;
}

void validate_params(const ModelConfig& cfg, const ParamStore& params) {
  std::mt19937_64 rng(0);
  const ParamStore expected = init_params(cfg, rng);
  for (const auto& [name, t] : expected) {
    if (!params.contains(name)) throw Error(fmt::format("parameters are missing '{}'", name));
    if (params.at(name).shape() != t.shape()) {
      throw Error(fmt::format("parameter '{}' has shape {}, config expects {}", name,
                              params.at(name).shape_str(), t.shape_str()));
    }
  }
  if (params.size() != expected.size()) {
    throw Error(fmt::format("parameter set has {} tensors, config expects {}", params.size(),
                            expected.size()));
  }
}

// ---------------------------------------------------------------------------
// Paths

std::vector<RelationPath> enumerate_paths(const std::vector<std::uint32_t>& rels_u,
                                          RelationId target_relation,
                                          const std::vector<std::uint32_t>& rels_v,
                                          std::size_t max_paths, std::uint64_t seed) {
  std::vector<RelationPath> paths;
  if (rels_u.empty() && rels_v.empty()) {
    paths.push_back({target_relation});
  } else if (rels_u.empty()) {
    for (auto rv : rels_v) paths.push_back({target_relation, rv});
  } else if (rels_v.empty()) {
    for (auto ru : rels_u) paths.push_back({ru, target_relation});
  } else {
    paths.reserve(rels_u.size() * rels_v.size());
    for (auto ru : rels_u) {
      for (auto rv : rels_v) paths.push_back({ru, target_relation, rv});
    }
  }
  std::sort(paths.begin(), paths.end());
  if (max_paths > 0 && paths.size() > max_paths) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(paths.size());
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates: first max_paths entries are a uniform sample
    for (std::size_t i = 0; i < max_paths; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(max_paths);
    std::sort(idx.begin(), idx.end());
    std::vector<RelationPath> kept;
    kept.reserve(max_paths);
    for (auto i : idx) kept.push_back(std::move(paths[i]));
    paths = std::move(kept);
  }
  return paths;
}

std::vector<RelationPath> enumerate_paths(const KGraph& g, const Triple& target, const PathOptions& options) {
  if (target.head >= g.num_entities() || target.tail >= g.num_entities()) {
    throw Error("enumerate_paths: target out of range");
  }
  auto rels = [&](EntityId node) {
    return options.exclude_target_edge ? neighboring_relations_without(g, node, target)
                                       : g.neighbor_relations(node);
  };
  return enumerate_paths(rels(target.head), target.relation, rels(target.tail), options.max_paths,
                         triple_seed(options.seed, target));
}

// ---------------------------------------------------------------------------
// Node features

NodeInit init_node_features(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                            RelationId target_relation) {
  using namespace ops;
  Tape& tape = bind.tape();
  const std::size_t n = sg.num_nodes(), d = cfg.dim;
  if (target_relation >= cfg.num_relations) {
    throw Error(fmt::format("target relation {} out of range ({} relations)", target_relation, cfg.num_relations));
  }
  NodeInit out;
  Var rel_emb = bind("rel_emb");

  std::vector<std::uint32_t> flat, owner;
  out.offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto tok : sg.neighbor_rels[i]) {
      if (tok >= cfg.num_tokens()) throw Error(fmt::format("relation token {} out of range", tok));
      flat.push_back(tok);
      owner.push_back(static_cast<std::uint32_t>(i));
    }
    out.offsets.push_back(flat.size());
  }

  if (cfg.use_nrf && !flat.empty()) {
    Var tokens = gather_rows(rel_emb, flat);
    Var target = gather_rows(rel_emb, {target_relation});
    Var logits = matmul(tokens, transpose(target));
    out.alpha = segment_softmax(logits, out.offsets);
    out.h_rel = index_add_rows(mul_col(tokens, out.alpha), owner, n);
  } else {
    out.h_rel = tape.constant(Tensor::zeros(n, d));
  }

  Tensor pos = Tensor::zeros(n, cfg.pos_dim());
  for (std::uint32_t i = 0; i < n; ++i) {
    auto onehot = double_radius_onehot(sg, i);
    if (onehot.size() != cfg.pos_dim()) {
      throw Error(fmt::format("subgraph hops {} do not match model hops {}", sg.hops, cfg.hops));
    }
    std::copy(onehot.begin(), onehot.end(), pos.row(i).begin());
  }
  const Var parts[] = {out.h_rel, tape.constant(std::move(pos))};
  out.h0 = matmul(concat_cols(parts), bind("w0"));
  return out;
}

// ---------------------------------------------------------------------------
// GNN layer

LayerOutput gnn_layer(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg, Var h_prev,
                      Var rel_prev, RelationId target_relation, int layer) {
  using namespace ops;
  const std::size_t n = sg.num_nodes(), d = cfg.dim;
  const auto R = static_cast<std::uint32_t>(cfg.num_relations);
  if (h_prev.rows() != n || h_prev.cols() != d) {
    throw Error(fmt::format("gnn_layer: node states {} do not match {} nodes x dim {}",
                            h_prev.value().shape_str(), n, d));
  }

  LayerOutput out;
  Var self = matmul(h_prev, bind(layer_key(layer, "w_self")));

  std::vector<std::uint32_t> recv, send, tok;
  recv.reserve(2 * sg.edges.size());
  for (const auto& e : sg.edges) {
    recv.push_back(e.head); send.push_back(e.tail); tok.push_back(e.relation);
    recv.push_back(e.tail); send.push_back(e.head); tok.push_back(e.relation + R);
  }

  if (recv.empty()) {
    out.h = self;
  } else {
    Var hi = gather_rows(h_prev, recv);
    Var hj = gather_rows(h_prev, send);
    Var er = gather_rows(rel_prev, tok);
    Var ert = gather_rows(rel_prev, std::vector<std::uint32_t>(recv.size(), target_relation));
    const Var att_in[] = {hi, hj, er, ert};
    Var c = sigmoid(add_row(matmul(concat_cols(att_in), bind(layer_key(layer, "w1"))),
                            bind(layer_key(layer, "b1"))));
    out.edge_alpha = sigmoid(add_row(matmul(c, bind(layer_key(layer, "w2"))),
                                     bind(layer_key(layer, "b2"))));
    Var fused;
    switch (cfg.fusion) {
      case Fusion::kSubtract: fused = sub(er, hj); break;
      case Fusion::kMultiply: fused = mul(er, hj); break;
      case Fusion::kAdd: fused = add(er, hj); break;
    }
    Var w_rel_all = cfg.uses_bases()
                        ? matmul(bind(layer_key(layer, "coef")), bind(layer_key(layer, "basis")))
                        : bind(layer_key(layer, "w_r"));
    Var msg = mul_col(relation_matmul(fused, w_rel_all, tok, d), out.edge_alpha);
    out.h = add(index_add_rows(msg, recv, n), self);
  }
  out.rel = matmul(rel_prev, bind(layer_key(layer, "w_rel")));
  return out;
}

// ---------------------------------------------------------------------------
// Paths

PathEncoding encode_paths(ParamBinder& bind, const ModelConfig& cfg,
                          std::span<const RelationPath> paths, RelationId target_relation) {
  using namespace ops;
  Tape& tape = bind.tape();
  const std::size_t d = cfg.dim;
  PathEncoding out;
  if (paths.empty()) {
    out.p_graph = tape.constant(Tensor::zeros(1, d));
    return out;
  }
  Var rel_emb = bind("rel_emb");
  GruWeights w = bind_gru(bind, "path_gru");

  std::size_t max_len = 0;
  for (const auto& p : paths) {
    if (p.empty()) throw Error("encode_paths: empty path");
    max_len = std::max(max_len, p.size());
  }
  // Batch the GRU over paths of equal length.
  std::vector<Var> group_out;
  std::vector<std::uint32_t> order;  // path index of each row in the concatenation
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::uint32_t> members;
    for (std::uint32_t i = 0; i < paths.size(); ++i) {
      if (paths[i].size() == len) members.push_back(i);
    }
    if (members.empty()) continue;
    Var h = tape.constant(Tensor::zeros(members.size(), d));
    for (std::size_t t = 0; t < len; ++t) {
      std::vector<std::uint32_t> toks;
      for (auto m : members) {
        if (paths[m][t] >= cfg.num_tokens()) throw Error(fmt::format("path token {} out of range", paths[m][t]));
        toks.push_back(paths[m][t]);
      }
      h = gru_cell(gather_rows(rel_emb, toks), h, w);
    }
    group_out.push_back(h);
    order.insert(order.end(), members.begin(), members.end());
  }
  Var stacked = group_out.size() == 1 ? group_out[0] : concat_rows(group_out);
  std::vector<std::uint32_t> inverse(order.size());
  for (std::uint32_t row = 0; row < order.size(); ++row) inverse[order[row]] = row;
  Var reps = gather_rows(stacked, inverse);

  Var target = gather_rows(rel_emb, {target_relation});
  out.beta = softmax(matmul(reps, transpose(target)));
  out.p_graph = matmul(transpose(out.beta), reps);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

Var node_gru(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg, Var h) {
  using namespace ops;
  Tape& tape = bind.tape();
  GruWeights w = bind_gru(bind, "node_gru");
  const std::size_t n = sg.num_nodes(), d = cfg.dim;
  if (cfg.node_gru == NodeGruOrder::kIndependent) {
    return gru_cell(h, tape.constant(Tensor::zeros(n, d)), w);
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return std::pair(sg.dist_to_u[a], sg.dist_to_v[a]) < std::pair(sg.dist_to_u[b], sg.dist_to_v[b]);
  });
  std::vector<Var> states;
  Var state = tape.constant(Tensor::zeros(1, d));
  for (auto idx : order) {
    state = gru_cell(gather_rows(h, {idx}), state, w);
    states.push_back(state);
  }
  std::vector<std::uint32_t> inverse(n);
  for (std::uint32_t row = 0; row < n; ++row) inverse[order[row]] = row;
  return gather_rows(concat_rows(states), inverse);
}

}  // namespace

EncodedSubgraph encode_from_features(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                                     Var h0, std::span<const RelationPath> paths, bool train,
                                     std::mt19937_64* rng) {
  using namespace ops;
  const RelationId rt = sg.target_relation;
  Var h = h0;
  Var rel = bind("rel_emb");
  for (int k = 0; k < cfg.layers; ++k) {
    LayerOutput lo = gnn_layer(bind, cfg, sg, h, rel, rt, k);
    h = lo.h;
    rel = lo.rel;
    if (train && cfg.dropout > 0.0 && k + 1 < cfg.layers) {
      if (!rng) throw Error("encode: training with dropout needs an rng");
      h = dropout(h, cfg.dropout, *rng);
    }
  }
  EncodedSubgraph enc;
  enc.node_states = node_gru(bind, cfg, sg, h);
  enc.rel_states = rel;
  enc.h_graph = mean_rows(enc.node_states);
  if (cfg.use_nrp && !paths.empty()) {
    PathEncoding pe = encode_paths(bind, cfg, paths, rt);
    enc.p_graph = pe.p_graph;
    enc.path_beta = pe.beta;
  } else {
    enc.p_graph = bind.tape().constant(Tensor::zeros(1, cfg.dim));
  }
  const Var parts[] = {enc.h_graph, enc.p_graph};
  enc.s_graph = concat_cols(parts);
  return enc;
}

EncodedSubgraph encode_subgraph(ParamBinder& bind, const ModelConfig& cfg, const Subgraph& sg,
                                std::span<const RelationPath> paths, bool train,
                                std::mt19937_64* rng) {
  NodeInit init = init_node_features(bind, cfg, sg, sg.target_relation);
  return encode_from_features(bind, cfg, sg, init.h0, paths, train, rng);
}

Var score_triple(ParamBinder& bind, const EncodedSubgraph& enc, RelationId target_relation) {
  using namespace ops;
  const Var parts[] = {gather_rows(enc.node_states, {Subgraph::kHead}),
                       gather_rows(enc.node_states, {Subgraph::kTail}),
                       gather_rows(enc.rel_states, {target_relation}), enc.s_graph};
  return matmul(concat_cols(parts), bind("w_s"));
}

// ---------------------------------------------------------------------------
// Losses

Var supervised_loss(std::span<const Var> pos_scores, std::span<const Var> neg_scores, double margin) {
  using namespace ops;
  if (pos_scores.size() != neg_scores.size()) {
    throw Error(fmt::format("supervised_loss: {} positive vs {} negative scores", pos_scores.size(),
                            neg_scores.size()));
  }
  if (pos_scores.empty()) throw Error("supervised_loss: no scores");
  Var pos = concat_rows(pos_scores);
  Var neg = concat_rows(neg_scores);
  return sum(relu(affine(sub(neg, pos), 1.0, margin)));
}

std::vector<std::uint32_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Var corrupt_features(Var x, std::mt19937_64& rng) {
  return ops::gather_rows(x, random_permutation(x.rows(), rng));
}

Var discriminator(ParamBinder& bind, Var reps, Var global_summary) {
  using namespace ops;
  return sigmoid(matmul(reps, matmul(bind("w_mi"), transpose(global_summary))));
}

Var mi_loss(ParamBinder& bind, std::span<const Var> pos_reps, std::span<const Var> neg_reps) {
  using namespace ops;
  if (pos_reps.empty()) throw Error("mi_loss: no positive representations");
  Var pos = concat_rows(pos_reps);
  Var global = mean_rows(pos);
  Var wg = matmul(bind("w_mi"), transpose(global));
  Var total = sum(log_sigmoid(matmul(pos, wg)));
  if (!neg_reps.empty()) {
    Var neg = concat_rows(neg_reps);
    total = add(total, sum(log_sigmoid(affine(matmul(neg, wg), -1.0))));
  }
  const double count = static_cast<double>(pos_reps.size() + neg_reps.size());
  return affine(total, -1.0 / count);
}

// ---------------------------------------------------------------------------
// SnriModel

SampleInput prepare_sample(const KGraph& g, const Triple& t, const ModelConfig& cfg,
                           bool drop_target_edge, std::size_t max_nodes) {
  SampleInput s;
  s.triple = t;
  ExtractOptions eo;
  eo.hops = cfg.hops;
  eo.drop_target_edge = drop_target_edge;
  eo.max_nodes = max_nodes;
  eo.seed = cfg.seed;
  s.subgraph = extract_enclosing(g, t, eo);
  if (cfg.use_nrp) {
    s.paths = enumerate_paths(s.subgraph.neighbor_rels[Subgraph::kHead], t.relation,
                              s.subgraph.neighbor_rels[Subgraph::kTail], cfg.max_paths,
                              triple_seed(cfg.seed, t));
  }
  return s;
}

SnriModel::SnriModel(ModelConfig cfg, ParamStore params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  validate_params(cfg_, params_);
}

SnriModel SnriModel::initialize(const ModelConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return SnriModel(cfg, init_params(cfg, rng));
}

double SnriModel::score(const SampleInput& sample) const { return summarize(sample).score; }

SnriModel::Summary SnriModel::summarize(const SampleInput& sample) const {
  Tape tape;
  ParamBinder bind(tape, params_);
  EncodedSubgraph enc = encode_subgraph(bind, cfg_, sample.subgraph, sample.paths, false, nullptr);
  Summary s;
  s.h_graph = enc.h_graph.value();
  s.p_graph = enc.p_graph.value();
  s.s_graph = enc.s_graph.value();
  if (enc.path_beta.valid()) s.path_beta = enc.path_beta.value();
  s.score = score_triple(bind, enc, sample.triple.relation).value().item();
  return s;
}

}  // namespace snri
