// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "snri/model.hpp"
#include "snri/synthetic.hpp"
#include "snri/training.hpp"

namespace snri {
namespace {

using testing::random_tensor;

ModelConfig tiny(std::size_t relations = 2) {
  ModelConfig c;
  c.num_relations = relations;
  c.dim = 4;
  c.layers = 2;
  c.hops = 2;
  c.dropout = 0.0;
  c.seed = 1;
  return c;
}

ParamStore params_for(const ModelConfig& c, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  return init_params(c, rng);
}

Subgraph pair_subgraph(int hops, std::vector<std::uint32_t> rels_u, std::vector<std::uint32_t> rels_v,
                       RelationId rt = 0) {
  Subgraph sg;
  sg.hops = hops;
  sg.target_relation = rt;
  sg.nodes = {0, 1};
  sg.dist_to_u = {0, hops + 1};
  sg.dist_to_v = {hops + 1, 0};
  sg.neighbor_rels = {std::move(rels_u), std::move(rels_v)};
  return sg;
}

double dot_rows(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) s += a(ra, j) * b(rb, j);
  return s;
}

// row vector x (length din) times row `tok` of w reshaped din x dout
std::vector<double> apply_relation(const std::vector<double>& x, const Tensor& w, std::size_t tok, std::size_t dout) {
  std::vector<double> out(dout, 0.0);
  for (std::size_t a = 0; a < x.size(); ++a) {
    for (std::size_t c = 0; c < dout; ++c) out[c] += x[a] * w(tok, a * dout + c);
  }
  return out;
}

std::vector<double> row_times(std::span<const double> x, const Tensor& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t a = 0; a < x.size(); ++a) {
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += x[a] * w(a, c);
  }
  return out;
}

TEST(NodeFeatures, SingleRelationHasUnitWeight) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Tape tape;
  ParamBinder bind(tape, p);
  NodeInit ni = init_node_features(bind, c, pair_subgraph(2, {1}, {}), 0);
  ASSERT_EQ(ni.alpha.value().size(), 1u);
  EXPECT_EQ(ni.alpha.value()[0], 1.0);
  for (std::size_t j = 0; j < c.dim; ++j) {
    EXPECT_EQ(ni.h_rel.value()(0, j), p.at("rel_emb")(1, j));
    EXPECT_EQ(ni.h_rel.value()(1, j), 0.0);
  }
}

TEST(NodeFeatures, EqualDotProductsSplitEvenly) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Tensor& e = p.at("rel_emb");
  e.fill(0.0);
  e(0, 0) = 1.0;
  e(1, 0) = 0.5, e(1, 1) = 1.0;
  e(2, 0) = 0.5, e(2, 1) = -1.0;
  Tape tape;
  ParamBinder bind(tape, p);
  NodeInit ni = init_node_features(bind, c, pair_subgraph(2, {1, 2}, {3}), 0);
  EXPECT_EQ(ni.alpha.value()[0], 0.5);
  EXPECT_EQ(ni.alpha.value()[1], 0.5);
  EXPECT_EQ(ni.alpha.value()[2], 1.0);
}

TEST(NodeFeatures, MatchesScalarSoftmaxOracle) {
  ModelConfig c = tiny(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore p = params_for(c, seed);
    const Tensor& e = p.at("rel_emb");
    const std::vector<std::uint32_t> rels{0, 2, 5};
    Subgraph sg = pair_subgraph(2, rels, {4});
    Tape tape;
    ParamBinder bind(tape, p);
    NodeInit ni = init_node_features(bind, c, sg, 1);

    std::vector<double> logits;
    for (auto r : rels) logits.push_back(dot_rows(e, r, e, 1));
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    double total = 0.0;
    std::vector<double> h_rel(c.dim, 0.0);
    for (std::size_t i = 0; i < rels.size(); ++i) {
      const double a = std::exp(logits[i] - mx) / z;
      EXPECT_NEAR(ni.alpha.value()[i], a, 1e-12);
      EXPECT_GE(ni.alpha.value()[i], 0.0);
      total += ni.alpha.value()[i];
      for (std::size_t j = 0; j < c.dim; ++j) h_rel[j] += a * e(rels[i], j);
    }
    EXPECT_NEAR(total, 1.0, 1e-9);

    // h0 = [h_rel, pos] * w0
    std::vector<double> in = h_rel;
    std::vector<double> pos = double_radius_onehot(sg, 0);
    in.insert(in.end(), pos.begin(), pos.end());
    auto h0 = row_times(in, p.at("w0"));
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(ni.h0.value()(0, j), h0[j], 1e-12);
  }
}

TEST(NodeFeatures, DisabledRelationalFeaturesAreZero) {
  ModelConfig c = tiny();
  c.use_nrf = false;
  ParamStore p = params_for(c);
  Tape tape;
  ParamBinder bind(tape, p);
  NodeInit ni = init_node_features(bind, c, pair_subgraph(2, {1, 2}, {3}), 0);
  for (double x : ni.h_rel.value().data()) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(init_node_features(bind, c, pair_subgraph(3, {1}, {}), 0), Error);
  EXPECT_THROW(init_node_features(bind, c, pair_subgraph(2, {7}, {}), 0), Error);
}

TEST(GnnLayer, NoEdgesGivesSelfTransform) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Subgraph sg = pair_subgraph(2, {}, {});
  std::mt19937_64 rng(1);
  Tensor h = random_tensor(2, c.dim, rng);
  Tape tape;
  ParamBinder bind(tape, p);
  LayerOutput lo = gnn_layer(bind, c, sg, tape.constant(h), bind("rel_emb"), 0, 1);
  EXPECT_FALSE(lo.edge_alpha.valid());
  for (std::size_t i = 0; i < 2; ++i) {
    auto expect = row_times(h.row(i), p.at("layer1.w_self"));
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(lo.h.value()(i, j), expect[j], 1e-14);
  }
  for (std::size_t t = 0; t < c.num_tokens(); ++t) {
    auto expect = row_times(p.at("rel_emb").row(t), p.at("layer1.w_rel"));
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(lo.rel.value()(t, j), expect[j], 1e-14);
  }
}

TEST(GnnLayer, ZeroAttentionWeightsHalveMessages) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  for (const char* k : {"layer0.w1", "layer0.b1", "layer0.w2", "layer0.b2"}) p.at(k).fill(0.0);
  Subgraph sg = pair_subgraph(2, {1}, {3});
  sg.edges = {{0, 1, 1}};
  sg.dist_to_u = {0, 1};
  sg.dist_to_v = {1, 0};
  std::mt19937_64 rng(2);
  Tensor h = random_tensor(2, c.dim, rng);
  Tape tape;
  ParamBinder bind(tape, p);
  LayerOutput lo = gnn_layer(bind, c, sg, tape.constant(h), bind("rel_emb"), 0, 0);
  for (double a : lo.edge_alpha.value().data()) EXPECT_EQ(a, 0.5);

  const Tensor& e = p.at("rel_emb");
  const Tensor& wr = p.at("layer0.w_r");
  const Tensor& ws = p.at("layer0.w_self");
  // node 0 hears node 1 under token 1, node 1 hears node 0 under token 1 + |R|
  const std::pair<std::size_t, std::size_t> arcs[] = {{1, 1}, {0, 3}};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto [sender, tok] = arcs[i];
    std::vector<double> fused(c.dim);
    for (std::size_t j = 0; j < c.dim; ++j) fused[j] = e(tok, j) - h(sender, j);
    auto msg = apply_relation(fused, wr, tok, c.dim);
    auto self = row_times(h.row(i), ws);
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(lo.h.value()(i, j), 0.5 * msg[j] + self[j], 1e-14);
  }
}

TEST(GnnLayer, GradientWrtRelationEmbeddings) {
  ModelConfig c = tiny();
  const ParamStore p = params_for(c);
  Subgraph sg = pair_subgraph(2, {1}, {3});
  sg.nodes = {0, 1, 2};
  sg.edges = {{0, 0, 2}, {0, 1, 1}, {2, 1, 1}};
  sg.dist_to_u = {0, 1, 1};
  sg.dist_to_v = {1, 0, 1};
  sg.neighbor_rels.push_back({0, 1});
  std::mt19937_64 rng(3);
  for (Fusion f : {Fusion::kSubtract, Fusion::kMultiply, Fusion::kAdd}) {
    c.fusion = f;
    auto fn = [&](Tape& t, const std::vector<Var>& x) {
      ParamBinder bind(t, p);
      LayerOutput lo = gnn_layer(bind, c, sg, x[0], x[1], 1, 0);
      return ops::add(testing::weighted_sum(t, lo.h, 1), testing::weighted_sum(t, lo.rel, 2));
    };
    auto res = testing::check_gradients(fn, {random_tensor(3, c.dim, rng), random_tensor(c.num_tokens(), c.dim, rng)});
    EXPECT_LT(res.max_rel_error, 1e-4) << fusion_name(f) << " " << res.worst;
  }
}

TEST(GnnLayer, ShapeMismatchThrows) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Tape tape;
  ParamBinder bind(tape, p);
  EXPECT_THROW(gnn_layer(bind, c, pair_subgraph(2, {}, {}), tape.constant(Tensor::zeros(3, c.dim)), bind("rel_emb"),
                         0, 0),
               Error);
}

TEST(Encoder, ReadoutIsNodeMean) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Subgraph sg = pair_subgraph(2, {1}, {3});
  sg.edges = {{0, 1, 1}};
  Tape tape;
  ParamBinder bind(tape, p);
  EncodedSubgraph enc = encode_subgraph(bind, c, sg, {}, false, nullptr);
  const Tensor& h = enc.node_states.value();
  for (std::size_t j = 0; j < c.dim; ++j) {
    EXPECT_NEAR(enc.h_graph.value()[j], (h(0, j) + h(1, j)) / 2.0, 1e-15);
    EXPECT_EQ(enc.p_graph.value()[j], 0.0);
  }
  EXPECT_EQ(enc.s_graph.value().cols(), 2 * c.dim);
  EXPECT_FALSE(enc.path_beta.valid());
}

TEST(Encoder, TrainingWithDropoutNeedsRng) {
  ModelConfig c = tiny();
  c.dropout = 0.5;
  ParamStore p = params_for(c);
  Tape tape;
  ParamBinder bind(tape, p);
  EXPECT_THROW(encode_subgraph(bind, c, pair_subgraph(2, {1}, {}), {}, true, nullptr), Error);
}

TEST(Paths, CartesianCounts) {
  auto paths = enumerate_paths({1, 2}, 0, {3, 4, 5}, 200, 0);
  ASSERT_EQ(paths.size(), 6u);
  EXPECT_EQ(paths.front(), (RelationPath{1, 0, 3}));
  EXPECT_TRUE(std::is_sorted(paths.begin(), paths.end()));
  auto only_v = enumerate_paths({}, 0, {3, 4}, 200, 0);
  EXPECT_EQ(only_v, (std::vector<RelationPath>{{0, 3}, {0, 4}}));
  EXPECT_EQ(enumerate_paths({2}, 0, {}, 200, 0), (std::vector<RelationPath>{{2, 0}}));
  EXPECT_EQ(enumerate_paths({}, 1, {}, 200, 0), (std::vector<RelationPath>{{1}}));
}

TEST(Paths, CapSamplesDeterministically) {
  std::vector<std::uint32_t> u(10), v(10);
  std::iota(u.begin(), u.end(), 0);
  std::iota(v.begin(), v.end(), 10);
  auto a = enumerate_paths(u, 0, v, 20, 7);
  auto b = enumerate_paths(u, 0, v, 20, 7);
  auto all = enumerate_paths(u, 0, v, 0, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(all.size(), 100u);
  for (const auto& path : a) EXPECT_TRUE(std::binary_search(all.begin(), all.end(), path));
  EXPECT_NE(a, enumerate_paths(u, 0, v, 20, 8));
}

TEST(Paths, DisconnectedPairStillHasPaths) {
  auto fx = make_sparse_pair_fixture(3, {1, 2}, {2});
  auto paths = enumerate_paths(fx.graph, fx.target);
  EXPECT_EQ(paths, (std::vector<RelationPath>{{1, 0, 5}, {2, 0, 5}}));
  Subgraph sg = extract_enclosing(fx.graph, fx.target);
  EXPECT_EQ(sg.num_nodes(), 2u);
  EXPECT_TRUE(sg.edges.empty());
}

TEST(Paths, TargetEdgeExcluded) {
  KGraph g(3, 2, {{0, 0, 1}, {0, 1, 2}, {2, 1, 1}});
  EXPECT_EQ(enumerate_paths(g, {0, 0, 1}), (std::vector<RelationPath>{{1, 0, 3}}));
  auto leaky = enumerate_paths(g, {0, 0, 1}, {.exclude_target_edge = false});
  EXPECT_EQ(leaky.size(), 4u);
}

PathEncoding encode_values(Tape& tape, const ParamStore& p, const ModelConfig& c,
                           const std::vector<RelationPath>& paths, RelationId rt) {
  ParamBinder bind(tape, p);
  return encode_paths(bind, c, paths, rt);
}

TEST(PathEncoder, SingleAndIdenticalPaths) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  Tape tape;
  PathEncoding one = encode_values(tape, p, c, {{1, 0, 2}}, 0);
  EXPECT_EQ(one.beta.value()[0], 1.0);
  PathEncoding two = encode_values(tape, p, c, {{1, 0, 2}, {1, 0, 2}}, 0);
  EXPECT_EQ(two.beta.value()[0], 0.5);
  EXPECT_EQ(two.beta.value()[1], 0.5);
  for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(two.p_graph.value()[j], one.p_graph.value()[j], 1e-15);
  PathEncoding none = encode_values(tape, p, c, {}, 0);
  for (double x : none.p_graph.value().data()) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(encode_values(tape, p, c, {{}}, 0), Error);
}

TEST(PathEncoder, AttentionMatchesSoftmaxOracle) {
  ModelConfig c = tiny(3);
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    ParamStore p = params_for(c, rep);
    std::vector<RelationPath> paths;
    for (int i = 0; i < 3; ++i) {
      RelationPath path;
      const std::size_t len = 1 + rng() % 3;
      for (std::size_t t = 0; t < len; ++t) path.push_back(static_cast<std::uint32_t>(rng() % c.num_tokens()));
      paths.push_back(path);
    }
    const RelationId rt = static_cast<RelationId>(rng() % 3);
    Tape tape;
    PathEncoding enc = encode_values(tape, p, c, paths, rt);
    std::vector<Tensor> reps;
    std::vector<double> logits;
    for (const auto& path : paths) {
      reps.push_back(encode_values(tape, p, c, {path}, rt).p_graph.value());
      logits.push_back(dot_rows(reps.back(), 0, p.at("rel_emb"), rt));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    double total = 0.0;
    std::vector<double> pg(c.dim, 0.0);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const double b = std::exp(logits[i] - mx) / z;
      EXPECT_NEAR(enc.beta.value()[i], b, 1e-12);
      total += enc.beta.value()[i];
      for (std::size_t j = 0; j < c.dim; ++j) pg[j] += b * reps[i][j];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(enc.p_graph.value()[j], pg[j], 1e-12);
  }
}

SampleInput toy_sample(const ModelConfig& c) {
  KGraph g(5, c.num_relations, {{0, 0, 2}, {2, 1, 1}, {3, 1, 0}, {1, 0, 3}, {4, 0, 4}, {0, 0, 1}});
  return prepare_sample(g, {0, 0, 1}, c, true);
}

TEST(Score, ZeroAndLinearInOutputWeights) {
  ModelConfig c = tiny();
  SampleInput s = toy_sample(c);
  ParamStore p = params_for(c);
  const double base = SnriModel(c, p).score(s);
  ParamStore doubled = p;
  for (std::size_t i = 0; i < doubled.at("w_s").size(); ++i) doubled.at("w_s")[i] *= 2.0;
  EXPECT_NEAR(SnriModel(c, doubled).score(s), 2.0 * base, 1e-12 * std::max(1.0, std::abs(base)));
  ParamStore zero = p;
  zero.at("w_s").fill(0.0);
  EXPECT_EQ(SnriModel(c, zero).score(s), 0.0);
}

TEST(Score, MatchesManualConcatenation) {
  ModelConfig c = tiny();
  SampleInput s = toy_sample(c);
  ParamStore p = params_for(c);
  Tape tape;
  ParamBinder bind(tape, p);
  EncodedSubgraph enc = encode_subgraph(bind, c, s.subgraph, s.paths, false, nullptr);
  const double score = score_triple(bind, enc, 0).value().item();
  std::vector<double> x;
  for (double v : enc.node_states.value().row(0)) x.push_back(v);
  for (double v : enc.node_states.value().row(1)) x.push_back(v);
  for (double v : enc.rel_states.value().row(0)) x.push_back(v);
  for (double v : enc.s_graph.value().data()) x.push_back(v);
  ASSERT_EQ(x.size(), 5 * c.dim);
  double expect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) expect += x[i] * p.at("w_s")[i];
  EXPECT_NEAR(score, expect, 1e-13);
  EXPECT_EQ(SnriModel(c, p).score(s), score);
}

TEST(Loss, HingeExamples) {
  Tape tape;
  auto s = [&](double v) { return tape.constant(Tensor::scalar(v)); };
  const Var p1[] = {s(3.0)}, n1[] = {s(-2.0)};
  EXPECT_EQ(supervised_loss(p1, n1, 10.0).value().item(), 5.0);
  const Var p2[] = {s(11.0)}, n2[] = {s(1.0)};
  EXPECT_EQ(supervised_loss(p2, n2, 10.0).value().item(), 0.0);
  const Var p3[] = {s(0.7), s(3.0)}, n3[] = {s(0.7), s(-2.0)};
  EXPECT_EQ(supervised_loss(p3, n3, 10.0).value().item(), 15.0);
  EXPECT_THROW(supervised_loss(p3, n1, 10.0), Error);
  EXPECT_THROW(supervised_loss({}, {}, 10.0), Error);
}

std::vector<std::vector<double>> sorted_rows(const Tensor& t) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.rows(); ++i) rows.emplace_back(t.row(i).begin(), t.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

TEST(Corruption, ShufflesRows) {
  std::mt19937_64 gen(4);
  Tensor x = random_tensor(7, 3, gen);
  Tape tape;
  Var v = tape.constant(x);
  std::mt19937_64 a(9), b(9);
  const Tensor ya = corrupt_features(v, a).value();
  EXPECT_EQ(ya, corrupt_features(v, b).value());
  EXPECT_EQ(sorted_rows(ya), sorted_rows(x));
  std::mt19937_64 c(9);
  Tensor one = random_tensor(1, 3, gen);
  EXPECT_EQ(corrupt_features(tape.constant(one), c).value(), one);
  auto perm = random_permutation(50, c);
  std::vector<std::uint32_t> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  EXPECT_TRUE(std::is_permutation(perm.begin(), perm.end(), ids.begin()));
}

TEST(MutualInformation, ZeroBilinearGivesLogTwo) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  p.at("w_mi").fill(0.0);
  std::mt19937_64 rng(1);
  Tape tape;
  ParamBinder bind(tape, p);
  const Var pos[] = {tape.constant(random_tensor(1, 8, rng)), tape.constant(random_tensor(1, 8, rng))};
  const Var neg[] = {tape.constant(random_tensor(1, 8, rng)), tape.constant(random_tensor(1, 8, rng))};
  EXPECT_NEAR(mi_loss(bind, pos, neg).value().item(), std::log(2.0), 1e-15);
  EXPECT_THROW(mi_loss(bind, {}, neg), Error);
}

TEST(MutualInformation, SinglePairOracle) {
  ModelConfig c = tiny();
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    ParamStore p = params_for(c, rep);
    const Tensor s = random_tensor(1, 8, rng), t = random_tensor(1, 8, rng);
    const Tensor& w = p.at("w_mi");
    auto bilinear = [&](const Tensor& x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) acc += x[i] * w(i, j) * s[j];
      }
      return acc;
    };
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double expect = -(std::log(sig(bilinear(s))) + std::log(1.0 - sig(bilinear(t)))) / 2.0;
    Tape tape;
    ParamBinder bind(tape, p);
    const Var pos[] = {tape.constant(s)}, neg[] = {tape.constant(t)};
    EXPECT_NEAR(mi_loss(bind, pos, neg).value().item(), expect, 1e-12);
    EXPECT_NEAR(discriminator(bind, pos[0], pos[0]).value().item(), sig(bilinear(s)), 1e-14);
  }
}

Subgraph permute_locals(const Subgraph& sg, const std::vector<std::uint32_t>& perm) {
  // perm maps old local id -> new local id; targets stay fixed
  Subgraph out = sg;
  for (std::size_t i = 0; i < sg.num_nodes(); ++i) {
    out.nodes[perm[i]] = sg.nodes[i];
    out.dist_to_u[perm[i]] = sg.dist_to_u[i];
    out.dist_to_v[perm[i]] = sg.dist_to_v[i];
    out.neighbor_rels[perm[i]] = sg.neighbor_rels[i];
  }
  for (auto& e : out.edges) {
    e.head = perm[e.head];
    e.tail = perm[e.tail];
  }
  std::shuffle(out.edges.begin(), out.edges.end(), std::mt19937_64(perm.size()));
  return out;
}

TEST(Invariance, RelabelingLocalNodes) {
  ModelConfig c = tiny(3);
  c.dim = 6;
  std::mt19937_64 rng(31);
  auto triples = testing::random_triples(25, 3, 90, rng);
  KGraph g(25, 3, triples);
  SnriModel model = SnriModel::initialize(c);
  int checked = 0;
  for (const auto& t : triples) {
    if (t.head == t.tail) continue;
    SampleInput s = prepare_sample(g, t, c, true);
    if (s.subgraph.num_nodes() < 4) continue;
    std::vector<std::uint32_t> perm(s.subgraph.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 2, perm.end(), rng);
    SampleInput q = s;
    q.subgraph = permute_locals(s.subgraph, perm);
    const auto a = model.summarize(s), b = model.summarize(q);
    EXPECT_NEAR(a.score, b.score, 1e-12);
    for (std::size_t j = 0; j < c.dim; ++j) EXPECT_NEAR(a.h_graph[j], b.h_graph[j], 1e-12);
    EXPECT_EQ(a.p_graph, b.p_graph);
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(Scoring, EvalIsDeterministicAndSparseIsFinite) {
  ModelConfig c = tiny(3);
  SnriModel model = SnriModel::initialize(c);
  auto fx = make_sparse_pair_fixture(3, {1}, {2});
  SampleInput s = prepare_sample(fx.graph, fx.target, c, true);
  EXPECT_TRUE(s.subgraph.edges.empty());
  const double a = model.score(s);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_EQ(a, model.score(s));
  auto sum = model.summarize(s);
  ASSERT_EQ(sum.path_beta.size(), 1u);
  EXPECT_EQ(sum.path_beta[0], 1.0);
}

struct GradCase {
  const char* name;
  Fusion fusion;
  bool bases;
  NodeGruOrder order;
  double dropout;
};

class JointGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(JointGradient, MatchesFiniteDifferences) {
  const GradCase& gc = GetParam();
  ModelConfig c = tiny(3);
  c.fusion = gc.fusion;
  c.node_gru = gc.order;
  c.dropout = gc.dropout;
  if (gc.bases) {
    c.basis_threshold = 2;
    c.num_bases = 2;
  }
  std::mt19937_64 rng(17);
  auto triples = testing::random_triples(12, 3, 30, rng);
  KGraph g(12, 3, triples);
  std::vector<TrainPair> pairs;
  for (const auto& t : triples) {
    if (t.head == t.tail) continue;
    pairs.push_back({prepare_sample(g, t, c, true), prepare_sample(g, negative_sample(t, g, rng), c, true)});
    if (pairs.size() == 3) break;
  }
  const ParamStore p = params_for(c, 21);
  auto loss = [&](const ParamStore& q) {
    std::mt19937_64 r(99);
    return batch_loss(c, q, pairs, 10.0, 5.0, r).total;
  };
  std::mt19937_64 r(99);
  BatchLosses b = batch_loss(c, p, pairs, 10.0, 5.0, r);
  EXPECT_GT(b.mi, 0.0);
  EXPECT_EQ(b.total, loss(p));
  auto res = testing::check_store_gradients(loss, p, b.grads);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

INSTANTIATE_TEST_SUITE_P(Variants, JointGradient,
                         ::testing::Values(GradCase{"base", Fusion::kSubtract, false, NodeGruOrder::kIndependent, 0.0},
                                           GradCase{"dropout", Fusion::kSubtract, false, NodeGruOrder::kIndependent, 0.5},
                                           GradCase{"bases", Fusion::kMultiply, true, NodeGruOrder::kIndependent, 0.0},
                                           GradCase{"positional", Fusion::kAdd, false, NodeGruOrder::kPositional, 0.0}),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Config, TextRoundTrip) {
  ModelConfig c = tiny(7);
  c.fusion = Fusion::kMultiply;
  c.node_gru = NodeGruOrder::kPositional;
  c.dropout = 0.3;
  c.use_nrp = false;
  c.seed = 123456789012345ull;
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("dim = 3\n"), Error);
  EXPECT_THROW(parse_fusion("divide"), Error);
}

TEST(Config, ParameterValidation) {
  ModelConfig c = tiny();
  ParamStore p = params_for(c);
  EXPECT_NO_THROW(validate_params(c, p));
  ParamStore extra = p;
  extra.add("bogus", Tensor::zeros(1, 1));
  EXPECT_THROW(validate_params(c, extra), Error);
  ModelConfig wider = c;
  wider.dim = 5;
  EXPECT_THROW(validate_params(wider, p), Error);
  ModelConfig based = tiny(3);
  based.basis_threshold = 2;
  EXPECT_THROW(SnriModel(based, params_for(tiny(3))), Error);
  ModelConfig bad = c;
  bad.num_relations = 0;
  EXPECT_THROW(SnriModel::initialize(bad), Error);
}

}  // namespace
}  // namespace snri
