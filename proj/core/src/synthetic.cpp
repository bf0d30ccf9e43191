// SPDX-License-Identifier: Apache-2.0
#include "snri/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace snri {

namespace {

constexpr const char* kRelationNames[] = {"rt", "r1", "r2", "r3", "r4"};

std::vector<Triple> random_edges(RelationId r, std::size_t n, std::size_t count, std::mt19937_64& rng,
                                 std::set<Triple>& seen) {
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n - 1));
  std::vector<Triple> out;
  const std::size_t limit = std::min(count, n * (n - 1));
  while (out.size() < limit) {
    Triple t{pick(rng), r, pick(rng)};
    if (t.head == t.tail || !seen.insert(t).second) continue;
    out.push_back(t);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<Triple>& triples, const std::string& prefix) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  for (const auto& t : triples) {
    fmt::print(out, "{}{}\t{}\t{}{}\n", prefix, t.head, kRelationNames[t.relation], prefix, t.tail);
  }
}

std::size_t scaled(std::size_t count, std::size_t n, std::size_t base) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(count) * static_cast<double>(n) /
                                               static_cast<double>(base)));
}

}  // namespace

SyntheticWorld generate_world(std::size_t num_entities, std::size_t body_edges, std::size_t noise_edges,
                              std::uint64_t seed) {
  if (num_entities < 3) throw Error("synthetic world needs at least 3 entities");
  std::mt19937_64 rng(seed);
  std::set<Triple> seen;
  SyntheticWorld w;
  std::vector<Triple> r1 = random_edges(1, num_entities, body_edges, rng, seen);
  std::vector<Triple> r2 = random_edges(2, num_entities, body_edges, rng, seen);
  w.facts = r1;
  w.facts.insert(w.facts.end(), r2.begin(), r2.end());
  for (RelationId r : {3u, 4u}) {
    auto noise = random_edges(r, num_entities, noise_edges, rng, seen);
    w.facts.insert(w.facts.end(), noise.begin(), noise.end());
  }
  std::unordered_map<EntityId, std::vector<EntityId>> r2_out;
  for (const auto& t : r2) r2_out[t.head].push_back(t.tail);
  std::set<Triple> derived;
  for (const auto& t : r1) {
    auto it = r2_out.find(t.tail);
    if (it == r2_out.end()) continue;
    for (EntityId c : it->second) {
      if (c != t.head) derived.insert({t.head, 0, c});
    }
  }
  w.derived.assign(derived.begin(), derived.end());
  return w;
}

SyntheticSummary write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& o) {
  if (o.valid_fraction <= 0.0 || o.valid_fraction >= 1.0 || o.test_fraction <= 0.0 || o.test_fraction >= 1.0) {
    throw Error("synthetic dataset: held-out fractions must lie in (0, 1)");
  }
  const std::filesystem::path ind = dir.string() + "_ind";
  std::filesystem::create_directories(dir);
  std::filesystem::create_directories(ind);
  SyntheticSummary s;

  auto split = [](std::vector<Triple> derived, double frac, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(derived.begin(), derived.end(), rng);
    const auto held = std::max<std::size_t>(1, static_cast<std::size_t>(frac * static_cast<double>(derived.size())));
    std::vector<Triple> out(derived.begin(), derived.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<Triple> kept(derived.begin() + static_cast<std::ptrdiff_t>(held), derived.end());
    return std::pair(kept, out);
  };

  SyntheticWorld tw = generate_world(o.num_entities, o.body_edges, o.noise_edges, o.seed);
  if (tw.derived.size() < 2) throw Error("synthetic dataset: rule produced too few target triples");
  auto [t_kept, t_valid] = split(tw.derived, o.valid_fraction, o.seed + 1);
  std::vector<Triple> train = tw.facts;
  train.insert(train.end(), t_kept.begin(), t_kept.end());
  write_file(dir / "train.txt", train, "e");
  write_file(dir / "valid.txt", t_valid, "e");
  write_file(dir / "test.txt", {}, "e");
  s.train = train.size();
  s.valid = t_valid.size();

  SyntheticWorld iw = generate_world(o.test_entities, scaled(o.body_edges, o.test_entities, o.num_entities),
                                     scaled(o.noise_edges, o.test_entities, o.num_entities), o.seed + 2);
  if (iw.derived.size() < 2) throw Error("synthetic dataset: inductive rule produced too few target triples");
  auto [i_kept, i_test] = split(iw.derived, o.test_fraction, o.seed + 3);
  std::vector<Triple> ind_train = iw.facts;
  ind_train.insert(ind_train.end(), i_kept.begin(), i_kept.end());
  write_file(ind / "train.txt", ind_train, "i");
  write_file(ind / "valid.txt", {}, "i");
  write_file(ind / "test.txt", i_test, "i");
  s.ind_train = ind_train.size();
  s.ind_test = i_test.size();
  return s;
}

SparsePairFixture make_sparse_pair_fixture(std::size_t num_relations, const std::vector<RelationId>& head_rels,
                                           const std::vector<RelationId>& tail_rels) {
  std::vector<Triple> triples;
  EntityId next = 2;
  for (RelationId r : head_rels) {
    if (r >= num_relations) throw Error(fmt::format("fixture relation {} out of range", r));
    triples.push_back({0, r, next++});
  }
  for (RelationId r : tail_rels) {
    if (r >= num_relations) throw Error(fmt::format("fixture relation {} out of range", r));
    triples.push_back({next++, r, 1});
  }
  return {KGraph(next, num_relations, triples), Triple{0, 0, 1}};
}

}  // namespace snri
