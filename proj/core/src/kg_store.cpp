// SPDX-License-Identifier: Apache-2.0
#include "snri/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "snri/binary_io.hpp"

namespace snri {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Vocabulary

std::uint32_t Vocabulary::intern(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  if (frozen_) throw Error(fmt::format("unknown name '{}' in frozen vocabulary", name));
  const auto id = static_cast<std::uint32_t>(names_.size());
  ids_.emplace(name, id);
  names_.push_back(name);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// KGraph

KGraph::KGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> triples)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      triples_(std::move(triples)),
      out_adj_(num_entities),
      in_adj_(num_entities),
      neighbor_rels_(num_entities) {
  for (const Triple& t : triples_) {
    if (t.head >= num_entities_ || t.tail >= num_entities_ || t.relation >= num_relations_) {
      throw Error(fmt::format("triple ({}, {}, {}) out of range for {} entities / {} relations",
                              t.head, t.relation, t.tail, num_entities_, num_relations_));
    }
    out_adj_[t.head].push_back({t.tail, t.relation});
    in_adj_[t.tail].push_back({t.head, t.relation});
    neighbor_rels_[t.head].push_back(t.relation);
    neighbor_rels_[t.tail].push_back(t.relation + static_cast<std::uint32_t>(num_relations_));
    ++known_[t];
  }
  for (auto& rels : neighbor_rels_) {
    std::sort(rels.begin(), rels.end());
    rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
  }
}

const std::vector<std::uint32_t>& KGraph::neighbor_relations(EntityId node) const {
  return neighbor_rels_.at(node);
}

std::size_t KGraph::count(const Triple& t) const {
  auto it = known_.find(t);
  return it == known_.end() ? 0 : it->second;
}

const std::vector<std::uint32_t>& neighboring_relations(const KGraph& g, EntityId node) {
  if (node >= g.num_entities()) {
    throw Error(fmt::format("node {} out of range ({} entities)", node, g.num_entities()));
  }
  return g.neighbor_relations(node);
}

std::vector<std::uint32_t> neighboring_relations_without(const KGraph& g, EntityId node,
                                                         const Triple& excluded) {
  const auto R = static_cast<std::uint32_t>(g.num_relations());
  std::vector<std::uint32_t> out;
  for (const AdjEdge& e : g.out_edges(node)) {
    if (node == excluded.head && e.neighbor == excluded.tail && e.relation == excluded.relation) continue;
    out.push_back(e.relation);
  }
  for (const AdjEdge& e : g.in_edges(node)) {
    if (node == excluded.tail && e.neighbor == excluded.head && e.relation == excluded.relation) continue;
    out.push_back(e.relation + R);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

GraphStats stats(const KGraph& g) {
  std::vector<char> seen_rel(g.num_relations(), 0);
  std::vector<char> seen_ent(g.num_entities(), 0);
  GraphStats s;
  s.triples = g.triples().size();
  for (const Triple& t : g.triples()) {
    if (!seen_rel[t.relation]) { seen_rel[t.relation] = 1; ++s.relations; }
    if (!seen_ent[t.head]) { seen_ent[t.head] = 1; ++s.nodes; }
    if (!seen_ent[t.tail]) { seen_ent[t.tail] = 1; ++s.nodes; }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  if (line.find('\t') != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      auto pos = line.find('\t', start);
      fields.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  } else {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) fields.push_back(f);
  }
  return fields;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::vector<Triple> load_triples(const fs::path& path, Vocabulary& entities, Vocabulary& relations) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open triple file '{}'", path.string()));
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    auto f = split_fields(line);
    if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty()) {
      throw Error(fmt::format("{}:{}: expected head<TAB>relation<TAB>tail, got '{}'",
                              path.string(), lineno, line));
    }
    std::uint32_t rel = 0;
    try {
      rel = relations.intern(f[1]);
    } catch (const Error&) {
      throw Error(fmt::format("{}:{}: unknown relation '{}'", path.string(), lineno, f[1]));
    }
    const auto h = entities.intern(f[0]);
    const auto t = entities.intern(f[2]);
    out.push_back({h, rel, t});
  }
  return out;
}

Triple negative_sample(const Triple& t, const KGraph& g, std::mt19937_64& rng,
                       const TripleSet* extra_known) {
  const std::size_t n = g.num_entities();
  if (n < 2) throw Error("negative_sample: graph needs at least two entities");
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n - 2));
  Triple cand = t;
  for (int attempt = 0; attempt < 100; ++attempt) {
    cand = t;
    const bool corrupt_head = coin(rng);
    EntityId& slot = corrupt_head ? cand.head : cand.tail;
    const EntityId original = slot;
    EntityId e = pick(rng);
    if (e >= original) ++e;  // uniform over entities != original
    slot = e;
    if (cand.head == cand.tail && t.head != t.tail) continue;
    const bool known = g.contains(cand) || (extra_known && extra_known->count(cand));
    if (!known) return cand;
  }
  return cand;
}

fs::path resolve_dataset_dir(const fs::path& data_dir, const std::string& dataset_id) {
  if (fs::is_directory(data_dir / dataset_id)) return data_dir / dataset_id;
  std::vector<std::string> wanted{lower(dataset_id)};
  std::string alias = lower(dataset_id);
  if (alias.rfind("fb15k237", 0) == 0) wanted.push_back("fb237" + alias.substr(8));
  if (alias.rfind("fb15k-237", 0) == 0) wanted.push_back("fb237" + alias.substr(9));
  std::error_code ec;
  if (fs::is_directory(data_dir, ec)) {
    std::vector<fs::path> entries;
    for (const auto& entry : fs::directory_iterator(data_dir)) entries.push_back(entry.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      if (!fs::is_directory(p)) continue;
      const std::string name = lower(p.filename().string());
      if (std::find(wanted.begin(), wanted.end(), name) != wanted.end()) return p;
    }
  }
  throw Error(fmt::format("dataset '{}' not found under '{}' (expected a directory such as "
                          "WN18RR_v1 next to WN18RR_v1_ind)",
                          dataset_id, data_dir.string()));
}

DatasetSplit load_dataset(const fs::path& dataset_dir, const DatasetOptions& options) {
  const fs::path ind_dir = dataset_dir.parent_path() / (dataset_dir.filename().string() + "_ind");
  for (const fs::path& p : {dataset_dir / "train.txt", dataset_dir / "valid.txt",
                            ind_dir / "train.txt", ind_dir / "test.txt"}) {
    if (!fs::exists(p)) throw Error(fmt::format("missing dataset file '{}'", p.string()));
  }
  DatasetSplit ds;
  ds.name = dataset_dir.filename().string();
  ds.train = load_triples(dataset_dir / "train.txt", ds.train_entities, ds.relations);
  ds.valid = load_triples(dataset_dir / "valid.txt", ds.train_entities, ds.relations);
  ds.relations.freeze();
  std::vector<Triple> graph_triples = ds.train;
  if (options.merge_valid_into_graph) {
    graph_triples.insert(graph_triples.end(), ds.valid.begin(), ds.valid.end());
  }
  ds.train_graph = KGraph(ds.train_entities.size(), ds.relations.size(), std::move(graph_triples));

  auto test_graph_triples = load_triples(ind_dir / "train.txt", ds.test_entities, ds.relations);
  ds.test = load_triples(ind_dir / "test.txt", ds.test_entities, ds.relations);
  ds.test_graph = KGraph(ds.test_entities.size(), ds.relations.size(), std::move(test_graph_triples));
  return ds;
}

GraphStats directory_stats(const fs::path& split_dir) {
  Vocabulary ents, rels;
  std::vector<Triple> all;
  bool any = false;
  for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
    if (!fs::exists(split_dir / f)) continue;
    any = true;
    auto part = load_triples(split_dir / f, ents, rels);
    all.insert(all.end(), part.begin(), part.end());
  }
  if (!any) throw Error(fmt::format("no triple files in '{}'", split_dir.string()));
  return stats(KGraph(ents.size(), rels.size(), std::move(all)));
}

// ---------------------------------------------------------------------------
// Cache

namespace {
constexpr char kGraphMagic[8] = {'S', 'N', 'R', 'I', 'G', 'R', 'P', 'H'};
constexpr std::uint32_t kGraphVersion = 1;
}  // namespace

void save_graph_cache(const fs::path& path, const KGraph& g, const Vocabulary& entities,
                      const Vocabulary& relations) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write graph cache '{}'", path.string()));
  out.write(kGraphMagic, sizeof(kGraphMagic));
  io::write_le<std::uint32_t>(out, kGraphVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(relations.size()));
  for (const auto& n : relations.names()) io::write_string(out, n);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entities.size()));
  for (const auto& n : entities.names()) io::write_string(out, n);
  io::write_le<std::uint64_t>(out, g.triples().size());
  for (const Triple& t : g.triples()) {
    io::write_le<std::uint32_t>(out, t.head);
    io::write_le<std::uint32_t>(out, t.relation);
    io::write_le<std::uint32_t>(out, t.tail);
  }
  if (!out) throw Error(fmt::format("failed writing graph cache '{}'", path.string()));
}

CachedGraph load_graph_cache(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("graph cache not found: '{}'", path.string()));
  char magic[8];
  if (!in.read(magic, 8) || std::string_view(magic, 8) != std::string_view(kGraphMagic, 8)) {
    throw Error(fmt::format("'{}' is not a graph cache", path.string()));
  }
  if (io::read_le<std::uint32_t>(in) != kGraphVersion) {
    throw Error(fmt::format("'{}': unsupported graph cache version", path.string()));
  }
  CachedGraph c;
  const auto nr = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nr; ++i) c.relations.intern(io::read_string(in));
  const auto ne = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < ne; ++i) c.entities.intern(io::read_string(in));
  const auto nt = io::read_le<std::uint64_t>(in);
  std::vector<Triple> triples;
  triples.reserve(nt);
  for (std::uint64_t i = 0; i < nt; ++i) {
    Triple t;
    t.head = io::read_le<std::uint32_t>(in);
    t.relation = io::read_le<std::uint32_t>(in);
    t.tail = io::read_le<std::uint32_t>(in);
    triples.push_back(t);
  }
  c.graph = KGraph(c.entities.size(), c.relations.size(), std::move(triples));
  return c;
}

}  // namespace snri
