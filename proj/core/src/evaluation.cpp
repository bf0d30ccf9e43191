// SPDX-License-Identifier: Apache-2.0
#include "snri/evaluation.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "json.hpp"

namespace snri {

double auc_pr(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw Error("auc_pr: needs at least one positive and one negative score");
  }
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) items.push_back({s, true});
  for (double s : neg_scores) items.push_back({s, false});
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.positive && !b.positive;
  });
  // Each positive contributes precision@k / P. Terms are summed smallest
  // first so the value does not depend on the input order.
  std::vector<double> terms;
  terms.reserve(pos_scores.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (!items[k].positive) continue;
    ++tp;
    terms.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  return total / static_cast<double>(pos_scores.size());
}

std::size_t pessimistic_rank(double pos_score, std::span<const double> neg_scores) {
  std::size_t rank = 1;
  for (double s : neg_scores) {
    if (s >= pos_score) ++rank;
  }
  return rank;
}

bool hits_at_10(double pos_score, std::span<const double> neg_scores) {
  return pessimistic_rank(pos_score, neg_scores) <= 10;
}

std::string DensityBucket::label() const {
  if (!max_nodes) return fmt::format(">{}", min_nodes - 1);
  if (min_nodes == 0 || min_nodes == 1) return fmt::format("<={}", *max_nodes);
  return fmt::format("{}-{}", min_nodes, *max_nodes);
}

std::vector<DensityBucket> density_buckets(std::span<const std::size_t> node_counts,
                                           std::span<const bool> hits,
                                           std::span<const std::size_t> upper_bounds) {
  if (node_counts.size() != hits.size()) {
    throw Error(fmt::format("density_buckets: {} node counts vs {} hit flags", node_counts.size(), hits.size()));
  }
  if (!std::is_sorted(upper_bounds.begin(), upper_bounds.end()) ||
      std::adjacent_find(upper_bounds.begin(), upper_bounds.end()) != upper_bounds.end()) {
    throw Error("density_buckets: bucket bounds must be strictly increasing");
  }
  std::vector<DensityBucket> buckets;
  std::size_t lo = 0;
  for (auto ub : upper_bounds) {
    buckets.push_back({lo, ub});
    lo = ub + 1;
  }
  buckets.push_back({lo, std::nullopt});
  for (std::size_t i = 0; i < node_counts.size(); ++i) {
    auto it = std::find_if(buckets.begin(), buckets.end(), [&](const DensityBucket& b) {
      return !b.max_nodes || node_counts[i] <= *b.max_nodes;
    });
    ++it->count;
    if (hits[i]) ++it->hits;
  }
  for (auto& b : buckets) {
    if (b.count) b.hits_at_10 = static_cast<double>(b.hits) / static_cast<double>(b.count);
  }
  return buckets;
}

std::vector<PathImportanceRow> path_importance(const SnriModel& model, const KGraph& graph,
                                               std::span<const Triple> triples,
                                               RelationId target_relation, std::size_t top_n) {
  std::map<RelationPath, double> total;
  std::size_t n = 0;
  for (const Triple& t : triples) {
    if (t.relation != target_relation) continue;
    SampleInput sample = prepare_sample(graph, t, model.config(), true);
    auto summary = model.summarize(sample);
    ++n;
    if (summary.path_beta.empty()) continue;
    for (std::size_t i = 0; i < sample.paths.size(); ++i) {
      total[sample.paths[i]] += summary.path_beta[i];
    }
  }
  std::vector<PathImportanceRow> rows;
  for (auto& [path, sum] : total) {
    rows.push_back({target_relation, path, sum / static_cast<double>(n)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.beta > b.beta; });
  if (rows.size() > top_n) rows.resize(top_n);
  return rows;
}

std::string format_path(const RelationPath& path, const Vocabulary& relations) {
  const auto R = relations.size();
  std::string out = "(";
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += ", ";
    const auto tok = path[i];
    if (tok < R) {
      out += relations.name(tok);
    } else if (tok < 2 * R) {
      out += relations.name(static_cast<std::uint32_t>(tok - R)) + "^-1";
    } else {
      out += "?" + std::to_string(tok);
    }
  }
  return out + ")";
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EvalReport evaluate(const SnriModel& model, const KGraph& graph, std::span<const Triple> positives,
                    const EvalOptions& options) {
  if (positives.empty()) throw Error("evaluate: no positive triples");
  TripleSet known(positives.begin(), positives.end());
  const std::size_t n = positives.size();
  std::vector<double> pos(n), neg(n);
  std::vector<TripleRank> ranks(n);
  std::vector<std::size_t> sizes(n);
  std::vector<bool> hit(n);

  parallel_for(n, options.workers, [&](std::size_t i) {
    const Triple& t = positives[i];
    std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ull + i);
    SampleInput ps = prepare_sample(graph, t, model.config(), true, options.max_nodes);
    pos[i] = model.score(ps);
    sizes[i] = ps.subgraph.num_nodes();
    Triple nt = negative_sample(t, graph, rng, &known);
    neg[i] = model.score(prepare_sample(graph, nt, model.config(), true, options.max_nodes));
    ranks[i] = {t, pos[i], 0, sizes[i]};
    if (options.with_ranking) {
      std::vector<double> cand(options.num_candidates);
      for (auto& c : cand) {
        Triple ct = negative_sample(t, graph, rng, &known);
        c = model.score(prepare_sample(graph, ct, model.config(), true, options.max_nodes));
      }
      ranks[i].rank = pessimistic_rank(pos[i], cand);
      hit[i] = ranks[i].rank <= 10;
    }
  });

  EvalReport r;
  r.num_positives = n;
  r.auc_pr = auc_pr(pos, neg);
  r.ranks = std::move(ranks);
  r.bucket_upper_bounds = options.bucket_upper_bounds;
  if (options.with_ranking) {
    const auto nhits = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
    r.hits_at_10 = static_cast<double>(nhits) / static_cast<double>(n);
    std::unique_ptr<bool[]> flags(new bool[n]);
    std::copy(hit.begin(), hit.end(), flags.get());
    r.buckets = density_buckets(sizes, std::span<const bool>(flags.get(), n), options.bucket_upper_bounds);
  }
  return r;
}

std::string to_json(const EvalReport& report, const Vocabulary* relations) {
  nlohmann::json j;
  j["dataset"] = report.dataset;
  j["num_positives"] = report.num_positives;
  j["auc_pr"] = report.auc_pr;
  j["hits_at_10"] = report.hits_at_10 ? nlohmann::json(*report.hits_at_10) : nlohmann::json(nullptr);
  j["bucket_upper_bounds"] = report.bucket_upper_bounds;
  auto& buckets = j["density_buckets"] = nlohmann::json::array();
  for (const auto& b : report.buckets) {
    buckets.push_back({{"range", b.label()},
                       {"min_nodes", b.min_nodes},
                       {"max_nodes", b.max_nodes ? nlohmann::json(*b.max_nodes) : nlohmann::json(nullptr)},
                       {"count", b.count},
                       {"hits", b.hits},
                       {"hits_at_10", b.hits_at_10 ? nlohmann::json(*b.hits_at_10) : nlohmann::json(nullptr)}});
  }
  auto& paths = j["path_importance"] = nlohmann::json::array();
  for (const auto& row : report.paths) {
    nlohmann::json p{{"target_relation", relations ? relations->name(row.target_relation)
                                                   : std::to_string(row.target_relation)},
                     {"tokens", row.path},
                     {"beta", row.beta}};
    if (relations) p["path"] = format_path(row.path, *relations);
    paths.push_back(std::move(p));
  }
  return j.dump(2);
}

void write_text_table(std::ostream& out, const EvalReport& report, const Vocabulary* relations) {
  fmt::print(out, "{:<16} {:>10} {:>10} {:>8}\n", "dataset", "AUC-PR", "Hits@10", "#pos");
  fmt::print(out, "{:<16} {:>10.2f} {:>10} {:>8}\n", report.dataset.empty() ? "-" : report.dataset,
             100.0 * report.auc_pr,
             report.hits_at_10 ? fmt::format("{:.2f}", 100.0 * *report.hits_at_10) : std::string("-"),
             report.num_positives);
  if (!report.buckets.empty()) {
    std::string bounds;
    for (auto b : report.bucket_upper_bounds) bounds += (bounds.empty() ? "" : ",") + std::to_string(b);
    fmt::print(out, "\ndensity buckets (upper bounds: {})\n", bounds);
    fmt::print(out, "{:<10} {:>8} {:>10}\n", "nodes", "count", "Hits@10");
    for (const auto& b : report.buckets) {
      fmt::print(out, "{:<10} {:>8} {:>10}\n", b.label(), b.count,
                 b.hits_at_10 ? fmt::format("{:.2f}", 100.0 * *b.hits_at_10) : std::string("null"));
    }
  }
  if (!report.paths.empty()) {
    fmt::print(out, "\n{:<24} {:<56} {:>7}\n", "target relation", "neighboring relational path", "weight");
    for (const auto& row : report.paths) {
      const std::string rt = relations ? relations->name(row.target_relation) : std::to_string(row.target_relation);
      std::string path;
      if (relations) {
        path = format_path(row.path, *relations);
      } else {
        for (auto t : row.path) path += (path.empty() ? "" : ",") + std::to_string(t);
      }
      fmt::print(out, "{:<24} {:<56} {:>7.2f}\n", rt, path, row.beta);
    }
  }
}

void write_ranks_csv(std::ostream& out, const EvalReport& report) {
  fmt::print(out, "head,relation,tail,score,rank,subgraph_nodes\n");
  for (const auto& r : report.ranks) {
    fmt::print(out, "{},{},{},{:.17g},{},{}\n", r.triple.head, r.triple.relation, r.triple.tail, r.score,
               r.rank, r.subgraph_nodes);
  }
}

}  // namespace snri
