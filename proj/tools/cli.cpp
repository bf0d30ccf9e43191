// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "snri/checkpoint.hpp"
#include "snri/evaluation.hpp"
#include "snri/kg_store.hpp"
#include "snri/kv_config.hpp"
#include "snri/log.hpp"
#include "snri/synthetic.hpp"
#include "snri/training.hpp"

namespace snri::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string dataset;
  std::string data_dir;
  std::string config;
  std::uint64_t seed = 0;
  int epochs = 0;
  int hops = 0;
  double lambda = 0.0;
  double margin = 0.0;
  std::string flags;
  std::size_t workers = 1;
  std::string out_dir = "runs";
  std::vector<std::string> sets;
  std::string checkpoint;
  std::size_t candidates = 50;
  std::vector<std::size_t> buckets{3, 10};
  std::string split = "test";
  std::vector<std::string> relations;
  std::size_t top_n = 2;
  std::size_t entities = 1000;
  bool verbose = false;
  bool quiet = false;
};

/// Options given on the command line, by long name.
struct Given {
  std::vector<const CLI::App*> apps;
  bool operator()(const std::string& name) const {
    for (const auto* app : apps) {
      for (const auto* opt : app->get_options()) {
        if (opt->get_lnames().size() == 1 && opt->get_lnames()[0] == name && opt->count() > 0) return true;
      }
    }
    return false;
  }
};

fs::path data_dir_of(const Options& o) {
  if (!o.data_dir.empty()) return o.data_dir;
  if (const char* env = std::getenv("SNRI_DATA_DIR"); env && *env) return env;
  return "data";
}

fs::path dataset_dir_of(const Options& o) {
  if (o.dataset.empty()) throw Error("no dataset given (use --dataset)");
  return resolve_dataset_dir(data_dir_of(o), o.dataset);
}

std::string dataset_label(const Options& o) { return fs::path(o.dataset).filename().string(); }

TrainConfig train_config_of(const Options& o, const Given& given) {
  TrainConfig c;
  if (!o.config.empty()) c = TrainConfig::from_kv(KeyValues::load(o.config));
  if (!o.sets.empty()) {
    std::string text;
    for (const auto& s : o.sets) text += s + "\n";
    c = TrainConfig::from_kv(KeyValues::parse(text, "--set"), c);
  }
  if (given("seed")) c.seed = o.seed;
  if (given("epochs")) c.epochs = o.epochs;
  if (given("hops")) c.hops = o.hops;
  if (given("lambda")) c.lambda = o.lambda;
  if (given("margin")) c.margin = o.margin;
  if (given("flags")) c.set_flags(o.flags);
  if (given("workers")) c.workers = o.workers;
  c.out_dir = o.out_dir;
  c.validate();
  return c;
}

DatasetSplit load_split(const Options& o, const TrainConfig& c) {
  DatasetOptions opts;
  opts.merge_valid_into_graph = c.merge_valid;
  DatasetSplit d = load_dataset(dataset_dir_of(o), opts);
  d.name = dataset_label(o);
  return d;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

SnriModel load_model(const fs::path& path, const DatasetSplit& data) {
  if (!fs::exists(path)) throw Error(fmt::format("checkpoint not found: '{}'", path.string()));
  Checkpoint ck = load_checkpoint(path);
  ModelConfig cfg = ModelConfig::from_text(ck.config_text);
  if (cfg.num_relations != data.relations.size()) {
    throw Error(fmt::format("checkpoint '{}' expects {} relations but dataset has {}", path.string(),
                            cfg.num_relations, data.relations.size()));
  }
  return SnriModel(cfg, std::move(ck.params));
}

struct EvalTarget {
  const KGraph* graph;
  const std::vector<Triple>* triples;
};

EvalTarget eval_target(const DatasetSplit& d, const std::string& split) {
  if (split == "test") return {&d.test_graph, &d.test};
  if (split == "valid") return {&d.train_graph, &d.valid};
  throw Error(fmt::format("unknown split '{}' (test, valid)", split));
}

EvalOptions eval_options_of(const Options& o) {
  EvalOptions e;
  e.num_candidates = o.candidates;
  e.seed = o.seed;
  e.bucket_upper_bounds = o.buckets;
  e.workers = o.workers;
  return e;
}

fs::path checkpoint_of(const Options& o) {
  return o.checkpoint.empty() ? fs::path(o.out_dir) / "checkpoint.bin" : fs::path(o.checkpoint);
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Options& o, std::ostream& out) {
  const fs::path dir = dataset_dir_of(o);
  const fs::path ind = dir.string() + "_ind";
  const std::string name = dataset_label(o);
  std::string table = fmt::format("{:<16} {:<6} {:>6} {:>8} {:>8}\n", "dataset", "split", "#R", "#N", "#T");
  for (const auto& [split, path] : {std::pair<std::string, fs::path>{"train", dir}, {"test", ind}}) {
    const GraphStats s = directory_stats(path);
    table += fmt::format("{:<16} {:<6} {:>6} {:>8} {:>8}\n", name, split, s.relations, s.nodes, s.triples);
  }
  out << table;
  DatasetSplit d = load_dataset(dir);
  const fs::path od = o.out_dir;
  fs::create_directories(od);
  save_graph_cache(od / (name + ".train.graph"), d.train_graph, d.train_entities, d.relations);
  save_graph_cache(od / (name + ".test.graph"), d.test_graph, d.test_entities, d.relations);
  write_file(od / (name + ".stats.txt"), table);
  return 0;
}

int cmd_train(const Options& o, const Given& given, std::ostream& out) {
  TrainConfig c = train_config_of(o, given);
  c.dataset_dir = dataset_dir_of(o);
  DatasetSplit d = load_split(o, c);
  TrainResult r = train(c, d);
  fmt::print(out, "best epoch {} valid AUC-PR {:.4f}\n", r.best_epoch, r.best_valid_auc_pr);
  fmt::print(out, "checkpoint {}\n", (fs::path(c.out_dir) / "checkpoint.bin").string());
  return 0;
}

void emit_report(const Options& o, const EvalReport& report, const Vocabulary& rels, const std::string& stem,
                 std::ostream& out) {
  std::ostringstream table;
  write_text_table(table, report, &rels);
  out << table.str();
  const fs::path od = o.out_dir;
  write_file(od / (stem + ".json"), to_json(report, &rels) + "\n");
  write_file(od / (stem + ".txt"), table.str());
  std::ostringstream csv;
  write_ranks_csv(csv, report);
  write_file(od / (stem + ".ranks.csv"), csv.str());
}

int cmd_eval(const Options& o, std::ostream& out, const std::string& stem) {
  DatasetSplit d = load_dataset(dataset_dir_of(o));
  SnriModel model = load_model(checkpoint_of(o), d);
  EvalTarget tgt = eval_target(d, o.split);
  EvalReport report = evaluate(model, *tgt.graph, *tgt.triples, eval_options_of(o));
  report.dataset = dataset_label(o);
  emit_report(o, report, d.relations, stem, out);
  return 0;
}

int cmd_ablate(const Options& o, const Given& given, std::ostream& out) {
  TrainConfig base = train_config_of(o, given);
  base.no_nrf = base.no_nrp = base.no_mi = false;
  base.dataset_dir = dataset_dir_of(o);
  TrainConfig requested;
  requested.set_flags(given("flags") ? o.flags : "no_nrf,no_nrp,no_mi");
  struct Variant {
    std::string label, dir;
    TrainConfig config;
  };
  std::vector<Variant> variants{{"SNRI", "snri", base}};
  auto add = [&](bool on, const char* label, const char* dir, bool TrainConfig::*flag) {
    if (!on) return;
    Variant v{label, dir, base};
    v.config.*flag = true;
    variants.push_back(v);
  };
  add(requested.no_nrf, "w/o NRF", "no_nrf", &TrainConfig::no_nrf);
  add(requested.no_nrp, "w/o NRP", "no_nrp", &TrainConfig::no_nrp);
  add(requested.no_mi, "w/o MI", "no_mi", &TrainConfig::no_mi);

  DatasetSplit d = load_split(o, base);
  std::string table = fmt::format("{:<10} {:>10} {:>10} {:>11}\n", "model", "AUC-PR", "Hits@10", "best epoch");
  std::string tsv = "model\tauc_pr\thits_at_10\tbest_epoch\n";
  for (auto& v : variants) {
    v.config.out_dir = fs::path(o.out_dir) / v.dir;
    log::info(fmt::format("ablation variant '{}' (flags {})", v.label, v.config.flags_string()));
    TrainResult r = train(v.config, d);
    EvalReport report = evaluate(r.best, d.test_graph, d.test, eval_options_of(o));
    report.dataset = dataset_label(o);
    write_file(v.config.out_dir / "eval.json", to_json(report, &d.relations) + "\n");
    table += fmt::format("{:<10} {:>10.2f} {:>10.2f} {:>11}\n", v.label, 100.0 * report.auc_pr,
                         100.0 * report.hits_at_10.value_or(0.0), r.best_epoch);
    tsv += fmt::format("{}\t{:.6f}\t{:.6f}\t{}\n", v.label, report.auc_pr, report.hits_at_10.value_or(0.0),
                       r.best_epoch);
  }
  out << table;
  write_file(fs::path(o.out_dir) / "ablation.txt", table);
  write_file(fs::path(o.out_dir) / "ablation.tsv", tsv);
  return 0;
}

int cmd_paths(const Options& o, std::ostream& out) {
  DatasetSplit d = load_dataset(dataset_dir_of(o));
  SnriModel model = load_model(checkpoint_of(o), d);
  if (!model.config().use_nrp) throw Error("checkpoint was trained without relational paths");
  EvalTarget tgt = eval_target(d, o.split);
  std::vector<RelationId> rels;
  if (o.relations.empty()) {
    std::set<RelationId> seen;
    for (const auto& t : *tgt.triples) seen.insert(t.relation);
    rels.assign(seen.begin(), seen.end());
  } else {
    for (const auto& name : o.relations) {
      auto id = d.relations.find(name);
      if (!id) {
        std::string valid;
        for (const auto& n : d.relations.names()) valid += (valid.empty() ? "" : ", ") + n;
        throw Error(fmt::format("unknown relation '{}'; valid names: {}", name, valid));
      }
      rels.push_back(*id);
    }
  }
  EvalReport report;
  report.dataset = dataset_label(o);
  for (RelationId r : rels) {
    auto rows = path_importance(model, *tgt.graph, *tgt.triples, r, o.top_n);
    report.paths.insert(report.paths.end(), rows.begin(), rows.end());
  }
  std::string tsv = "target_relation\tpath\tbeta\n";
  std::string table = fmt::format("{:<32} {:<64} {:>7}\n", "target relation", "neighboring relational path", "weight");
  for (const auto& row : report.paths) {
    const auto path = format_path(row.path, d.relations);
    table += fmt::format("{:<32} {:<64} {:>7.2f}\n", d.relations.name(row.target_relation), path, row.beta);
    tsv += fmt::format("{}\t{}\t{:.6f}\n", d.relations.name(row.target_relation), path, row.beta);
  }
  out << table;
  write_file(fs::path(o.out_dir) / "paths.txt", table);
  write_file(fs::path(o.out_dir) / "paths.tsv", tsv);
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SyntheticOptions so;
  so.num_entities = o.entities;
  so.test_entities = std::max<std::size_t>(3, o.entities / 2);
  so.body_edges = o.entities * 7 / 10;
  so.noise_edges = o.entities * 3 / 10;
  so.seed = o.seed;
  const fs::path dir = data_dir_of(o) / (o.dataset.empty() ? std::string("synthetic") : o.dataset);
  SyntheticSummary s = write_synthetic_dataset(dir, so);
  fmt::print(out, "wrote {} (train {}, valid {}, ind train {}, ind test {})\n", dir.string(), s.train, s.valid,
             s.ind_train, s.ind_test);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Inductive link prediction over enclosing subgraphs with neighboring relational features and paths",
               "snri"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging")->configurable(false);
  app.add_flag("-q,--quiet", o.quiet, "Only warnings and errors");

  auto add_data = [&](CLI::App* s, bool positional) {
    if (positional) {
      s->add_option("dataset_id,--dataset", o.dataset, "Dataset id, e.g. wn18rr_v1 (directory under --data-dir)");
    } else {
      s->add_option("--dataset", o.dataset, "Dataset id, e.g. wn18rr_v1 (directory under --data-dir)");
    }
    s->add_option("--data-dir", o.data_dir, "Root of the dataset directories (default: $SNRI_DATA_DIR, else ./data)");
    s->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  };
  auto add_train = [&](CLI::App* s) {
    s->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    s->add_option("--set", o.sets, "Extra config override key=value (repeatable)");
    s->add_option("--seed", o.seed, "Random seed");
    s->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::PositiveNumber);
    s->add_option("--hops", o.hops, "Enclosing subgraph radius k")->check(CLI::PositiveNumber);
    s->add_option("--lambda", o.lambda, "Weight of the mutual-information loss")->check(CLI::NonNegativeNumber);
    s->add_option("--margin", o.margin, "Margin of the ranking loss")->check(CLI::PositiveNumber);
    s->add_option("--flags", o.flags, "Ablation flags: comma list of no_nrf, no_nrp, no_mi");
    s->add_option("--workers", o.workers, "Extraction and scoring threads")->check(CLI::PositiveNumber);
  };
  auto add_eval = [&](CLI::App* s, bool seed_and_workers) {
    s->add_option("--checkpoint", o.checkpoint, "Model checkpoint (default: <out-dir>/checkpoint.bin)");
    s->add_option("--split", o.split, "Triples to score: test or valid")->capture_default_str();
    if (seed_and_workers) {
      s->add_option("--seed", o.seed, "Negative sampling seed");
      s->add_option("--workers", o.workers, "Scoring threads")->check(CLI::PositiveNumber);
    }
  };
  auto add_ranking = [&](CLI::App* s) {
    s->add_option("--candidates", o.candidates, "Sampled negatives per positive for Hits@10")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    s->add_option("--buckets", o.buckets, "Inclusive node-count upper bounds of the density buckets")
        ->delimiter(',')
        ->capture_default_str();
  };

  CLI::App* ingest = app.add_subcommand("ingest", "Load a dataset, print split statistics, write graph caches");
  add_data(ingest, true);

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.bin, metrics.jsonl, train.conf");
  add_data(train_cmd, true);
  add_train(train_cmd);

  CLI::App* eval = app.add_subcommand("eval", "AUC-PR and Hits@10 of a checkpoint; writes eval.{json,txt,ranks.csv}");
  add_data(eval, true);
  add_eval(eval, true);
  add_ranking(eval);

  CLI::App* ablate = app.add_subcommand("ablate", "Train full and ablated variants and compare them");
  add_data(ablate, true);
  add_train(ablate);
  add_ranking(ablate);

  CLI::App* density = app.add_subcommand("density", "Hits@10 by subgraph size; writes density.{json,txt,ranks.csv}");
  add_data(density, true);
  add_eval(density, true);
  add_ranking(density);

  CLI::App* paths = app.add_subcommand("paths", "Most attended relational paths per target relation");
  add_data(paths, true);
  add_eval(paths, false);
  paths->add_option("--relation", o.relations, "Target relation name (repeatable; default: all in the split)");
  paths->add_option("--top-n", o.top_n, "Paths listed per relation")->capture_default_str()->check(CLI::PositiveNumber);

  CLI::App* synth = app.add_subcommand("synth", "Write the planted-rule synthetic dataset under --data-dir");
  synth->add_option("dataset_id,--dataset", o.dataset, "Dataset directory name (default: synthetic)");
  synth->add_option("--data-dir", o.data_dir, "Root directory (default: $SNRI_DATA_DIR, else ./data)");
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--entities", o.entities, "Entities of the training world")->capture_default_str()->check(
      CLI::Range(std::size_t{3}, std::size_t{10000000}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  log::set_level(o.verbose ? log::Level::kDebug : o.quiet ? log::Level::kWarn : log::Level::kInfo);

  try {
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (train_cmd->parsed()) return cmd_train(o, Given{{train_cmd}}, out);
    if (eval->parsed()) return cmd_eval(o, out, "eval");
    if (ablate->parsed()) return cmd_ablate(o, Given{{ablate}}, out);
    if (density->parsed()) return cmd_eval(o, out, "density");
    if (paths->parsed()) return cmd_paths(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace snri::cli
