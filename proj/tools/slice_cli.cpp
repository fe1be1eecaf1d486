// SPDX-License-Identifier: Apache-2.0
//
// Stage-oriented pipeline driver: ingest -> features -> pretrain -> finetune
// -> evaluate / explain. Every stage reads a flat JSON config (overridable
// from the command line), derives its randomness from the config seed, and
// writes its artifacts plus a run manifest into the working directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slice/context.hpp"
#include "slice/eval.hpp"
#include "slice/format.hpp"
#include "slice/graph.hpp"
#include "slice/model.hpp"
#include "slice/skipgram.hpp"
#include "slice/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPrerequisite = 3;
constexpr int kExitNumeric = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PrerequisiteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::string graph;
  std::string node_types;
  std::string workdir = "out";
  std::string embeddings;  // optional pre-computed table
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  std::size_t dim = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_context_size = 6;
  std::size_t contexts_per_node = 1;
  std::size_t eval_contexts = 10;
  std::size_t negative_ratio = 2;
  std::size_t eval_negative_ratio = 1;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;
  std::string context_strategy = "random_walk";
  bool typed_negatives = false;
  bool freeze_pretrained = false;

  std::size_t walks_per_node = 10;
  std::size_t walk_length = 80;
  std::size_t skipgram_window = 10;
  std::size_t skipgram_negatives = 5;
  std::size_t skipgram_epochs = 5;
  double skipgram_lr = 0.025;

  std::size_t pretrain_epochs = 10;
  double pretrain_lr = 1e-4;
  std::size_t finetune_epochs = 10;
  double finetune_lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  double clip_norm = 5.0;

  std::size_t histogram_bins = 20;
  std::string explain_relation;
  std::size_t explain_contexts = 200;
  std::size_t top_k_metapaths = 10;
  std::size_t association_samples = 5;
};

json config_to_json(const PipelineConfig& c) {
  return json{{"graph", c.graph},
              {"node_types", c.node_types},
              {"workdir", c.workdir},
              {"embeddings", c.embeddings},
              {"seed", c.seed},
              {"threads", c.threads},
              {"dim", c.dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"max_context_size", c.max_context_size},
              {"contexts_per_node", c.contexts_per_node},
              {"eval_contexts", c.eval_contexts},
              {"negative_ratio", c.negative_ratio},
              {"eval_negative_ratio", c.eval_negative_ratio},
              {"train_fraction", c.train_fraction},
              {"dev_fraction", c.dev_fraction},
              {"context_strategy", c.context_strategy},
              {"typed_negatives", c.typed_negatives},
              {"freeze_pretrained", c.freeze_pretrained},
              {"walks_per_node", c.walks_per_node},
              {"walk_length", c.walk_length},
              {"skipgram_window", c.skipgram_window},
              {"skipgram_negatives", c.skipgram_negatives},
              {"skipgram_epochs", c.skipgram_epochs},
              {"skipgram_lr", c.skipgram_lr},
              {"pretrain_epochs", c.pretrain_epochs},
              {"pretrain_lr", c.pretrain_lr},
              {"finetune_epochs", c.finetune_epochs},
              {"finetune_lr", c.finetune_lr},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"clip_norm", c.clip_norm},
              {"histogram_bins", c.histogram_bins},
              {"explain_relation", c.explain_relation},
              {"explain_contexts", c.explain_contexts},
              {"top_k_metapaths", c.top_k_metapaths},
              {"association_samples", c.association_samples}};
}

void apply_json(PipelineConfig& c, const json& j) {
  std::vector<std::string> unknown;
  std::vector<std::string> bad_type;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      bad_type.push_back(key);
    }
  };
  const json defaults = config_to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) unknown.push_back(it.key());
  }

  get("graph", c.graph);
  get("node_types", c.node_types);
  get("workdir", c.workdir);
  get("embeddings", c.embeddings);
  get("seed", c.seed);
  get("threads", c.threads);
  get("dim", c.dim);
  get("layers", c.layers);
  get("heads", c.heads);
  get("max_context_size", c.max_context_size);
  get("contexts_per_node", c.contexts_per_node);
  get("eval_contexts", c.eval_contexts);
  get("negative_ratio", c.negative_ratio);
  get("eval_negative_ratio", c.eval_negative_ratio);
  get("train_fraction", c.train_fraction);
  get("dev_fraction", c.dev_fraction);
  get("context_strategy", c.context_strategy);
  get("typed_negatives", c.typed_negatives);
  get("freeze_pretrained", c.freeze_pretrained);
  get("walks_per_node", c.walks_per_node);
  get("walk_length", c.walk_length);
  get("skipgram_window", c.skipgram_window);
  get("skipgram_negatives", c.skipgram_negatives);
  get("skipgram_epochs", c.skipgram_epochs);
  get("skipgram_lr", c.skipgram_lr);
  get("pretrain_epochs", c.pretrain_epochs);
  get("pretrain_lr", c.pretrain_lr);
  get("finetune_epochs", c.finetune_epochs);
  get("finetune_lr", c.finetune_lr);
  get("batch_size", c.batch_size);
  get("patience", c.patience);
  get("clip_norm", c.clip_norm);
  get("histogram_bins", c.histogram_bins);
  get("explain_relation", c.explain_relation);
  get("explain_contexts", c.explain_contexts);
  get("top_k_metapaths", c.top_k_metapaths);
  get("association_samples", c.association_samples);

  std::string problems;
  for (const auto& k : unknown) problems += " unknown:" + k;
  for (const auto& k : bad_type) problems += " bad-type:" + k;
  if (!problems.empty()) {
    throw ConfigError("config schema error:" + problems);
  }
}

void validate_config(const PipelineConfig& c) {
  std::vector<std::string> bad;
  if (c.dim == 0 || c.heads == 0 || c.layers == 0) bad.push_back("dim/layers/heads");
  if (c.heads != 0 && c.dim % c.heads != 0) bad.push_back("dim % heads != 0");
  if (c.max_context_size < 2) bad.push_back("max_context_size");
  if (c.contexts_per_node == 0) bad.push_back("contexts_per_node");
  if (c.eval_contexts == 0) bad.push_back("eval_contexts");
  if (c.negative_ratio == 0) bad.push_back("negative_ratio");
  if (c.train_fraction <= 0.0 || c.train_fraction + c.dev_fraction > 1.0) {
    bad.push_back("train_fraction/dev_fraction");
  }
  if (c.batch_size == 0) bad.push_back("batch_size");
  if (c.pretrain_lr <= 0.0 || c.finetune_lr <= 0.0 || c.skipgram_lr <= 0.0) {
    bad.push_back("learning rates");
  }
  if (c.histogram_bins < 2) bad.push_back("histogram_bins");
  try {
    slice::strategy_from_string(c.context_strategy);
  } catch (const std::exception&) {
    bad.push_back("context_strategy");
  }
  if (!bad.empty()) {
    std::string msg = "invalid config fields:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_manifest(const PipelineConfig& c, const std::string& stage) {
  const json cfg = config_to_json(c);
  json manifest{{"stage", stage},
                {"version", kVersion},
                {"seed", c.seed},
                {"config_hash", fnv1a(cfg.dump())},
                {"config", cfg}};
  std::ofstream out(c.workdir + "/manifest_" + stage + ".json");
  out << manifest.dump(2) << '\n';
}

void require_artifact(const std::string& path, const std::string& producing_stage) {
  if (!fs::exists(path)) {
    throw PrerequisiteError("missing " + path + "; run the `" + producing_stage +
                            "` stage first");
  }
}

struct Workspace {
  std::string graph_dir;
  std::string train_split;
  std::string dev_split;
  std::string test_split;
  std::string embeddings;
  std::string pretrain_contexts;
  std::string pretrained;
  std::string finetuned;

  explicit Workspace(const PipelineConfig& c)
      : graph_dir(c.workdir + "/graph"),
        train_split(c.workdir + "/splits/train.tsv"),
        dev_split(c.workdir + "/splits/dev.tsv"),
        test_split(c.workdir + "/splits/test.tsv"),
        embeddings(c.workdir + "/embeddings.tsv"),
        pretrain_contexts(c.workdir + "/pretrain_contexts.jsonl"),
        pretrained(c.workdir + "/pretrained.json"),
        finetuned(c.workdir + "/finetuned.json") {}
};

void write_curve_csv(const std::string& path,
                     const std::vector<std::tuple<std::size_t, std::string,
                                                  std::string, double>>& rows) {
  std::ofstream out(path);
  out << "epoch,split,metric,value\n";
  for (const auto& [epoch, split, metric, value] : rows) {
    out << epoch << ',' << split << ',' << metric << ','
        << slice::format_double(value) << '\n';
  }
}

int cmd_ingest(const PipelineConfig& c) {
  if (c.graph.empty()) throw ConfigError("config field `graph` is required");
  if (!fs::exists(c.graph)) throw ConfigError("graph file does not exist: " + c.graph);
  if (!c.node_types.empty() && !fs::exists(c.node_types)) {
    throw ConfigError("node type file does not exist: " + c.node_types);
  }

  slice::HeteroGraph g = slice::load_edgelist(c.graph, c.node_types);
  slice::Rng rng = slice::derive_rng(c.seed, 0x1a9e);
  slice::EdgeSplit split =
      slice::split_edges(g, c.train_fraction, c.dev_fraction, c.eval_negative_ratio,
                         rng, c.typed_negatives);

  fs::create_directories(c.workdir + "/splits");
  slice::save_graph(g, c.workdir + "/graph");
  const Workspace ws(c);
  slice::save_split(g, split.train_pos, ws.train_split);
  slice::save_split(g, split.dev, ws.dev_split);
  slice::save_split(g, split.test, ws.test_split);
  write_manifest(c, "ingest");

  std::cout << "ingest: " << g.num_nodes() << " nodes, " << g.num_edges()
            << " edges, " << g.num_relations() << " relations; train/dev/test = "
            << split.train_pos.size() << '/' << split.dev.size() << '/'
            << split.test.size() << '\n';
  return kExitOk;
}

int cmd_features(const PipelineConfig& c) {
  const Workspace ws(c);
  require_artifact(ws.graph_dir + "/edges.tsv", "ingest");
  require_artifact(ws.train_split, "ingest");

  slice::HeteroGraph full = slice::load_graph(ws.graph_dir);
  auto train_pos = slice::load_split(full, ws.train_split);
  slice::HeteroGraph g = slice::train_graph(full, train_pos);

  slice::EmbeddingTable table;
  std::vector<std::tuple<std::size_t, std::string, std::string, double>> curve;
  if (!c.embeddings.empty()) {
    if (!fs::exists(c.embeddings)) {
      throw ConfigError("embeddings file does not exist: " + c.embeddings);
    }
    table = slice::load_embedding_tsv(full, c.embeddings);
    if (table.dim() != c.dim) {
      throw ConfigError("pre-computed embeddings have width " +
                        std::to_string(table.dim()) + ", config dim is " +
                        std::to_string(c.dim));
    }
  } else {
    slice::Rng rng = slice::derive_rng(c.seed, 0xfea7);
    slice::WalkCorpus corpus =
        slice::generate_walks(g, c.walks_per_node, c.walk_length, rng);
    corpus.window = c.skipgram_window;
    corpus.negatives_per_target = c.skipgram_negatives;
    slice::SkipgramConfig scfg{c.dim, c.skipgram_epochs, c.skipgram_lr};
    slice::SkipgramResult result = slice::train_skipgram(corpus, g.num_nodes(), scfg, rng);
    table = std::move(result.table);
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
      curve.emplace_back(e, "features", "skipgram_loss", result.loss_curve[e]);
    }
  }
  slice::save_embedding_tsv(table, full, ws.embeddings);
  write_curve_csv(c.workdir + "/features_curve.csv", curve);
  write_manifest(c, "features");
  std::cout << "features: wrote " << ws.embeddings << " (" << table.dim()
            << " dims)\n";
  return kExitOk;
}

int cmd_pretrain(const PipelineConfig& c) {
  const Workspace ws(c);
  require_artifact(ws.graph_dir + "/edges.tsv", "ingest");
  require_artifact(ws.embeddings, "features");

  slice::HeteroGraph full = slice::load_graph(ws.graph_dir);
  auto train_pos = slice::load_split(full, ws.train_split);
  slice::HeteroGraph g = slice::train_graph(full, train_pos);
  slice::EmbeddingTable table = slice::load_embedding_tsv(full, ws.embeddings);
  if (table.dim() != c.dim) {
    throw ConfigError("embeddings width does not match config dim");
  }

  slice::ModelConfig mcfg;
  mcfg.num_nodes = full.num_nodes();
  mcfg.dim = c.dim;
  mcfg.layers = c.layers;
  mcfg.heads = c.heads;
  slice::Rng init_rng = slice::derive_rng(c.seed, 0x10de);
  slice::SliceModel model = slice::SliceModel::init(mcfg, init_rng);
  model.set_embeddings(table);

  std::vector<slice::ContextSubgraph> contexts;
  contexts.reserve(full.num_nodes() * c.contexts_per_node);
  for (slice::NodeId v = 0; v < full.num_nodes(); ++v) {
    for (std::size_t i = 0; i < c.contexts_per_node; ++i) {
      slice::Rng ctx_rng = slice::derive_rng(c.seed, 0xc0de + v, i);
      contexts.push_back(slice::node_context(g, v, c.max_context_size, ctx_rng));
    }
  }
  slice::save_contexts_jsonl(contexts, ws.pretrain_contexts);

  slice::TrainConfig tcfg;
  tcfg.epochs = c.pretrain_epochs;
  tcfg.lr = c.pretrain_lr;
  tcfg.batch_size = c.batch_size;
  tcfg.seed = c.seed;
  tcfg.patience = c.patience;
  tcfg.clip_norm = c.clip_norm;
  slice::Rng rng = slice::derive_rng(c.seed, 0x9e7a);
  slice::PretrainResult result = slice::run_pretraining(model, contexts, tcfg, rng);

  std::vector<std::tuple<std::size_t, std::string, std::string, double>> curve;
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    curve.emplace_back(e + 1, "pretrain", "loss", result.epoch_loss[e]);
  }
  write_curve_csv(c.workdir + "/pretrain_curve.csv", curve);
  slice::save_checkpoint(model, ws.pretrained);
  write_manifest(c, "pretrain");
  if (result.aborted) {
    std::cerr << "pretrain: aborted on non-finite loss\n";
    return kExitNumeric;
  }
  std::cout << "pretrain: " << contexts.size() << " contexts, best epoch "
            << result.best_epoch << '\n';
  return kExitOk;
}

int cmd_finetune(const PipelineConfig& c) {
  const Workspace ws(c);
  require_artifact(ws.pretrained, "pretrain");

  slice::HeteroGraph full = slice::load_graph(ws.graph_dir);
  slice::EdgeSplit split;
  split.train_pos = slice::load_split(full, ws.train_split);
  if (fs::exists(ws.dev_split)) split.dev = slice::load_split(full, ws.dev_split);
  slice::HeteroGraph g = slice::train_graph(full, split.train_pos);

  slice::SliceModel model = slice::load_checkpoint(ws.pretrained);
  if (model.cfg.num_nodes != full.num_nodes()) {
    throw ConfigError("checkpoint was trained on a different graph");
  }

  slice::FinetuneOptions opts;
  opts.max_context_size = c.max_context_size;
  opts.negative_ratio = c.negative_ratio;
  opts.eval_contexts = c.eval_contexts;
  opts.strategy = slice::strategy_from_string(c.context_strategy);
  opts.freeze_pretrained = c.freeze_pretrained;
  opts.type_constrained_negatives = c.typed_negatives;

  slice::TrainConfig tcfg;
  tcfg.epochs = c.finetune_epochs;
  tcfg.lr = c.finetune_lr;
  tcfg.batch_size = c.batch_size;
  tcfg.seed = c.seed;
  tcfg.patience = c.patience;
  tcfg.clip_norm = c.clip_norm;

  slice::Rng rng = slice::derive_rng(c.seed, 0xf17e);
  slice::FinetuneResult result = slice::run_finetuning(model, g, split, opts, tcfg, rng);

  std::vector<std::tuple<std::size_t, std::string, std::string, double>> curve;
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    curve.emplace_back(e + 1, "train", "loss", result.epoch_loss[e]);
  }
  for (std::size_t e = 0; e < result.dev_f1.size(); ++e) {
    curve.emplace_back(e + 1, "dev", "micro_f1", result.dev_f1[e]);
  }
  write_curve_csv(c.workdir + "/finetune_curve.csv", curve);
  slice::save_checkpoint(model, ws.finetuned);
  write_manifest(c, "finetune");
  if (result.aborted) {
    std::cerr << "finetune: aborted on non-finite loss\n";
    return kExitNumeric;
  }
  std::cout << "finetune: best epoch " << result.best_epoch << '\n';
  return kExitOk;
}

std::vector<slice::PredictionRecord> score_split(const slice::SliceModel& model,
                                                 const slice::HeteroGraph& g,
                                                 const std::vector<slice::LabeledEdge>& edges,
                                                 const PipelineConfig& c,
                                                 std::uint64_t stream) {
  std::vector<slice::PredictionRecord> records(edges.size());
  const auto strategy = slice::strategy_from_string(c.context_strategy);
  auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      // Per-pair generator, so results are independent of the thread count.
      slice::Rng rng = slice::derive_rng(c.seed, stream, i);
      records[i] = slice::score_pair(model, g, edges[i].src, edges[i].dst,
                                     c.eval_contexts, c.max_context_size, rng,
                                     strategy);
      records[i].label = edges[i].label;
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, c.threads);
  if (threads == 1 || edges.size() < 2 * threads) {
    score_range(0, edges.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (edges.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(edges.size(), lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(score_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return records;
}

int cmd_evaluate(const PipelineConfig& c) {
  const Workspace ws(c);
  require_artifact(ws.finetuned, "finetune");

  slice::HeteroGraph full = slice::load_graph(ws.graph_dir);
  auto train_pos = slice::load_split(full, ws.train_split);
  slice::HeteroGraph g = slice::train_graph(full, train_pos);
  slice::SliceModel model = slice::load_checkpoint(ws.finetuned);

  std::vector<slice::LabeledEdge> dev;
  if (fs::exists(ws.dev_split)) dev = slice::load_split(full, ws.dev_split);
  require_artifact(ws.test_split, "ingest");
  auto test = slice::load_split(full, ws.test_split);

  auto dev_records = score_split(model, g, dev, c, 0xd0e5);
  auto test_records = score_split(model, g, test, c, 0x7e57);

  double threshold = 0.5;
  if (!dev_records.empty()) {
    threshold = slice::choose_threshold(dev_records);
  } else {
    std::cerr << "warning: no dev records; using threshold 0.5\n";
  }

  std::vector<std::tuple<std::size_t, std::string, std::string, double>> rows;
  rows.emplace_back(0, "config", "threshold", threshold);
  if (!dev_records.empty()) {
    rows.emplace_back(0, "dev", "micro_f1", slice::micro_f1(dev_records, threshold));
    rows.emplace_back(0, "dev", "auroc", slice::auroc(dev_records));
  }
  rows.emplace_back(0, "test", "micro_f1", slice::micro_f1(test_records, threshold));
  rows.emplace_back(0, "test", "auroc", slice::auroc(test_records));
  write_curve_csv(c.workdir + "/metrics.csv", rows);

  slice::save_predictions_csv(test_records, full, threshold,
                              c.workdir + "/predictions.csv");
  slice::save_histogram_csv(
      slice::export_score_distributions(test_records, c.histogram_bins),
      c.workdir + "/score_histogram.csv");
  write_manifest(c, "evaluate");

  std::cout << "evaluate: test micro-F1 "
            << slice::format_double(slice::micro_f1(test_records, threshold))
            << ", AUROC " << slice::format_double(slice::auroc(test_records)) << '\n';
  return kExitOk;
}

int cmd_explain(const PipelineConfig& c) {
  const Workspace ws(c);
  require_artifact(ws.finetuned, "finetune");

  slice::HeteroGraph full = slice::load_graph(ws.graph_dir);
  auto train_pos = slice::load_split(full, ws.train_split);
  slice::HeteroGraph g = slice::train_graph(full, train_pos);
  slice::SliceModel model = slice::load_checkpoint(ws.finetuned);

  slice::RelId relation = 0;
  if (!c.explain_relation.empty()) {
    auto rel = full.relation_id(c.explain_relation);
    if (!rel) throw ConfigError("unknown relation: " + c.explain_relation);
    relation = *rel;
  }

  // Positive pairs of the chosen relation, preferring held-out edges.
  std::vector<slice::LabeledEdge> pool;
  for (const char* split_path : {ws.test_split.c_str(), ws.dev_split.c_str()}) {
    if (!fs::exists(split_path)) continue;
    for (const auto& e : slice::load_split(full, split_path)) {
      if (e.label == 1 && e.rel == relation) pool.push_back(e);
    }
  }
  if (pool.empty()) {
    for (const auto& e : train_pos) {
      if (e.rel == relation) pool.push_back(e);
    }
  }
  if (pool.size() > c.explain_contexts) pool.resize(c.explain_contexts);

  const auto strategy = slice::strategy_from_string(c.context_strategy);
  std::vector<slice::ContextSubgraph> contexts;
  contexts.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    slice::Rng rng = slice::derive_rng(c.seed, 0xe81a, i);
    contexts.push_back(slice::sample_pair_context(g, pool[i].src, pool[i].dst,
                                                  c.max_context_size, rng, strategy));
  }

  std::size_t skipped = 0;
  auto paths = slice::mine_metapaths(model, g, relation, contexts,
                                     c.top_k_metapaths, &skipped);
  slice::save_metapaths_csv(paths, c.workdir + "/metapaths.csv");

  std::vector<slice::ContextSubgraph> samples(
      contexts.begin(),
      contexts.begin() +
          static_cast<std::ptrdiff_t>(std::min(c.association_samples, contexts.size())));
  slice::save_associations_json(model, full, samples,
                                c.workdir + "/associations.json");
  write_manifest(c, "explain");

  std::cout << "explain: relation `" << full.relation_name(relation) << "`, "
            << contexts.size() << " contexts (" << skipped << " skipped), top-"
            << paths.size() << " metapaths written\n";
  return kExitOk;
}

PipelineConfig load_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  PipelineConfig c;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config: " + config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    apply_json(c, j);
  }
  if (!overrides.empty()) {
    json patch = json::object();
    for (const std::string& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("override must look like key=value: " + kv);
      }
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // plain strings may come unquoted
      }
      patch[key] = parsed;
    }
    apply_json(c, patch);
  }
  validate_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual node embeddings for heterogeneous graphs"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("-s,--set", overrides, "Override a config field (key=value)");

  struct Stage {
    std::string name;
    int (*run)(const PipelineConfig&);
  };
  const std::vector<Stage> stages = {
      {"ingest", cmd_ingest},       {"features", cmd_features},
      {"pretrain", cmd_pretrain},   {"finetune", cmd_finetune},
      {"evaluate", cmd_evaluate},   {"explain", cmd_explain},
  };
  for (const Stage& stage : stages) {
    app.add_subcommand(stage.name, "Run the " + stage.name + " stage");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = load_config(config_path, overrides);
    std::filesystem::create_directories(cfg.workdir);
    for (const Stage& stage : stages) {
      if (app.got_subcommand(stage.name)) return stage.run(cfg);
    }
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const slice::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
