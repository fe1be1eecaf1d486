// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "slice/context.hpp"
#include "slice/graph.hpp"
#include "slice/model.hpp"

namespace slice {

struct PredictionRecord {
  NodeId u = 0;
  NodeId v = 0;
  int label = 0;
  double score = 0.0;
  ContextSubgraph best_context;
};

/// Score (u, v) as the maximum similarity of the anchor rows over n_contexts
/// sampled pair contexts; keeps the context that won.
PredictionRecord score_pair(const SliceModel& model, const HeteroGraph& g, NodeId u,
                            NodeId v, std::size_t n_contexts, std::size_t max_size,
                            Rng& rng,
                            ContextStrategy strategy = ContextStrategy::random_walk);

/// Micro-averaged F1 over both classes with the decision rule score >= threshold.
double micro_f1(const std::vector<PredictionRecord>& records, double threshold);

/// Area under the ROC curve via the rank statistic, ties averaged. Requires
/// both labels to be present.
double auroc(const std::vector<PredictionRecord>& records);

/// Lowest threshold maximizing micro-F1 on dev. Candidates are the distinct
/// scores plus one value just above the maximum (the all-negative rule).
double choose_threshold(const std::vector<PredictionRecord>& records);

struct ScoreHistogram {
  std::vector<double> bin_lo;
  std::vector<double> bin_hi;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Per-bin score counts over [0, 1], separated by label.
ScoreHistogram export_score_distributions(const std::vector<PredictionRecord>& records,
                                          std::size_t bins);

struct AssociationSummary {
  std::vector<Matrix> raw;         // per layer, head-averaged, row-stochastic
  std::vector<Matrix> normalized;  // per layer, min-max scaled to [0, 1]
};

/// Head-averaged association matrices for one context, with a display
/// normalization per matrix.
AssociationSummary extract_association(const SliceModel& model,
                                       const ContextSubgraph& ctx);

struct Metapath {
  std::vector<std::string> type_sequence;
  std::size_t support = 0;
  double mean_attention = 0.0;

  /// "APA" when every label is a single character, "A-P-A" style otherwise.
  std::string signature() const;
};

/// Top-k node-type paths mined from positive pair contexts: walk from anchor
/// v toward anchor u, always hopping to the graph-adjacent context node with
/// the highest final-layer association. Contexts whose walk cannot reach u
/// are counted in `skipped`.
std::vector<Metapath> mine_metapaths(const SliceModel& model, const HeteroGraph& g,
                                     RelId relation,
                                     const std::vector<ContextSubgraph>& contexts,
                                     std::size_t k, std::size_t* skipped = nullptr);

void save_predictions_csv(const std::vector<PredictionRecord>& records,
                          const HeteroGraph& g, double threshold,
                          const std::string& path);
void save_histogram_csv(const ScoreHistogram& hist, const std::string& path);
void save_metapaths_csv(const std::vector<Metapath>& paths, const std::string& path);
void save_associations_json(const SliceModel& model, const HeteroGraph& g,
                            const std::vector<ContextSubgraph>& contexts,
                            const std::string& path);

}  // namespace slice
