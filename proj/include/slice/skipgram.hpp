// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "slice/graph.hpp"
#include "slice/matrix.hpp"
#include "slice/rng.hpp"

namespace slice {

/// Global node features: (N+1) x d, last row reserved for the mask token.
struct EmbeddingTable {
  Matrix weights;

  std::size_t dim() const { return weights.cols(); }
  std::size_t num_nodes() const { return weights.rows() - 1; }
  NodeId mask_id() const { return static_cast<NodeId>(weights.rows() - 1); }
};

struct WalkCorpus {
  std::vector<std::vector<NodeId>> walks;
  std::size_t window = 10;
  std::size_t negatives_per_target = 5;
};

struct SkipgramConfig {
  std::size_t dim = 128;
  std::size_t epochs = 5;
  double lr = 0.025;
};

struct SkipgramResult {
  EmbeddingTable table;
  /// loss_curve[0] is an evaluation pass at the initialization; entry e >= 1
  /// is the mean pair loss seen during epoch e.
  std::vector<double> loss_curve;
};

/// walks_per_node uniform walks of walk_length nodes from every node,
/// truncated at dead ends.
WalkCorpus generate_walks(const HeteroGraph& g, std::size_t walks_per_node,
                          std::size_t walk_length, Rng& rng);

/// Skip-gram with negative sampling over the walk corpus (SGD, unigram^0.75
/// noise distribution). The mask row starts at zero and is never touched.
SkipgramResult train_skipgram(const WalkCorpus& corpus, std::size_t num_nodes,
                              const SkipgramConfig& cfg, Rng& rng);

/// TSV round-trip: `node_token<TAB>v1<TAB>...<TAB>vd`. The loader checks that
/// every graph node is covered and all rows share one width.
void save_embedding_tsv(const EmbeddingTable& table, const HeteroGraph& g,
                        const std::string& path);
EmbeddingTable load_embedding_tsv(const HeteroGraph& g, const std::string& path);

}  // namespace slice
