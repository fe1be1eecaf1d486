// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slice/graph.hpp"
#include "slice/rng.hpp"

namespace slice {

enum class ContextStrategy { shortest_path, random_walk, node_context };

const char* to_string(ContextStrategy s);
ContextStrategy strategy_from_string(const std::string& s);

/// A small set of distinct node ids sampled around a node or node pair. The
/// node order is an indexing convenience only; the model consumes the set.
struct ContextSubgraph {
  std::vector<NodeId> nodes;
  std::optional<std::pair<NodeId, NodeId>> anchor;
  std::optional<std::size_t> mask_pos;
  ContextStrategy strategy = ContextStrategy::node_context;

  std::optional<std::size_t> find(NodeId v) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] == v) return i;
    }
    return std::nullopt;
  }
};

/// Deduplicated shortest path between the anchors; empty if none fits in
/// max_size nodes.
std::optional<ContextSubgraph> pair_context_shortest(const HeteroGraph& g, NodeId u,
                                                     NodeId v, std::size_t max_size);

/// Random walk from u accepted the first time it reaches v within max_hops,
/// deduplicated. Falls back to the shortest path after `retries` misses.
std::optional<ContextSubgraph> pair_context_random(const HeteroGraph& g, NodeId u,
                                                   NodeId v, std::size_t max_hops,
                                                   Rng& rng, std::size_t retries = 20);

/// Context for a pair that may be disconnected: one walk from each endpoint,
/// merged and truncated to max_size with both anchors kept.
ContextSubgraph pair_context_fallback(const HeteroGraph& g, NodeId u, NodeId v,
                                      std::size_t max_size, Rng& rng);

/// Always produces a context for (u, v): random walk, then shortest path,
/// then the two-walk fallback.
ContextSubgraph sample_pair_context(const HeteroGraph& g, NodeId u, NodeId v,
                                    std::size_t max_size, Rng& rng,
                                    ContextStrategy strategy = ContextStrategy::random_walk);

/// Deduplicated random walk of max_size nodes starting at v; no anchors.
ContextSubgraph node_context(const HeteroGraph& g, NodeId v, std::size_t max_size,
                             Rng& rng);

/// Replace one uniformly chosen non-anchor slot with mask_id. Returns the
/// masked context and the original node id. The graph itself is untouched.
std::pair<ContextSubgraph, NodeId> mask_random_node(const ContextSubgraph& ctx,
                                                    NodeId mask_id, Rng& rng);

/// Expected contexts per node: train_ratio * num_edges / num_nodes.
double estimate_contexts_per_node(std::size_t num_edges, std::size_t num_nodes,
                                  double train_ratio);

/// JSONL cache: one {nodes, anchor, strategy, mask_pos} object per line.
void save_contexts_jsonl(const std::vector<ContextSubgraph>& contexts,
                         const std::string& path);
std::vector<ContextSubgraph> load_contexts_jsonl(const std::string& path);

}  // namespace slice
