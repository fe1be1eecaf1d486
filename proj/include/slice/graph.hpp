// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "slice/rng.hpp"

namespace slice {

using NodeId = std::uint32_t;
using RelId = std::uint32_t;
using TypeId = std::uint32_t;

struct Edge {
  NodeId src = 0;
  RelId rel = 0;
  NodeId dst = 0;

  bool operator==(const Edge&) const = default;
};

struct LabeledEdge {
  NodeId src = 0;
  RelId rel = 0;
  NodeId dst = 0;
  int label = 1;
};

/// Typed node/edge store with an undirected adjacency index. Immutable after
/// construction; relation labels are preserved on both directions so contexts
/// and metapaths can be named.
class HeteroGraph {
 public:
  HeteroGraph() = default;
  HeteroGraph(std::size_t num_nodes, std::vector<Edge> edges,
              std::vector<TypeId> node_type, std::vector<std::string> node_tokens,
              std::vector<std::string> relation_names,
              std::vector<std::string> type_names);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  std::size_t num_types() const { return type_names_.size(); }

  const std::vector<Edge>& edges() const { return edges_; }
  TypeId node_type(NodeId v) const { return node_type_[v]; }
  const std::vector<TypeId>& node_types() const { return node_type_; }

  /// Neighbors of v with the relation of the connecting edge, sorted by
  /// (neighbor, relation) and deduplicated.
  const std::vector<std::pair<NodeId, RelId>>& neighbors(NodeId v) const {
    return adjacency_[v];
  }
  std::size_t degree(NodeId v) const { return adjacency_[v].size(); }

  /// True if any edge joins u and v (either direction, any relation).
  bool has_edge(NodeId u, NodeId v) const;

  const std::string& node_token(NodeId v) const { return node_tokens_[v]; }
  const std::string& relation_name(RelId r) const { return relation_names_[r]; }
  const std::string& type_name(TypeId t) const { return type_names_[t]; }
  const std::vector<std::string>& node_tokens() const { return node_tokens_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  const std::vector<std::string>& type_names() const { return type_names_; }

  std::optional<NodeId> node_id(const std::string& token) const;
  std::optional<RelId> relation_id(const std::string& name) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<TypeId> node_type_;
  std::vector<std::vector<std::pair<NodeId, RelId>>> adjacency_;
  std::vector<std::string> node_tokens_;
  std::vector<std::string> relation_names_;
  std::vector<std::string> type_names_;
};

struct EdgeSplit {
  std::vector<LabeledEdge> train_pos;
  std::vector<LabeledEdge> dev;
  std::vector<LabeledEdge> test;
};

/// Key for unordered node pairs, used to keep splits and negatives disjoint.
inline std::uint64_t pair_key(NodeId u, NodeId v) {
  NodeId lo = u < v ? u : v;
  NodeId hi = u < v ? v : u;
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

using PairSet = std::unordered_set<std::uint64_t>;

/// Parse a TSV edge list `src<TAB>rel<TAB>dst` (tokens mapped to dense ids in
/// first-seen order) plus an optional `node<TAB>type` file. Duplicate triples
/// are dropped with a warning; a type entry for an unknown node is an error.
HeteroGraph load_edgelist(const std::string& edge_path,
                          const std::string& type_path = "");

/// Corrupt the destination of each positive `ratio` times. Rejects pairs that
/// exist in g, equal the source, or were already emitted (or listed in
/// `forbidden`, which is updated in place when given).
std::vector<LabeledEdge> sample_negative_edges(const HeteroGraph& g,
                                               const std::vector<LabeledEdge>& positives,
                                               std::size_t ratio, Rng& rng,
                                               bool type_constrained = false,
                                               PairSet* forbidden = nullptr);

/// One shortest undirected path from u to v, ties broken toward smaller
/// neighbor ids. Empty result if the distance exceeds max_len edges.
std::optional<std::vector<NodeId>> bfs_shortest_path(const HeteroGraph& g, NodeId u,
                                                     NodeId v, std::size_t max_len);

/// Split positive edges into train/dev/test, keeping all edges of an
/// unordered node pair in the same split, then attach sampled negatives to
/// dev and test at `eval_negative_ratio`.
EdgeSplit split_edges(const HeteroGraph& g, double train_fraction,
                      double dev_fraction, std::size_t eval_negative_ratio,
                      Rng& rng, bool type_constrained = false);

/// Graph directory round-trip: edges.tsv, node_ids.tsv, relation_ids.tsv,
/// node_types.tsv. Ids are explicit so reloading reproduces the graph bit for
/// bit.
void save_graph(const HeteroGraph& g, const std::string& dir);
HeteroGraph load_graph(const std::string& dir);

void save_split(const HeteroGraph& g, const std::vector<LabeledEdge>& edges,
                const std::string& path);
std::vector<LabeledEdge> load_split(const HeteroGraph& g, const std::string& path);

/// Graph restricted to the given edges (node/relation/type tables shared).
HeteroGraph train_graph(const HeteroGraph& full, const std::vector<LabeledEdge>& train_pos);

}  // namespace slice
