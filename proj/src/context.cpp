// SPDX-License-Identifier: Apache-2.0
#include "slice/context.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace slice {

namespace {

std::vector<NodeId> dedup_keep_order(const std::vector<NodeId>& seq) {
  std::vector<NodeId> out;
  out.reserve(seq.size());
  for (NodeId v : seq) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

// Uniform walk starting at v with up to max_nodes nodes, truncated at dead ends.
std::vector<NodeId> random_walk(const HeteroGraph& g, NodeId v, std::size_t max_nodes,
                                Rng& rng) {
  std::vector<NodeId> seq{v};
  NodeId cur = v;
  while (seq.size() < max_nodes) {
    const auto& nbrs = g.neighbors(cur);
    if (nbrs.empty()) break;
    cur = nbrs[uniform_index(rng, nbrs.size())].first;
    seq.push_back(cur);
  }
  return seq;
}

}  // namespace

const char* to_string(ContextStrategy s) {
  switch (s) {
    case ContextStrategy::shortest_path: return "shortest_path";
    case ContextStrategy::random_walk: return "random_walk";
    case ContextStrategy::node_context: return "node_context";
  }
  return "node_context";
}

ContextStrategy strategy_from_string(const std::string& s) {
  if (s == "shortest_path") return ContextStrategy::shortest_path;
  if (s == "random_walk" || s == "random") return ContextStrategy::random_walk;
  if (s == "node_context") return ContextStrategy::node_context;
  throw std::invalid_argument("unknown context strategy: " + s);
}

std::optional<ContextSubgraph> pair_context_shortest(const HeteroGraph& g, NodeId u,
                                                     NodeId v, std::size_t max_size) {
  if (max_size < 2) throw std::invalid_argument("pair context needs max_size >= 2");
  auto path = bfs_shortest_path(g, u, v, max_size - 1);
  if (!path) return std::nullopt;
  ContextSubgraph ctx;
  ctx.nodes = dedup_keep_order(*path);
  ctx.anchor = std::make_pair(u, v);
  ctx.strategy = ContextStrategy::shortest_path;
  return ctx;
}

std::optional<ContextSubgraph> pair_context_random(const HeteroGraph& g, NodeId u,
                                                   NodeId v, std::size_t max_hops,
                                                   Rng& rng, std::size_t retries) {
  if (max_hops < 1) throw std::invalid_argument("pair context needs max_hops >= 1");
  if (u == v) {
    ContextSubgraph ctx;
    ctx.nodes = {u};
    ctx.anchor = std::make_pair(u, v);
    ctx.strategy = ContextStrategy::random_walk;
    return ctx;
  }
  for (std::size_t attempt = 0; attempt < retries; ++attempt) {
    std::vector<NodeId> seq{u};
    NodeId cur = u;
    for (std::size_t hop = 0; hop < max_hops; ++hop) {
      const auto& nbrs = g.neighbors(cur);
      if (nbrs.empty()) break;
      cur = nbrs[uniform_index(rng, nbrs.size())].first;
      seq.push_back(cur);
      if (cur == v) {
        ContextSubgraph ctx;
        ctx.nodes = dedup_keep_order(seq);
        ctx.anchor = std::make_pair(u, v);
        ctx.strategy = ContextStrategy::random_walk;
        return ctx;
      }
    }
  }
  auto fallback = pair_context_shortest(g, u, v, max_hops + 1);
  if (fallback) fallback->strategy = ContextStrategy::random_walk;
  return fallback;
}

ContextSubgraph pair_context_fallback(const HeteroGraph& g, NodeId u, NodeId v,
                                      std::size_t max_size, Rng& rng) {
  if (max_size < 2) throw std::invalid_argument("pair context needs max_size >= 2");
  const std::size_t from_u = (max_size + 1) / 2;
  std::vector<NodeId> seq = random_walk(g, u, from_u, rng);
  std::vector<NodeId> tail = random_walk(g, v, max_size - from_u + 1, rng);
  seq.insert(seq.end(), tail.begin(), tail.end());
  std::vector<NodeId> nodes = dedup_keep_order(seq);
  // Trim from the back, but never the anchors.
  while (nodes.size() > max_size) {
    for (std::size_t i = nodes.size(); i-- > 0;) {
      if (nodes[i] != u && nodes[i] != v) {
        nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(i));
        break;
      }
    }
  }
  ContextSubgraph ctx;
  ctx.nodes = std::move(nodes);
  ctx.anchor = std::make_pair(u, v);
  ctx.strategy = ContextStrategy::random_walk;
  return ctx;
}

ContextSubgraph sample_pair_context(const HeteroGraph& g, NodeId u, NodeId v,
                                    std::size_t max_size, Rng& rng,
                                    ContextStrategy strategy) {
  if (strategy == ContextStrategy::shortest_path) {
    if (auto ctx = pair_context_shortest(g, u, v, max_size)) return *ctx;
  } else {
    if (auto ctx = pair_context_random(g, u, v, max_size - 1, rng)) return *ctx;
  }
  return pair_context_fallback(g, u, v, max_size, rng);
}

ContextSubgraph node_context(const HeteroGraph& g, NodeId v, std::size_t max_size,
                             Rng& rng) {
  if (max_size < 1) throw std::invalid_argument("node context needs max_size >= 1");
  if (v >= g.num_nodes()) throw std::invalid_argument("node id out of range");
  ContextSubgraph ctx;
  ctx.nodes = dedup_keep_order(random_walk(g, v, max_size, rng));
  ctx.strategy = ContextStrategy::node_context;
  return ctx;
}

std::pair<ContextSubgraph, NodeId> mask_random_node(const ContextSubgraph& ctx,
                                                    NodeId mask_id, Rng& rng) {
  if (ctx.nodes.empty()) throw std::invalid_argument("cannot mask an empty context");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ctx.nodes.size(); ++i) {
    if (ctx.anchor &&
        (ctx.nodes[i] == ctx.anchor->first || ctx.nodes[i] == ctx.anchor->second)) {
      continue;
    }
    eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw std::invalid_argument("context has no maskable (non-anchor) position");
  }
  std::size_t pos = eligible[uniform_index(rng, eligible.size())];
  ContextSubgraph masked = ctx;
  NodeId target = masked.nodes[pos];
  masked.nodes[pos] = mask_id;
  masked.mask_pos = pos;
  return {std::move(masked), target};
}

double estimate_contexts_per_node(std::size_t num_edges, std::size_t num_nodes,
                                  double train_ratio) {
  if (num_nodes == 0) throw std::invalid_argument("num_nodes must be > 0");
  return train_ratio * static_cast<double>(num_edges) / static_cast<double>(num_nodes);
}

void save_contexts_jsonl(const std::vector<ContextSubgraph>& contexts,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const ContextSubgraph& ctx : contexts) {
    nlohmann::json j;
    j["nodes"] = ctx.nodes;
    if (ctx.anchor) {
      j["anchor"] = {ctx.anchor->first, ctx.anchor->second};
    } else {
      j["anchor"] = nullptr;
    }
    if (ctx.mask_pos) {
      j["mask_pos"] = *ctx.mask_pos;
    } else {
      j["mask_pos"] = nullptr;
    }
    j["strategy"] = to_string(ctx.strategy);
    out << j.dump() << '\n';
  }
}

std::vector<ContextSubgraph> load_contexts_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ContextSubgraph> contexts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ContextSubgraph ctx;
    ctx.nodes = j.at("nodes").get<std::vector<NodeId>>();
    if (!j.at("anchor").is_null()) {
      auto a = j.at("anchor");
      ctx.anchor = std::make_pair(a.at(0).get<NodeId>(), a.at(1).get<NodeId>());
    }
    if (!j.at("mask_pos").is_null()) {
      ctx.mask_pos = j.at("mask_pos").get<std::size_t>();
    }
    ctx.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    contexts.push_back(std::move(ctx));
  }
  return contexts;
}

}  // namespace slice
