// SPDX-License-Identifier: Apache-2.0
#include "slice/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace slice {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

HeteroGraph::HeteroGraph(std::size_t num_nodes, std::vector<Edge> edges,
                         std::vector<TypeId> node_type,
                         std::vector<std::string> node_tokens,
                         std::vector<std::string> relation_names,
                         std::vector<std::string> type_names)
    : num_nodes_(num_nodes),
      edges_(std::move(edges)),
      node_type_(std::move(node_type)),
      node_tokens_(std::move(node_tokens)),
      relation_names_(std::move(relation_names)),
      type_names_(std::move(type_names)) {
  if (node_type_.size() != num_nodes_) {
    throw std::invalid_argument("node_type must cover every node");
  }
  for (const Edge& e : edges_) {
    if (e.src >= num_nodes_ || e.dst >= num_nodes_) {
      throw std::invalid_argument("edge references node id >= num_nodes");
    }
    if (e.rel >= relation_names_.size()) {
      throw std::invalid_argument("edge references unknown relation id");
    }
  }
  adjacency_.assign(num_nodes_, {});
  for (const Edge& e : edges_) {
    adjacency_[e.src].emplace_back(e.dst, e.rel);
    if (e.dst != e.src) adjacency_[e.dst].emplace_back(e.src, e.rel);
  }
  for (auto& nbrs : adjacency_) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
}

bool HeteroGraph::has_edge(NodeId u, NodeId v) const {
  if (u >= num_nodes_ || v >= num_nodes_) return false;
  const auto& nbrs = adjacency_[u];
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(),
                             std::make_pair(v, RelId{0}));
  return it != nbrs.end() && it->first == v;
}

std::optional<NodeId> HeteroGraph::node_id(const std::string& token) const {
  for (std::size_t i = 0; i < node_tokens_.size(); ++i) {
    if (node_tokens_[i] == token) return static_cast<NodeId>(i);
  }
  return std::nullopt;
}

std::optional<RelId> HeteroGraph::relation_id(const std::string& name) const {
  for (std::size_t i = 0; i < relation_names_.size(); ++i) {
    if (relation_names_[i] == name) return static_cast<RelId>(i);
  }
  return std::nullopt;
}

HeteroGraph load_edgelist(const std::string& edge_path, const std::string& type_path) {
  std::ifstream in(edge_path);
  if (!in) throw std::runtime_error("cannot open edge list: " + edge_path);

  std::unordered_map<std::string, NodeId> node_ids;
  std::unordered_map<std::string, RelId> rel_ids;
  std::vector<std::string> node_tokens;
  std::vector<std::string> relation_names;
  std::vector<Edge> edges;
  std::unordered_map<std::uint64_t, std::vector<RelId>> seen;
  std::size_t duplicates = 0;

  auto intern_node = [&](const std::string& tok) {
    auto [it, inserted] = node_ids.emplace(tok, static_cast<NodeId>(node_tokens.size()));
    if (inserted) node_tokens.push_back(tok);
    return it->second;
  };
  auto intern_rel = [&](const std::string& tok) {
    auto [it, inserted] = rel_ids.emplace(tok, static_cast<RelId>(relation_names.size()));
    if (inserted) relation_names.push_back(tok);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw std::runtime_error(edge_path + ":" + std::to_string(line_no) +
                               ": expected `src<TAB>rel<TAB>dst`");
    }
    Edge e{intern_node(fields[0]), intern_rel(fields[1]), intern_node(fields[2])};
    auto& rels = seen[pair_key(e.src, e.dst)];
    bool dup = false;
    for (RelId r : rels) {
      if (r == e.rel) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++duplicates;
      continue;
    }
    rels.push_back(e.rel);
    edges.push_back(e);
  }
  if (duplicates > 0) {
    std::cerr << "warning: dropped " << duplicates << " duplicate edge(s) from "
              << edge_path << "\n";
  }

  std::vector<TypeId> node_type(node_tokens.size(), 0);
  std::vector<std::string> type_names;
  if (type_path.empty()) {
    type_names.push_back("node");
  } else {
    std::ifstream tin(type_path);
    if (!tin) throw std::runtime_error("cannot open node type file: " + type_path);
    std::unordered_map<std::string, TypeId> type_ids;
    auto intern_type = [&](const std::string& tok) {
      auto [it, inserted] = type_ids.emplace(tok, static_cast<TypeId>(type_names.size()));
      if (inserted) type_names.push_back(tok);
      return it->second;
    };
    std::vector<bool> typed(node_tokens.size(), false);
    std::size_t tline = 0;
    while (std::getline(tin, line)) {
      ++tline;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_tabs(line);
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        throw std::runtime_error(type_path + ":" + std::to_string(tline) +
                                 ": expected `node<TAB>type`");
      }
      auto it = node_ids.find(fields[0]);
      if (it == node_ids.end()) {
        throw std::runtime_error(type_path + ":" + std::to_string(tline) +
                                 ": node `" + fields[0] + "` not present in edge list");
      }
      node_type[it->second] = intern_type(fields[1]);
      typed[it->second] = true;
    }
    // Nodes the type file does not mention fall into a catch-all type.
    bool missing = false;
    for (bool t : typed) missing |= !t;
    if (missing) {
      TypeId fallback = static_cast<TypeId>(type_names.size());
      type_names.push_back("_untyped");
      for (std::size_t v = 0; v < typed.size(); ++v) {
        if (!typed[v]) node_type[v] = fallback;
      }
    }
  }

  return HeteroGraph(node_tokens.size(), std::move(edges), std::move(node_type),
                     std::move(node_tokens), std::move(relation_names),
                     std::move(type_names));
}

std::vector<LabeledEdge> sample_negative_edges(const HeteroGraph& g,
                                               const std::vector<LabeledEdge>& positives,
                                               std::size_t ratio, Rng& rng,
                                               bool type_constrained,
                                               PairSet* forbidden) {
  if (ratio < 1) throw std::invalid_argument("negative ratio must be >= 1");
  PairSet local;
  PairSet& used = forbidden ? *forbidden : local;

  // Candidate pools per node type, only needed for constrained corruption.
  std::vector<std::vector<NodeId>> by_type;
  if (type_constrained) {
    by_type.resize(g.num_types());
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      by_type[g.node_type(v)].push_back(v);
    }
  }

  std::vector<LabeledEdge> negatives;
  negatives.reserve(positives.size() * ratio);
  const std::size_t max_tries = 200 + 20 * g.num_nodes();
  for (const LabeledEdge& pos : positives) {
    for (std::size_t k = 0; k < ratio; ++k) {
      bool found = false;
      for (std::size_t t = 0; t < max_tries; ++t) {
        NodeId cand;
        if (type_constrained) {
          const auto& pool = by_type[g.node_type(pos.dst)];
          cand = pool[uniform_index(rng, pool.size())];
        } else {
          cand = static_cast<NodeId>(uniform_index(rng, g.num_nodes()));
        }
        if (cand == pos.src) continue;
        if (g.has_edge(pos.src, cand)) continue;
        if (used.count(pair_key(pos.src, cand))) continue;
        used.insert(pair_key(pos.src, cand));
        negatives.push_back({pos.src, pos.rel, cand, 0});
        found = true;
        break;
      }
      if (!found) {
        throw std::runtime_error(
            "could not sample a negative edge for (" + g.node_token(pos.src) + ", " +
            g.node_token(pos.dst) + "): no unused non-edge found");
      }
    }
  }
  return negatives;
}

std::optional<std::vector<NodeId>> bfs_shortest_path(const HeteroGraph& g, NodeId u,
                                                     NodeId v, std::size_t max_len) {
  if (u >= g.num_nodes() || v >= g.num_nodes()) {
    throw std::invalid_argument("bfs_shortest_path: node id out of range");
  }
  if (u == v) return std::vector<NodeId>{u};

  constexpr NodeId kUnset = static_cast<NodeId>(-1);
  std::vector<NodeId> parent(g.num_nodes(), kUnset);
  std::vector<std::size_t> dist(g.num_nodes(), 0);
  std::deque<NodeId> queue{u};
  parent[u] = u;
  while (!queue.empty()) {
    NodeId cur = queue.front();
    queue.pop_front();
    if (dist[cur] >= max_len) continue;
    // Adjacency is sorted, so ties resolve toward the smallest neighbor id.
    for (const auto& [nbr, rel] : g.neighbors(cur)) {
      (void)rel;
      if (parent[nbr] != kUnset) continue;
      parent[nbr] = cur;
      dist[nbr] = dist[cur] + 1;
      if (nbr == v) {
        std::vector<NodeId> path{v};
        NodeId walk = v;
        while (walk != u) {
          walk = parent[walk];
          path.push_back(walk);
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      queue.push_back(nbr);
    }
  }
  return std::nullopt;
}

EdgeSplit split_edges(const HeteroGraph& g, double train_fraction,
                      double dev_fraction, std::size_t eval_negative_ratio,
                      Rng& rng, bool type_constrained) {
  if (train_fraction <= 0.0 || dev_fraction < 0.0 ||
      train_fraction + dev_fraction > 1.0) {
    throw std::invalid_argument("invalid split fractions");
  }
  // Group edges by unordered node pair so multi-relation pairs stay together
  // and the splits remain pair-disjoint.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.edges().size(); ++i) {
    const Edge& e = g.edges()[i];
    groups[pair_key(e.src, e.dst)].push_back(i);
  }
  std::vector<std::uint64_t> keys;
  keys.reserve(groups.size());
  for (const auto& [k, idx] : groups) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  shuffle(keys, rng);

  const std::size_t total = g.edges().size();
  const auto want_train = static_cast<std::size_t>(train_fraction * total);
  const auto want_dev = static_cast<std::size_t>(dev_fraction * total);

  EdgeSplit split;
  std::size_t assigned = 0;
  for (std::uint64_t key : keys) {
    auto bucket = [&]() -> std::vector<LabeledEdge>& {
      if (assigned < want_train) return split.train_pos;
      if (assigned < want_train + want_dev) return split.dev;
      return split.test;
    };
    auto& dest = bucket();
    for (std::size_t i : groups[key]) {
      const Edge& e = g.edges()[i];
      dest.push_back({e.src, e.rel, e.dst, 1});
    }
    assigned += groups[key].size();
  }

  if (eval_negative_ratio > 0) {
    PairSet used;
    auto dev_neg = sample_negative_edges(g, split.dev, eval_negative_ratio, rng,
                                         type_constrained, &used);
    auto test_neg = sample_negative_edges(g, split.test, eval_negative_ratio, rng,
                                          type_constrained, &used);
    split.dev.insert(split.dev.end(), dev_neg.begin(), dev_neg.end());
    split.test.insert(split.test.end(), test_neg.begin(), test_neg.end());
  }
  return split;
}

void save_graph(const HeteroGraph& g, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/node_ids.tsv");
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      out << g.node_token(v) << '\t' << v << '\n';
    }
  }
  {
    std::ofstream out(dir + "/relation_ids.tsv");
    for (RelId r = 0; r < g.num_relations(); ++r) {
      out << g.relation_name(r) << '\t' << r << '\n';
    }
  }
  {
    std::ofstream out(dir + "/node_types.tsv");
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      out << g.node_token(v) << '\t' << g.type_name(g.node_type(v)) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/edges.tsv");
    for (const Edge& e : g.edges()) {
      out << g.node_token(e.src) << '\t' << g.relation_name(e.rel) << '\t'
          << g.node_token(e.dst) << '\n';
    }
  }
}

HeteroGraph load_graph(const std::string& dir) {
  auto read_id_map = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_tabs(line);
      if (fields.size() != 2) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected `token<TAB>id`");
      }
      std::size_t id = std::stoull(fields[1]);
      if (id != tokens.size()) {
        throw std::runtime_error(path + ": ids must be dense and in order");
      }
      tokens.push_back(fields[0]);
    }
    return tokens;
  };

  auto node_tokens = read_id_map(dir + "/node_ids.tsv");
  auto relation_names = read_id_map(dir + "/relation_ids.tsv");

  std::unordered_map<std::string, NodeId> node_ids;
  for (std::size_t i = 0; i < node_tokens.size(); ++i) {
    node_ids.emplace(node_tokens[i], static_cast<NodeId>(i));
  }
  std::unordered_map<std::string, RelId> rel_ids;
  for (std::size_t i = 0; i < relation_names.size(); ++i) {
    rel_ids.emplace(relation_names[i], static_cast<RelId>(i));
  }

  std::vector<TypeId> node_type(node_tokens.size(), 0);
  std::vector<std::string> type_names;
  {
    std::ifstream in(dir + "/node_types.tsv");
    if (!in) throw std::runtime_error("cannot open " + dir + "/node_types.tsv");
    std::unordered_map<std::string, TypeId> type_ids;
    std::string line;
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_tabs(line);
      if (fields.size() != 2) throw std::runtime_error("bad node_types.tsv line");
      auto [it, inserted] = type_ids.emplace(fields[1], static_cast<TypeId>(type_names.size()));
      if (inserted) type_names.push_back(fields[1]);
      node_type[node_ids.at(fields[0])] = it->second;
    }
    if (type_names.empty()) type_names.push_back("node");
  }

  std::vector<Edge> edges;
  {
    std::ifstream in(dir + "/edges.tsv");
    if (!in) throw std::runtime_error("cannot open " + dir + "/edges.tsv");
    std::string line;
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_tabs(line);
      if (fields.size() != 3) throw std::runtime_error("bad edges.tsv line");
      edges.push_back({node_ids.at(fields[0]), rel_ids.at(fields[1]),
                       node_ids.at(fields[2])});
    }
  }

  return HeteroGraph(node_tokens.size(), std::move(edges), std::move(node_type),
                     std::move(node_tokens), std::move(relation_names),
                     std::move(type_names));
}

void save_split(const HeteroGraph& g, const std::vector<LabeledEdge>& edges,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const LabeledEdge& e : edges) {
    out << g.node_token(e.src) << '\t' << g.relation_name(e.rel) << '\t'
        << g.node_token(e.dst) << '\t' << e.label << '\n';
  }
}

std::vector<LabeledEdge> load_split(const HeteroGraph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split: " + path);
  std::vector<LabeledEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected `src<TAB>rel<TAB>dst<TAB>label`");
    }
    auto src = g.node_id(fields[0]);
    auto rel = g.relation_id(fields[1]);
    auto dst = g.node_id(fields[2]);
    if (!src || !rel || !dst) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown token");
    }
    int label = std::stoi(fields[3]);
    if (label != 0 && label != 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": label must be 0 or 1");
    }
    edges.push_back({*src, *rel, *dst, label});
  }
  return edges;
}

HeteroGraph train_graph(const HeteroGraph& full, const std::vector<LabeledEdge>& train_pos) {
  std::vector<Edge> edges;
  edges.reserve(train_pos.size());
  for (const LabeledEdge& e : train_pos) {
    if (e.label != 1) continue;
    edges.push_back({e.src, e.rel, e.dst});
  }
  return HeteroGraph(full.num_nodes(), std::move(edges), full.node_types(),
                     full.node_tokens(), full.relation_names(), full.type_names());
}

}  // namespace slice
