// SPDX-License-Identifier: Apache-2.0
#include "slice/skipgram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "slice/format.hpp"

namespace slice {

namespace {

// Cumulative unigram^0.75 table for negative sampling.
class NoiseTable {
 public:
  NoiseTable(const WalkCorpus& corpus, std::size_t num_nodes) {
    std::vector<double> freq(num_nodes, 0.0);
    for (const auto& walk : corpus.walks) {
      for (NodeId v : walk) freq[v] += 1.0;
    }
    cumulative_.resize(num_nodes, 0.0);
    double total = 0.0;
    for (std::size_t v = 0; v < num_nodes; ++v) {
      total += std::pow(freq[v], 0.75);
      cumulative_[v] = total;
    }
    total_ = total;
  }

  NodeId sample(Rng& rng) const {
    double u = uniform_unit(rng) * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<NodeId>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

struct Pair {
  NodeId center;
  NodeId context;
};

std::vector<Pair> collect_pairs(const WalkCorpus& corpus, std::size_t window) {
  std::vector<Pair> pairs;
  for (const auto& walk : corpus.walks) {
    const std::size_t n = walk.size();
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t lo = c >= window ? c - window : 0;
      const std::size_t hi = std::min(n, c + window + 1);
      for (std::size_t o = lo; o < hi; ++o) {
        if (o == c) continue;
        pairs.push_back({walk[c], walk[o]});
      }
    }
  }
  return pairs;
}

}  // namespace

WalkCorpus generate_walks(const HeteroGraph& g, std::size_t walks_per_node,
                          std::size_t walk_length, Rng& rng) {
  if (walk_length < 1) throw std::invalid_argument("walk_length must be >= 1");
  WalkCorpus corpus;
  corpus.walks.reserve(g.num_nodes() * walks_per_node);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (std::size_t w = 0; w < walks_per_node; ++w) {
      std::vector<NodeId> walk{v};
      NodeId cur = v;
      while (walk.size() < walk_length) {
        const auto& nbrs = g.neighbors(cur);
        if (nbrs.empty()) break;
        cur = nbrs[uniform_index(rng, nbrs.size())].first;
        walk.push_back(cur);
      }
      corpus.walks.push_back(std::move(walk));
    }
  }
  return corpus;
}

SkipgramResult train_skipgram(const WalkCorpus& corpus, std::size_t num_nodes,
                              const SkipgramConfig& cfg, Rng& rng) {
  if (corpus.walks.empty()) throw std::invalid_argument("walk corpus is empty");

  SkipgramResult result;
  Matrix& in = result.table.weights;
  in = Matrix(num_nodes + 1, cfg.dim);
  Matrix out(num_nodes + 1, cfg.dim);

  const double bound = 0.5 / static_cast<double>(cfg.dim);
  for (std::size_t v = 0; v < num_nodes; ++v) {
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      in(v, j) = uniform_range(rng, -bound, bound);
      out(v, j) = uniform_range(rng, -bound, bound);
    }
  }
  // The mask row stays zero; the vocabulary during training is real nodes only.

  const NoiseTable noise(corpus, num_nodes);
  std::vector<Pair> pairs = collect_pairs(corpus, corpus.window);
  if (pairs.empty()) {
    // Corpus of isolated nodes: nothing to train on, curve stays empty.
    return result;
  }

  std::vector<double> grad_center(cfg.dim);

  auto pair_loss_and_update = [&](const Pair& p, Rng& r, bool update) {
    double loss = 0.0;
    std::fill(grad_center.begin(), grad_center.end(), 0.0);
    auto wc = in.row(p.center);

    auto accumulate = [&](NodeId other, double label) {
      auto wo = out.row(other);
      const double score = dot(wc, wo);
      loss -= label > 0.5 ? log_sigmoid(score) : log_sigmoid(-score);
      if (!update) return;
      const double g = sigmoid(score) - label;  // d(loss)/d(score)
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        grad_center[j] += g * wo[j];
        wo[j] -= cfg.lr * g * wc[j];
      }
    };

    accumulate(p.context, 1.0);
    for (std::size_t k = 0; k < corpus.negatives_per_target; ++k) {
      accumulate(noise.sample(r), 0.0);
    }
    if (update) {
      for (std::size_t j = 0; j < cfg.dim; ++j) wc[j] -= cfg.lr * grad_center[j];
    }
    return loss;
  };

  // Evaluation pass at the initialization, no updates.
  {
    Rng eval_rng = derive_rng(rng(), 0xe0a1);
    double total = 0.0;
    for (const Pair& p : pairs) total += pair_loss_and_update(p, eval_rng, false);
    result.loss_curve.push_back(total / static_cast<double>(pairs.size()));
  }

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      total += pair_loss_and_update(pairs[idx], rng, true);
    }
    const double mean = total / static_cast<double>(pairs.size());
    if (!std::isfinite(mean)) {
      throw NumericError("skip-gram loss became non-finite at epoch " +
                         std::to_string(epoch + 1));
    }
    result.loss_curve.push_back(mean);
  }
  return result;
}

void save_embedding_tsv(const EmbeddingTable& table, const HeteroGraph& g,
                        const std::string& path) {
  if (table.num_nodes() != g.num_nodes()) {
    throw std::invalid_argument("embedding table does not match graph size");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    out << g.node_token(v);
    for (std::size_t j = 0; j < table.dim(); ++j) out << '\t' << table.weights(v, j);
    out << '\n';
  }
}

EmbeddingTable load_embedding_tsv(const HeteroGraph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings: " + path);

  std::vector<std::vector<double>> rows(g.num_nodes());
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    if (!std::getline(ss, token, '\t')) continue;
    auto id = g.node_id(token);
    if (!id) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown node `" + token + "`");
    }
    std::vector<double> values;
    std::string field;
    while (std::getline(ss, field, '\t')) {
      values.push_back(std::stod(field));
    }
    if (values.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": no values");
    }
    if (dim == 0) dim = values.size();
    if (values.size() != dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": inconsistent embedding width");
    }
    rows[*id] = std::move(values);
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (rows[v].empty()) {
      throw std::runtime_error(path + ": missing embedding for node `" +
                               g.node_token(v) + "`");
    }
  }

  EmbeddingTable table;
  table.weights = Matrix(g.num_nodes() + 1, dim);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (std::size_t j = 0; j < dim; ++j) table.weights(v, j) = rows[v][j];
  }
  return table;
}

}  // namespace slice
