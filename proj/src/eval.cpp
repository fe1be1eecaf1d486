// SPDX-License-Identifier: Apache-2.0
#include "slice/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "slice/format.hpp"

namespace slice {

PredictionRecord score_pair(const SliceModel& model, const HeteroGraph& g, NodeId u,
                            NodeId v, std::size_t n_contexts, std::size_t max_size,
                            Rng& rng, ContextStrategy strategy) {
  if (n_contexts < 1) throw std::invalid_argument("n_contexts must be >= 1");
  PredictionRecord rec;
  rec.u = u;
  rec.v = v;
  rec.score = -1.0;
  for (std::size_t c = 0; c < n_contexts; ++c) {
    ContextSubgraph ctx = sample_pair_context(g, u, v, max_size, rng, strategy);
    auto up = ctx.find(u);
    auto vp = ctx.find(v);
    ForwardTrace trace = forward(ctx, model);
    const double s = similarity(trace.final.row(*up), trace.final.row(*vp));
    if (s > rec.score) {
      rec.score = s;
      rec.best_context = std::move(ctx);
    }
  }
  return rec;
}

double micro_f1(const std::vector<PredictionRecord>& records, double threshold) {
  if (records.empty()) throw std::invalid_argument("no prediction records");
  // Micro-averaging pools true/false positives across both classes.
  std::size_t tp[2] = {0, 0};
  std::size_t fp[2] = {0, 0};
  std::size_t fn[2] = {0, 0};
  for (const PredictionRecord& r : records) {
    const int pred = r.score >= threshold ? 1 : 0;
    if (pred == r.label) {
      ++tp[pred];
    } else {
      ++fp[pred];
      ++fn[r.label];
    }
  }
  const double tp_all = static_cast<double>(tp[0] + tp[1]);
  const double fp_all = static_cast<double>(fp[0] + fp[1]);
  const double fn_all = static_cast<double>(fn[0] + fn[1]);
  const double denom = 2.0 * tp_all + fp_all + fn_all;
  return denom == 0.0 ? 0.0 : 2.0 * tp_all / denom;
}

double auroc(const std::vector<PredictionRecord>& records) {
  std::size_t positives = 0;
  for (const PredictionRecord& r : records) positives += r.label == 1;
  const std::size_t negatives = records.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("AUROC needs both labels present");
  }

  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&records](std::size_t a, std::size_t b) {
    return records[a].score < records[b].score;
  });

  // Sum of tie-averaged ranks over positive records.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && records[idx[j]].score == records[idx[i]].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (records[idx[t]].label == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double choose_threshold(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no prediction records");
  std::vector<double> candidates;
  candidates.reserve(records.size() + 1);
  for (const PredictionRecord& r : records) candidates.push_back(r.score);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  // One candidate above the maximum covers the all-negative decision.
  candidates.push_back(std::nextafter(candidates.back(), 2.0));

  double best_threshold = candidates.front();
  double best_f1 = -1.0;
  for (double t : candidates) {
    const double f1 = micro_f1(records, t);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = t;
    }
  }
  return best_threshold;
}

ScoreHistogram export_score_distributions(const std::vector<PredictionRecord>& records,
                                          std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("need at least 2 bins");
  ScoreHistogram hist;
  hist.bin_lo.resize(bins);
  hist.bin_hi.resize(bins);
  hist.positives.assign(bins, 0);
  hist.negatives.assign(bins, 0);
  const double width = 1.0 / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    hist.bin_lo[b] = width * static_cast<double>(b);
    hist.bin_hi[b] = width * static_cast<double>(b + 1);
  }
  for (const PredictionRecord& r : records) {
    auto b = static_cast<std::size_t>(r.score / width);
    if (b >= bins) b = bins - 1;  // score == 1.0 lands in the last bin
    if (r.label == 1) {
      ++hist.positives[b];
    } else {
      ++hist.negatives[b];
    }
  }
  return hist;
}

AssociationSummary extract_association(const SliceModel& model,
                                       const ContextSubgraph& ctx) {
  const ForwardTrace trace = forward(ctx, model);
  const std::size_t n = ctx.nodes.size();
  const double inv_heads = 1.0 / static_cast<double>(model.cfg.heads);

  AssociationSummary summary;
  for (const auto& layer : trace.layers) {
    Matrix mean(n, n);
    for (const Matrix& a : layer.attention) add_inplace(mean, a);
    scale_inplace(mean, inv_heads);

    Matrix norm = mean;
    double lo = norm.data()[0];
    double hi = norm.data()[0];
    for (std::size_t i = 0; i < norm.size(); ++i) {
      lo = std::min(lo, norm.data()[i]);
      hi = std::max(hi, norm.data()[i]);
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < norm.size(); ++i) {
      norm.data()[i] = range > 0.0 ? (norm.data()[i] - lo) / range : 0.0;
    }

    summary.raw.push_back(std::move(mean));
    summary.normalized.push_back(std::move(norm));
  }
  return summary;
}

std::string Metapath::signature() const {
  bool single = true;
  for (const std::string& t : type_sequence) single = single && t.size() == 1;
  std::string out;
  for (std::size_t i = 0; i < type_sequence.size(); ++i) {
    if (i > 0 && !single) out += '-';
    out += type_sequence[i];
  }
  return out;
}

std::vector<Metapath> mine_metapaths(const SliceModel& model, const HeteroGraph& g,
                                     RelId relation,
                                     const std::vector<ContextSubgraph>& contexts,
                                     std::size_t k, std::size_t* skipped) {
  (void)relation;  // contexts are pre-filtered by anchor relation
  std::size_t skip_count = 0;

  struct Bucket {
    std::size_t support = 0;
    double attention_sum = 0.0;
  };
  std::map<std::vector<std::string>, Bucket> buckets;

  for (const ContextSubgraph& ctx : contexts) {
    if (!ctx.anchor) {
      ++skip_count;
      continue;
    }
    auto u_pos = ctx.find(ctx.anchor->first);
    auto v_pos = ctx.find(ctx.anchor->second);
    if (!u_pos || !v_pos) {
      ++skip_count;
      continue;
    }

    const ForwardTrace trace = forward(ctx, model);
    const std::size_t n = ctx.nodes.size();
    Matrix assoc(n, n);
    for (const Matrix& a : trace.layers.back().attention) add_inplace(assoc, a);
    scale_inplace(assoc, 1.0 / static_cast<double>(model.cfg.heads));

    // Greedy attention walk from v toward u over graph-adjacent context nodes.
    std::vector<bool> visited(n, false);
    std::vector<std::size_t> path{*v_pos};
    visited[*v_pos] = true;
    bool reached = *v_pos == *u_pos;
    while (!reached && path.size() <= n) {
      const std::size_t cur = path.back();
      std::size_t best = n;
      double best_weight = -1.0;
      for (std::size_t cand = 0; cand < n; ++cand) {
        if (visited[cand]) continue;
        if (!g.has_edge(ctx.nodes[cur], ctx.nodes[cand])) continue;
        if (assoc(cur, cand) > best_weight) {
          best_weight = assoc(cur, cand);
          best = cand;
        }
      }
      if (best == n) break;
      visited[best] = true;
      path.push_back(best);
      reached = best == *u_pos;
    }
    if (!reached) {
      ++skip_count;
      continue;
    }

    std::vector<std::string> types;
    types.reserve(path.size());
    for (std::size_t pos : path) {
      types.push_back(g.type_name(g.node_type(ctx.nodes[pos])));
    }
    if (types.size() < 2) {
      ++skip_count;
      continue;
    }
    Bucket& bucket = buckets[types];
    bucket.support += 1;
    bucket.attention_sum += assoc(*v_pos, *u_pos);
  }

  std::vector<Metapath> paths;
  paths.reserve(buckets.size());
  for (const auto& [types, bucket] : buckets) {
    Metapath mp;
    mp.type_sequence = types;
    mp.support = bucket.support;
    mp.mean_attention = bucket.attention_sum / static_cast<double>(bucket.support);
    paths.push_back(std::move(mp));
  }
  std::sort(paths.begin(), paths.end(), [](const Metapath& a, const Metapath& b) {
    if (a.support != b.support) return a.support > b.support;
    if (a.mean_attention != b.mean_attention) return a.mean_attention > b.mean_attention;
    return a.type_sequence < b.type_sequence;
  });
  if (paths.size() > k) paths.resize(k);
  if (skipped) *skipped = skip_count;
  return paths;
}

void save_predictions_csv(const std::vector<PredictionRecord>& records,
                          const HeteroGraph& g, double threshold,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "u,v,label,score,threshold_decision\n";
  for (const PredictionRecord& r : records) {
    out << g.node_token(r.u) << ',' << g.node_token(r.v) << ',' << r.label << ','
        << format_double(r.score) << ',' << (r.score >= threshold ? 1 : 0) << '\n';
  }
}

void save_histogram_csv(const ScoreHistogram& hist, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "bin_lo,bin_hi,label,count\n";
  for (int label = 0; label <= 1; ++label) {
    const auto& counts = label == 1 ? hist.positives : hist.negatives;
    for (std::size_t b = 0; b < counts.size(); ++b) {
      out << format_double(hist.bin_lo[b]) << ',' << format_double(hist.bin_hi[b])
          << ',' << label << ',' << counts[b] << '\n';
    }
  }
}

void save_metapaths_csv(const std::vector<Metapath>& paths, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "rank,type_sequence,support,mean_attention\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    out << i + 1 << ',' << paths[i].signature() << ',' << paths[i].support << ','
        << format_double(paths[i].mean_attention) << '\n';
  }
}

void save_associations_json(const SliceModel& model, const HeteroGraph& g,
                            const std::vector<ContextSubgraph>& contexts,
                            const std::string& path) {
  nlohmann::json root = nlohmann::json::array();
  for (const ContextSubgraph& ctx : contexts) {
    AssociationSummary summary = extract_association(model, ctx);
    nlohmann::json entry;
    entry["nodes"] = ctx.nodes;
    nlohmann::json tokens = nlohmann::json::array();
    nlohmann::json types = nlohmann::json::array();
    for (NodeId v : ctx.nodes) {
      if (v < g.num_nodes()) {
        tokens.push_back(g.node_token(v));
        types.push_back(g.type_name(g.node_type(v)));
      } else {
        tokens.push_back("[MASK]");
        types.push_back("[MASK]");
      }
    }
    entry["tokens"] = std::move(tokens);
    entry["types"] = std::move(types);
    nlohmann::json layers = nlohmann::json::object();
    for (std::size_t k = 0; k < summary.normalized.size(); ++k) {
      const Matrix& m = summary.normalized[k];
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < m.rows(); ++i) {
        rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
      }
      layers["layer" + std::to_string(k + 1)] = std::move(rows);
    }
    entry["association"] = std::move(layers);
    root.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << root.dump(2) << '\n';
}

}  // namespace slice
