// SPDX-License-Identifier: Apache-2.0
#include "slice/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "slice/eval.hpp"
#include "slice/format.hpp"

namespace slice {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  return mx + std::log(total);
}

void check_gradients_finite(const ModelTensors& grads, const char* where) {
  grads.for_each([where](const std::string& name, const Matrix& m) {
    if (!m.all_finite()) {
      throw NumericError(std::string("non-finite gradient for `") + name + "` in " +
                         where);
    }
  });
}

std::pair<std::size_t, std::size_t> anchor_positions(const ContextSubgraph& ctx) {
  if (!ctx.anchor) throw std::invalid_argument("context has no anchor pair");
  auto u = ctx.find(ctx.anchor->first);
  auto v = ctx.find(ctx.anchor->second);
  if (!u || !v) throw std::invalid_argument("context is missing an anchor node");
  return {*u, *v};
}

}  // namespace

double pretrain_loss(const SliceModel& model, const ContextSubgraph& masked_ctx,
                     NodeId target) {
  if (!masked_ctx.mask_pos) throw std::invalid_argument("context has no mask position");
  ForwardTrace trace = forward(masked_ctx, model);
  auto logits = masked_node_logits(model, trace.final, *masked_ctx.mask_pos);
  return log_sum_exp(logits) - logits[target];
}

double finetune_loss(const SliceModel& model,
                     const std::vector<ContextSubgraph>& positives,
                     const std::vector<ContextSubgraph>& negatives) {
  double loss = 0.0;
  for (const ContextSubgraph& ctx : positives) {
    auto [u, v] = anchor_positions(ctx);
    ForwardTrace trace = forward(ctx, model);
    loss -= std::log(link_probability(model, trace.final, u, v));
  }
  for (const ContextSubgraph& ctx : negatives) {
    auto [u, v] = anchor_positions(ctx);
    ForwardTrace trace = forward(ctx, model);
    loss -= std::log(1.0 - link_probability(model, trace.final, u, v));
  }
  return loss;
}

void backprop_final(const SliceModel& model, const ForwardTrace& trace,
                    const Matrix& dfinal, ModelTensors& grads) {
  const std::size_t n = trace.ctx.nodes.size();
  const std::size_t d = model.cfg.dim;
  const std::size_t heads = model.cfg.heads;
  const std::size_t hd = model.cfg.head_dim();
  const std::size_t layer_count = model.cfg.layers;
  check_shape(dfinal.rows() == n && dfinal.cols() == model.cfg.cat_dim(),
              "dfinal");

  auto final_block = [&](std::size_t k) {
    Matrix block(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) block(i, j) = dfinal(i, k * d + j);
    }
    return block;
  };

  // Gradient w.r.t. the output of the current (topmost unprocessed) layer.
  Matrix dout = final_block(layer_count - 1);

  for (std::size_t k = layer_count; k-- > 0;) {
    const auto& lt = trace.layers[k];
    const TranslationLayer& layer = model.p.layers[k];
    TranslationLayer& glayer = grads.layers[k];

    // Through the nonlinearity into the preactivation.
    Matrix dpre = dout;
    if (!model.cfg.identity_nonlinearity) {
      for (std::size_t i = 0; i < dpre.size(); ++i) {
        dpre.data()[i] *= gelu_grad(lt.preactivation.data()[i]);
      }
    }

    Matrix dh = dpre;            // residual path
    Matrix dtransformed(n, d);   // gradient on H * W_s

    for (std::size_t head = 0; head < heads; ++head) {
      const Matrix& a = lt.attention[head];
      const std::size_t off = head * hd;

      // dA = dM_h * T_h^T ; dT_h += A^T * dM_h  (block slices of dpre / T)
      Matrix da(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < n; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < hd; ++j) {
            acc += dpre(i, off + j) * lt.transformed(t, off + j);
          }
          da(i, t) = acc;
        }
      }
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          const double w = a(i, t);
          for (std::size_t j = 0; j < hd; ++j) {
            dtransformed(t, off + j) += w * dpre(i, off + j);
          }
        }
      }

      // Softmax backward, rowwise: dS = A o (dA - rowdot(dA, A)).
      Matrix ds(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double rowdot = 0.0;
        for (std::size_t t = 0; t < n; ++t) rowdot += da(i, t) * a(i, t);
        for (std::size_t t = 0; t < n; ++t) {
          ds(i, t) = a(i, t) * (da(i, t) - rowdot);
        }
      }

      const Matrix dq = matmul(ds, lt.keys[head]);
      const Matrix dk = matmul_transa(ds, lt.queries[head]);
      add_inplace(glayer.w_query[head], matmul_transa(lt.input, dq));
      add_inplace(glayer.w_key[head], matmul_transa(lt.input, dk));
      add_inplace(dh, matmul_transb(dq, layer.w_query[head]));
      add_inplace(dh, matmul_transb(dk, layer.w_key[head]));
    }

    add_inplace(glayer.w_transform, matmul_transa(lt.input, dtransformed));
    add_inplace(dh, matmul_transb(dtransformed, layer.w_transform));

    if (k > 0) {
      dout = final_block(k - 1);
      add_inplace(dout, dh);
    } else {
      // Scatter into the embedding rows used by this context.
      for (std::size_t i = 0; i < n; ++i) {
        auto grow = grads.embed.row(trace.ctx.nodes[i]);
        for (std::size_t j = 0; j < d; ++j) grow[j] += dh(i, j);
      }
    }
  }
}

double pretrain_backward(const SliceModel& model, const ForwardTrace& trace,
                         NodeId target, ModelTensors& grads) {
  if (!trace.ctx.mask_pos) throw std::invalid_argument("trace has no mask position");
  const std::size_t mask_pos = *trace.ctx.mask_pos;
  const std::size_t vocab = model.cfg.vocab();
  const std::size_t dc = model.cfg.cat_dim();

  auto logits = masked_node_logits(model, trace.final, mask_pos);
  const double lse = log_sum_exp(logits);
  const double loss = lse - logits[target];

  auto frow = trace.final.row(mask_pos);
  Matrix dfinal(trace.final.rows(), dc);
  auto dfrow = dfinal.row(mask_pos);
  for (std::size_t c = 0; c < vocab; ++c) {
    double dlogit = std::exp(logits[c] - lse);
    if (c == target) dlogit -= 1.0;
    grads.mask_b(0, c) += dlogit;
    for (std::size_t j = 0; j < dc; ++j) {
      grads.mask_w(j, c) += frow[j] * dlogit;
      dfrow[j] += model.p.mask_w(j, c) * dlogit;
    }
  }

  backprop_final(model, trace, dfinal, grads);
  check_gradients_finite(grads, "masked-node backward pass");
  return loss;
}

double link_backward(const SliceModel& model, const ForwardTrace& trace,
                     std::size_t u_pos, std::size_t v_pos, int label,
                     ModelTensors& grads) {
  const std::size_t dc = model.cfg.cat_dim();
  const double p = link_probability(model, trace.final, u_pos, v_pos);
  const double loss = label == 1 ? -std::log(p) : -std::log(1.0 - p);

  // softmax([l0, l1]) with class probabilities (1-p, p)
  double dlogits[2] = {(1.0 - p), p};
  dlogits[label == 1 ? 1 : 0] -= 1.0;

  auto ru = trace.final.row(u_pos);
  auto rv = trace.final.row(v_pos);
  Matrix dfinal(trace.final.rows(), dc);
  for (std::size_t c = 0; c < 2; ++c) {
    const double dl = dlogits[c];
    grads.link_b(0, c) += dl;
    for (std::size_t j = 0; j < dc; ++j) {
      grads.link_w(j, c) += ru[j] * dl;
      grads.link_w(dc + j, c) += rv[j] * dl;
      dfinal(u_pos, j) += model.p.link_w(j, c) * dl;
      dfinal(v_pos, j) += model.p.link_w(dc + j, c) * dl;
    }
  }

  backprop_final(model, trace, dfinal, grads);
  check_gradients_finite(grads, "link backward pass");
  return loss;
}

double finetune_backward(const SliceModel& model,
                         const std::vector<ContextSubgraph>& positives,
                         const std::vector<ContextSubgraph>& negatives,
                         ModelTensors& grads) {
  double loss = 0.0;
  for (const ContextSubgraph& ctx : positives) {
    auto [u, v] = anchor_positions(ctx);
    ForwardTrace trace = forward(ctx, model);
    loss += link_backward(model, trace, u, v, 1, grads);
  }
  for (const ContextSubgraph& ctx : negatives) {
    auto [u, v] = anchor_positions(ctx);
    ForwardTrace trace = forward(ctx, model);
    loss += link_backward(model, trace, u, v, 0, grads);
  }
  return loss;
}

AdamState AdamState::shaped(const ModelConfig& cfg) {
  AdamState state;
  state.m = ModelTensors::shaped(cfg);
  state.v = ModelTensors::shaped(cfg);
  return state;
}

void adam_update_tensor(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                        std::size_t step, double lr, const TrainConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double gi = grad.data()[i];
    double& mi = m.data()[i];
    double& vi = v.data()[i];
    mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
    vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    param.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void adam_step(ModelTensors& params, const ModelTensors& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  state.step += 1;

  auto update = [&](Matrix& p, const Matrix& g, Matrix& m, Matrix& v) {
    adam_update_tensor(p, g, m, v, state.step, lr, cfg);
  };

  update(params.embed, grads.embed, state.m.embed, state.v.embed);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    update(params.layers[k].w_transform, grads.layers[k].w_transform,
           state.m.layers[k].w_transform, state.v.layers[k].w_transform);
    for (std::size_t h = 0; h < params.layers[k].w_query.size(); ++h) {
      update(params.layers[k].w_query[h], grads.layers[k].w_query[h],
             state.m.layers[k].w_query[h], state.v.layers[k].w_query[h]);
      update(params.layers[k].w_key[h], grads.layers[k].w_key[h],
             state.m.layers[k].w_key[h], state.v.layers[k].w_key[h]);
    }
  }
  update(params.mask_w, grads.mask_w, state.m.mask_w, state.v.mask_w);
  update(params.mask_b, grads.mask_b, state.m.mask_b, state.v.mask_b);
  update(params.link_w, grads.link_w, state.m.link_w, state.v.link_w);
  update(params.link_b, grads.link_b, state.m.link_b, state.v.link_b);
}

double clip_gradients(ModelTensors& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&sq](const std::string&, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) sq += m.data()[i] * m.data()[i];
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([scale](const std::string&, Matrix& m) { scale_inplace(m, scale); });
  }
  return norm;
}

PretrainResult run_pretraining(SliceModel& model,
                               const std::vector<ContextSubgraph>& contexts,
                               const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (contexts.empty()) throw std::invalid_argument("no pretraining contexts");

  PretrainResult result;
  AdamState adam = AdamState::shaped(model.cfg);
  ModelTensors grads = ModelTensors::shaped(model.cfg);
  ModelTensors best = model.p;
  double best_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(contexts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_total = 0.0;
    bool bad = false;

    for (std::size_t start = 0; start < order.size() && !bad;
         start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.fill(0.0);
      double batch_total = 0.0;
      try {
        for (std::size_t b = start; b < end; ++b) {
          auto [masked, target] =
              mask_random_node(contexts[order[b]], model.mask_id(), rng);
          ForwardTrace trace = forward(masked, model);
          batch_total += pretrain_backward(model, trace, target, grads);
        }
      } catch (const NumericError&) {
        bad = true;
        break;
      }
      if (!std::isfinite(batch_total)) {
        bad = true;
        break;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      grads.for_each([inv](const std::string&, Matrix& m) { scale_inplace(m, inv); });
      clip_gradients(grads, cfg.clip_norm);
      adam_step(model.p, grads, adam, cfg.lr, cfg);
      epoch_total += batch_total;
    }

    if (bad) {
      std::cerr << "warning: non-finite pretraining loss at epoch " << epoch + 1
                << "; restoring best checkpoint\n";
      model.p = best;
      result.aborted = true;
      return result;
    }

    const double mean = epoch_total / static_cast<double>(contexts.size());
    result.epoch_loss.push_back(mean);
    if (mean < best_loss) {
      best_loss = mean;
      best = model.p;
      result.best_epoch = epoch + 1;
    }
  }

  if (result.best_epoch > 0) model.p = best;
  return result;
}

FinetuneResult run_finetuning(SliceModel& model, const HeteroGraph& g,
                              const EdgeSplit& split, const FinetuneOptions& opts,
                              const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (split.train_pos.empty()) {
    throw std::invalid_argument("fine-tuning requires positive training edges");
  }

  std::vector<LabeledEdge> negatives =
      sample_negative_edges(g, split.train_pos, opts.negative_ratio, rng,
                            opts.type_constrained_negatives);

  FinetuneResult result;
  AdamState adam = AdamState::shaped(model.cfg);
  ModelTensors grads = ModelTensors::shaped(model.cfg);
  ModelTensors best = model.p;
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  const bool have_dev = !split.dev.empty();
  if (!have_dev) {
    std::cerr << "warning: no dev edges; keeping the final fine-tuning epoch\n";
  }

  std::vector<std::size_t> order(split.train_pos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto pair_ctx = [&](NodeId u, NodeId v, Rng& r) {
    return sample_pair_context(g, u, v, opts.max_context_size, r, opts.strategy);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    bool bad = false;

    for (std::size_t start = 0; start < order.size() && !bad;
         start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.fill(0.0);
      double batch_total = 0.0;
      std::size_t examples = 0;

      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const LabeledEdge& pos = split.train_pos[idx];
        {
          ContextSubgraph ctx = pair_ctx(pos.src, pos.dst, rng);
          auto up = ctx.find(pos.src);
          auto vp = ctx.find(pos.dst);
          ForwardTrace trace = forward(ctx, model);
          batch_total += link_backward(model, trace, *up, *vp, 1, grads);
          ++examples;
        }
        // The negatives of this positive ride in the same step.
        for (std::size_t k = 0; k < opts.negative_ratio; ++k) {
          const LabeledEdge& neg = negatives[idx * opts.negative_ratio + k];
          ContextSubgraph ctx = pair_ctx(neg.src, neg.dst, rng);
          auto up = ctx.find(neg.src);
          auto vp = ctx.find(neg.dst);
          ForwardTrace trace = forward(ctx, model);
          batch_total += link_backward(model, trace, *up, *vp, 0, grads);
          ++examples;
        }
      }
      if (!std::isfinite(batch_total)) {
        bad = true;
        break;
      }
      const double inv = 1.0 / static_cast<double>(examples);
      grads.for_each([inv](const std::string&, Matrix& m) { scale_inplace(m, inv); });
      if (opts.freeze_pretrained) {
        grads.embed.fill(0.0);
        for (auto& layer : grads.layers) {
          layer.w_transform.fill(0.0);
          for (auto& w : layer.w_query) w.fill(0.0);
          for (auto& w : layer.w_key) w.fill(0.0);
        }
      }
      clip_gradients(grads, cfg.clip_norm);
      adam_step(model.p, grads, adam, cfg.lr, cfg);
      epoch_total += batch_total;
      ++batches;
    }

    if (bad) {
      std::cerr << "warning: non-finite fine-tuning loss at epoch " << epoch + 1
                << "; restoring best checkpoint\n";
      if (best_f1 >= 0.0) model.p = best;
      result.aborted = true;
      return result;
    }

    result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));

    if (have_dev) {
      std::vector<PredictionRecord> records;
      records.reserve(split.dev.size());
      for (std::size_t i = 0; i < split.dev.size(); ++i) {
        const LabeledEdge& e = split.dev[i];
        Rng pair_rng = derive_rng(cfg.seed, 0xdef0 + epoch, i);
        PredictionRecord rec =
            score_pair(model, g, e.src, e.dst, opts.eval_contexts,
                       opts.max_context_size, pair_rng, opts.strategy);
        rec.label = e.label;
        records.push_back(std::move(rec));
      }
      const double threshold = choose_threshold(records);
      const double f1 = micro_f1(records, threshold);
      result.dev_f1.push_back(f1);
      if (f1 > best_f1) {
        best_f1 = f1;
        best = model.p;
        result.best_epoch = epoch + 1;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }

  if (have_dev && result.best_epoch > 0) {
    model.p = best;
  } else {
    result.best_epoch = result.epoch_loss.size();
  }
  return result;
}

}  // namespace slice
