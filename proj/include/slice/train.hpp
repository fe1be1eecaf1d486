// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "slice/context.hpp"
#include "slice/graph.hpp"
#include "slice/model.hpp"

namespace slice {

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t patience = 10;  // early stop after this many non-improving epochs
  double clip_norm = 5.0;     // global-norm gradient clip; <= 0 disables

  void validate() const;
};

/// -log p(target | masked context). The context must carry a mask position.
double pretrain_loss(const SliceModel& model, const ContextSubgraph& masked_ctx,
                     NodeId target);

/// Sum of -log p over positives and -log(1-p) over negatives; each context
/// must contain its anchors.
double finetune_loss(const SliceModel& model,
                     const std::vector<ContextSubgraph>& positives,
                     const std::vector<ContextSubgraph>& negatives);

/// Push a gradient on `final` back through the translation layers and the
/// embedding lookup, accumulating into `grads`.
void backprop_final(const SliceModel& model, const ForwardTrace& trace,
                    const Matrix& dfinal, ModelTensors& grads);

/// Reverse-mode gradients of the masked-node loss for one recorded forward
/// pass. Returns the loss; gradients accumulate into `grads`.
double pretrain_backward(const SliceModel& model, const ForwardTrace& trace,
                         NodeId target, ModelTensors& grads);

/// Same for one link-prediction example with the given label.
double link_backward(const SliceModel& model, const ForwardTrace& trace,
                     std::size_t u_pos, std::size_t v_pos, int label,
                     ModelTensors& grads);

/// Convenience: forward + link_backward over a whole batch, anchors resolved
/// from each context. Returns the summed loss.
double finetune_backward(const SliceModel& model,
                         const std::vector<ContextSubgraph>& positives,
                         const std::vector<ContextSubgraph>& negatives,
                         ModelTensors& grads);

struct AdamState {
  ModelTensors m;
  ModelTensors v;
  std::size_t step = 0;

  static AdamState shaped(const ModelConfig& cfg);
};

/// Standard Adam update with bias correction.
void adam_step(ModelTensors& params, const ModelTensors& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

/// Elementwise Adam update for a single tensor; `step` is the 1-based step
/// count after this update.
void adam_update_tensor(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                        std::size_t step, double lr, const TrainConfig& cfg);

/// Scale gradients to `max_norm` if their global norm exceeds it. Returns the
/// pre-clip norm.
double clip_gradients(ModelTensors& grads, double max_norm);

struct PretrainResult {
  std::vector<double> epoch_loss;
  std::size_t best_epoch = 0;  // 1-based into epoch_loss
  bool aborted = false;
};

/// Masked-node pretraining over node contexts, fresh mask every epoch. The
/// model ends at the best-loss checkpoint.
PretrainResult run_pretraining(SliceModel& model,
                               const std::vector<ContextSubgraph>& contexts,
                               const TrainConfig& cfg, Rng& rng);

struct FinetuneOptions {
  std::size_t max_context_size = 6;
  std::size_t negative_ratio = 2;
  std::size_t eval_contexts = 10;
  ContextStrategy strategy = ContextStrategy::random_walk;
  bool freeze_pretrained = false;  // update only the prediction heads
  bool type_constrained_negatives = false;
};

struct FinetuneResult {
  std::vector<double> epoch_loss;
  std::vector<double> dev_f1;   // empty when the split has no dev set
  std::size_t best_epoch = 0;   // 1-based; 0 means no checkpoint was kept
  bool aborted = false;
};

/// Link-prediction fine-tuning: every positive is paired with its sampled
/// negatives in the same step; the model ends at the best dev-F1 checkpoint
/// (final epoch when no dev set exists).
FinetuneResult run_finetuning(SliceModel& model, const HeteroGraph& g,
                              const EdgeSplit& split, const FinetuneOptions& opts,
                              const TrainConfig& cfg, Rng& rng);

}  // namespace slice
