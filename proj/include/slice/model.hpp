// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slice/context.hpp"
#include "slice/matrix.hpp"
#include "slice/rng.hpp"
#include "slice/skipgram.hpp"

namespace slice {

struct ModelConfig {
  std::size_t num_nodes = 0;  // N; the embedding table has N+1 rows
  std::size_t dim = 128;      // d
  std::size_t layers = 4;     // K
  std::size_t heads = 4;      // N_h; per-head width is dim / heads
  bool identity_nonlinearity = false;  // test hook replacing GELU

  std::size_t head_dim() const { return dim / heads; }
  std::size_t cat_dim() const { return layers * dim; }
  std::size_t vocab() const { return num_nodes + 1; }
  void validate() const;
};

/// One contextual translation layer: per-head bilinear attention projections
/// plus a transform shared across heads.
struct TranslationLayer {
  std::vector<Matrix> w_query;  // per head, dim x head_dim
  std::vector<Matrix> w_key;    // per head, dim x head_dim
  Matrix w_transform;           // dim x dim
};

/// All learnable tensors. Doubles as the container for gradients and Adam
/// moments, which share the same shapes.
struct ModelTensors {
  Matrix embed;  // (N+1) x dim, row N is the mask token
  std::vector<TranslationLayer> layers;
  Matrix mask_w;  // cat_dim x (N+1)
  Matrix mask_b;  // 1 x (N+1)
  Matrix link_w;  // 2*cat_dim x 2
  Matrix link_b;  // 1 x 2

  static ModelTensors shaped(const ModelConfig& cfg);

  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;
  void fill(double v);
  bool all_finite() const;
};

struct SliceModel {
  ModelConfig cfg;
  ModelTensors p;

  static SliceModel init(const ModelConfig& cfg, Rng& rng);

  NodeId mask_id() const { return static_cast<NodeId>(cfg.num_nodes); }
  void set_embeddings(const EmbeddingTable& table);
};

/// Row-stochastic attention matrices, per layer and per head, for one context.
struct AssociationTensor {
  std::vector<std::vector<Matrix>> layer_head;  // [layers][heads], each n x n
};

/// Everything the forward pass computed, kept for the backward pass and for
/// interpretation.
struct ForwardTrace {
  ContextSubgraph ctx;

  struct Layer {
    Matrix input;                    // H_k, n x d
    Matrix transformed;              // H_k * W_s, n x d
    std::vector<Matrix> queries;     // per head, n x head_dim
    std::vector<Matrix> keys;        // per head, n x head_dim
    std::vector<Matrix> attention;   // per head, n x n
    Matrix preactivation;            // messages + residual, n x d
    Matrix output;                   // H_{k+1}, n x d
  };
  std::vector<Layer> layers;
  Matrix final;  // n x cat_dim, concatenation of all layer outputs

  AssociationTensor association() const;
};

/// H0: row i is the embedding of ctx.nodes[i] (mask slots get the mask row).
Matrix encode(const ContextSubgraph& ctx, const SliceModel& model);

/// Softmax of the bilinear scores (W_q h_i) . (W_k h_j) over context nodes.
Matrix attention(const Matrix& h, const TranslationLayer& layer, std::size_t head);

/// One contextual translation: per-head message passing over the attention
/// matrices, residual, then the nonlinearity.
Matrix translate_layer(const Matrix& h, const std::vector<Matrix>& attention_heads,
                       const TranslationLayer& layer, bool identity_nonlinearity);

ForwardTrace forward(const ContextSubgraph& ctx, const SliceModel& model);

/// Unnormalized scores over the N+1 vocabulary for the masked slot.
std::vector<double> masked_node_logits(const SliceModel& model, const Matrix& final,
                                       std::size_t mask_pos);

/// P(edge) from the link head over the concatenated anchor rows.
double link_probability(const SliceModel& model, const Matrix& final,
                        std::size_t u_pos, std::size_t v_pos);

/// sigmoid(h_i . h_j)
double similarity(std::span<const double> a, std::span<const double> b);

/// JSON checkpoint with explicit shapes and a format version.
void save_checkpoint(const SliceModel& model, const std::string& path);
SliceModel load_checkpoint(const std::string& path);

}  // namespace slice
