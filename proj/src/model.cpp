// SPDX-License-Identifier: Apache-2.0
#include "slice/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "slice/format.hpp"

namespace slice {

void ModelConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0) {
    throw std::invalid_argument("dim, layers and heads must be positive");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("dim must be divisible by the head count");
  }
}

ModelTensors ModelTensors::shaped(const ModelConfig& cfg) {
  cfg.validate();
  ModelTensors t;
  t.embed = Matrix(cfg.vocab(), cfg.dim);
  t.layers.resize(cfg.layers);
  for (auto& layer : t.layers) {
    layer.w_transform = Matrix(cfg.dim, cfg.dim);
    layer.w_query.assign(cfg.heads, Matrix(cfg.dim, cfg.head_dim()));
    layer.w_key.assign(cfg.heads, Matrix(cfg.dim, cfg.head_dim()));
  }
  t.mask_w = Matrix(cfg.cat_dim(), cfg.vocab());
  t.mask_b = Matrix(1, cfg.vocab());
  t.link_w = Matrix(2 * cfg.cat_dim(), 2);
  t.link_b = Matrix(1, 2);
  return t;
}

void ModelTensors::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("embed", embed);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string prefix = "layer" + std::to_string(k) + ".";
    fn(prefix + "w_transform", layers[k].w_transform);
    for (std::size_t h = 0; h < layers[k].w_query.size(); ++h) {
      fn(prefix + "w_query" + std::to_string(h), layers[k].w_query[h]);
      fn(prefix + "w_key" + std::to_string(h), layers[k].w_key[h]);
    }
  }
  fn("mask_w", mask_w);
  fn("mask_b", mask_b);
  fn("link_w", link_w);
  fn("link_b", link_b);
}

void ModelTensors::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ModelTensors*>(this)->for_each(
      [&fn](const std::string& name, Matrix& m) { fn(name, m); });
}

void ModelTensors::fill(double v) {
  for_each([v](const std::string&, Matrix& m) { m.fill(v); });
}

bool ModelTensors::all_finite() const {
  bool ok = true;
  for_each([&ok](const std::string&, const Matrix& m) { ok = ok && m.all_finite(); });
  return ok;
}

namespace {

void xavier_fill(Matrix& m, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = uniform_range(rng, -bound, bound);
  }
}

}  // namespace

SliceModel SliceModel::init(const ModelConfig& cfg, Rng& rng) {
  SliceModel model;
  model.cfg = cfg;
  model.p = ModelTensors::shaped(cfg);
  model.p.for_each([&rng](const std::string& name, Matrix& m) {
    if (name == "mask_b" || name == "link_b") return;  // biases start at zero
    xavier_fill(m, rng);
  });
  return model;
}

void SliceModel::set_embeddings(const EmbeddingTable& table) {
  if (table.weights.rows() != p.embed.rows() || table.dim() != cfg.dim) {
    throw std::invalid_argument("embedding table shape does not match model");
  }
  p.embed = table.weights;
}

Matrix encode(const ContextSubgraph& ctx, const SliceModel& model) {
  const std::size_t n = ctx.nodes.size();
  Matrix h(n, model.cfg.dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (ctx.nodes[i] >= model.cfg.vocab()) {
      throw std::out_of_range("context node id " + std::to_string(ctx.nodes[i]) +
                              " outside embedding table");
    }
    auto row = model.p.embed.row(ctx.nodes[i]);
    std::copy(row.begin(), row.end(), h.row(i).begin());
  }
  return h;
}

namespace {

Matrix attention_from_qk(const Matrix& q, const Matrix& k) {
  Matrix scores = matmul_transb(q, k);
  if (!scores.all_finite()) {
    throw NumericError("attention scores are not finite");
  }
  // Row softmax; subtracting the row max leaves the result unchanged.
  const std::size_t n = scores.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = scores.row(i);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return scores;
}

}  // namespace

Matrix attention(const Matrix& h, const TranslationLayer& layer, std::size_t head) {
  return attention_from_qk(matmul(h, layer.w_query[head]),
                           matmul(h, layer.w_key[head]));
}

Matrix translate_layer(const Matrix& h, const std::vector<Matrix>& attention_heads,
                       const TranslationLayer& layer, bool identity_nonlinearity) {
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  const std::size_t heads = attention_heads.size();
  if (heads != layer.w_query.size()) {
    throw std::invalid_argument("attention head count does not match layer");
  }
  const std::size_t hd = d / heads;

  const Matrix transformed = matmul(h, layer.w_transform);
  Matrix out(n, d);
  for (std::size_t head = 0; head < heads; ++head) {
    const Matrix& a = attention_heads[head];
    check_shape(a.rows() == n && a.cols() == n, "attention matrix");
    const std::size_t off = head * hd;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < n; ++t) {
        const double w = a(i, t);
        for (std::size_t j = 0; j < hd; ++j) {
          out(i, off + j) += w * transformed(t, off + j);
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = out.data()[i] + h.data()[i];
    out.data()[i] = identity_nonlinearity ? z : gelu(z);
  }
  return out;
}

ForwardTrace forward(const ContextSubgraph& ctx, const SliceModel& model) {
  const std::size_t n = ctx.nodes.size();
  const std::size_t d = model.cfg.dim;

  ForwardTrace trace;
  trace.ctx = ctx;
  trace.layers.resize(model.cfg.layers);

  Matrix h = encode(ctx, model);
  for (std::size_t k = 0; k < model.cfg.layers; ++k) {
    auto& lt = trace.layers[k];
    const TranslationLayer& layer = model.p.layers[k];
    lt.input = h;
    lt.transformed = matmul(h, layer.w_transform);
    lt.queries.resize(model.cfg.heads);
    lt.keys.resize(model.cfg.heads);
    lt.attention.resize(model.cfg.heads);
    for (std::size_t head = 0; head < model.cfg.heads; ++head) {
      lt.queries[head] = matmul(h, layer.w_query[head]);
      lt.keys[head] = matmul(h, layer.w_key[head]);
      lt.attention[head] = attention_from_qk(lt.queries[head], lt.keys[head]);
    }
    // Messages per head from the matching column block of the transform.
    const std::size_t hd = model.cfg.head_dim();
    Matrix pre(n, d);
    for (std::size_t head = 0; head < model.cfg.heads; ++head) {
      const Matrix& a = lt.attention[head];
      const std::size_t off = head * hd;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < n; ++t) {
          const double w = a(i, t);
          for (std::size_t j = 0; j < hd; ++j) {
            pre(i, off + j) += w * lt.transformed(t, off + j);
          }
        }
      }
    }
    add_inplace(pre, h);
    lt.preactivation = pre;
    Matrix next(n, d);
    for (std::size_t i = 0; i < pre.size(); ++i) {
      next.data()[i] =
          model.cfg.identity_nonlinearity ? pre.data()[i] : gelu(pre.data()[i]);
    }
    lt.output = next;
    h = std::move(next);
  }

  trace.final = Matrix(n, model.cfg.cat_dim());
  for (std::size_t k = 0; k < model.cfg.layers; ++k) {
    const Matrix& out = trace.layers[k].output;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        trace.final(i, k * d + j) = out(i, j);
      }
    }
  }
  return trace;
}

AssociationTensor ForwardTrace::association() const {
  AssociationTensor assoc;
  assoc.layer_head.reserve(layers.size());
  for (const Layer& layer : layers) assoc.layer_head.push_back(layer.attention);
  return assoc;
}

std::vector<double> masked_node_logits(const SliceModel& model, const Matrix& final,
                                       std::size_t mask_pos) {
  if (mask_pos >= final.rows()) throw std::out_of_range("mask position out of range");
  const std::size_t vocab = model.cfg.vocab();
  std::vector<double> logits(vocab);
  auto row = final.row(mask_pos);
  for (std::size_t c = 0; c < vocab; ++c) {
    double acc = model.p.mask_b(0, c);
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * model.p.mask_w(j, c);
    logits[c] = acc;
  }
  return logits;
}

double link_probability(const SliceModel& model, const Matrix& final,
                        std::size_t u_pos, std::size_t v_pos) {
  if (u_pos >= final.rows() || v_pos >= final.rows()) {
    throw std::out_of_range("anchor position out of range");
  }
  const std::size_t dc = model.cfg.cat_dim();
  double logits[2] = {model.p.link_b(0, 0), model.p.link_b(0, 1)};
  auto ru = final.row(u_pos);
  auto rv = final.row(v_pos);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < dc; ++j) {
      logits[c] += ru[j] * model.p.link_w(j, c) + rv[j] * model.p.link_w(dc + j, c);
    }
  }
  // softmax over two classes; class 1 is "edge present"
  return sigmoid(logits[1] - logits[0]);
}

double similarity(std::span<const double> a, std::span<const double> b) {
  return sigmoid(dot(a, b));
}

void save_checkpoint(const SliceModel& model, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = {{"num_nodes", model.cfg.num_nodes},
                 {"dim", model.cfg.dim},
                 {"layers", model.cfg.layers},
                 {"heads", model.cfg.heads},
                 {"identity_nonlinearity", model.cfg.identity_nonlinearity}};
  nlohmann::json tensors = nlohmann::json::object();
  model.p.for_each([&tensors](const std::string& name, const Matrix& m) {
    tensors[name] = {{"rows", m.rows()},
                     {"cols", m.cols()},
                     {"data", std::vector<double>(m.data(), m.data() + m.size())}};
  });
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

SliceModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format_version").get<int>() != 1) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const auto& cj = j.at("config");
  ModelConfig cfg;
  cfg.num_nodes = cj.at("num_nodes").get<std::size_t>();
  cfg.dim = cj.at("dim").get<std::size_t>();
  cfg.layers = cj.at("layers").get<std::size_t>();
  cfg.heads = cj.at("heads").get<std::size_t>();
  cfg.identity_nonlinearity = cj.at("identity_nonlinearity").get<bool>();

  SliceModel model;
  model.cfg = cfg;
  model.p = ModelTensors::shaped(cfg);
  const auto& tensors = j.at("tensors");
  model.p.for_each([&tensors, &path](const std::string& name, Matrix& m) {
    const auto& tj = tensors.at(name);
    if (tj.at("rows").get<std::size_t>() != m.rows() ||
        tj.at("cols").get<std::size_t>() != m.cols()) {
      throw std::runtime_error("checkpoint tensor `" + name + "` has wrong shape in " +
                               path);
    }
    auto data = tj.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) {
      throw std::runtime_error("checkpoint tensor `" + name + "` has wrong size");
    }
    std::copy(data.begin(), data.end(), m.data());
  });
  if (!model.p.all_finite()) {
    throw std::runtime_error("checkpoint contains non-finite values: " + path);
  }
  return model;
}

}  // namespace slice
