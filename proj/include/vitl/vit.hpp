#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/ops.hpp"
#include "vitl/rng.hpp"
#include "vitl/tensor.hpp"

namespace vitl {

// Full hyperparameter record of the vision-transformer classifier.
struct ViTConfig {
  size_t img_size = 100;    // pixels per side
  size_t patch_size = 20;   // pixels per patch side
  size_t channels = 3;
  size_t d_model = 128;
  size_t num_heads = 4;
  size_t num_layers = 6;
  size_t d_ff = 2048;
  double dropout_rate = 0.1;  // applied on the two residual branches only
  size_t num_classes = 2;

  size_t grid_side() const { return img_size / patch_size; }
  size_t seq_len() const { return grid_side() * grid_side(); }
  size_t patch_dim() const { return patch_size * patch_size * channels; }
  size_t head_dim() const { return d_model / num_heads; }

  void validate() const {
    if (img_size == 0 || patch_size == 0 || channels == 0 || num_classes == 0)
      throw std::invalid_argument("vit config: zero-sized field");
    if (img_size % patch_size != 0)
      throw std::invalid_argument("vit config: img_size " + std::to_string(img_size) +
                                  " not divisible by patch_size " + std::to_string(patch_size));
    if (num_heads == 0 || d_model % num_heads != 0)
      throw std::invalid_argument("vit config: d_model " + std::to_string(d_model) +
                                  " not divisible by num_heads " + std::to_string(num_heads));
    if (d_model % 2 != 0)
      throw std::invalid_argument("vit config: d_model must be even for sinusoidal encoding");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("vit config: dropout rate outside [0, 1)");
  }
};

// Borrowed view of one image in [channels x height x width] row-major order.
template <class S>
struct ImageView {
  const S* data;
  size_t channels, height, width;
};

namespace init {

// Uniform in +-sqrt(6 / (fan_in + fan_out)), drawn row-major from rng.
template <class S>
Tensor<S> xavier_uniform(Shape shape, size_t fan_in, size_t fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  auto t = Tensor<S>::zeros(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = S(rng.uniform(-limit, limit));
  return t;
}

template <class S>
Tensor<S> constant(Shape shape, S v) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = v;
  return t;
}

}  // namespace init

// Cuts the image into the non-overlapping patch grid, top-left patch first,
// scanning grid rows. Each output row is one flattened patch in
// channel-major order (channel, then patch row, then patch column).
template <class S>
Tensor<S> patchify(const ImageView<S>& image, const ViTConfig& cfg) {
  if (image.channels != cfg.channels || image.height != cfg.img_size || image.width != cfg.img_size)
    throw std::invalid_argument("patchify: image [" + std::to_string(image.channels) + "x" +
                                std::to_string(image.height) + "x" + std::to_string(image.width) +
                                "] does not match config [" + std::to_string(cfg.channels) + "x" +
                                std::to_string(cfg.img_size) + "x" + std::to_string(cfg.img_size) +
                                "]");
  const size_t g = cfg.grid_side(), p = cfg.patch_size;
  auto out = Tensor<S>::zeros({cfg.seq_len(), cfg.patch_dim()});
  S* dst = out.data();
  for (size_t gy = 0; gy < g; ++gy) {
    for (size_t gx = 0; gx < g; ++gx) {
      for (size_t c = 0; c < image.channels; ++c) {
        const S* plane = image.data + c * image.height * image.width;
        for (size_t py = 0; py < p; ++py) {
          const S* src = plane + (gy * p + py) * image.width + gx * p;
          for (size_t px = 0; px < p; ++px) *dst++ = src[px];
        }
      }
    }
  }
  return out;
}

// PE[pos, 2i] = sin(pos / 10000^(2i/d_model)), PE[pos, 2i+1] = cos(same).
template <class S>
Tensor<S> positional_encoding(size_t seq_len, size_t d_model) {
  if (d_model % 2 != 0)
    throw std::invalid_argument("positional_encoding: d_model " + std::to_string(d_model) +
                                " must be even");
  auto table = Tensor<S>::zeros({seq_len, d_model});
  for (size_t pos = 0; pos < seq_len; ++pos) {
    for (size_t i = 0; i < d_model; i += 2) {
      const double angle = double(pos) / std::pow(10000.0, double(i) / double(d_model));
      table.at(pos * d_model + i) = S(std::sin(angle));
      table.at(pos * d_model + i + 1) = S(std::cos(angle));
    }
  }
  return table;
}

// softmax(Q K^T / sqrt(d_k)) V over the full token sequence (no masking).
template <class S>
Tensor<S> scaled_dot_product_attention(Tape<S>& tape, const Tensor<S>& q, const Tensor<S>& k,
                                       const Tensor<S>& v) {
  detail::require_rank(q, 2, "attention");
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw std::invalid_argument("attention: Q/K/V shapes differ, " + shape_str(q.shape()) + " vs " +
                                shape_str(k.shape()) + " vs " + shape_str(v.shape()));
  const S inv_sqrt_dk = S(1) / S(std::sqrt(double(q.dim(1))));
  auto scores = scale(tape, matmul_nt(tape, q, k), inv_sqrt_dk);
  auto weights = softmax_lastdim(tape, scores);
  return matmul(tape, weights, v);
}

// Per-block parameters. Q/K/V projections are stored fused across heads.
template <class S>
struct TransformerBlockParams {
  Tensor<S> wq, wk, wv;   // [d_model x d_model], no biases
  Tensor<S> wo;           // [d_model x d_model]
  Tensor<S> w1, b1;       // [d_model x d_ff], [d_ff]
  Tensor<S> w2, b2;       // [d_ff x d_model], [d_model]
  Tensor<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  static TransformerBlockParams init(const ViTConfig& cfg, SeededRng& rng) {
    const size_t d = cfg.d_model, f = cfg.d_ff;
    TransformerBlockParams p;
    p.wq = init::xavier_uniform<S>({d, d}, d, d, rng);
    p.wk = init::xavier_uniform<S>({d, d}, d, d, rng);
    p.wv = init::xavier_uniform<S>({d, d}, d, d, rng);
    p.wo = init::xavier_uniform<S>({d, d}, d, d, rng);
    p.w1 = init::xavier_uniform<S>({d, f}, d, f, rng);
    p.b1 = Tensor<S>::zeros({f});
    p.w2 = init::xavier_uniform<S>({f, d}, f, d, rng);
    p.b2 = Tensor<S>::zeros({d});
    p.ln1_gain = init::constant<S>({d}, S(1));
    p.ln1_bias = Tensor<S>::zeros({d});
    p.ln2_gain = init::constant<S>({d}, S(1));
    p.ln2_bias = Tensor<S>::zeros({d});
    return p;
  }

  void append_params(std::vector<Tensor<S>>& out) const {
    for (const auto& t : {wq, wk, wv, wo, w1, b1, w2, b2, ln1_gain, ln1_bias, ln2_gain, ln2_bias})
      out.push_back(t);
  }
};

// Splits the fused projections into heads, attends per head, concatenates,
// and re-projects.
template <class S>
Tensor<S> multi_head_attention(Tape<S>& tape, const Tensor<S>& x,
                               const TransformerBlockParams<S>& params, const ViTConfig& cfg) {
  const size_t dk = cfg.head_dim();
  auto q = matmul(tape, x, params.wq);
  auto k = matmul(tape, x, params.wk);
  auto v = matmul(tape, x, params.wv);
  std::vector<Tensor<S>> heads;
  heads.reserve(cfg.num_heads);
  for (size_t h = 0; h < cfg.num_heads; ++h) {
    auto qh = slice_cols(tape, q, h * dk, dk);
    auto kh = slice_cols(tape, k, h * dk, dk);
    auto vh = slice_cols(tape, v, h * dk, dk);
    heads.push_back(scaled_dot_product_attention(tape, qh, kh, vh));
  }
  auto merged = cfg.num_heads == 1 ? heads[0] : concat_cols(tape, heads);
  return matmul(tape, merged, params.wo);
}

// Pre-norm residual block:
//   x1  = x + dropout(MHA(LN1(x)))
//   out = x1 + dropout(FFN(LN2(x1))), FFN(u) = relu(u W1 + b1) W2 + b2
template <class S>
Tensor<S> transformer_block(Tape<S>& tape, const Tensor<S>& x,
                            const TransformerBlockParams<S>& params, const ViTConfig& cfg,
                            SeededRng& rng, bool training) {
  auto attn = multi_head_attention(tape, layer_norm(tape, x, params.ln1_gain, params.ln1_bias),
                                   params, cfg);
  auto x1 = add(tape, x, dropout(tape, attn, cfg.dropout_rate, rng, training));
  auto hidden = relu(tape, add_bias(tape, matmul(tape, layer_norm(tape, x1, params.ln2_gain,
                                                                  params.ln2_bias),
                                                 params.w1),
                                    params.b1));
  auto ffn = add_bias(tape, matmul(tape, hidden, params.w2), params.b2);
  return add(tape, x1, dropout(tape, ffn, cfg.dropout_rate, rng, training));
}

// The complete model: patch projection, fixed sinusoidal position table,
// encoder blocks, linear classification head over the mean-pooled tokens.
template <class S>
struct ViTModel {
  Tensor<S> patch_w, patch_b;  // [patch_dim x d_model], [d_model]
  Tensor<S> positional;        // [seq_len x d_model], not learned
  std::vector<TransformerBlockParams<S>> blocks;
  Tensor<S> head_w, head_b;  // [d_model x num_classes], [num_classes]

  static ViTModel init(const ViTConfig& cfg, SeededRng& rng) {
    cfg.validate();
    ViTModel m;
    m.patch_w = init::xavier_uniform<S>({cfg.patch_dim(), cfg.d_model}, cfg.patch_dim(),
                                        cfg.d_model, rng);
    m.patch_b = Tensor<S>::zeros({cfg.d_model});
    m.positional = positional_encoding<S>(cfg.seq_len(), cfg.d_model);
    m.blocks.reserve(cfg.num_layers);
    for (size_t l = 0; l < cfg.num_layers; ++l)
      m.blocks.push_back(TransformerBlockParams<S>::init(cfg, rng));
    m.head_w = init::xavier_uniform<S>({cfg.d_model, cfg.num_classes}, cfg.d_model,
                                       cfg.num_classes, rng);
    m.head_b = Tensor<S>::zeros({cfg.num_classes});
    return m;
  }

  // Learned parameters in serialization order (positional table excluded).
  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out = {patch_w, patch_b};
    for (const auto& b : blocks) b.append_params(out);
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
  }

  // Closed-form learned-parameter count for a config.
  static size_t param_count(const ViTConfig& cfg) {
    const size_t d = cfg.d_model, f = cfg.d_ff;
    const size_t per_block = 4 * d * d + d * f + f + f * d + d + 4 * d;
    return cfg.patch_dim() * d + d + cfg.num_layers * per_block + d * cfg.num_classes +
           cfg.num_classes;
  }
};

// Unnormalized class scores for one image, shape [1 x num_classes].
template <class S>
Tensor<S> vit_forward(Tape<S>& tape, const ImageView<S>& image, const ViTModel<S>& model,
                      const ViTConfig& cfg, SeededRng& rng, bool training) {
  auto tokens = patchify(image, cfg);
  auto embedded = add(tape, add_bias(tape, matmul(tape, tokens, model.patch_w), model.patch_b),
                      model.positional);
  auto x = embedded;
  for (const auto& block : model.blocks)
    x = transformer_block(tape, x, block, cfg, rng, training);
  auto pooled = mean_over_rows(tape, x);
  return add_bias(tape, matmul(tape, pooled, model.head_w), model.head_b);
}

// Argmax with ties broken toward the lowest index.
template <class S>
int predict_class(const Tensor<S>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("predict_class: empty logits");
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits.at(i) > logits.at(best)) best = int(i);
  return best;
}

}  // namespace vitl
