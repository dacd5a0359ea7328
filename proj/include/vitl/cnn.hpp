#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/ops.hpp"
#include "vitl/rng.hpp"
#include "vitl/tensor.hpp"
#include "vitl/vit.hpp"  // ImageView, init helpers

namespace vitl {

struct ConvStageSpec {
  size_t filters;
  size_t kernel;
  size_t stride;
};

// Compact convolutional classifier: conv -> relu -> maxpool stages, then
// fully connected layers with relu between.
struct CNNConfig {
  std::vector<ConvStageSpec> stages = {{8, 3, 1}, {16, 3, 1}};
  size_t pool_side = 2;
  std::vector<size_t> fc_widths = {64};
  size_t num_classes = 2;
  size_t img_size = 100;
  size_t channels = 3;

  struct StageDims {
    size_t channels, conv_h, conv_w;  // after convolution
    size_t crop_h, crop_w;            // after cropping to a pool-divisible size
    size_t pool_h, pool_w;            // after pooling
  };

  // Closed-form spatial arithmetic per stage. Feature maps are cropped to
  // the largest pool-divisible extent before pooling, dropping trailing
  // rows/columns.
  std::vector<StageDims> stage_dims() const {
    std::vector<StageDims> dims;
    size_t c = channels, h = img_size, w = img_size;
    for (const auto& s : stages) {
      if (s.kernel > h || s.kernel > w)
        throw std::invalid_argument("cnn config: kernel " + std::to_string(s.kernel) +
                                    " larger than input " + std::to_string(h) + "x" +
                                    std::to_string(w));
      StageDims d;
      d.channels = s.filters;
      d.conv_h = (h - s.kernel) / s.stride + 1;
      d.conv_w = (w - s.kernel) / s.stride + 1;
      d.crop_h = (d.conv_h / pool_side) * pool_side;
      d.crop_w = (d.conv_w / pool_side) * pool_side;
      d.pool_h = d.crop_h / pool_side;
      d.pool_w = d.crop_w / pool_side;
      if (d.pool_h == 0 || d.pool_w == 0)
        throw std::invalid_argument("cnn config: spatial extent vanishes after stage");
      c = d.channels;
      h = d.pool_h;
      w = d.pool_w;
      dims.push_back(d);
    }
    return dims;
  }

  size_t flatten_dim() const {
    if (stages.empty()) return channels * img_size * img_size;
    const auto dims = stage_dims();
    const auto& last = dims.back();
    return last.channels * last.pool_h * last.pool_w;
  }

  void validate() const {
    if (num_classes == 0 || img_size == 0 || channels == 0 || pool_side == 0)
      throw std::invalid_argument("cnn config: zero-sized field");
    for (const auto& s : stages)
      if (s.filters == 0 || s.kernel == 0 || s.stride == 0)
        throw std::invalid_argument("cnn config: zero-sized conv stage");
    stage_dims();  // throws if any stage collapses
  }
};

template <class S>
struct CNNModel {
  struct ConvStage {
    Tensor<S> w;  // [filters x in_channels x k x k]
    Tensor<S> b;  // [filters]
  };
  struct FcLayer {
    Tensor<S> w;  // [in x out]
    Tensor<S> b;  // [out]
  };
  std::vector<ConvStage> stages;
  std::vector<FcLayer> fc;

  static CNNModel init(const CNNConfig& cfg, SeededRng& rng) {
    cfg.validate();
    CNNModel m;
    size_t cin = cfg.channels;
    for (const auto& s : cfg.stages) {
      ConvStage st;
      st.w = init::xavier_uniform<S>({s.filters, cin, s.kernel, s.kernel},
                                     cin * s.kernel * s.kernel, s.filters * s.kernel * s.kernel,
                                     rng);
      st.b = Tensor<S>::zeros({s.filters});
      m.stages.push_back(st);
      cin = s.filters;
    }
    size_t in = cfg.flatten_dim();
    std::vector<size_t> widths = cfg.fc_widths;
    widths.push_back(cfg.num_classes);
    for (size_t w : widths) {
      FcLayer layer;
      layer.w = init::xavier_uniform<S>({in, w}, in, w, rng);
      layer.b = Tensor<S>::zeros({w});
      m.fc.push_back(layer);
      in = w;
    }
    return m;
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    for (const auto& s : stages) {
      out.push_back(s.w);
      out.push_back(s.b);
    }
    for (const auto& l : fc) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
    return out;
  }

  static size_t param_count(const CNNConfig& cfg) {
    size_t total = 0, cin = cfg.channels;
    for (const auto& s : cfg.stages) {
      total += s.filters * cin * s.kernel * s.kernel + s.filters;
      cin = s.filters;
    }
    size_t in = cfg.flatten_dim();
    std::vector<size_t> widths = cfg.fc_widths;
    widths.push_back(cfg.num_classes);
    for (size_t w : widths) {
      total += in * w + w;
      in = w;
    }
    return total;
  }
};

// Stages of conv -> relu -> maxpool (inputs cropped to a pool-divisible
// size), then flatten and fully connected layers with relu between, final
// linear to logits of shape [1 x num_classes].
template <class S>
Tensor<S> cnn_forward(Tape<S>& tape, const ImageView<S>& image, const CNNModel<S>& model,
                      const CNNConfig& cfg) {
  if (image.channels != cfg.channels || image.height != cfg.img_size || image.width != cfg.img_size)
    throw std::invalid_argument("cnn_forward: image [" + std::to_string(image.channels) + "x" +
                                std::to_string(image.height) + "x" + std::to_string(image.width) +
                                "] does not match config");
  auto x = Tensor<S>::from({image.channels, image.height, image.width},
                           std::vector<S>(image.data, image.data + image.channels * image.height *
                                                          image.width));
  const auto dims = cfg.stage_dims();
  for (size_t i = 0; i < model.stages.size(); ++i) {
    x = relu(tape, conv2d(tape, x, model.stages[i].w, model.stages[i].b, cfg.stages[i].stride));
    x = crop_spatial(tape, x, dims[i].crop_h, dims[i].crop_w);
    x = maxpool2d(tape, x, cfg.pool_side);
  }
  auto flat = reshape(tape, x, {size_t{1}, x.size()});
  for (size_t i = 0; i < model.fc.size(); ++i) {
    flat = add_bias(tape, matmul(tape, flat, model.fc[i].w), model.fc[i].b);
    if (i + 1 < model.fc.size()) flat = relu(tape, flat);
  }
  return flat;
}

}  // namespace vitl
