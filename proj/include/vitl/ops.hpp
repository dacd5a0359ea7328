#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitl/kernels.hpp"
#include "vitl/rng.hpp"
#include "vitl/tensor.hpp"

namespace vitl {

namespace detail {

template <class S>
void require_rank(const Tensor<S>& t, size_t rank, const char* who) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(who) + ": expected rank " + std::to_string(rank) +
                                " tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// c[i][j] = sum_p a[i][p] * b[p][j]; backward dA += dC*B^T, dB += A^T*dC.
template <class S>
Tensor<S> matmul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto out = Tensor<S>::zeros({m, n});
  kernels::matmul_nn(a.data(), b.data(), out.data(), m, k, n);
  tape.record_op({a, b}, out, [a, b, out, m, k, n]() {
    out.ensure_grad();
    a.ensure_grad();
    b.ensure_grad();
    kernels::matmul_nt_acc(out.grad_data(), b.data(), a.grad_data(), m, n, k);
    kernels::matmul_tn_acc(a.data(), out.grad_data(), b.grad_data(), m, k, n);
  });
  return out;
}

// c = a * b^T for [m x k] and [n x k] operands; the attention-score product.
template <class S>
Tensor<S> matmul_nt(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw std::invalid_argument("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  auto out = Tensor<S>::zeros({m, n});
  kernels::matmul_nt(a.data(), b.data(), out.data(), m, k, n);
  tape.record_op({a, b}, out, [a, b, out, m, k, n]() {
    out.ensure_grad();
    a.ensure_grad();
    b.ensure_grad();
    kernels::matmul_nn_acc(out.grad_data(), b.data(), a.grad_data(), m, n, k);
    kernels::matmul_tn_acc(out.grad_data(), a.data(), b.grad_data(), m, n, k);
  });
  return out;
}

template <class S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  auto out = Tensor<S>::zeros(a.shape());
  kernels::add(a.data(), b.data(), out.data(), a.size());
  tape.record_op({a, b}, out, [a, b, out]() {
    out.ensure_grad();
    a.ensure_grad();
    b.ensure_grad();
    kernels::acc(out.grad_data(), a.grad_data(), a.size());
    kernels::acc(out.grad_data(), b.grad_data(), b.size());
  });
  return out;
}

// x[... x n] + bias[n], the one permitted broadcast.
template <class S>
Tensor<S> add_bias(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& bias) {
  detail::require_rank(bias, 1, "add_bias");
  const size_t n = bias.dim(0);
  if (x.rank() == 0 || x.shape().back() != n)
    throw std::invalid_argument("add_bias: last dimension of " + shape_str(x.shape()) +
                                " does not match bias " + shape_str(bias.shape()));
  const size_t rows = x.size() / n;
  auto out = Tensor<S>::zeros(x.shape());
  for (size_t r = 0; r < rows; ++r)
    kernels::add(x.data() + r * n, bias.data(), out.data() + r * n, n);
  tape.record_op({x, bias}, out, [x, bias, out, rows, n]() {
    out.ensure_grad();
    x.ensure_grad();
    bias.ensure_grad();
    kernels::acc(out.grad_data(), x.grad_data(), x.size());
    S* db = bias.grad_data();
    const S* dy = out.grad_data();
    for (size_t r = 0; r < rows; ++r)
      for (size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
  });
  return out;
}

// Elementwise product; a tensor multiplied by itself accumulates both paths.
template <class S>
Tensor<S> mul(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  auto out = Tensor<S>::zeros(a.shape());
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  tape.record_op({a, b}, out, [a, b, out, n]() {
    out.ensure_grad();
    a.ensure_grad();
    b.ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      a.grad_data()[i] += out.grad_data()[i] * b.at(i);
      b.grad_data()[i] += out.grad_data()[i] * a.at(i);
    }
  });
  return out;
}

template <class S>
Tensor<S> scale(Tape<S>& tape, const Tensor<S>& x, S factor) {
  auto out = Tensor<S>::zeros(x.shape());
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) out.at(i) = x.at(i) * factor;
  tape.record_op({x}, out, [x, out, factor]() {
    out.ensure_grad();
    x.ensure_grad();
    kernels::acc_scaled(out.grad_data(), factor, x.grad_data(), x.size());
  });
  return out;
}

template <class S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& x) {
  auto out = Tensor<S>::zeros(x.shape());
  kernels::relu(x.data(), out.data(), x.size());
  tape.record_op({x}, out, [x, out]() {
    out.ensure_grad();
    x.ensure_grad();
    kernels::relu_backward(x.data(), out.grad_data(), x.grad_data(), x.size());
  });
  return out;
}

// Max-shifted softmax over the last dimension.
template <class S>
Tensor<S> softmax_lastdim(Tape<S>& tape, const Tensor<S>& x) {
  if (x.rank() == 0 || x.shape().back() < 1)
    throw std::invalid_argument("softmax_lastdim: empty last dimension in " + shape_str(x.shape()));
  const size_t cols = x.shape().back();
  const size_t rows = x.size() / cols;
  auto out = Tensor<S>::zeros(x.shape());
  kernels::softmax_rows(x.data(), out.data(), rows, cols);
  tape.record_op({x}, out, [x, out, rows, cols]() {
    out.ensure_grad();
    x.ensure_grad();
    kernels::softmax_rows_backward(out.data(), out.grad_data(), x.grad_data(), rows, cols);
  });
  return out;
}

// Normalizes each last-dimension slice with population variance.
template <class S>
Tensor<S> layer_norm(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, S eps = S(1e-5)) {
  detail::require_rank(gain, 1, "layer_norm");
  detail::require_rank(bias, 1, "layer_norm");
  if (x.rank() == 0)
    throw std::invalid_argument("layer_norm: scalar input " + shape_str(x.shape()));
  const size_t cols = x.shape().back();
  if (gain.dim(0) != cols || bias.dim(0) != cols)
    throw std::invalid_argument("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                                shape_str(bias.shape()) + " do not match last dimension of " +
                                shape_str(x.shape()));
  if (!(eps > S(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const size_t rows = x.size() / cols;
  auto out = Tensor<S>::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(x.size());
  auto inv_sd = std::make_shared<std::vector<S>>(rows);
  kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out.data(), xhat->data(),
                           inv_sd->data(), rows, cols, eps);
  tape.record_op({x, gain, bias}, out,
              [x, gain, bias, out, xhat, inv_sd, rows, cols]() {
                out.ensure_grad();
                x.ensure_grad();
                gain.ensure_grad();
                bias.ensure_grad();
                kernels::layer_norm_rows_backward_x(out.grad_data(), gain.data(), xhat->data(),
                                                    inv_sd->data(), x.grad_data(), rows, cols);
                kernels::layer_norm_rows_backward_params(out.grad_data(), xhat->data(),
                                                         gain.grad_data(), bias.grad_data(),
                                                         rows, cols);
              });
  return out;
}

// Inverted dropout: zero with probability rate, survivors scaled by
// 1/(1-rate). Identity when not training. Mask draws come only from rng,
// consumed in element order.
template <class S>
Tensor<S> dropout(Tape<S>& tape, const Tensor<S>& x, double rate, SeededRng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  if (!training || rate == 0.0) {
    auto out = Tensor<S>::zeros(x.shape());
    std::copy(x.data(), x.data() + x.size(), out.data());
    tape.record_op({x}, out, [x, out]() {
      out.ensure_grad();
      x.ensure_grad();
      kernels::acc(out.grad_data(), x.grad_data(), x.size());
    });
    return out;
  }
  const size_t n = x.size();
  const S keep_scale = S(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<uint8_t>>(n);
  for (size_t i = 0; i < n; ++i) (*mask)[i] = rng.uniform() >= rate ? 1 : 0;
  auto out = Tensor<S>::zeros(x.shape());
  for (size_t i = 0; i < n; ++i) out.at(i) = (*mask)[i] ? x.at(i) * keep_scale : S(0);
  tape.record_op({x}, out, [x, out, mask, keep_scale, n]() {
    out.ensure_grad();
    x.ensure_grad();
    for (size_t i = 0; i < n; ++i)
      if ((*mask)[i]) x.grad_data()[i] += out.grad_data()[i] * keep_scale;
  });
  return out;
}

template <class S>
Tensor<S> sum(Tape<S>& tape, const Tensor<S>& x) {
  S acc = S(0);
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) acc += x.at(i);
  auto out = Tensor<S>::scalar(acc);
  tape.record_op({x}, out, [x, out]() {
    out.ensure_grad();
    x.ensure_grad();
    const S g = out.grad_data()[0];
    for (size_t i = 0; i < x.size(); ++i) x.grad_data()[i] += g;
  });
  return out;
}

// Column means of a [m x n] matrix, kept 2-D as [1 x n].
template <class S>
Tensor<S> mean_over_rows(Tape<S>& tape, const Tensor<S>& x) {
  detail::require_rank(x, 2, "mean_over_rows");
  const size_t m = x.dim(0), n = x.dim(1);
  auto out = Tensor<S>::zeros({1, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.at(j) += x.at(i * n + j);
  const S inv_m = S(1) / S(m);
  for (size_t j = 0; j < n; ++j) out.at(j) *= inv_m;
  tape.record_op({x}, out, [x, out, m, n, inv_m]() {
    out.ensure_grad();
    x.ensure_grad();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) x.grad_data()[i * n + j] += out.grad_data()[j] * inv_m;
  });
  return out;
}

// Column slice [c0, c0 + width) of a [m x n] matrix.
template <class S>
Tensor<S> slice_cols(Tape<S>& tape, const Tensor<S>& x, size_t c0, size_t width) {
  detail::require_rank(x, 2, "slice_cols");
  const size_t m = x.dim(0), n = x.dim(1);
  if (c0 + width > n)
    throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + ", " +
                                std::to_string(c0 + width) + ") exceeds " + shape_str(x.shape()));
  auto out = Tensor<S>::zeros({m, width});
  for (size_t i = 0; i < m; ++i)
    std::copy(x.data() + i * n + c0, x.data() + i * n + c0 + width, out.data() + i * width);
  tape.record_op({x}, out, [x, out, m, n, c0, width]() {
    out.ensure_grad();
    x.ensure_grad();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < width; ++j)
        x.grad_data()[i * n + c0 + j] += out.grad_data()[i * width + j];
  });
  return out;
}

template <class S>
Tensor<S> concat_cols(Tape<S>& tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const size_t m = parts[0].dim(0);
  size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m)
      throw std::invalid_argument("concat_cols: row mismatch, " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    total += p.dim(1);
  }
  auto out = Tensor<S>::zeros({m, total});
  size_t off = 0;
  for (const auto& p : parts) {
    const size_t w = p.dim(1);
    for (size_t i = 0; i < m; ++i)
      std::copy(p.data() + i * w, p.data() + (i + 1) * w, out.data() + i * total + off);
    off += w;
  }
  auto parts_copy = parts;
  tape.record_op(parts, out, [parts_copy, out, m, total]() {
    out.ensure_grad();
    size_t off = 0;
    for (const auto& p : parts_copy) {
      p.ensure_grad();
      const size_t w = p.dim(1);
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < w; ++j)
          p.grad_data()[i * w + j] += out.grad_data()[i * total + off + j];
      off += w;
    }
  });
  return out;
}

template <class S>
Tensor<S> concat_rows(Tape<S>& tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const size_t n = parts[0].dim(1);
  size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n)
      throw std::invalid_argument("concat_rows: column mismatch, " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  auto out = Tensor<S>::zeros({rows, n});
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  auto parts_copy = parts;
  tape.record_op(parts, out, [parts_copy, out]() {
    out.ensure_grad();
    size_t off = 0;
    for (const auto& p : parts_copy) {
      p.ensure_grad();
      for (size_t i = 0; i < p.size(); ++i) p.grad_data()[i] += out.grad_data()[off + i];
      off += p.size();
    }
  });
  return out;
}

// Same data, new shape (sizes must agree); grads flow through element-wise.
template <class S>
Tensor<S> reshape(Tape<S>& tape, const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  auto out = Tensor<S>::zeros(shape);
  std::copy(x.data(), x.data() + x.size(), out.data());
  tape.record_op({x}, out, [x, out]() {
    out.ensure_grad();
    x.ensure_grad();
    kernels::acc(out.grad_data(), x.grad_data(), x.size());
  });
  return out;
}

// Valid cross-correlation (no kernel flip) with stride; bias optional.
template <class S>
Tensor<S> conv2d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 size_t stride = 1) {
  detail::require_rank(x, 3, "conv2d");
  detail::require_rank(w, 4, "conv2d");
  const size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const size_t cout = w.dim(0), ks = w.dim(2);
  if (w.dim(1) != cin)
    throw std::invalid_argument("conv2d: input channels " + shape_str(x.shape()) +
                                " do not match kernels " + shape_str(w.shape()));
  if (w.dim(3) != ks) throw std::invalid_argument("conv2d: kernels must be square, got " + shape_str(w.shape()));
  if (ks > h || ks > wd)
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) + " larger than input " +
                                shape_str(x.shape()));
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (bias.defined()) {
    detail::require_rank(bias, 1, "conv2d");
    if (bias.dim(0) != cout)
      throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) +
                                  " does not match kernels " + shape_str(w.shape()));
  }
  const size_t oh = (h - ks) / stride + 1, ow = (wd - ks) / stride + 1;
  auto out = Tensor<S>::zeros({cout, oh, ow});
  kernels::conv2d(x.data(), w.data(), bias.defined() ? bias.data() : nullptr, out.data(), cin, h,
                  wd, cout, ks, stride, oh, ow);
  std::vector<Tensor<S>> inputs = {x, w};
  if (bias.defined()) inputs.push_back(bias);
  tape.record_op(inputs, out,
              [x, w, bias, out, cin, h, wd, cout, ks, stride, oh, ow]() {
                out.ensure_grad();
                x.ensure_grad();
                w.ensure_grad();
                kernels::conv2d_backward_x(w.data(), out.grad_data(), x.grad_data(), cin, h, wd,
                                           cout, ks, stride, oh, ow);
                kernels::conv2d_backward_w(x.data(), out.grad_data(), w.grad_data(), cin, h, wd,
                                           cout, ks, stride, oh, ow);
                if (bias.defined()) {
                  bias.ensure_grad();
                  kernels::conv2d_backward_bias(out.grad_data(), bias.grad_data(), cout, oh, ow);
                }
              });
  return out;
}

// Keeps the top-left [h2 x w2] window of every channel plane.
template <class S>
Tensor<S> crop_spatial(Tape<S>& tape, const Tensor<S>& x, size_t h2, size_t w2) {
  detail::require_rank(x, 3, "crop_spatial");
  const size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  if (h2 > h || w2 > wd)
    throw std::invalid_argument("crop_spatial: target " + std::to_string(h2) + "x" +
                                std::to_string(w2) + " exceeds input " + shape_str(x.shape()));
  if (h2 == h && w2 == wd) return x;
  auto out = Tensor<S>::zeros({c, h2, w2});
  for (size_t ch = 0; ch < c; ++ch)
    for (size_t y = 0; y < h2; ++y)
      std::copy(x.data() + (ch * h + y) * wd, x.data() + (ch * h + y) * wd + w2,
                out.data() + (ch * h2 + y) * w2);
  tape.record_op({x}, out, [x, out, c, h, wd, h2, w2]() {
    out.ensure_grad();
    x.ensure_grad();
    for (size_t ch = 0; ch < c; ++ch)
      for (size_t y = 0; y < h2; ++y)
        for (size_t z = 0; z < w2; ++z)
          x.grad_data()[(ch * h + y) * wd + z] += out.grad_data()[(ch * h2 + y) * w2 + z];
  });
  return out;
}

// Non-overlapping window max; gradient routes to the first max in scan order.
template <class S>
Tensor<S> maxpool2d(Tape<S>& tape, const Tensor<S>& x, size_t side) {
  detail::require_rank(x, 3, "maxpool2d");
  const size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  if (side == 0 || h % side != 0 || wd % side != 0)
    throw std::invalid_argument("maxpool2d: input " + shape_str(x.shape()) +
                                " not divisible by pool side " + std::to_string(side));
  const size_t oh = h / side, ow = wd / side;
  auto out = Tensor<S>::zeros({c, oh, ow});
  auto argmax = std::make_shared<std::vector<size_t>>(c * oh * ow);
  kernels::maxpool2d(x.data(), out.data(), argmax->data(), c, h, wd, side);
  tape.record_op({x}, out, [x, out, argmax, c, h, wd, side]() {
    out.ensure_grad();
    x.ensure_grad();
    kernels::maxpool2d_backward(out.grad_data(), argmax->data(), x.grad_data(), c, h, wd, side);
  });
  return out;
}

// Mean over the batch of -log softmax(logits)[label], in log-sum-exp form.
template <class S>
Tensor<S> cross_entropy_loss(Tape<S>& tape, const Tensor<S>& logits,
                             const std::vector<int>& labels) {
  detail::require_rank(logits, 2, "cross_entropy_loss");
  const size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b)
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_str(logits.shape()));
  for (int lab : labels)
    if (lab < 0 || static_cast<size_t>(lab) >= c)
      throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(lab) +
                                  " outside [0, " + std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<S>>(b * c);
  kernels::softmax_rows(logits.data(), probs->data(), b, c);
  S total = S(0);
  for (size_t i = 0; i < b; ++i) {
    const S* row = logits.data() + i * c;
    S mx = row[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    S lse = S(0);
    for (size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    total += lse - row[labels[i]];
  }
  auto out = Tensor<S>::scalar(total / S(b));
  tape.record_op({logits}, out, [logits, out, probs, labels, b, c]() {
    out.ensure_grad();
    logits.ensure_grad();
    const S g = out.grad_data()[0] / S(b);
    for (size_t i = 0; i < b; ++i) {
      for (size_t j = 0; j < c; ++j) {
        S delta = (*probs)[i * c + j];
        if (static_cast<size_t>(labels[i]) == j) delta -= S(1);
        logits.grad_data()[i * c + j] += g * delta;
      }
    }
  });
  return out;
}

}  // namespace vitl
