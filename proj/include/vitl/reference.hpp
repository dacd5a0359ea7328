#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Single-threaded naive implementations, kept as oracles for the parallel
// kernels and as the baseline side of the benchmark. Do not optimize these.

namespace vitl::ref {

// Plain triple loop, c[i][j] = sum_p a[i][p] * b[p][j].
template <class S>
void matmul_naive(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      S acc = S(0);
      for (size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

// Valid cross-correlation, quadruple loop per output element.
template <class S>
void conv2d_naive(const S* x, const S* w, const S* bias, S* out, size_t cin, size_t h,
                  size_t wd, size_t cout, size_t ks, size_t stride, size_t oh, size_t ow) {
  for (size_t oc = 0; oc < cout; ++oc) {
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        S acc = bias ? bias[oc] : S(0);
        for (size_t ic = 0; ic < cin; ++ic)
          for (size_t ky = 0; ky < ks; ++ky)
            for (size_t kx = 0; kx < ks; ++kx)
              acc += x[ic * h * wd + (oy * stride + ky) * wd + (ox * stride + kx)] *
                     w[((oc * cin + ic) * ks + ky) * ks + kx];
        out[oc * oh * ow + oy * ow + ox] = acc;
      }
    }
  }
}

// softmax(Q K^T / sqrt(dk)) V with explicit dot products, one query at a time.
template <class S>
std::vector<S> attention_naive(const std::vector<S>& q, const std::vector<S>& k,
                               const std::vector<S>& v, size_t s, size_t dk) {
  std::vector<S> out(s * dk, S(0));
  const S scale = S(1) / std::sqrt(S(dk));
  std::vector<S> scores(s);
  for (size_t i = 0; i < s; ++i) {
    for (size_t j = 0; j < s; ++j) {
      S dot = S(0);
      for (size_t p = 0; p < dk; ++p) dot += q[i * dk + p] * k[j * dk + p];
      scores[j] = dot * scale;
    }
    S mx = scores[0];
    for (size_t j = 1; j < s; ++j) mx = std::max(mx, scores[j]);
    S z = S(0);
    for (size_t j = 0; j < s; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      z += scores[j];
    }
    for (size_t j = 0; j < s; ++j) {
      const S wgt = scores[j] / z;
      for (size_t p = 0; p < dk; ++p) out[i * dk + p] += wgt * v[j * dk + p];
    }
  }
  return out;
}

template <class S>
void maxpool2d_naive(const S* x, S* out, size_t c, size_t h, size_t wd, size_t side) {
  const size_t oh = h / side, ow = wd / side;
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        S mx = x[ch * h * wd + oy * side * wd + ox * side];
        for (size_t ky = 0; ky < side; ++ky)
          for (size_t kx = 0; kx < side; ++kx)
            mx = std::max(mx, x[ch * h * wd + (oy * side + ky) * wd + ox * side + kx]);
        out[ch * oh * ow + oy * ow + ox] = mx;
      }
    }
  }
}

}  // namespace vitl::ref
