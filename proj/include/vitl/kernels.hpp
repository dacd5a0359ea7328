#pragma once

#include <cmath>
#include <cstddef>

// Parallel inner loops shared by the forward and backward passes. Every
// kernel partitions work over independent output elements and keeps each
// element's reduction in fixed ascending index order, so results are
// bit-identical for any thread count (and to the serial references in
// reference.hpp). No kernel may use atomics or parallel reductions.

namespace vitl::kernels {

// C[m x n] = A[m x k] * B[k x n]
template <class S>
void matmul_nn(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (size_t i = 0; i < m; ++i) {
    S* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) crow[j] = S(0);
    const S* arow = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[k x n]
template <class S>
void matmul_nn_acc(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (size_t i = 0; i < m; ++i) {
    S* crow = c + i * n;
    const S* arow = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] = A[m x k] * B[n x k]^T
template <class S>
void matmul_nt(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = S(0);
      for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <class S>
void matmul_nt_acc(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = S(0);
      for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <class S>
void matmul_tn_acc(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (size_t p = 0; p < k; ++p) {
    S* crow = c + p * n;
    for (size_t i = 0; i < m; ++i) {
      const S av = a[i * k + p];
      const S* brow = b + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// rows x cols, softmax over each row with max-shift.
template <class S>
void softmax_rows(const S* x, S* y, size_t rows, size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x + r * cols;
    S* yr = y + r * cols;
    S mx = xr[0];
    for (size_t j = 1; j < cols; ++j)
      if (xr[j] > mx) mx = xr[j];
    S sum = S(0);
    for (size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const S inv = S(1) / sum;
    for (size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

// dx += y * (dy - sum_j dy_j y_j), row-wise softmax Jacobian product.
template <class S>
void softmax_rows_backward(const S* y, const S* dy, S* dx, size_t rows, size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (size_t r = 0; r < rows; ++r) {
    const S* yr = y + r * cols;
    const S* dyr = dy + r * cols;
    S* dxr = dx + r * cols;
    S dot = S(0);
    for (size_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
    for (size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

// Per-row normalization: y = (x - mean) / sqrt(var + eps) * gain + bias.
// Saves the per-row inverse stddev and normalized values for the backward.
template <class S>
void layer_norm_rows(const S* x, const S* gain, const S* bias, S* y, S* xhat, S* inv_sd,
                     size_t rows, size_t cols, S eps) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x + r * cols;
    S* yr = y + r * cols;
    S* hr = xhat + r * cols;
    S mean = S(0);
    for (size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= S(cols);
    S var = S(0);
    for (size_t j = 0; j < cols; ++j) {
      const S d = xr[j] - mean;
      var += d * d;
    }
    var /= S(cols);
    const S isd = S(1) / std::sqrt(var + eps);
    inv_sd[r] = isd;
    for (size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mean) * isd;
      yr[j] = hr[j] * gain[j] + bias[j];
    }
  }
}

template <class S>
void layer_norm_rows_backward_x(const S* dy, const S* gain, const S* xhat, const S* inv_sd,
                                S* dx, size_t rows, size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (size_t r = 0; r < rows; ++r) {
    const S* dyr = dy + r * cols;
    const S* hr = xhat + r * cols;
    S* dxr = dx + r * cols;
    S sum_dh = S(0), sum_dh_h = S(0);
    for (size_t j = 0; j < cols; ++j) {
      const S dh = dyr[j] * gain[j];
      sum_dh += dh;
      sum_dh_h += dh * hr[j];
    }
    const S inv_n = S(1) / S(cols);
    for (size_t j = 0; j < cols; ++j) {
      const S dh = dyr[j] * gain[j];
      dxr[j] += inv_sd[r] * (dh - inv_n * sum_dh - hr[j] * inv_n * sum_dh_h);
    }
  }
}

// dgain[j] += sum_r dy[r][j] * xhat[r][j]; dbias[j] += sum_r dy[r][j].
template <class S>
void layer_norm_rows_backward_params(const S* dy, const S* xhat, S* dgain, S* dbias,
                                     size_t rows, size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (size_t j = 0; j < cols; ++j) {
    S dg = S(0), db = S(0);
    for (size_t r = 0; r < rows; ++r) {
      dg += dy[r * cols + j] * xhat[r * cols + j];
      db += dy[r * cols + j];
    }
    dgain[j] += dg;
    dbias[j] += db;
  }
}

template <class S>
void relu(const S* x, S* y, size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
}

// Subgradient at 0 is 0: gradient flows only where x > 0.
template <class S>
void relu_backward(const S* x, const S* dy, S* dx, size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (size_t i = 0; i < n; ++i)
    if (x[i] > S(0)) dx[i] += dy[i];
}

template <class S>
void add(const S* a, const S* b, S* c, size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

template <class S>
void acc(const S* src, S* dst, size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <class S>
void acc_scaled(const S* src, S scale, S* dst, size_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

// Valid cross-correlation, stride >= 1, no padding.
// out[oc][oy][ox] = bias[oc] + sum_{ic,ky,kx} x[ic][oy*s+ky][ox*s+kx] * w[oc][ic][ky][kx]
template <class S>
void conv2d(const S* x, const S* w, const S* bias, S* out, size_t cin, size_t h, size_t wd,
            size_t cout, size_t ks, size_t stride, size_t oh, size_t ow) {
#pragma omp parallel for schedule(static) if (cout * oh * ow * cin * ks * ks > 16384)
  for (size_t oc = 0; oc < cout; ++oc) {
    S* oplane = out + oc * oh * ow;
    const S* wbase = w + oc * cin * ks * ks;
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        S acc = bias ? bias[oc] : S(0);
        for (size_t ic = 0; ic < cin; ++ic) {
          const S* xplane = x + ic * h * wd;
          const S* wk = wbase + ic * ks * ks;
          for (size_t ky = 0; ky < ks; ++ky) {
            const S* xrow = xplane + (oy * stride + ky) * wd + ox * stride;
            const S* wrow = wk + ky * ks;
            for (size_t kx = 0; kx < ks; ++kx) acc += xrow[kx] * wrow[kx];
          }
        }
        oplane[oy * ow + ox] = acc;
      }
    }
  }
}

// dw[oc][ic][ky][kx] += sum_{oy,ox} dout[oc][oy][ox] * x[ic][oy*s+ky][ox*s+kx]
template <class S>
void conv2d_backward_w(const S* x, const S* dout, S* dw, size_t cin, size_t h, size_t wd,
                       size_t cout, size_t ks, size_t stride, size_t oh, size_t ow) {
#pragma omp parallel for schedule(static) if (cout * cin * ks * ks * oh * ow > 16384)
  for (size_t oc = 0; oc < cout; ++oc) {
    const S* dplane = dout + oc * oh * ow;
    S* dwbase = dw + oc * cin * ks * ks;
    for (size_t ic = 0; ic < cin; ++ic) {
      const S* xplane = x + ic * h * wd;
      for (size_t ky = 0; ky < ks; ++ky) {
        for (size_t kx = 0; kx < ks; ++kx) {
          S acc = S(0);
          for (size_t oy = 0; oy < oh; ++oy) {
            const S* xrow = xplane + (oy * stride + ky) * wd + kx;
            const S* drow = dplane + oy * ow;
            for (size_t ox = 0; ox < ow; ++ox) acc += drow[ox] * xrow[ox * stride];
          }
          dwbase[ic * ks * ks + ky * ks + kx] += acc;
        }
      }
    }
  }
}

// dbias[oc] += sum_{oy,ox} dout[oc][oy][ox]
template <class S>
void conv2d_backward_bias(const S* dout, S* dbias, size_t cout, size_t oh, size_t ow) {
#pragma omp parallel for schedule(static) if (cout * oh * ow > 16384)
  for (size_t oc = 0; oc < cout; ++oc) {
    const S* dplane = dout + oc * oh * ow;
    S acc = S(0);
    for (size_t i = 0; i < oh * ow; ++i) acc += dplane[i];
    dbias[oc] += acc;
  }
}

// dx[ic][iy][ix] += sum over outputs that read the pixel. Parallel over input
// channels: each thread owns whole dx planes, reductions stay ordered.
template <class S>
void conv2d_backward_x(const S* w, const S* dout, S* dx, size_t cin, size_t h, size_t wd,
                       size_t cout, size_t ks, size_t stride, size_t oh, size_t ow) {
#pragma omp parallel for schedule(static) if (cin * cout * oh * ow * ks * ks > 16384)
  for (size_t ic = 0; ic < cin; ++ic) {
    S* dxplane = dx + ic * h * wd;
    for (size_t oc = 0; oc < cout; ++oc) {
      const S* dplane = dout + oc * oh * ow;
      const S* wk = w + (oc * cin + ic) * ks * ks;
      for (size_t oy = 0; oy < oh; ++oy) {
        for (size_t ox = 0; ox < ow; ++ox) {
          const S dv = dplane[oy * ow + ox];
          for (size_t ky = 0; ky < ks; ++ky) {
            S* dxrow = dxplane + (oy * stride + ky) * wd + ox * stride;
            const S* wrow = wk + ky * ks;
            for (size_t kx = 0; kx < ks; ++kx) dxrow[kx] += dv * wrow[kx];
          }
        }
      }
    }
  }
}

// Window max with argmax capture; ties keep the first element in scan order.
template <class S>
void maxpool2d(const S* x, S* out, size_t* argmax, size_t c, size_t h, size_t wd, size_t side) {
  const size_t oh = h / side, ow = wd / side;
#pragma omp parallel for schedule(static) if (c * h * wd > 8192)
  for (size_t ch = 0; ch < c; ++ch) {
    const S* xplane = x + ch * h * wd;
    S* oplane = out + ch * oh * ow;
    size_t* aplane = argmax + ch * oh * ow;
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        size_t best = (oy * side) * wd + ox * side;
        S mx = xplane[best];
        for (size_t ky = 0; ky < side; ++ky) {
          for (size_t kx = 0; kx < side; ++kx) {
            const size_t idx = (oy * side + ky) * wd + (ox * side + kx);
            if (xplane[idx] > mx) {
              mx = xplane[idx];
              best = idx;
            }
          }
        }
        oplane[oy * ow + ox] = mx;
        aplane[oy * ow + ox] = best;
      }
    }
  }
}

template <class S>
void maxpool2d_backward(const S* dout, const size_t* argmax, S* dx, size_t c, size_t h,
                        size_t wd, size_t side) {
  const size_t oh = h / side, ow = wd / side;
#pragma omp parallel for schedule(static) if (c * h * wd > 8192)
  for (size_t ch = 0; ch < c; ++ch) {
    const S* dplane = dout + ch * oh * ow;
    const size_t* aplane = argmax + ch * oh * ow;
    S* dxplane = dx + ch * h * wd;
    for (size_t i = 0; i < oh * ow; ++i) dxplane[aplane[i]] += dplane[i];
  }
}

}  // namespace vitl::kernels
