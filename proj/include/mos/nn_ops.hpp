#pragma once

#include <cmath>
#include <cstddef>

#include "mos/parallel.hpp"
#include "mos/tensor.hpp"

namespace mos::nn {

// Dense kernels on row-major buffers. Each output element is a sequential
// reduction owned by a single worker, so results do not depend on the worker
// count.

/// C[m x n] = A[m x k] * B[k x n]; set accumulate=true for +=.
template <typename T>
void matmul(const T *A, const T *B, T *C, std::size_t m, std::size_t k, std::size_t n, bool accumulate = false) {
  parallel_for_chunks(m, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      T *c_row = C + i * n;
      if (!accumulate)
        for (std::size_t j = 0; j < n; ++j) c_row[j] = T(0);
      const T *a_row = A + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T a = a_row[p];
        const T *b_row = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
      }
    }
  });
}

/// C[m x n] = A[m x k] * B^T, with B stored [n x k].
template <typename T>
void matmul_bt(const T *A, const T *B, T *C, std::size_t m, std::size_t k, std::size_t n, bool accumulate = false) {
  parallel_for_chunks(m, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      const T *a_row = A + i * k;
      T *c_row = C + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T *b_row = B + j * k;
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
        c_row[j] = accumulate ? c_row[j] + acc : acc;
      }
    }
  });
}

/// C[k x n] += A^T * B, with A stored [m x k] and B stored [m x n].
/// Used for weight gradients; always accumulates.
template <typename T>
void matmul_at_acc(const T *A, const T *B, T *C, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for_chunks(k, [&](std::size_t col_begin, std::size_t col_end) {
    for (std::size_t i = col_begin; i < col_end; ++i) {
      T *c_row = C + i * n;
      for (std::size_t r = 0; r < m; ++r) {
        const T a = A[r * k + i];
        if (a == T(0)) continue;
        const T *b_row = B + r * n;
        for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
      }
    }
  });
}

/// Y[m x n] = X[m x k] * W[k x n] + b (b broadcast over rows).
template <typename T>
void linear_forward(const T *X, const T *W, const T *b, T *Y, std::size_t m, std::size_t k, std::size_t n) {
  matmul(X, W, Y, m, k, n);
  parallel_for_chunks(m, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      T *y_row = Y + i * n;
      for (std::size_t j = 0; j < n; ++j) y_row[j] += b[j];
    }
  });
}

/// Backward of linear_forward. dW, db are accumulated; dX may be null.
template <typename T>
void linear_backward(const T *X, const T *W, const T *dY, T *dX, T *dW, T *db, std::size_t m, std::size_t k,
                     std::size_t n) {
  if (dX) matmul_bt(dY, W, dX, m, n, k);
  matmul_at_acc(X, dY, dW, m, k, n);
  for (std::size_t j = 0; j < n; ++j) {
    T acc = T(0);
    for (std::size_t i = 0; i < m; ++i) acc += dY[i * n + j];
    db[j] += acc;
  }
}

/// Row-wise layer normalization with affine parameters. Caches the per-row
/// mean and reciprocal standard deviation for the backward pass.
template <typename T>
void layernorm_forward(const T *X, const T *gamma, const T *beta, T *Y, T *mean, T *rstd, std::size_t rows,
                       std::size_t dim, T eps = T(1e-5)) {
  parallel_for_chunks(rows, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      const T *x = X + i * dim;
      T m = T(0);
      for (std::size_t d = 0; d < dim; ++d) m += x[d];
      m /= static_cast<T>(dim);
      T var = T(0);
      for (std::size_t d = 0; d < dim; ++d) {
        const T c = x[d] - m;
        var += c * c;
      }
      var /= static_cast<T>(dim);
      const T r = T(1) / std::sqrt(var + eps);
      mean[i] = m;
      rstd[i] = r;
      T *y = Y + i * dim;
      for (std::size_t d = 0; d < dim; ++d) y[d] = (x[d] - m) * r * gamma[d] + beta[d];
    }
  });
}

/// Backward of layernorm_forward. dgamma/dbeta accumulate; dX is written.
template <typename T>
void layernorm_backward(const T *X, const T *gamma, const T *mean, const T *rstd, const T *dY, T *dX, T *dgamma,
                        T *dbeta, std::size_t rows, std::size_t dim) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T *x = X + i * dim;
    const T *dy = dY + i * dim;
    const T r = rstd[i];
    const T m = mean[i];
    for (std::size_t d = 0; d < dim; ++d) {
      const T xhat = (x[d] - m) * r;
      dgamma[d] += dy[d] * xhat;
      dbeta[d] += dy[d];
    }
  }
  parallel_for_chunks(rows, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; ++i) {
      const T *x = X + i * dim;
      const T *dy = dY + i * dim;
      T *dx = dX + i * dim;
      const T r = rstd[i];
      const T m = mean[i];
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t d = 0; d < dim; ++d) {
        const T g = dy[d] * gamma[d];
        const T xhat = (x[d] - m) * r;
        sum_g += g;
        sum_gx += g * xhat;
      }
      const T inv_dim = T(1) / static_cast<T>(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        const T g = dy[d] * gamma[d];
        const T xhat = (x[d] - m) * r;
        dx[d] = r * (g - inv_dim * sum_g - xhat * inv_dim * sum_gx);
      }
    }
  });
}

/// Batch normalization over rows (per-feature statistics, biased variance).
/// Caches per-feature mean and reciprocal std.
template <typename T>
void batchnorm_forward(const T *X, const T *gamma, const T *beta, T *Y, T *mean, T *rstd, std::size_t rows,
                       std::size_t dim, T eps = T(1e-5)) {
  for (std::size_t d = 0; d < dim; ++d) {
    T m = T(0);
    for (std::size_t i = 0; i < rows; ++i) m += X[i * dim + d];
    m /= static_cast<T>(rows);
    T var = T(0);
    for (std::size_t i = 0; i < rows; ++i) {
      const T c = X[i * dim + d] - m;
      var += c * c;
    }
    var /= static_cast<T>(rows);
    mean[d] = m;
    rstd[d] = T(1) / std::sqrt(var + eps);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const T *x = X + i * dim;
    T *y = Y + i * dim;
    for (std::size_t d = 0; d < dim; ++d) y[d] = (x[d] - mean[d]) * rstd[d] * gamma[d] + beta[d];
  }
}

template <typename T>
void batchnorm_backward(const T *X, const T *gamma, const T *mean, const T *rstd, const T *dY, T *dX, T *dgamma,
                        T *dbeta, std::size_t rows, std::size_t dim) {
  const T inv_rows = T(1) / static_cast<T>(rows);
  for (std::size_t d = 0; d < dim; ++d) {
    T sum_g = T(0), sum_gx = T(0);
    for (std::size_t i = 0; i < rows; ++i) {
      const T xhat = (X[i * dim + d] - mean[d]) * rstd[d];
      const T dy = dY[i * dim + d];
      dgamma[d] += dy * xhat;
      dbeta[d] += dy;
      sum_g += dy;
      sum_gx += dy * xhat;
    }
    for (std::size_t i = 0; i < rows; ++i) {
      const T xhat = (X[i * dim + d] - mean[d]) * rstd[d];
      const T dy = dY[i * dim + d];
      dX[i * dim + d] = gamma[d] * rstd[d] * (dy - inv_rows * sum_g - xhat * inv_rows * sum_gx);
    }
  }
}

template <typename T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <typename T>
T gelu_grad_scalar(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
  return cdf + x * pdf;
}

template <typename T>
void gelu_forward(const T *X, T *Y, std::size_t n) {
  parallel_for_chunks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) Y[i] = gelu_scalar(X[i]);
  });
}

/// dX = dY * gelu'(X); dX may alias dY.
template <typename T>
void gelu_backward(const T *X, const T *dY, T *dX, std::size_t n) {
  parallel_for_chunks(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) dX[i] = dY[i] * gelu_grad_scalar(X[i]);
  });
}

template <typename T>
void relu_forward(const T *X, T *Y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) Y[i] = X[i] > T(0) ? X[i] : T(0);
}

template <typename T>
void relu_backward(const T *X, const T *dY, T *dX, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dX[i] = X[i] > T(0) ? dY[i] : T(0);
}

/// In-place numerically stable softmax over one row of length n.
template <typename T>
void softmax_row(T *row, std::size_t n) {
  T mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = row[i] > mx ? row[i] : mx;
  T sum = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  const T inv = T(1) / sum;
  for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
}

template <typename T>
bool all_finite(const T *x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

} // namespace mos::nn
