#include "hgnn/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

// The OpenMP variants parallelize over independent output rows/columns/blocks
// only; per-element accumulation order matches the serial loops exactly.

namespace hgnn::kernels {

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    for (int64_t j = 0; j < m; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t t = 0; t < k; ++t) {
      const double av = ai[t];
      const double* bt = b + t * m;
      for (int64_t j = 0; j < m; ++j) ci[j] += av * bt[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (int64_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t t = 0; t < k; ++t) s += ai[t] * bj[t];
      ci[j] = s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
  for (int64_t i = 0; i < k; ++i) {
    double* ci = c + i * m;
    for (int64_t r = 0; r < n; ++r) {
      const double av = a[r * k + i];
      const double* br = b + r * m;
      for (int64_t j = 0; j < m; ++j) ci[j] += av * br[j];
    }
  }
}

void add_bias(double* y, const double* bias, int64_t n, int64_t m) {
  for (int64_t i = 0; i < n; ++i) {
    double* yi = y + i * m;
    for (int64_t j = 0; j < m; ++j) yi[j] += bias[j];
  }
}

void colsum_acc(const double* dy, double* db, int64_t n, int64_t m) {
  for (int64_t j = 0; j < m; ++j) {
    double s = db[j];
    for (int64_t i = 0; i < n; ++i) s += dy[i * m + j];
    db[j] = s;
  }
}

void add_inplace(double* y, const double* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += x[i];
}

void elu(const double* z, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = z[i] > 0.0 ? z[i] : std::expm1(z[i]);
}

void elu_backward_acc(const double* z, const double* dy, double* dz, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dz[i] += dy[i] * (z[i] > 0.0 ? 1.0 : std::exp(z[i]));
}

namespace {

inline void layernorm_row(const double* x, const double* gamma, const double* beta, double* y,
                          int64_t m, double eps) {
  double mean = 0.0;
  for (int64_t j = 0; j < m; ++j) mean += x[j];
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (int64_t j = 0; j < m; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(m);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  for (int64_t j = 0; j < m; ++j) y[j] = gamma[j] * ((x[j] - mean) * inv_std) + beta[j];
}

// dx = (gamma*dy - mean(gamma*dy) - xhat * mean(gamma*dy*xhat)) * inv_std
inline void layernorm_backward_row(const double* x, const double* gamma, const double* dy,
                                   double* dx, int64_t m, double eps) {
  double mean = 0.0;
  for (int64_t j = 0; j < m; ++j) mean += x[j];
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (int64_t j = 0; j < m; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(m);
  const double inv_std = 1.0 / std::sqrt(var + eps);

  double g_mean = 0.0;
  double gx_mean = 0.0;
  for (int64_t j = 0; j < m; ++j) {
    const double xhat = (x[j] - mean) * inv_std;
    const double g = gamma[j] * dy[j];
    g_mean += g;
    gx_mean += g * xhat;
  }
  g_mean /= static_cast<double>(m);
  gx_mean /= static_cast<double>(m);
  for (int64_t j = 0; j < m; ++j) {
    const double xhat = (x[j] - mean) * inv_std;
    dx[j] = (gamma[j] * dy[j] - g_mean - xhat * gx_mean) * inv_std;
  }
}

}  // namespace

void layernorm(const double* x, const double* gamma, const double* beta, double* y, int64_t n,
               int64_t m, double eps) {
  for (int64_t i = 0; i < n; ++i) layernorm_row(x + i * m, gamma, beta, y + i * m, m, eps);
}

void layernorm_backward(const double* x, const double* gamma, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int64_t n, int64_t m, double eps) {
  for (int64_t i = 0; i < n; ++i)
    layernorm_backward_row(x + i * m, gamma, dy + i * m, dx + i * m, m, eps);
  // dgamma[j] += sum_i dy[i,j] * xhat[i,j]; dbeta[j] += sum_i dy[i,j]
  for (int64_t j = 0; j < m; ++j) {
    double dg = dgamma[j];
    double db = dbeta[j];
    for (int64_t i = 0; i < n; ++i) {
      const double* xi = x + i * m;
      double mean = 0.0;
      for (int64_t t = 0; t < m; ++t) mean += xi[t];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t t = 0; t < m; ++t) {
        const double d = xi[t] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double xhat = (xi[j] - mean) / std::sqrt(var + eps);
      dg += dy[i * m + j] * xhat;
      db += dy[i * m + j];
    }
    dgamma[j] = dg;
    dbeta[j] = db;
  }
}

void gather_rows(const double* x, const int32_t* idx, double* y, int64_t n_idx, int64_t m) {
  for (int64_t t = 0; t < n_idx; ++t)
    std::memcpy(y + t * m, x + static_cast<int64_t>(idx[t]) * m, sizeof(double) * m);
}

void scatter_rows_csr(const double* rows, const int32_t* offsets, const int32_t* ids,
                      const double* scale, double* out, int64_t n_nodes, int64_t m) {
  for (int64_t i = 0; i < n_nodes; ++i) {
    double* oi = out + i * m;
    for (int64_t j = 0; j < m; ++j) oi[j] = 0.0;
    for (int32_t t = offsets[i]; t < offsets[i + 1]; ++t) {
      const int64_t e = ids[t];
      const double s = scale ? scale[e] : 1.0;
      const double* re = rows + e * m;
      for (int64_t j = 0; j < m; ++j) oi[j] += s * re[j];
    }
  }
}

double block_sum(const double* x, int64_t n) {
  const int64_t nb = (n + kSumBlock - 1) / kSumBlock;
  double total = 0.0;
  for (int64_t b = 0; b < nb; ++b) {
    const int64_t lo = b * kSumBlock;
    const int64_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
    double s = 0.0;
    for (int64_t i = lo; i < hi; ++i) s += x[i];
    total += s;
  }
  return total;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP variants
// ---------------------------------------------------------------------------

void matmul_nn(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    for (int64_t j = 0; j < m; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t t = 0; t < k; ++t) {
      const double av = ai[t];
      const double* bt = b + t * m;
      for (int64_t j = 0; j < m; ++j) ci[j] += av * bt[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (int64_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t t = 0; t < k; ++t) s += ai[t] * bj[t];
      ci[j] = s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < k; ++i) {
    double* ci = c + i * m;
    for (int64_t r = 0; r < n; ++r) {
      const double av = a[r * k + i];
      const double* br = b + r * m;
      for (int64_t j = 0; j < m; ++j) ci[j] += av * br[j];
    }
  }
}

void add_bias(double* y, const double* bias, int64_t n, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    double* yi = y + i * m;
    for (int64_t j = 0; j < m; ++j) yi[j] += bias[j];
  }
}

void colsum_acc(const double* dy, double* db, int64_t n, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < m; ++j) {
    double s = db[j];
    for (int64_t i = 0; i < n; ++i) s += dy[i * m + j];
    db[j] = s;
  }
}

void add_inplace(double* y, const double* x, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += x[i];
}

void elu(const double* z, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = z[i] > 0.0 ? z[i] : std::expm1(z[i]);
}

void elu_backward_acc(const double* z, const double* dy, double* dz, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dz[i] += dy[i] * (z[i] > 0.0 ? 1.0 : std::exp(z[i]));
}

void layernorm(const double* x, const double* gamma, const double* beta, double* y, int64_t n,
               int64_t m, double eps) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double* xi = x + i * m;
    double* yi = y + i * m;
    double mean = 0.0;
    for (int64_t j = 0; j < m; ++j) mean += xi[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < m; ++j) yi[j] = gamma[j] * ((xi[j] - mean) * inv_std) + beta[j];
  }
}

void layernorm_backward(const double* x, const double* gamma, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int64_t n, int64_t m, double eps) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double* xi = x + i * m;
    const double* dyi = dy + i * m;
    double* dxi = dx + i * m;
    double mean = 0.0;
    for (int64_t j = 0; j < m; ++j) mean += xi[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    double g_mean = 0.0;
    double gx_mean = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double xhat = (xi[j] - mean) * inv_std;
      const double g = gamma[j] * dyi[j];
      g_mean += g;
      gx_mean += g * xhat;
    }
    g_mean /= static_cast<double>(m);
    gx_mean /= static_cast<double>(m);
    for (int64_t j = 0; j < m; ++j) {
      const double xhat = (xi[j] - mean) * inv_std;
      dxi[j] = (gamma[j] * dyi[j] - g_mean - xhat * gx_mean) * inv_std;
    }
  }
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < m; ++j) {
    double dg = dgamma[j];
    double db = dbeta[j];
    for (int64_t i = 0; i < n; ++i) {
      const double* xi = x + i * m;
      double mean = 0.0;
      for (int64_t t = 0; t < m; ++t) mean += xi[t];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t t = 0; t < m; ++t) {
        const double d = xi[t] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double xhat = (xi[j] - mean) / std::sqrt(var + eps);
      dg += dy[i * m + j] * xhat;
      db += dy[i * m + j];
    }
    dgamma[j] = dg;
    dbeta[j] = db;
  }
}

void gather_rows(const double* x, const int32_t* idx, double* y, int64_t n_idx, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < n_idx; ++t)
    std::memcpy(y + t * m, x + static_cast<int64_t>(idx[t]) * m, sizeof(double) * m);
}

void scatter_rows_csr(const double* rows, const int32_t* offsets, const int32_t* ids,
                      const double* scale, double* out, int64_t n_nodes, int64_t m) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_nodes; ++i) {
    double* oi = out + i * m;
    for (int64_t j = 0; j < m; ++j) oi[j] = 0.0;
    for (int32_t t = offsets[i]; t < offsets[i + 1]; ++t) {
      const int64_t e = ids[t];
      const double s = scale ? scale[e] : 1.0;
      const double* re = rows + e * m;
      for (int64_t j = 0; j < m; ++j) oi[j] += s * re[j];
    }
  }
}

double block_sum(const double* x, int64_t n) {
  const int64_t nb = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(static_cast<size_t>(nb), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < nb; ++b) {
    const int64_t lo = b * kSumBlock;
    const int64_t hi = lo + kSumBlock < n ? lo + kSumBlock : n;
    double s = 0.0;
    for (int64_t i = lo; i < hi; ++i) s += x[i];
    partial[static_cast<size_t>(b)] = s;
  }
  double total = 0.0;
  for (int64_t b = 0; b < nb; ++b) total += partial[static_cast<size_t>(b)];
  return total;
}

}  // namespace hgnn::kernels
