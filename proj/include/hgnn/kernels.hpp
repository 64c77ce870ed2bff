#pragma once

#include <cstdint>

// Dense and scatter/gather kernels behind the neural-network layer.
//
// Two implementations share every signature: hgnn::kernels (OpenMP-parallel)
// and hgnn::kernels::serial (plain loops, the reference the tests compare
// against). Both compute every output element with the same floating-point
// operation order, so results are bitwise identical for any thread count.
// Reductions that cross many elements (sums, column sums) use a fixed block
// decomposition combined in block order for the same reason.

namespace hgnn::kernels {

inline constexpr int64_t kSumBlock = 4096;

// C[n x m] = A[n x k] * B[k x m]
void matmul_nn(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);

// C[n x m] = A[n x k] * B[m x k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);

// C[k x m] += A[n x k]^T * B[n x m]   (accumulating: used for weight gradients)
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);

// Y[i,:] += bias
void add_bias(double* y, const double* bias, int64_t n, int64_t m);

// db[j] += sum_i dy[i,j]
void colsum_acc(const double* dy, double* db, int64_t n, int64_t m);

// y[i] += x[i]
void add_inplace(double* y, const double* x, int64_t n);

// ELU with alpha = 1: y = z > 0 ? z : expm1(z)
void elu(const double* z, double* y, int64_t n);

// dz[i] += dy[i] * elu'(z[i]);  elu'(z) = z > 0 ? 1 : exp(z)
void elu_backward_acc(const double* z, const double* dy, double* dz, int64_t n);

// Row-wise layer normalization with affine scale/shift:
//   y[i,:] = gamma * (x[i,:] - mean_i) / sqrt(var_i + eps) + beta
void layernorm(const double* x, const double* gamma, const double* beta, double* y, int64_t n,
               int64_t m, double eps);

// Adjoint of layernorm. Recomputes per-row statistics from x.
// dgamma/dbeta accumulate; dx overwrites.
void layernorm_backward(const double* x, const double* gamma, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int64_t n, int64_t m, double eps);

// Y[t,:] = X[idx[t],:]
void gather_rows(const double* x, const int32_t* idx, double* y, int64_t n_idx, int64_t m);

// Deterministic scatter-sum over a CSR grouping of edge rows by target node:
//   out[i,:] = sum over t in [offsets[i], offsets[i+1]) of scale[ids[t]] * rows[ids[t],:]
// scale may be null (unit scaling). Overwrites out.
void scatter_rows_csr(const double* rows, const int32_t* offsets, const int32_t* ids,
                      const double* scale, double* out, int64_t n_nodes, int64_t m);

// Deterministic blocked sum, parallel over fixed-size blocks combined in order.
double block_sum(const double* x, int64_t n);

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);
void matmul_nt(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t n, int64_t k, int64_t m);
void add_bias(double* y, const double* bias, int64_t n, int64_t m);
void colsum_acc(const double* dy, double* db, int64_t n, int64_t m);
void add_inplace(double* y, const double* x, int64_t n);
void elu(const double* z, double* y, int64_t n);
void elu_backward_acc(const double* z, const double* dy, double* dz, int64_t n);
void layernorm(const double* x, const double* gamma, const double* beta, double* y, int64_t n,
               int64_t m, double eps);
void layernorm_backward(const double* x, const double* gamma, const double* dy, double* dx,
                        double* dgamma, double* dbeta, int64_t n, int64_t m, double eps);
void gather_rows(const double* x, const int32_t* idx, double* y, int64_t n_idx, int64_t m);
void scatter_rows_csr(const double* rows, const int32_t* offsets, const int32_t* ids,
                      const double* scale, double* out, int64_t n_nodes, int64_t m);
double block_sum(const double* x, int64_t n);

}  // namespace serial

}  // namespace hgnn::kernels
