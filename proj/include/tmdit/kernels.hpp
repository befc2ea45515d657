#pragma once

#include <cstdint>
#include <span>

// Dense row-major kernels behind the tensor ops.
//
// Every kernel exists twice: `serial` is the reference loop nest, `omp` splits
// the outer (row) loop across OpenMP threads. Both accumulate each output
// element in the same order, so results are bitwise identical for any thread
// count. The tests hold them to that.
namespace tmdit::kernels {

namespace serial {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);
// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);
// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);

void softmax_rows(std::int64_t rows, std::int64_t cols, const double* x, double* y);
void softmax_rows_backward(std::int64_t rows, std::int64_t cols,
                           const double* y, const double* dy, double* dx);

// y = (x - mean) / sqrt(var + eps), biased variance. inv_std receives one value per row.
void layernorm_rows(std::int64_t rows, std::int64_t cols, double eps,
                    const double* x, double* y, double* inv_std);
void layernorm_rows_backward(std::int64_t rows, std::int64_t cols,
                             const double* y, const double* inv_std,
                             const double* dy, double* dx);

}  // namespace serial

namespace omp {

void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);
void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);
void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c);

void softmax_rows(std::int64_t rows, std::int64_t cols, const double* x, double* y);
void softmax_rows_backward(std::int64_t rows, std::int64_t cols,
                           const double* y, const double* dy, double* dx);

void layernorm_rows(std::int64_t rows, std::int64_t cols, double eps,
                    const double* x, double* y, double* inv_std);
void layernorm_rows_backward(std::int64_t rows, std::int64_t cols,
                             const double* y, const double* inv_std,
                             const double* dy, double* dx);

}  // namespace omp

}  // namespace tmdit::kernels
