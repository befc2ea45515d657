#include "tmdit/kernels.hpp"

#include "row_ops.hpp"

// Loop orders here differ from the serial reference for cache reasons, but each
// output element still sees its k-terms added one at a time in ascending order.
namespace tmdit::kernels::omp {

namespace {
constexpr std::int64_t kParallelWork = 1 << 15;
}

void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const double s = arow[p];
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::int64_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + j * k;
            const double* b1 = b0 + k;
            const double* b2 = b1 + k;
            const double* b3 = b2 + k;
            double s0 = crow[j], s1 = crow[j + 1], s2 = crow[j + 2], s3 = crow[j + 3];
            for (std::int64_t p = 0; p < k; ++p) {
                const double x = arow[p];
                s0 += x * b0[p];
                s1 += x * b1[p];
                s2 += x * b2[p];
                s3 += x * b3[p];
            }
            crow[j] = s0;
            crow[j + 1] = s1;
            crow[j + 2] = s2;
            crow[j + 3] = s3;
        }
        for (; j < n; ++j) {
            const double* brow = b + j * k;
            double s = crow[j];
            for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double s = a[p * m + i];
            const double* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

void softmax_rows(std::int64_t rows, std::int64_t cols, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) detail::softmax_row(cols, x + r * cols, y + r * cols);
}

void softmax_rows_backward(std::int64_t rows, std::int64_t cols,
                           const double* y, const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::softmax_row_backward(cols, y + r * cols, dy + r * cols, dx + r * cols);
    }
}

void layernorm_rows(std::int64_t rows, std::int64_t cols, double eps,
                    const double* x, double* y, double* inv_std) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::layernorm_row(cols, eps, x + r * cols, y + r * cols, inv_std + r);
    }
}

void layernorm_rows_backward(std::int64_t rows, std::int64_t cols,
                             const double* y, const double* inv_std,
                             const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::layernorm_row_backward(cols, y + r * cols, inv_std[r], dy + r * cols, dx + r * cols);
    }
}

}  // namespace tmdit::kernels::omp
