#include "tmdit/kernels.hpp"

#include "row_ops.hpp"

namespace tmdit::kernels::serial {

void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = c[i * n + j];
            for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = c[i * n + j];
            for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
    }
}

void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n,
             const double* a, const double* b, double* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = c[i * n + j];
            for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void softmax_rows(std::int64_t rows, std::int64_t cols, const double* x, double* y) {
    for (std::int64_t r = 0; r < rows; ++r) detail::softmax_row(cols, x + r * cols, y + r * cols);
}

void softmax_rows_backward(std::int64_t rows, std::int64_t cols,
                           const double* y, const double* dy, double* dx) {
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::softmax_row_backward(cols, y + r * cols, dy + r * cols, dx + r * cols);
    }
}

void layernorm_rows(std::int64_t rows, std::int64_t cols, double eps,
                    const double* x, double* y, double* inv_std) {
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::layernorm_row(cols, eps, x + r * cols, y + r * cols, inv_std + r);
    }
}

void layernorm_rows_backward(std::int64_t rows, std::int64_t cols,
                             const double* y, const double* inv_std,
                             const double* dy, double* dx) {
    for (std::int64_t r = 0; r < rows; ++r) {
        detail::layernorm_row_backward(cols, y + r * cols, inv_std[r], dy + r * cols, dx + r * cols);
    }
}

}  // namespace tmdit::kernels::serial
