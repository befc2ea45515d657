#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

// Single-row bodies shared by the serial and OpenMP kernels.
namespace tmdit::kernels::detail {

inline void softmax_row(std::int64_t n, const double* x, double* y) {
    double peak = x[0];
    for (std::int64_t j = 1; j < n; ++j) peak = std::max(peak, x[j]);
    double total = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - peak);
        total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::int64_t j = 0; j < n; ++j) y[j] *= inv;
}

inline void softmax_row_backward(std::int64_t n, const double* y, const double* dy, double* dx) {
    double dot = 0.0;
    for (std::int64_t j = 0; j < n; ++j) dot += dy[j] * y[j];
    for (std::int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
}

inline void layernorm_row(std::int64_t n, double eps, const double* x, double* y, double* inv_std) {
    double mean = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < n; ++j) y[j] = (x[j] - mean) * r;
    *inv_std = r;
}

// dx = r * (dy - mean(dy) - y * mean(dy * y))
inline void layernorm_row_backward(std::int64_t n, const double* y, double inv_std,
                                   const double* dy, double* dx) {
    double mean_dy = 0.0;
    double mean_dyy = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
        mean_dy += dy[j];
        mean_dyy += dy[j] * y[j];
    }
    mean_dy /= static_cast<double>(n);
    mean_dyy /= static_cast<double>(n);
    for (std::int64_t j = 0; j < n; ++j) dx[j] += inv_std * (dy[j] - mean_dy - y[j] * mean_dyy);
}

}  // namespace tmdit::kernels::detail
