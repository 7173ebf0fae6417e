// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/kernels.hpp"

#include <cblas.h>
#include <malloc.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>

extern "C" void openblas_set_num_threads(int);

namespace {

// The sandbox/VM this project targets masks the CPU model id, which makes
// OpenBLAS's dynamic dispatch fall back to a generic kernel (~4x slower).
// Pick the kernel family from actual ISA support before the statically linked
// OpenBLAS initializes; an existing OPENBLAS_CORETYPE always wins.
__attribute__((constructor(101))) void pick_openblas_core() {
    __builtin_cpu_init();  // this runs before the automatic cpu-feature init
    if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
        __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512vl")) {
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
    } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        setenv("OPENBLAS_CORETYPE", "HASWELL", /*overwrite=*/0);
    }
    // Tape buffers are a few hundred KB and churn fast; keep them in the heap
    // instead of round-tripping through mmap.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
}

// Below this m*k*n the fixed-order loop beats the dgemm call and keeps
// per-row arithmetic identical between batched and single-row evaluation.
constexpr std::size_t kSmallGemm = 1u << 15;
// Above this m*k*n a dgemm is worth OpenBLAS's thread-sync overhead.
constexpr std::size_t kThreadedGemm = 1u << 21;

inline bool small_gemm(std::size_t m, std::size_t k, std::size_t n) {
    return m * k * n <= kSmallGemm;
}

// OpenBLAS runs single-threaded by default here; only large gemms issued from
// serial phases (training, batched grids) opt in to the thread pool.
class BlasThreadScope {
public:
    BlasThreadScope(std::size_t m, std::size_t k, std::size_t n) {
        static std::once_flag once;
        std::call_once(once, [] { openblas_set_num_threads(1); });
        threaded_ = m * k * n >= kThreadedGemm && !omp_in_parallel();
        if (threaded_) openblas_set_num_threads(omp_get_num_procs());
    }
    ~BlasThreadScope() {
        if (threaded_) openblas_set_num_threads(1);
    }

private:
    bool threaded_ = false;
};

}  // namespace

namespace purify::kern {

void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        std::fill(C, C + m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double a = A[i * k + p];
                const double* brow = B + p * n;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)k, B, (int)n, 0.0, C, (int)n);
}

void matmul_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double a = A[i * k + p];
                const double* brow = B + p * n;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)k, B, (int)n, 1.0, C, (int)n);
}

void matmul_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        std::fill(C, C + m * n, 0.0);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const double a = A[p * m + i];
                const double* brow = B + p * n;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)m, B, (int)n, 0.0, C, (int)n);
}

void matmul_tn_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const double a = A[p * m + i];
                const double* brow = B + p * n;
                double* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)m, B, (int)n, 1.0, C, (int)n);
}

void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double* arow = A + i * k;
                const double* brow = B + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                C[i * n + j] = s;
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)k, B, (int)k, 0.0, C, (int)n);
}

void matmul_nt_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    if (small_gemm(m, k, n)) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double* arow = A + i * k;
                const double* brow = B + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                C[i * n + j] += s;
            }
        return;
    }
    BlasThreadScope scope(m, k, n);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)n, (int)k,
                1.0, A, (int)k, B, (int)k, 1.0, C, (int)n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void add_rowvec(const double* a, const double* row, double* out, std::size_t rows, std::size_t cols) {
        for (std::size_t i = 0; i < rows; ++i) {
            const double* arow = a + i * cols;
            double* orow = out + i * cols;
            for (std::size_t j = 0; j < cols; ++j) orow[j] = arow[j] + row[j];
        }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const double* a, double c, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = c * a[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void relu(const double* a, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
}

void relu_bwd_acc(const double* x, const double* gy, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            if (x[i] > 0.0) gx[i] += gy[i];
}

void maximum(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
}

void vexp(const double* a, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}

void vlog(const double* a, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
}

double vsum(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

void colsum_acc(const double* a, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* arow = a + i * cols;
        for (std::size_t j = 0; j < cols; ++j) out[j] += arow[j];
    }
}

namespace {
inline void softmax_one_row(const double* lrow, double* prow, std::size_t cols) {
    double m = lrow[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, lrow[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        prow[j] = std::exp(lrow[j] - m);
        z += prow[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) prow[j] *= inv;
}
}  // namespace

void softmax_rows(const double* logits, double* p, std::size_t rows, std::size_t cols) {
        for (std::size_t i = 0; i < rows; ++i)
            softmax_one_row(logits + i * cols, p + i * cols, cols);
}

double xent_mean(const double* p, const int* labels, std::size_t rows, std::size_t cols) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s -= std::log(p[i * cols + labels[i]]);
    return s / static_cast<double>(rows);
}

}  // namespace purify::kern
