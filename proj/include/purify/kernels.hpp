// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Raw numeric kernels shared by the tape forward/backward rules and the plain
// (non-recorded) evaluation paths. Sharing them is what makes the two paths
// bit-identical for equal inputs.

#pragma once

#include <cstddef>

namespace purify::kern {

// C[m x n] = A[m x k] * B[k x n]; *_acc accumulates into C.
// Large shapes go through BLAS, small ones through a fixed-order loop.
void matmul(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
void matmul_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C[m x n] (+)= A^T[m x k] * B[k x n] with A stored k x m.
void matmul_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
// C[m x n] (+)= A[m x k] * B^T[k x n] with B stored n x k.
void matmul_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n);

void add(const double* a, const double* b, double* out, std::size_t n);
void add_rowvec(const double* a, const double* row, double* out, std::size_t rows, std::size_t cols);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void scale(const double* a, double c, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void relu(const double* a, double* out, std::size_t n);
void relu_bwd(const double* x, const double* gy, double* gx, std::size_t n);      // gx = mask(gy)
void relu_bwd_acc(const double* x, const double* gy, double* gx, std::size_t n);  // gx += mask(gy)
void maximum(const double* a, const double* b, double* out, std::size_t n);
void vexp(const double* a, double* out, std::size_t n);
void vlog(const double* a, double* out, std::size_t n);
double vsum(const double* a, std::size_t n);
void colsum_acc(const double* a, double* out, std::size_t rows, std::size_t cols);

// Row-wise stabilized softmax.
void softmax_rows(const double* logits, double* p, std::size_t rows, std::size_t cols);
// Mean negative log-likelihood given precomputed softmax rows.
double xent_mean(const double* p, const int* labels, std::size_t rows, std::size_t cols);

}  // namespace purify::kern
