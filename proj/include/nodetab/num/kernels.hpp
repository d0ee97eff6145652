#pragma once

#include <cstddef>

// Dense kernels used by the graph layer.  The omp variants parallelise over
// disjoint output blocks with a fixed accumulation order, so results are
// bitwise identical for any thread count.  The serial namespace holds plain
// reference implementations used by the tests and the benchmark.

namespace nodetab::num::kern {

// C (m x n) = op(A) * op(B), optionally accumulating into C.
// op(A) is A (m x k, row stride lda) or A^T when ta is set (A is k x m).
void gemm(bool ta, bool tb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          double* C, int ldc, bool accumulate);

void add(const double* a, const double* b, double* out, size_t n);
void sub(const double* a, const double* b, double* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);
void scale_add(const double* a, double alpha, double beta, double* out, size_t n);  // alpha*a + beta
void axpy(double alpha, const double* x, double* y, size_t n);                      // y += alpha*x

void relu(const double* a, double* out, size_t n);
void leaky(const double* a, double slope, double* out, size_t n);
void tanh_(const double* a, double* out, size_t n);
void exp_(const double* a, double* out, size_t n);
void log_(const double* a, double* out, size_t n);
void sqrt_(const double* a, double* out, size_t n);
void recip(const double* a, double* out, size_t n);

void add_rowvec(const double* a, const double* v, double* out, int r, int c);
void mul_rowvec(const double* a, const double* v, double* out, int r, int c);
void add_colvec(const double* a, const double* v, double* out, int r, int c);
void mul_colvec(const double* a, const double* v, double* out, int r, int c);

void col_sum(const double* a, double* out, int r, int c);
void row_sum(const double* a, double* out, int r, int c);
double sum_all(const double* a, size_t n);

void softmax_rows(const double* a, double* out, int r, int c);
void onehot_argmax_rows(const double* a, double* out, int r, int c);

namespace serial {
void gemm(bool ta, bool tb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          double* C, int ldc, bool accumulate);
double sum_all(const double* a, size_t n);
void col_sum(const double* a, double* out, int r, int c);
void softmax_rows(const double* a, double* out, int r, int c);
}  // namespace serial

}  // namespace nodetab::num::kern
