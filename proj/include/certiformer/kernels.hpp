#pragma once

#include "certiformer/matrix.hpp"

// Dense kernels used by the bound propagation passes. Each kernel has a
// serial reference implementation (suffix _serial) and an OpenMP variant
// (suffix _omp) that parallelizes over output rows; the unsuffixed entry
// point dispatches on par::threads(). The two variants are bit-identical by
// construction and the benchmark tool compares their throughput.

namespace certiformer::kern {

// C = A * B (or C += A * B when accumulate is set).
void matmul_serial(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);
void matmul_omp(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);
void matmul(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate = false);

// y = A * x (or y += A * x).
void matvec(const Matrix& A, const Vec& x, Vec& y, bool accumulate = false);

// Two-sided product with sign splitting, the core rule for substituting one
// pair of linear bounds into another:
//   C_lo (+)= A_lo^+ * B_lo + A_lo^- * B_up
//   C_up (+)= A_up^+ * B_up + A_up^- * B_lo
// where M^+ / M^- are the entrywise positive/negative parts. Passing the
// same matrix for A_lo and A_up covers the plain-affine forward rule.
void sign_split_matmul_serial(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                              const Matrix& B_up, Matrix& C_lo, Matrix& C_up,
                              bool accumulate = false);
void sign_split_matmul_omp(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                           const Matrix& B_up, Matrix& C_lo, Matrix& C_up,
                           bool accumulate = false);
void sign_split_matmul(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                       const Matrix& B_up, Matrix& C_lo, Matrix& C_up, bool accumulate = false);

// Bias counterpart of sign_split_matmul:
//   y_lo += A_lo^+ * b_lo + A_lo^- * b_up,  y_up += A_up^+ * b_up + A_up^- * b_lo
void sign_split_matvec(const Matrix& A_lo, const Matrix& A_up, const Vec& b_lo, const Vec& b_up,
                       Vec& y_lo, Vec& y_up);

// Sum over contiguous blocks of the q-norm of each block of one row;
// q is the dual exponent encoded as 1, 2 or 0 (= infinity).
double blockwise_dual_norm(const double* row, int block_size, int blocks, int q);

}  // namespace certiformer::kern
