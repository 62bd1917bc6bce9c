#include "certiformer/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "certiformer/parallel.hpp"

namespace certiformer::kern {

namespace {

inline void matmul_row(const double* arow, const Matrix& B, double* crow, bool accumulate) {
    if (!accumulate) std::fill(crow, crow + B.cols, 0.0);
    for (int k = 0; k < B.rows; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = B.row(k);
        for (int j = 0; j < B.cols; ++j) crow[j] += av * brow[j];
    }
}

// One output row of the sign-split product pair.
inline void sign_split_row(const double* alo, const double* aup, const Matrix& B_lo,
                           const Matrix& B_up, double* clo, double* cup, int inner,
                           bool accumulate) {
    const int w = B_lo.cols;
    if (!accumulate) {
        std::fill(clo, clo + w, 0.0);
        std::fill(cup, cup + w, 0.0);
    }
    for (int k = 0; k < inner; ++k) {
        const double lo = alo[k];
        const double up = aup[k];
        const double* blo = B_lo.row(k);
        const double* bup = B_up.row(k);
        if (lo > 0.0)
            for (int j = 0; j < w; ++j) clo[j] += lo * blo[j];
        else if (lo < 0.0)
            for (int j = 0; j < w; ++j) clo[j] += lo * bup[j];
        if (up > 0.0)
            for (int j = 0; j < w; ++j) cup[j] += up * bup[j];
        else if (up < 0.0)
            for (int j = 0; j < w; ++j) cup[j] += up * blo[j];
    }
}

}  // namespace

void matmul_serial(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    if (A.cols != B.rows) throw ShapeError("matmul: inner dimensions differ");
    if (C.rows != A.rows || C.cols != B.cols) C = Matrix(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) matmul_row(A.row(i), B, C.row(i), accumulate);
}

void matmul_omp(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    if (A.cols != B.rows) throw ShapeError("matmul: inner dimensions differ");
    if (C.rows != A.rows || C.cols != B.cols) C = Matrix(A.rows, B.cols);
    par::for_each(A.rows, [&](int i) { matmul_row(A.row(i), B, C.row(i), accumulate); });
}

void matmul(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
    // Row-parallel only pays off on batched work; small blocks stay serial.
    if (par::threads() > 1 && A.rows >= 32)
        matmul_omp(A, B, C, accumulate);
    else
        matmul_serial(A, B, C, accumulate);
}

void matvec(const Matrix& A, const Vec& x, Vec& y, bool accumulate) {
    if (A.cols != static_cast<int>(x.size())) throw ShapeError("matvec: dimensions differ");
    if (static_cast<int>(y.size()) != A.rows) y.assign(A.rows, 0.0);
    for (int i = 0; i < A.rows; ++i) {
        double s = dot(A.row(i), x.data(), A.cols);
        y[i] = accumulate ? y[i] + s : s;
    }
}

void sign_split_matmul_serial(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                              const Matrix& B_up, Matrix& C_lo, Matrix& C_up, bool accumulate) {
    if (A_lo.rows != A_up.rows || A_lo.cols != A_up.cols)
        throw ShapeError("sign_split_matmul: A pair mismatch");
    if (B_lo.rows != B_up.rows || B_lo.cols != B_up.cols)
        throw ShapeError("sign_split_matmul: B pair mismatch");
    if (A_lo.cols != B_lo.rows) throw ShapeError("sign_split_matmul: inner dimensions differ");
    if (C_lo.rows != A_lo.rows || C_lo.cols != B_lo.cols) C_lo = Matrix(A_lo.rows, B_lo.cols);
    if (C_up.rows != A_lo.rows || C_up.cols != B_lo.cols) C_up = Matrix(A_lo.rows, B_lo.cols);
    for (int i = 0; i < A_lo.rows; ++i)
        sign_split_row(A_lo.row(i), A_up.row(i), B_lo, B_up, C_lo.row(i), C_up.row(i), A_lo.cols,
                       accumulate);
}

void sign_split_matmul_omp(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                           const Matrix& B_up, Matrix& C_lo, Matrix& C_up, bool accumulate) {
    if (A_lo.rows != A_up.rows || A_lo.cols != A_up.cols)
        throw ShapeError("sign_split_matmul: A pair mismatch");
    if (B_lo.rows != B_up.rows || B_lo.cols != B_up.cols)
        throw ShapeError("sign_split_matmul: B pair mismatch");
    if (A_lo.cols != B_lo.rows) throw ShapeError("sign_split_matmul: inner dimensions differ");
    if (C_lo.rows != A_lo.rows || C_lo.cols != B_lo.cols) C_lo = Matrix(A_lo.rows, B_lo.cols);
    if (C_up.rows != A_lo.rows || C_up.cols != B_lo.cols) C_up = Matrix(A_lo.rows, B_lo.cols);
    par::for_each(A_lo.rows, [&](int i) {
        sign_split_row(A_lo.row(i), A_up.row(i), B_lo, B_up, C_lo.row(i), C_up.row(i), A_lo.cols,
                       accumulate);
    });
}

void sign_split_matmul(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                       const Matrix& B_up, Matrix& C_lo, Matrix& C_up, bool accumulate) {
    if (par::threads() > 1 && A_lo.rows >= 32)
        sign_split_matmul_omp(A_lo, A_up, B_lo, B_up, C_lo, C_up, accumulate);
    else
        sign_split_matmul_serial(A_lo, A_up, B_lo, B_up, C_lo, C_up, accumulate);
}

void sign_split_matvec(const Matrix& A_lo, const Matrix& A_up, const Vec& b_lo, const Vec& b_up,
                       Vec& y_lo, Vec& y_up) {
    if (A_lo.cols != static_cast<int>(b_lo.size()) || b_lo.size() != b_up.size())
        throw ShapeError("sign_split_matvec: dimensions differ");
    if (static_cast<int>(y_lo.size()) != A_lo.rows) y_lo.assign(A_lo.rows, 0.0);
    if (static_cast<int>(y_up.size()) != A_lo.rows) y_up.assign(A_lo.rows, 0.0);
    for (int i = 0; i < A_lo.rows; ++i) {
        const double* lo = A_lo.row(i);
        const double* up = A_up.row(i);
        double slo = 0.0, sup = 0.0;
        for (int k = 0; k < A_lo.cols; ++k) {
            slo += lo[k] >= 0.0 ? lo[k] * b_lo[k] : lo[k] * b_up[k];
            sup += up[k] >= 0.0 ? up[k] * b_up[k] : up[k] * b_lo[k];
        }
        y_lo[i] += slo;
        y_up[i] += sup;
    }
}

double blockwise_dual_norm(const double* row, int block_size, int blocks, int q) {
    double total = 0.0;
    for (int b = 0; b < blocks; ++b) {
        const double* p = row + static_cast<size_t>(b) * block_size;
        double v = 0.0;
        switch (q) {
        case 1:
            for (int i = 0; i < block_size; ++i) v += std::fabs(p[i]);
            break;
        case 2:
            for (int i = 0; i < block_size; ++i) v += p[i] * p[i];
            v = std::sqrt(v);
            break;
        case 0:  // infinity
            for (int i = 0; i < block_size; ++i) v = std::max(v, std::fabs(p[i]));
            break;
        default:
            throw ConfigError("unsupported dual norm exponent");
        }
        total += v;
    }
    return total;
}

}  // namespace certiformer::kern
