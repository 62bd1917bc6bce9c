#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "certiformer/errors.hpp"

namespace certiformer {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Deliberately minimal: the bound
// propagation kernels in kernels.hpp do the heavy lifting on raw data.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }

    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    bool empty() const { return rows == 0 || cols == 0; }

    void check_shape(int r, int c, const char* what) const {
        if (rows != r || cols != c)
            throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" +
                             std::to_string(c) + ", got " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.a); }

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace certiformer
