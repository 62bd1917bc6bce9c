#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "certiformer/kernels.hpp"
#include "certiformer/parallel.hpp"
#include "support/test_util.hpp"

using namespace certiformer;

namespace {

Matrix random_matrix(std::mt19937_64& g, int r, int c) {
    Matrix m(r, c);
    for (double& x : m.a) x = tutil::urand(g, -2.0, 2.0);
    return m;
}

// Entrywise reference for the sign-split product; kept deliberately naive.
void sign_split_reference(const Matrix& A_lo, const Matrix& A_up, const Matrix& B_lo,
                          const Matrix& B_up, Matrix& C_lo, Matrix& C_up) {
    C_lo = Matrix(A_lo.rows, B_lo.cols);
    C_up = Matrix(A_lo.rows, B_lo.cols);
    for (int i = 0; i < A_lo.rows; ++i)
        for (int j = 0; j < B_lo.cols; ++j) {
            double lo = 0.0, up = 0.0;
            for (int k = 0; k < A_lo.cols; ++k) {
                lo += A_lo(i, k) >= 0.0 ? A_lo(i, k) * B_lo(k, j) : A_lo(i, k) * B_up(k, j);
                up += A_up(i, k) >= 0.0 ? A_up(i, k) * B_up(k, j) : A_up(i, k) * B_lo(k, j);
            }
            C_lo(i, j) = lo;
            C_up(i, j) = up;
        }
}

}  // namespace

TEST_CASE("matmul matches a plain triple loop") {
    auto g = tutil::rng(1);
    const Matrix A = random_matrix(g, 7, 5);
    const Matrix B = random_matrix(g, 5, 9);
    Matrix C;
    kern::matmul_serial(A, B, C);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 9; ++j) {
            double s = 0.0;
            for (int k = 0; k < 5; ++k) s += A(i, k) * B(k, j);
            CHECK(C(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
}

TEST_CASE("omp kernels are bit-identical to the serial reference") {
    auto g = tutil::rng(2);
    for (int trial = 0; trial < 4; ++trial) {
        const int r = 16 + 48 * trial;
        const Matrix A = random_matrix(g, r, 33);
        const Matrix B = random_matrix(g, 33, 21);
        Matrix Cs, Cp;
        kern::matmul_serial(A, B, Cs);
        par::set_threads(4);
        kern::matmul_omp(A, B, Cp);
        par::set_threads(1);
        REQUIRE(Cs.a.size() == Cp.a.size());
        for (size_t i = 0; i < Cs.a.size(); ++i) CHECK(Cs.a[i] == Cp.a[i]);

        const Matrix Alo = random_matrix(g, r, 33), Aup = random_matrix(g, r, 33);
        const Matrix Blo = random_matrix(g, 33, 21), Bup = random_matrix(g, 33, 21);
        Matrix Ls, Us, Lp, Up;
        kern::sign_split_matmul_serial(Alo, Aup, Blo, Bup, Ls, Us);
        par::set_threads(4);
        kern::sign_split_matmul_omp(Alo, Aup, Blo, Bup, Lp, Up);
        par::set_threads(1);
        for (size_t i = 0; i < Ls.a.size(); ++i) {
            CHECK(Ls.a[i] == Lp.a[i]);
            CHECK(Us.a[i] == Up.a[i]);
        }
    }
}

TEST_CASE("sign-split product matches the entrywise definition") {
    auto g = tutil::rng(3);
    const Matrix Alo = random_matrix(g, 6, 8), Aup = random_matrix(g, 6, 8);
    const Matrix Blo = random_matrix(g, 8, 5), Bup = random_matrix(g, 8, 5);
    Matrix Lref, Uref, L, U;
    sign_split_reference(Alo, Aup, Blo, Bup, Lref, Uref);
    kern::sign_split_matmul_serial(Alo, Aup, Blo, Bup, L, U);
    for (size_t i = 0; i < L.a.size(); ++i) {
        CHECK(L.a[i] == doctest::Approx(Lref.a[i]).epsilon(1e-14));
        CHECK(U.a[i] == doctest::Approx(Uref.a[i]).epsilon(1e-14));
    }

    SUBCASE("accumulation adds on top of existing content") {
        Matrix L2 = L, U2 = U;
        kern::sign_split_matmul_serial(Alo, Aup, Blo, Bup, L2, U2, /*accumulate=*/true);
        for (size_t i = 0; i < L.a.size(); ++i) {
            CHECK(L2.a[i] == doctest::Approx(2.0 * L.a[i]).epsilon(1e-12));
            CHECK(U2.a[i] == doctest::Approx(2.0 * U.a[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("nonnegative coefficients collapse the sign split to plain products") {
    auto g = tutil::rng(4);
    Matrix A = random_matrix(g, 5, 6);
    for (double& x : A.a) x = std::fabs(x);
    const Matrix Blo = random_matrix(g, 6, 4), Bup = random_matrix(g, 6, 4);
    Matrix L, U, Rlo, Rup;
    kern::sign_split_matmul_serial(A, A, Blo, Bup, L, U);
    kern::matmul_serial(A, Blo, Rlo);
    kern::matmul_serial(A, Bup, Rup);
    for (size_t i = 0; i < L.a.size(); ++i) {
        CHECK(L.a[i] == doctest::Approx(Rlo.a[i]).epsilon(1e-14));
        CHECK(U.a[i] == doctest::Approx(Rup.a[i]).epsilon(1e-14));
    }
}

TEST_CASE("blockwise dual norms") {
    const Vec row = {1.0, -2.0, 3.0, -4.0};
    CHECK(kern::blockwise_dual_norm(row.data(), 2, 2, 1) == doctest::Approx(10.0));
    CHECK(kern::blockwise_dual_norm(row.data(), 2, 2, 0) == doctest::Approx(2.0 + 4.0));
    CHECK(kern::blockwise_dual_norm(row.data(), 2, 2, 2) ==
          doctest::Approx(std::sqrt(5.0) + 5.0));
    CHECK(kern::blockwise_dual_norm(row.data(), 4, 1, 2) == doctest::Approx(std::sqrt(30.0)));
}

TEST_CASE("matvec with accumulation") {
    Matrix A(2, 3);
    A(0, 0) = 1;
    A(0, 1) = 2;
    A(0, 2) = 3;
    A(1, 0) = -1;
    A(1, 1) = 0;
    A(1, 2) = 1;
    const Vec x = {1.0, 1.0, 1.0};
    Vec y;
    kern::matvec(A, x, y);
    CHECK(y[0] == doctest::Approx(6.0));
    CHECK(y[1] == doctest::Approx(0.0));
    kern::matvec(A, x, y, true);
    CHECK(y[0] == doctest::Approx(12.0));
}
