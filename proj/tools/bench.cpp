#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "certiformer/kernels.hpp"
#include "certiformer/model_io.hpp"
#include "certiformer/parallel.hpp"
#include "certiformer/program.hpp"
#include "certiformer/verifier.hpp"

namespace cf = certiformer;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

cf::Matrix random_matrix(std::mt19937_64& g, int rows, int cols) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    cf::Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = dist(g);
    return m;
}

template <class F>
double time_best_of(int repeats, F&& f) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const double t0 = now_seconds();
        f();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

bool identical(const cf::Matrix& a, const cf::Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) return false;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j)
            if (a(i, j) != b(i, j)) return false;
    return true;
}

void bench_matmul(int size, int repeats, int threads) {
    std::mt19937_64 g(1234);
    const cf::Matrix A = random_matrix(g, size, size);
    const cf::Matrix B = random_matrix(g, size, size);
    cf::Matrix Cs(size, size), Cp(size, size);

    const double ts = time_best_of(repeats, [&] { cf::kern::matmul_serial(A, B, Cs); });
    cf::par::set_threads(threads);
    const double tp = time_best_of(repeats, [&] { cf::kern::matmul_omp(A, B, Cp); });
    cf::par::set_threads(1);

    const double flops = 2.0 * size * size * size;
    std::printf("matmul %4dx%-4d  serial %8.3f ms (%6.2f GFLOP/s)  omp %8.3f ms (%6.2f GFLOP/s)"
                "  speedup %.2fx  bits %s\n",
                size, size, ts * 1e3, flops / ts * 1e-9, tp * 1e3, flops / tp * 1e-9, ts / tp,
                identical(Cs, Cp) ? "identical" : "DIFFER");
}

void bench_sign_split(int size, int repeats, int threads) {
    std::mt19937_64 g(4321);
    const cf::Matrix Alo = random_matrix(g, size, size);
    const cf::Matrix Aup = random_matrix(g, size, size);
    const cf::Matrix Blo = random_matrix(g, size, size);
    const cf::Matrix Bup = random_matrix(g, size, size);
    cf::Matrix Cls(size, size), Cus(size, size), Clp(size, size), Cup_(size, size);

    const double ts = time_best_of(
        repeats, [&] { cf::kern::sign_split_matmul_serial(Alo, Aup, Blo, Bup, Cls, Cus); });
    cf::par::set_threads(threads);
    const double tp = time_best_of(
        repeats, [&] { cf::kern::sign_split_matmul_omp(Alo, Aup, Blo, Bup, Clp, Cup_); });
    cf::par::set_threads(1);

    const double flops = 2.0 * 2.0 * size * size * size;
    std::printf("signsplit %4dx%-4d serial %8.3f ms (%6.2f GFLOP/s)  omp %8.3f ms (%6.2f GFLOP/s)"
                "  speedup %.2fx  bits %s\n",
                size, size, ts * 1e3, flops / ts * 1e-9, tp * 1e3, flops / tp * 1e-9, ts / tp,
                identical(Cls, Clp) && identical(Cus, Cup_) ? "identical" : "DIFFER");
}

void bench_bound_pass(int threads) {
    cf::ModelHyper hyper;
    hyper.num_layers = 2;
    hyper.heads = 2;
    hyper.d_model = 16;
    hyper.d_ff = 32;
    hyper.d_qk = 8;
    hyper.max_len = 16;
    hyper.vocab_size = 32;
    const cf::TransformerModel m = cf::generate_fixture(7, hyper);
    const int n = 12;
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(1 + (i * 5) % (hyper.vocab_size - 1));
    const cf::SublayerProgram prog = cf::compile(m, n);
    const cf::Matrix x0 = m.input_embeddings(ids);
    const int label = cf::evaluate_clean(m, prog, x0).predicted;
    cf::PerturbationSpec spec;
    spec.p = cf::Norm::L2;
    spec.epsilon = 0.01;
    spec.positions = {1, n / 2};

    double delta_serial = 0.0, delta_omp = 0.0;
    cf::par::set_threads(1);
    const double ts = time_best_of(3, [&] {
        delta_serial = cf::delta_lower(m, prog, x0, label, spec, cf::Method::BackwardForward);
    });
    cf::par::set_threads(threads);
    const double tp = time_best_of(3, [&] {
        delta_omp = cf::delta_lower(m, prog, x0, label, spec, cf::Method::BackwardForward);
    });
    cf::par::set_threads(1);

    std::printf("bound pass (2 layers, d=16, n=%d)  serial %8.3f ms  omp %8.3f ms  speedup %.2fx"
                "  bits %s\n",
                n, ts * 1e3, tp * 1e3, ts / tp, delta_serial == delta_omp ? "identical" : "DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel comparison"};
    int threads = 4;
    int repeats = 5;
    std::vector<int> sizes = {64, 128, 256};
    app.add_option("--threads", threads, "OpenMP worker count for the parallel variants");
    app.add_option("--repeats", repeats, "timing repetitions (best-of)");
    app.add_option("--sizes", sizes, "square matrix sizes to benchmark");
    CLI11_PARSE(app, argc, argv);

    for (int s : sizes) bench_matmul(s, repeats, threads);
    for (int s : sizes) bench_sign_split(s, repeats, threads);
    bench_bound_pass(threads);
    return 0;
}
