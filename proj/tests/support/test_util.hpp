#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "certiformer/bounds.hpp"
#include "certiformer/model.hpp"
#include "certiformer/relaxations.hpp"

// Shared test utilities: deterministic RNG plumbing, lp-ball samplers and
// dense-grid envelope checkers. The checkers are the measurement side of the
// soundness tests and deliberately know nothing about how the relaxations
// were derived.

namespace tutil {

using certiformer::BilinearRelaxation;
using certiformer::Norm;
using certiformer::UnaryKind;
using certiformer::UnaryRelaxation;
using certiformer::Vec;

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline double urand(std::mt19937_64& g, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(g);
}

// A point inside the lp-ball of radius eps (on its surface when surface is
// set). Distribution details do not matter for soundness checks, coverage
// does: all three norms get full-dimensional spread plus sign diversity.
inline Vec sample_lp_ball(std::mt19937_64& g, Norm p, double eps, int dim,
                          bool surface = false) {
    Vec x(dim, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    const double radius_scale =
        surface ? 1.0 : std::pow(urand(g, 0.0, 1.0), 1.0 / std::max(dim, 1));
    switch (p) {
    case Norm::Linf: {
        for (double& v : x) v = urand(g, -1.0, 1.0);
        if (surface) {
            // push one coordinate to the boundary
            const int j = static_cast<int>(urand(g, 0.0, 1.0) * dim) % dim;
            x[j] = x[j] >= 0.0 ? 1.0 : -1.0;
        }
        for (double& v : x) v *= eps;
        return x;
    }
    case Norm::L2: {
        double nrm = 0.0;
        for (double& v : x) {
            v = gauss(g);
            nrm += v * v;
        }
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) nrm = 1.0;
        for (double& v : x) v = v / nrm * eps * radius_scale;
        return x;
    }
    case Norm::L1: {
        double total = 0.0;
        for (double& v : x) {
            v = expo(g);
            total += v;
        }
        for (double& v : x) {
            const double sign = urand(g, -1.0, 1.0) >= 0.0 ? 1.0 : -1.0;
            v = sign * v / total * eps * radius_scale;
        }
        return x;
    }
    }
    return x;
}

struct EnvelopeViolation {
    double below = 0.0;  // max of (lower line - f); positive means unsound
    double above = 0.0;  // max of (f - upper line)
    double max_gap = 0.0;
};

inline EnvelopeViolation grid_check_unary(UnaryKind fn, const UnaryRelaxation& r, double l,
                                          double u, int pts) {
    EnvelopeViolation v;
    for (int i = 0; i <= pts; ++i) {
        const double x = pts == 0 ? l : l + (u - l) * i / pts;
        const double f = certiformer::eval_unary(fn, x);
        v.below = std::max(v.below, r.lo_at(x) - f);
        v.above = std::max(v.above, f - r.up_at(x));
        v.max_gap = std::max(v.max_gap, r.up_at(x) - r.lo_at(x));
    }
    return v;
}

inline EnvelopeViolation grid_check_bilinear(const BilinearRelaxation& r, double lx, double ux,
                                             double ly, double uy, int pts, bool divide = false) {
    EnvelopeViolation v;
    for (int i = 0; i <= pts; ++i)
        for (int j = 0; j <= pts; ++j) {
            const double x = pts == 0 ? lx : lx + (ux - lx) * i / pts;
            const double y = pts == 0 ? ly : ly + (uy - ly) * j / pts;
            const double z = divide ? x / y : x * y;
            v.below = std::max(v.below, r.lo_at(x, y) - z);
            v.above = std::max(v.above, z - r.up_at(x, y));
        }
    return v;
}

inline certiformer::Matrix gauss_matrix(std::mt19937_64& g, int rows, int cols, double scale) {
    certiformer::Matrix m(rows, cols);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : m.a) v = gauss(g) * scale;
    return m;
}

inline Vec gauss_vec(std::mt19937_64& g, int n, double scale) {
    Vec v(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& x : v) x = gauss(g) * scale;
    return v;
}

// Seeded throwaway model for unit tests; weights follow 1/sqrt(fan_in)
// scaling and embedding rows are unit norm, so activations stay tame.
inline certiformer::TransformerModel random_model(uint64_t seed, int layers, int heads,
                                                  int d_model, int d_ff,
                                                  certiformer::LayerNormMode mode,
                                                  int vocab = 12, int max_len = 16,
                                                  int num_classes = 2) {
    using certiformer::Matrix;
    certiformer::TransformerModel m;
    m.hyper.num_layers = layers;
    m.hyper.heads = heads;
    m.hyper.d_model = d_model;
    m.hyper.d_ff = d_ff;
    m.hyper.d_qk = d_model / heads;
    m.hyper.max_len = max_len;
    m.hyper.vocab_size = vocab;
    m.hyper.num_classes = num_classes;
    m.hyper.layernorm = mode;

    auto g = rng(seed);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    m.embed = gauss_matrix(g, vocab, d_model, 1.0);
    for (int r = 0; r < vocab; ++r) {
        double nrm = std::sqrt(std::max(1e-12, certiformer::dot(m.embed.row(r), m.embed.row(r), d_model)));
        for (int j = 0; j < d_model; ++j) m.embed(r, j) /= nrm;
    }
    m.pos_enc = certiformer::sinusoidal_positions(max_len, d_model);
    for (int l = 0; l < layers; ++l) {
        certiformer::TransformerLayer lay;
        lay.wq = gauss_matrix(g, d_model, d_model, sd);
        lay.wk = gauss_matrix(g, d_model, d_model, sd);
        lay.wv = gauss_matrix(g, d_model, d_model, sd);
        lay.wo = gauss_matrix(g, d_model, d_model, sd);
        lay.bq = gauss_vec(g, d_model, 0.01);
        lay.bk = gauss_vec(g, d_model, 0.01);
        lay.bv = gauss_vec(g, d_model, 0.01);
        lay.bo = gauss_vec(g, d_model, 0.01);
        for (certiformer::LayerNormParams* ln : {&lay.ln1, &lay.ln2}) {
            ln->w.assign(d_model, 0.0);
            ln->b.assign(d_model, 0.0);
            for (int j = 0; j < d_model; ++j) {
                ln->w[j] = 1.0 + urand(g, -0.1, 0.1);
                ln->b[j] = urand(g, -0.02, 0.02);
            }
        }
        lay.ffn.w1 = gauss_matrix(g, d_ff, d_model, sd);
        lay.ffn.b1 = gauss_vec(g, d_ff, 0.01);
        lay.ffn.w2 = gauss_matrix(g, d_model, d_ff, 1.0 / std::sqrt(static_cast<double>(d_ff)));
        lay.ffn.b2 = gauss_vec(g, d_model, 0.01);
        m.layers.push_back(std::move(lay));
    }
    m.head_w = gauss_matrix(g, num_classes, d_model, sd);
    m.head_b = gauss_vec(g, num_classes, 0.01);
    return m;
}

inline std::vector<int> random_ids(std::mt19937_64& g, int n, int vocab) {
    std::vector<int> ids(n);
    for (int& id : ids) id = static_cast<int>(urand(g, 0.0, 1.0) * vocab) % vocab;
    return ids;
}

// Integral of (xy - plane) over the box, used to compare plane quality.
inline double plane_gap_integral_lower(double lx, double ux, double ly, double uy, double alpha,
                                       double beta, double gamma) {
    const double ix = 0.5 * (ux * ux - lx * lx);
    const double iy = 0.5 * (uy * uy - ly * ly);
    const double wx = ux - lx, wy = uy - ly;
    const double int_xy = ix * iy;
    const double int_plane = alpha * ix * wy + beta * wx * iy + gamma * wx * wy;
    return int_xy - int_plane;
}

}  // namespace tutil
