#pragma once

#include <string>
#include <vector>

#include "certiformer/matrix.hpp"

namespace certiformer {

// Elementwise nonlinearities the bound propagation knows how to handle.
enum class UnaryKind { Relu, Tanh, Exp, Reciprocal, Square, Sqrt };

const char* unary_name(UnaryKind k);
double eval_unary(UnaryKind k, double x);

// Perturbation norms for the word-embedding ball.
enum class Norm { L1, L2, Linf };

std::string norm_name(Norm p);
Norm parse_norm(const std::string& s);  // "1" | "2" | "inf"

// Which word embeddings may move, and how far.
//
// positions are 1-based indices into the token sequence, strictly
// increasing. Every selected embedding may be replaced by any vector within
// an lp-ball of radius epsilon around its clean value; all other positions
// stay fixed.
struct PerturbationSpec {
    Norm p = Norm::Linf;
    double epsilon = 0.0;
    std::vector<int> positions;

    int t() const { return static_cast<int>(positions.size()); }

    // Dual exponent q with 1/p + 1/q = 1, encoded as 1, 2 or 0 (= infinity).
    int dual_exponent() const;

    void validate(int seq_len) const;
};

// Concrete per-neuron intervals for one sub-layer, laid out
// [positions x width].
struct IntervalBounds {
    int positions = 0;
    int width = 0;
    Vec lower, upper;

    IntervalBounds() = default;
    IntervalBounds(int n, int w)
        : positions(n), width(w), lower(static_cast<size_t>(n) * w, 0.0),
          upper(static_cast<size_t>(n) * w, 0.0) {}

    double& lo(int p, int j) { return lower[static_cast<size_t>(p) * width + j]; }
    double& up(int p, int j) { return upper[static_cast<size_t>(p) * width + j]; }
    double lo(int p, int j) const { return lower[static_cast<size_t>(p) * width + j]; }
    double up(int p, int j) const { return upper[static_cast<size_t>(p) * width + j]; }
};

// Linear lower/upper bounds on a set of neurons as functions of a reference
// vector. Two frames appear in practice:
//   InputPerturbed: reference is the concatenation of the t perturbed word
//                   embeddings (t*d entries);
//   Layer: reference is some earlier sub-layer's activation at one position.
enum class RefFrame { InputPerturbed, Layer };

struct LinearBounds {
    RefFrame frame = RefFrame::InputPerturbed;
    int ref_layer = -1;  // sub-layer id when frame == Layer
    Matrix lower_coeff, upper_coeff;  // [out x ref_width]
    Vec lower_bias, upper_bias;       // [out]

    int out() const { return lower_coeff.rows; }
    int ref_width() const { return lower_coeff.cols; }
};

// Turns input-frame linear bounds into concrete intervals over the lp-ball:
//   lower_j = -eps * sum_k ||lower block k||_q + lower_row . x0 + lower_bias_j
//   upper_j = +eps * sum_k ||upper block k||_q + upper_row . x0 + upper_bias_j
// x0 is the concatenation of the clean perturbed-position embeddings.
// The result has positions == 1 and width == lb.out().
IntervalBounds concretize(const LinearBounds& lb, const PerturbationSpec& spec, const Vec& x0);

// Interval image of an affine map, applied position-wise:
// out[p] = W * in[p] + b, evaluated in center/radius form.
IntervalBounds ibp_affine(const IntervalBounds& in, const Matrix& W, const Vec& b);

// Exact interval image of an elementwise function.
IntervalBounds ibp_elementwise(const IntervalBounds& in, UnaryKind fn);

// Interval image of a single scalar interval; building block for the above
// and for the attention interval pass.
void interval_unary(UnaryKind fn, double l, double u, double& out_l, double& out_u);

// Exact interval product [lx,ux] * [ly,uy].
void interval_multiply(double lx, double ux, double ly, double uy, double& out_l, double& out_u);

}  // namespace certiformer
