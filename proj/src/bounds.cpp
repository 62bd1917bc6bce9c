#include "certiformer/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "certiformer/errors.hpp"
#include "certiformer/kernels.hpp"

namespace certiformer {

// exp() overflows f64 shortly after 709; we refuse anything above this.
static constexpr double kExpArgLimit = 700.0;

const char* unary_name(UnaryKind k) {
    switch (k) {
    case UnaryKind::Relu: return "relu";
    case UnaryKind::Tanh: return "tanh";
    case UnaryKind::Exp: return "exp";
    case UnaryKind::Reciprocal: return "reciprocal";
    case UnaryKind::Square: return "square";
    case UnaryKind::Sqrt: return "sqrt";
    }
    return "?";
}

double eval_unary(UnaryKind k, double x) {
    switch (k) {
    case UnaryKind::Relu: return x > 0.0 ? x : 0.0;
    case UnaryKind::Tanh: return std::tanh(x);
    case UnaryKind::Exp: return std::exp(x);
    case UnaryKind::Reciprocal: return 1.0 / x;
    case UnaryKind::Square: return x * x;
    case UnaryKind::Sqrt: return std::sqrt(x);
    }
    return 0.0;
}

std::string norm_name(Norm p) {
    switch (p) {
    case Norm::L1: return "1";
    case Norm::L2: return "2";
    case Norm::Linf: return "inf";
    }
    return "?";
}

Norm parse_norm(const std::string& s) {
    if (s == "1") return Norm::L1;
    if (s == "2") return Norm::L2;
    if (s == "inf" || s == "Inf" || s == "INF") return Norm::Linf;
    throw ConfigError("unknown norm '" + s + "' (expected 1, 2 or inf)");
}

int PerturbationSpec::dual_exponent() const {
    switch (p) {
    case Norm::L1: return 0;  // dual is l-infinity
    case Norm::L2: return 2;
    case Norm::Linf: return 1;
    }
    return 1;
}

void PerturbationSpec::validate(int seq_len) const {
    if (epsilon < 0.0 || !std::isfinite(epsilon))
        throw ConfigError("perturbation radius must be finite and >= 0");
    if (positions.empty()) throw ConfigError("perturbation position set is empty");
    int prev = 0;
    for (int pos : positions) {
        if (pos < 1 || pos > seq_len)
            throw ConfigError("perturbed position " + std::to_string(pos) +
                              " outside [1, " + std::to_string(seq_len) + "]");
        if (pos <= prev) throw ConfigError("perturbed positions must be strictly increasing");
        prev = pos;
    }
}

IntervalBounds concretize(const LinearBounds& lb, const PerturbationSpec& spec, const Vec& x0) {
    if (lb.frame != RefFrame::InputPerturbed)
        throw ShapeError("concretize: bounds are not in the input frame");
    const int t = spec.t();
    const int ref = lb.ref_width();
    if (t <= 0 || ref % t != 0) throw ShapeError("concretize: reference width not divisible by t");
    const int d = ref / t;
    if (static_cast<int>(x0.size()) != ref) throw ShapeError("concretize: x0 width mismatch");
    if (lb.upper_coeff.rows != lb.lower_coeff.rows || lb.upper_coeff.cols != ref)
        throw ShapeError("concretize: coefficient pair mismatch");
    const int q = spec.dual_exponent();

    IntervalBounds out(1, lb.out());
    for (int j = 0; j < lb.out(); ++j) {
        const double* lo = lb.lower_coeff.row(j);
        const double* up = lb.upper_coeff.row(j);
        out.lower[j] = -spec.epsilon * kern::blockwise_dual_norm(lo, d, t, q) +
                       dot(lo, x0.data(), ref) + lb.lower_bias[j];
        out.upper[j] = spec.epsilon * kern::blockwise_dual_norm(up, d, t, q) +
                       dot(up, x0.data(), ref) + lb.upper_bias[j];
        if (!std::isfinite(out.lower[j]) || !std::isfinite(out.upper[j]))
            throw RangeOverflow("concretize: non-finite bound");
    }
    return out;
}

IntervalBounds ibp_affine(const IntervalBounds& in, const Matrix& W, const Vec& b) {
    if (W.cols != in.width) throw ShapeError("ibp_affine: W columns != input width");
    if (static_cast<int>(b.size()) != W.rows) throw ShapeError("ibp_affine: bias length != W rows");
    IntervalBounds out(in.positions, W.rows);
    // endpoint form rather than center/radius: the latter cancels to zero on
    // very wide intervals (e.g. exp images), losing a strictly positive floor
    for (int p = 0; p < in.positions; ++p) {
        for (int i = 0; i < W.rows; ++i) {
            const double* w = W.row(i);
            double lo = b[i], up = b[i];
            for (int j = 0; j < in.width; ++j) {
                if (w[j] >= 0.0) {
                    lo += w[j] * in.lo(p, j);
                    up += w[j] * in.up(p, j);
                } else {
                    lo += w[j] * in.up(p, j);
                    up += w[j] * in.lo(p, j);
                }
            }
            out.lo(p, i) = lo;
            out.up(p, i) = up;
        }
    }
    return out;
}

void interval_unary(UnaryKind fn, double l, double u, double& out_l, double& out_u) {
    switch (fn) {
    case UnaryKind::Relu:
        out_l = std::max(l, 0.0);
        out_u = std::max(u, 0.0);
        return;
    case UnaryKind::Tanh:
        out_l = std::tanh(l);
        out_u = std::tanh(u);
        return;
    case UnaryKind::Exp:
        if (u > kExpArgLimit) throw RangeOverflow("exp of interval with upper end > 700");
        out_l = std::exp(l);
        out_u = std::exp(u);
        if (out_l == 0.0) throw RangeOverflow("exp of interval underflows to zero");
        return;
    case UnaryKind::Reciprocal:
        if (l <= 0.0) throw DomainViolation("reciprocal of interval not strictly positive");
        out_l = 1.0 / u;
        out_u = 1.0 / l;
        return;
    case UnaryKind::Square:
        if (l >= 0.0) {
            out_l = l * l;
            out_u = u * u;
        } else if (u <= 0.0) {
            out_l = u * u;
            out_u = l * l;
        } else {
            out_l = 0.0;
            out_u = std::max(l * l, u * u);
        }
        return;
    case UnaryKind::Sqrt:
        if (l < 0.0) throw DomainViolation("sqrt of interval with negative lower end");
        out_l = std::sqrt(l);
        out_u = std::sqrt(u);
        return;
    }
}

IntervalBounds ibp_elementwise(const IntervalBounds& in, UnaryKind fn) {
    IntervalBounds out(in.positions, in.width);
    for (int p = 0; p < in.positions; ++p)
        for (int j = 0; j < in.width; ++j) interval_unary(fn, in.lo(p, j), in.up(p, j),
                                                          out.lo(p, j), out.up(p, j));
    return out;
}

void interval_multiply(double lx, double ux, double ly, double uy, double& out_l, double& out_u) {
    const double a = lx * ly, b = lx * uy, c = ux * ly, d = ux * uy;
    out_l = std::min(std::min(a, b), std::min(c, d));
    out_u = std::max(std::max(a, b), std::max(c, d));
}

}  // namespace certiformer
