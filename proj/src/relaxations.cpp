#include "certiformer/relaxations.hpp"

#include <algorithm>
#include <cmath>

#include "certiformer/errors.hpp"

namespace certiformer {

namespace {

constexpr double kExpArgLimit = 700.0;
constexpr double kExpTangentMargin = 1e-2;   // keeps the exp lower line positive at l
constexpr double kTanhSearchTol = 1e-8;
constexpr int kTanhSearchMaxIter = 100;
constexpr double kDegenerateWidth = 1e-12;

double tanh_deriv(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

UnaryRelaxation tangent_both(double alpha, double beta) {
    return {alpha, beta, alpha, beta};
}

struct Line {
    double alpha, beta;
};

Line tangent_at(double d, double val, double slope) { return {slope, val - slope * d}; }

Line chord(double l, double u, double fl, double fu) {
    const double a = (fu - fl) / (u - l);
    return {a, fl - a * l};
}

// Tangent point d in [lo, hi] whose tangent line passes through
// (x_ref, tanh(x_ref)); target(d) is increasing in d on the bracket.
// Returns the bracket endpoint on the "safe" side (line does not cross the
// curve past x_ref) after convergence.
double tanh_tangent_search(double lo, double hi, double x_ref, bool keep_low_side) {
    const double f_ref = std::tanh(x_ref);
    auto excess = [&](double d) {
        return std::tanh(d) + tanh_deriv(d) * (x_ref - d) - f_ref;
    };
    double a = lo, b = hi;
    for (int it = 0; it < kTanhSearchMaxIter && b - a > kTanhSearchTol; ++it) {
        const double mid = 0.5 * (a + b);
        if (excess(mid) <= 0.0)
            a = mid;
        else
            b = mid;
    }
    return keep_low_side ? a : b;
}

}  // namespace

UnaryRelaxation relax_relu(double l, double u) {
    if (l > u) throw DomainViolation("relu relaxation on empty interval");
    if (l >= 0.0) return {1.0, 0.0, 1.0, 0.0};
    if (u <= 0.0) return {0.0, 0.0, 0.0, 0.0};
    const double a_up = u / (u - l);
    const double lower_slope = (u >= -l) ? 1.0 : 0.0;
    return {lower_slope, 0.0, a_up, -l * a_up};
}

UnaryRelaxation relax_tanh(double l, double u) {
    if (l > u) throw DomainViolation("tanh relaxation on empty interval");
    if (l == u) return tangent_both(tanh_deriv(l), std::tanh(l) - tanh_deriv(l) * l);
    if (u - l <= kDegenerateWidth) {
        // Too narrow for stable chords; constant envelope is exact enough.
        return {0.0, std::tanh(l), 0.0, std::tanh(u)};
    }
    const double fl = std::tanh(l), fu = std::tanh(u);
    if (l >= 0.0) {
        // Concave piece: chord below, midpoint tangent above.
        const Line lo = chord(l, u, fl, fu);
        const double d = 0.5 * (l + u);
        const Line up = tangent_at(d, std::tanh(d), tanh_deriv(d));
        return {lo.alpha, lo.beta, up.alpha, up.beta};
    }
    if (u <= 0.0) {
        const double d = 0.5 * (l + u);
        const Line lo = tangent_at(d, std::tanh(d), tanh_deriv(d));
        const Line up = chord(l, u, fl, fu);
        return {lo.alpha, lo.beta, up.alpha, up.beta};
    }

    // Sign-crossing interval. Lower bound: tangent at some d <= 0 whose line
    // passes through (u, tanh(u)); if even the tangent at l overshoots that
    // endpoint the chord is the valid lower hull. Upper bound mirrored.
    UnaryRelaxation r;
    const double lo_excess_at_l = fl + tanh_deriv(l) * (u - l) - fu;
    if (lo_excess_at_l > 0.0) {
        const Line lo = chord(l, u, fl, fu);
        r.alpha_lo = lo.alpha;
        r.beta_lo = lo.beta;
    } else {
        const double d = tanh_tangent_search(l, 0.0, u, /*keep_low_side=*/true);
        const Line lo = tangent_at(d, std::tanh(d), tanh_deriv(d));
        r.alpha_lo = lo.alpha;
        r.beta_lo = lo.beta;
    }
    const double up_excess_at_u = fu + tanh_deriv(u) * (l - u) - fl;
    if (up_excess_at_u < 0.0) {
        const Line up = chord(l, u, fl, fu);
        r.alpha_up = up.alpha;
        r.beta_up = up.beta;
    } else {
        const double d = tanh_tangent_search(0.0, u, l, /*keep_low_side=*/false);
        const Line up = tangent_at(d, std::tanh(d), tanh_deriv(d));
        r.alpha_up = up.alpha;
        r.beta_up = up.beta;
    }
    return r;
}

UnaryRelaxation relax_exp(double l, double u) {
    if (l > u) throw DomainViolation("exp relaxation on empty interval");
    if (u > kExpArgLimit) throw RangeOverflow("exp relaxation above overflow limit");
    if (l == u) {
        const double e = std::exp(l);
        if (e == 0.0) throw RangeOverflow("exp relaxation below representable range");
        return tangent_both(e, e * (1.0 - l));
    }
    const double d = std::min(0.5 * (l + u), l + 1.0 - kExpTangentMargin);
    const double ed = std::exp(d);
    // the positive lower line is what downstream reciprocals rely on; once
    // it underflows to zero the bound is no longer evaluable at this radius
    if (ed == 0.0) throw RangeOverflow("exp relaxation below representable range");
    UnaryRelaxation r;
    r.alpha_lo = ed;
    r.beta_lo = ed * (1.0 - d);
    if (u - l <= kDegenerateWidth) {
        r.alpha_up = 0.0;
        r.beta_up = std::exp(u);
    } else {
        const Line up = chord(l, u, std::exp(l), std::exp(u));
        r.alpha_up = up.alpha;
        r.beta_up = up.beta;
    }
    return r;
}

UnaryRelaxation relax_reciprocal(double l, double u) {
    if (l <= 0.0) throw DomainViolation("reciprocal relaxation needs a strictly positive interval");
    if (l > u) throw DomainViolation("reciprocal relaxation on empty interval");
    if (l == u) return tangent_both(-1.0 / (l * l), 2.0 / l);
    const double d = 0.5 * (l + u);
    UnaryRelaxation r;
    r.alpha_lo = -1.0 / (d * d);
    r.beta_lo = 2.0 / d;
    r.alpha_up = -1.0 / (l * u);
    r.beta_up = 1.0 / l + 1.0 / u;
    return r;
}

UnaryRelaxation relax_square(double l, double u) {
    if (l > u) throw DomainViolation("square relaxation on empty interval");
    double d;
    if (l >= 0.0)
        d = std::min(0.5 * (l + u), 2.0 * l);
    else if (u <= 0.0)
        d = std::max(0.5 * (l + u), 2.0 * u);
    else
        d = 0.0;
    // Tangent 2dx - d^2 below; chord (l+u)x - lu above. Both are exact when
    // l == u. The clamp on d keeps the tangent nonnegative on [l, u].
    return {2.0 * d, -d * d, l + u, -l * u};
}

UnaryRelaxation relax_sqrt(double l, double u) {
    if (l < 0.0) throw DomainViolation("sqrt relaxation needs a nonnegative interval");
    if (l > u) throw DomainViolation("sqrt relaxation on empty interval");
    const double sl = std::sqrt(l), su = std::sqrt(u);
    if (su == 0.0) return {0.0, 0.0, 0.0, 0.0};
    if (l == u) return tangent_both(0.5 / sl, 0.5 * sl);
    UnaryRelaxation r;
    const double a_lo = 1.0 / (sl + su);  // stable chord slope
    r.alpha_lo = a_lo;
    r.beta_lo = sl - a_lo * l;
    const double d = 0.5 * (l + u);
    const double sd = std::sqrt(d);
    r.alpha_up = 0.5 / sd;
    r.beta_up = 0.5 * sd;
    return r;
}

UnaryRelaxation relax_unary(UnaryKind fn, double l, double u) {
    switch (fn) {
    case UnaryKind::Relu: return relax_relu(l, u);
    case UnaryKind::Tanh: return relax_tanh(l, u);
    case UnaryKind::Exp: return relax_exp(l, u);
    case UnaryKind::Reciprocal: return relax_reciprocal(l, u);
    case UnaryKind::Square: return relax_square(l, u);
    case UnaryKind::Sqrt: return relax_sqrt(l, u);
    }
    throw ConfigError("unknown unary kind");
}

BilinearRelaxation bound_multiply(double lx, double ux, double ly, double uy) {
    if (lx > ux || ly > uy) throw DomainViolation("multiply relaxation on empty box");
    // z - z_lo = (x - lx)(y - ly) >= 0 and z_up - z = (x - lx)(uy - y) >= 0,
    // so both planes are valid on the whole box and touch it on two edges.
    BilinearRelaxation r;
    r.alpha_lo = ly;
    r.beta_lo = lx;
    r.gamma_lo = -lx * ly;
    r.alpha_up = uy;
    r.beta_up = lx;
    r.gamma_up = -lx * uy;
    return r;
}

BilinearRelaxation bound_divide(double lx, double ux, double ly, double uy) {
    if (ly <= 0.0) throw DomainViolation("divide relaxation needs strictly positive denominator");
    const UnaryRelaxation rec = relax_reciprocal(ly, uy);
    const BilinearRelaxation m = bound_multiply(lx, ux, 1.0 / uy, 1.0 / ly);
    // m bounds x * r on the (x, r) box with r = 1/y; replace r by its linear
    // bounds in y, picking the side that preserves each inequality.
    BilinearRelaxation r;
    r.alpha_lo = m.alpha_lo;
    if (m.beta_lo >= 0.0) {
        r.beta_lo = m.beta_lo * rec.alpha_lo;
        r.gamma_lo = m.gamma_lo + m.beta_lo * rec.beta_lo;
    } else {
        r.beta_lo = m.beta_lo * rec.alpha_up;
        r.gamma_lo = m.gamma_lo + m.beta_lo * rec.beta_up;
    }
    r.alpha_up = m.alpha_up;
    if (m.beta_up >= 0.0) {
        r.beta_up = m.beta_up * rec.alpha_up;
        r.gamma_up = m.gamma_up + m.beta_up * rec.beta_up;
    } else {
        r.beta_up = m.beta_up * rec.alpha_lo;
        r.gamma_up = m.gamma_up + m.beta_up * rec.beta_lo;
    }
    return r;
}

}  // namespace certiformer
