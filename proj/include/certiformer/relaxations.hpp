#pragma once

#include "certiformer/bounds.hpp"

namespace certiformer {

// Linear envelope of a scalar function sigma on an interval [l, u]:
//   alpha_lo * x + beta_lo  <=  sigma(x)  <=  alpha_up * x + beta_up
// for every x in [l, u].
struct UnaryRelaxation {
    double alpha_lo = 0.0, beta_lo = 0.0;
    double alpha_up = 0.0, beta_up = 0.0;

    double lo_at(double x) const { return alpha_lo * x + beta_lo; }
    double up_at(double x) const { return alpha_up * x + beta_up; }
};

// Pair of planes sandwiching a product (or quotient) z of two interval
// variables on the box [lx,ux] x [ly,uy]:
//   alpha_lo*x + beta_lo*y + gamma_lo  <=  z  <=  alpha_up*x + beta_up*y + gamma_up
struct BilinearRelaxation {
    double alpha_lo = 0.0, beta_lo = 0.0, gamma_lo = 0.0;
    double alpha_up = 0.0, beta_up = 0.0, gamma_up = 0.0;

    double lo_at(double x, double y) const { return alpha_lo * x + beta_lo * y + gamma_lo; }
    double up_at(double x, double y) const { return alpha_up * x + beta_up * y + gamma_up; }
};

// Piecewise-linear hull of ReLU: exact on one-sided intervals, otherwise the
// chord above and the flatter of slope-0/slope-1 below.
UnaryRelaxation relax_relu(double l, double u);

// Tangent/chord envelope of tanh. On sign-crossing intervals the touching
// tangent through the opposite endpoint is located by binary search.
UnaryRelaxation relax_tanh(double l, double u);

// Chord above exp, tangent below at d = min((l+u)/2, l + 1 - 0.01); the
// clamp keeps the lower line strictly positive at l. Throws RangeOverflow
// for u > 700.
UnaryRelaxation relax_exp(double l, double u);

// Envelope of 1/x on a strictly positive interval (chord above, midpoint
// tangent below).
UnaryRelaxation relax_reciprocal(double l, double u);

// Envelope of x^2; the lower tangent point is clamped so the lower line is
// nonnegative wherever x^2 is.
UnaryRelaxation relax_square(double l, double u);

// Envelope of sqrt(x) on a nonnegative interval (chord below, midpoint
// tangent above).
UnaryRelaxation relax_sqrt(double l, double u);

UnaryRelaxation relax_unary(UnaryKind fn, double l, double u);

// Optimal (minimum integral gap) planes for z = x*y on a box.
BilinearRelaxation bound_multiply(double lx, double ux, double ly, double uy);

// Planes for z = x/y with y strictly positive, composed from
// relax_reciprocal and bound_multiply; a direct corner-fit construction is
// unsound for quotients.
BilinearRelaxation bound_divide(double lx, double ux, double ly, double uy);

}  // namespace certiformer
