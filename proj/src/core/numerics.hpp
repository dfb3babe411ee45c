// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <utility>

#include "core/common.hpp"

namespace screenlab::num {

Vec linspace(double lo, double hi, std::size_t n);

// Composite trapezoid rule on arbitrary sorted nodes.
double trapz(const Vec& x, const Vec& y);
// Running trapezoid integral; out[0] = 0, out[i] = integral up to x[i].
Vec cumtrapz(const Vec& x, const Vec& y);

std::size_t lower_cell(const Vec& x, double v);  // index i with x[i] <= v < x[i+1], clamped

// Piecewise-linear interpolant over sorted nodes; clamps outside the range.
double interp(const Vec& x, const Vec& y, double v);

// Inverse of a non-decreasing piecewise-linear function. Flat segments use
// the left-continuous convention (smallest x attaining the level) unless
// pick_upper is set, which returns the largest such x.
double inverse_monotone(const Vec& x, const Vec& y, double level,
                        bool pick_upper = false);

// Centered first difference on arbitrary nodes, one-sided at the ends.
Vec gradient(const Vec& x, const Vec& y);
double gradient_at(const Vec& x, const Vec& y, std::size_t i);

// Upper concave envelope of (x, y) samples with x strictly increasing.
// Returns indices of hull vertices (always includes first and last sample).
std::vector<std::size_t> concave_majorant(const Vec& x, const Vec& y);
// Per-sample slope of the envelope (the segment covering each sample;
// the final sample takes the slope of the last segment).
Vec concave_majorant_slopes(const Vec& x, const Vec& y);
// Envelope values at the sample points.
Vec concave_majorant_values(const Vec& x, const Vec& y);

// Root of f on [a, b] assuming f(a) and f(b) bracket zero.
double bisect(const std::function<double(double)>& f, double a, double b,
              double xtol, int max_iter = 200);

// Regularized upper incomplete gamma Q(a, x); used for chi-square p-values.
double gamma_q(double a, double x);
double chi2_sf(double stat, double dof);

}  // namespace screenlab::num
