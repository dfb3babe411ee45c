// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "core/dist.hpp"

namespace screenlab::amort {

enum class Construction {
  extension2d_formula,
  extension2d_integrated,
  sum_extension,
  sum_canonical,
  ironed_quantile,
};

const char* to_string(Construction c);

// Vector field lambda plus amortized values phi on the branch t1 >= t2,
// laid out on the source grid's (axis, theta) lattice in row-major order.
struct AmortizationField {
  Construction tag = Construction::extension2d_formula;
  bool additive = false;  // axis is the bundle value s instead of t1
  Vec axis;
  Vec theta;
  Vec t1, t2, f;
  Vec lambda1, lambda2;
  Vec phi1, phi2;
  Vec curve_slope;  // equi-quantile tangent dt2/dt1 at each node
  std::vector<std::uint8_t> active;   // on support with usable density
  std::vector<std::uint8_t> flagged;  // degenerate nodes (noted, excluded)
  double scale = 1.0;

  std::size_t na() const { return axis.size(); }
  std::size_t nt() const { return theta.size(); }
  std::size_t idx(std::size_t i, std::size_t j) const { return i * nt() + j; }
  double h_axis() const;

  // Bilinear phi at a Cartesian point of the branch (clamped to the lattice).
  std::array<double, 2> phi_at(double t1v, double t2v) const;
};

struct DivergenceReport {
  double sup_centered = 0.0;  // max |div lambda + f| over the trimmed interior
  double l2_centered = 0.0;
  double sup_consistent = 0.0;  // residual of the construction's own operator
  double h = 0.0;
  double c_measured = 0.0;  // sup_centered / h
  std::size_t argmax_i = 0, argmax_j = 0;
  bool pass = false;
};

struct BoundaryReport {
  double max_abs_top = 0.0;
  double max_abs_bottom = 0.0;
  double max_abs_right = 0.0;
  double worst_left_inflow = 0.0;  // min lambda1 on the left edge (want >= 0)
  bool singleton_left = false;
  bool pass = false;
};

struct TangencyReport {
  double max_angle = 0.0;  // radians
  std::size_t skipped = 0;
  bool pass = false;
};

struct VsmUniformReport {
  double margin_angle = 0.0;      // min t1*lambda2 - t2*lambda1
  double margin_dominance = 0.0;  // min phi1 - phi2 on {phi1 >= c}
  double margin_below_cost = 0.0; // min c - phi2 on {phi1 <= c}
  double margin_upset = 0.0;      // min phi1 - c past the threshold
  double threshold = 0.0;         // smallest t1 with phi1 >= c
  bool pass = false;
};

struct ShiftReport {
  double margin = 0.0;  // min t2*lambda1 - t1*lambda2 (reversed direction)
  std::size_t argmax_i = 0, argmax_j = 0;
  bool pass = false;
};

struct VsmBundleReport {
  double margin_same_sign = 0.0;
  double max_theta_spread = 0.0;  // sup over s of spread of phi1+phi2 across theta
  double margin_monotone = 0.0;
  double price = 0.0;  // smallest s with phi1+phi2 >= c
  bool pass = false;
};

AmortizationField build_extension_2d(const dist::MaxRatioGrid& grid,
                                     Construction method);
AmortizationField build_sum_extension(const dist::SumRatioGrid& grid);
AmortizationField build_sum_canonical(const dist::SumRatioGrid& grid);

DivergenceReport verify_divergence(const AmortizationField& field,
                                   double interior_inset = 0.25,
                                   double c_pass = 20.0);
BoundaryReport verify_boundary(const AmortizationField& field);
TangencyReport verify_tangency(const AmortizationField& field,
                               double c_pass = 25.0);
VsmUniformReport verify_vsm_uniform(const AmortizationField& field,
                                    double cost, double tol);
ShiftReport verify_shift_condition(const AmortizationField& field, double tol);
VsmBundleReport verify_vsm_bundle(const AmortizationField& field, double cost,
                                  double tol);

// Expected virtual surplus of the threshold (uniform price / bundle price)
// mechanism under the field, by cell quadrature; tightness check helper.
double threshold_virtual_surplus(const AmortizationField& field,
                                 const dist::MaxRatioGrid& grid,
                                 double threshold, double cost);
double threshold_virtual_surplus(const AmortizationField& field,
                                 const dist::SumRatioGrid& grid,
                                 double threshold, double cost);

// ---------------------------------------------------------------------------
// Quantile-space ironing
// ---------------------------------------------------------------------------

struct IronedField {
  Vec q1, q2;
  Vec t1_of_q1;
  Vec H;        // price-posting revenue curve q * t1(q)
  Vec H_hull;   // concave majorant
  Vec phi1q;    // phi_max(t1(q1)), flagged across support jumps
  Vec phi1bar;  // hull slopes, non-increasing in q1
  Vec suffix_gap;  // H - H_hull (= integral of phi1bar - phi1 over [q,1])
  std::vector<std::size_t> hull_breakpoints;
  // matrices q1 x q2, row-major
  Vec t2, mu, phi2q, phi2bar;
  std::vector<std::uint8_t> bridged;  // q1 nodes across support jumps
  std::vector<std::uint8_t> kink;     // q1 nodes where mu is unreliable
  double scale = 1.0;
  std::size_t nq1() const { return q1.size(); }
  std::size_t nq2() const { return q2.size(); }
  std::size_t idx(std::size_t i, std::size_t k) const { return i * nq2() + k; }
};

IronedField build_ironed_quantile(const dist::MaxRatioGrid& grid,
                                  std::size_t n_q1 = 0, std::size_t n_q2 = 0);

struct IronedDominanceReport {
  double margin_dominance = 0.0;  // min theta*phi1bar - phi2bar
  double margin_t1 = 0.0;         // min t1 - phi1bar
  std::size_t skipped = 0;
  bool pass = false;
};

IronedDominanceReport verify_ironed_dominance(const IronedField& field,
                                              double tol);

// ---------------------------------------------------------------------------
// Exact discrete amortization on a finite type set
// ---------------------------------------------------------------------------

// Abel-summation analogue of the field construction on an arbitrary finite
// instance: types are sliced by favorite value (or bundle value), chained
// across slices by conditional-quantile overlap, and charged the tail mass.
// For every IC+IR mechanism on these types, sum_t prob_t phi_t . x_t is an
// upper bound on expected revenue, exactly (no grid tolerance).
struct DiscreteAmortization {
  std::vector<std::array<double, 2>> phi;
  double virtual_surplus(const std::vector<std::array<double, 2>>& x,
                         const Vec& probs) const;
};

DiscreteAmortization build_discrete_extension(
    const std::vector<std::array<double, 2>>& types, const Vec& probs,
    bool additive);

}  // namespace screenlab::amort
