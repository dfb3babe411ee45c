// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "core/dist.hpp"

namespace screenlab::conditions {

enum class Verdict { pass, fail, inconclusive };

const char* to_string(Verdict v);

struct Witness {
  std::array<double, 2> a{0.0, 0.0};
  std::array<double, 2> b{0.0, 0.0};
  std::string quantity;
  double amount = 0.0;
};

struct CheckResult {
  std::string name;
  Verdict verdict = Verdict::pass;
  double margin = 0.0;  // worst-case signed slack; negative when violated
  std::optional<Witness> witness;
  bool required = true;
  std::string note;
};

struct CertificationReport {
  std::string mode;
  Verdict overall = Verdict::pass;
  std::vector<CheckResult> checks;

  const CheckResult* find(const std::string& name) const;
};

enum class RatioDirection { non_decreasing, non_increasing };

// Three-outcome grid (favorite value v, ratios theta2, theta3).
struct Grid3 {
  Vec v_nodes, theta2_nodes, theta3_nodes;
  std::vector<std::vector<Vec>> density;  // [i][j][k], unnormalized ok
};

// Monotone amortization of the favorite-value marginal. Zero-density gaps
// strictly inside the support fail the check: bridging a gap drops the
// price-posting revenue curve discontinuously, which no monotone
// amortization survives.
CheckResult check_regular_favorite(const dist::FavoriteMarginal& marg,
                                   double tol);

CheckResult check_fosd_ratio(const dist::MaxRatioGrid& grid, double tol);

CheckResult check_sequential_fosd(const dist::MaxRatioGrid& grid, double tol);
CheckResult check_sequential_fosd(const Grid3& grid, double tol,
                                  std::size_t prefix_levels = 9);

CheckResult check_ratio_monotone_curve(const Curve& curve,
                                       RatioDirection direction, double tol);

CheckResult check_convex_equiquantile(const dist::MaxRatioGrid& grid,
                                      double tol, const Vec& q_levels = {});

CheckResult check_mr_log_supermodular(const dist::MaxRatioGrid& grid,
                                      double tol);

CheckResult check_fosd_sum(const dist::SumRatioGrid& grid, double tol);

// Lottery-deviation test at the stationary prices of the favorite-value
// revenue curve. fail = uniform pricing provably suboptimal.
CheckResult check_necessary_uniform(const dist::MaxRatioGrid& grid, double tol);

enum class Mode { unit_demand, additive, unit_demand_ironed };

Mode mode_from_string(const std::string& s);
const char* to_string(Mode m);

CertificationReport certify(const dist::MaxRatioGrid& grid, Mode mode,
                            double tol);
CertificationReport certify(const dist::SumRatioGrid& grid, double tol);

}  // namespace screenlab::conditions
