// SPDX-License-Identifier: Apache-2.0
#include "core/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/numerics.hpp"

namespace screenlab::conditions {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void close_out(CheckResult& r, double tol) {
  if (r.verdict == Verdict::fail) {
    if (!r.witness) r.witness.emplace();
  } else if (r.margin < -tol) {
    r.verdict = Verdict::fail;
    if (!r.witness) r.witness.emplace();
  } else if (r.verdict == Verdict::pass) {
    r.witness.reset();
  }
}

// relative floor below which a marginal density value counts as "no mass"
double support_floor(const Vec& f) {
  double peak = 0.0;
  for (double v : f) peak = std::max(peak, v);
  return 1e-9 * peak;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    default: return "inconclusive";
  }
}

const CheckResult* CertificationReport::find(const std::string& name) const {
  for (auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Regularity of the favorite-value marginal
// ---------------------------------------------------------------------------

CheckResult check_regular_favorite(const dist::FavoriteMarginal& marg,
                                   double tol) {
  CheckResult r;
  r.name = "regular_favorite";
  const Vec& v = marg.v_nodes;
  const Vec& F = marg.F;
  const Vec& f = marg.f;
  std::size_t n = v.size();
  double floor = support_floor(f);

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i)
    if (f[i] > floor) support.push_back(i);
  if (support.size() < 2) {
    r.verdict = Verdict::inconclusive;
    r.note = "marginal has fewer than two support nodes";
    return r;
  }

  r.margin = kInf;
  bool any_gap_inconclusive = false;
  for (std::size_t k = 0; k + 1 < support.size(); ++k) {
    std::size_t i = support[k], j = support[k + 1];
    if (j > i + 1) {
      // zero-density run strictly inside the support
      double q_gap = 1.0 - 0.5 * (F[i] + F[j]);
      double drop = q_gap * (v[j] - v[i]);
      if (q_gap > 1e-9 && q_gap < 1.0 - 1e-9 && drop > tol) {
        r.verdict = Verdict::fail;
        r.witness = Witness{{v[i], v[i]},
                            {v[j], v[j]},
                            "revenue-curve drop across zero-density gap",
                            -drop};
        r.margin = std::min(r.margin, -drop);
      } else {
        any_gap_inconclusive = true;
      }
      continue;
    }
    double phi_i = v[i] - (1.0 - F[i]) / f[i];
    double phi_j = v[j] - (1.0 - F[j]) / f[j];
    double slack = phi_j - phi_i;
    if (slack < r.margin) {
      r.margin = slack;
      if (slack < -tol)
        r.witness = Witness{{v[i], v[i]},
                            {v[j], v[j]},
                            "amortization decreases between nodes",
                            slack};
    }
  }
  if (r.verdict != Verdict::fail && any_gap_inconclusive)
    r.verdict = Verdict::inconclusive;
  close_out(r, tol);
  return r;
}

// ---------------------------------------------------------------------------
// FOSD monotonicity of the conditional ratio
// ---------------------------------------------------------------------------

namespace {

template <class G>
CheckResult fosd_impl(const G& grid, const Vec& axis, const Vec& marg_density,
                      bool want_non_increasing, const char* name, double tol,
                      const std::function<double(std::size_t, std::size_t)>&
                          witness_second) {
  CheckResult r;
  r.name = name;
  double floor = support_floor(marg_density);
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < axis.size(); ++i)
    if (marg_density[i] > floor) cols.push_back(i);
  if (cols.size() < 2) {
    r.verdict = Verdict::inconclusive;
    r.note = "fewer than two populated columns";
    return r;
  }
  r.margin = kInf;
  for (std::size_t k = 0; k + 1 < cols.size(); ++k) {
    std::size_t i = cols[k], j = cols[k + 1];
    for (std::size_t t = 0; t < grid.theta_nodes.size(); ++t) {
      double lo = grid.cond_cdf[i][t], hi = grid.cond_cdf[j][t];
      double slack = want_non_increasing ? lo - hi : hi - lo;
      if (slack < r.margin) {
        r.margin = slack;
        if (slack < -tol)
          r.witness = Witness{{axis[i], witness_second(i, t)},
                              {axis[j], witness_second(j, t)},
                              "conditional ratio CDF ordering",
                              slack};
      }
    }
  }
  close_out(r, tol);
  return r;
}

}  // namespace

CheckResult check_fosd_ratio(const dist::MaxRatioGrid& grid, double tol) {
  return fosd_impl(
      grid, grid.v_nodes, grid.fmax, /*want_non_increasing=*/true,
      "fosd_ratio", tol, [&grid](std::size_t i, std::size_t t) {
        return grid.v_nodes[i] * grid.theta_nodes[t];
      });
}

CheckResult check_fosd_sum(const dist::SumRatioGrid& grid, double tol) {
  return fosd_impl(
      grid, grid.s_nodes, grid.fsum, /*want_non_increasing=*/false,
      "fosd_sum", tol, [&grid](std::size_t i, std::size_t t) {
        double th = grid.theta_nodes[t];
        return grid.s_nodes[i] * th / (1.0 + th);
      });
}

// ---------------------------------------------------------------------------
// Sequential FOSD (three outcomes)
// ---------------------------------------------------------------------------

CheckResult check_sequential_fosd(const dist::MaxRatioGrid& grid, double tol) {
  // two outcomes: the quantile prefix is empty
  CheckResult r = check_fosd_ratio(grid, tol);
  r.name = "sequential_fosd";
  return r;
}

CheckResult check_sequential_fosd(const Grid3& g, double tol,
                                  std::size_t prefix_levels) {
  CheckResult r;
  r.name = "sequential_fosd";
  std::size_t nv = g.v_nodes.size(), n2 = g.theta2_nodes.size(),
              n3 = g.theta3_nodes.size();
  require(nv >= 2 && n2 >= 2 && n3 >= 2, "grid3 too small");
  require(g.density.size() == nv, "grid3 density shape mismatch");

  // marginal-over-theta3 conditional CDF of theta2 given v
  std::vector<Vec> cdf2(nv);
  Vec colmass(nv, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    Vec d2(n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j)
      d2[j] = num::trapz(g.theta3_nodes, g.density[i][j]);
    Vec c = num::cumtrapz(g.theta2_nodes, d2);
    colmass[i] = c.back();
    if (c.back() > 0.0)
      for (auto& x : c) x /= c.back();
    cdf2[i] = std::move(c);
  }

  r.margin = kInf;
  auto note_violation = [&](double slack, double vlo, double vhi, double coord,
                            const char* what) {
    if (slack < r.margin) {
      r.margin = slack;
      if (slack < -tol)
        r.witness = Witness{{vlo, coord}, {vhi, coord}, what, slack};
    }
  };

  for (std::size_t i = 0; i + 1 < nv; ++i) {
    if (colmass[i] <= 0.0 || colmass[i + 1] <= 0.0) continue;
    for (std::size_t j = 0; j < n2; ++j)
      note_violation(cdf2[i][j] - cdf2[i + 1][j], g.v_nodes[i],
                     g.v_nodes[i + 1], g.theta2_nodes[j],
                     "theta2 conditional CDF ordering");
  }

  // theta3 given the theta2 quantile prefix, checked at fixed prefix levels
  for (std::size_t lev = 1; lev <= prefix_levels; ++lev) {
    double q = static_cast<double>(lev) / (prefix_levels + 1);
    for (std::size_t i = 0; i + 1 < nv; ++i) {
      if (colmass[i] <= 0.0 || colmass[i + 1] <= 0.0) continue;
      auto cdf3_at = [&](std::size_t col) {
        double th2 = num::inverse_monotone(g.theta2_nodes, cdf2[col], q);
        std::size_t j = num::lower_cell(g.theta2_nodes, th2);
        double w = std::clamp((th2 - g.theta2_nodes[j]) /
                                  (g.theta2_nodes[j + 1] - g.theta2_nodes[j]),
                              0.0, 1.0);
        Vec d3(n3);
        for (std::size_t k = 0; k < n3; ++k)
          d3[k] = (1.0 - w) * g.density[col][j][k] +
                  w * g.density[col][j + 1][k];
        Vec c = num::cumtrapz(g.theta3_nodes, d3);
        if (c.back() > 0.0)
          for (auto& x : c) x /= c.back();
        return c;
      };
      Vec lo = cdf3_at(i), hi = cdf3_at(i + 1);
      for (std::size_t k = 0; k < n3; ++k)
        note_violation(lo[k] - hi[k], g.v_nodes[i], g.v_nodes[i + 1],
                       g.theta3_nodes[k],
                       "theta3 conditional CDF ordering at quantile prefix");
    }
  }
  close_out(r, tol);
  return r;
}

// ---------------------------------------------------------------------------
// Curve and equi-quantile geometry
// ---------------------------------------------------------------------------

CheckResult check_ratio_monotone_curve(const Curve& curve,
                                       RatioDirection direction, double tol) {
  CheckResult r;
  r.name = "ratio_monotone_curve";
  require(curve.x.size() >= 3, "need at least 3 curve samples");
  Vec ratio(curve.x.size());
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    double x = curve.x[i];
    ratio[i] = x > 1e-300 ? curve.y[i] / x : curve.slope(curve.x.front());
  }
  r.margin = kInf;
  for (std::size_t i = 0; i + 1 < ratio.size(); ++i) {
    double slack = direction == RatioDirection::non_decreasing
                       ? ratio[i + 1] - ratio[i]
                       : ratio[i] - ratio[i + 1];
    if (slack < r.margin) {
      r.margin = slack;
      if (slack < -tol)
        r.witness = Witness{{curve.x[i], curve.y[i]},
                            {curve.x[i + 1], curve.y[i + 1]},
                            "curve ratio monotonicity",
                            slack};
    }
  }
  close_out(r, tol);
  return r;
}

CheckResult check_convex_equiquantile(const dist::MaxRatioGrid& grid,
                                      double tol, const Vec& q_levels) {
  CheckResult r;
  r.name = "convex_equiquantile";
  Vec levels = q_levels;
  if (levels.empty())
    for (int d = 1; d <= 9; ++d) levels.push_back(d / 10.0);
  r.margin = kInf;
  for (double q : levels) {
    dist::EquiQuantileCurve c = dist::equi_quantile(grid, q);
    for (std::size_t i = 0; i + 2 < c.anchors.size(); ++i) {
      double s0 = (c.values[i + 1] - c.values[i]) /
                  (c.anchors[i + 1] - c.anchors[i]);
      double s1 = (c.values[i + 2] - c.values[i + 1]) /
                  (c.anchors[i + 2] - c.anchors[i + 1]);
      double slack = s1 - s0;
      if (slack < r.margin) {
        r.margin = slack;
        if (slack < -tol)
          r.witness = Witness{{c.anchors[i], c.values[i]},
                              {c.anchors[i + 2], c.values[i + 2]},
                              "equi-quantile curve slope decreases (q=" +
                                  std::to_string(q) + ")",
                              slack};
      }
    }
    if (grid.correlated_band) break;  // all levels share the exact curve
  }
  close_out(r, tol);
  return r;
}

CheckResult check_mr_log_supermodular(const dist::MaxRatioGrid& grid,
                                      double tol) {
  CheckResult r;
  r.name = "mr_log_supermodular";
  double peak = 0.0;
  for (auto& row : grid.density)
    for (double d : row) peak = std::max(peak, d);
  double scale2 = peak * peak;
  std::size_t holes = 0;
  r.margin = kInf;
  for (std::size_t i = 0; i + 1 < grid.nv(); ++i) {
    for (std::size_t j = 0; j + 1 < grid.nt(); ++j) {
      double f00 = grid.density[i][j], f01 = grid.density[i][j + 1];
      double f10 = grid.density[i + 1][j], f11 = grid.density[i + 1][j + 1];
      if (f00 <= 0.0 && f01 <= 0.0 && f10 <= 0.0 && f11 <= 0.0) continue;
      bool hole = false;
      for (auto [a, b, val] : {std::tuple{i, j, f00}, {i, j + 1, f01},
                               {i + 1, j, f10}, {i + 1, j + 1, f11}})
        if (val <= kDensityFloor * peak && grid.in_support(a, b)) hole = true;
      double slack = (f00 * f11 - f01 * f10) / scale2;
      if (slack < -tol && hole) {
        ++holes;
        continue;  // zero-density cell inside support: not decidable
      }
      if (slack < r.margin) {
        r.margin = slack;
        if (slack < -tol)
          r.witness = Witness{
              {grid.v_nodes[i], grid.v_nodes[i] * grid.theta_nodes[j]},
              {grid.v_nodes[i + 1],
               grid.v_nodes[i + 1] * grid.theta_nodes[j + 1]},
              "log-supermodularity on adjacent cells",
              slack};
      }
    }
  }
  close_out(r, tol);
  if (r.verdict == Verdict::pass && holes > 0) {
    r.verdict = Verdict::inconclusive;
    r.note = std::to_string(holes) + " zero-density cells inside support";
  }
  return r;
}

// ---------------------------------------------------------------------------
// Necessary condition for uniform pricing
// ---------------------------------------------------------------------------

CheckResult check_necessary_uniform(const dist::MaxRatioGrid& grid,
                                    double tol) {
  CheckResult r;
  r.name = "necessary_uniform";
  r.required = false;
  const Vec& v = grid.v_nodes;
  std::size_t n = v.size();

  // first-order condition g(p) = p f(p) - (1 - F(p)) = 0 on the favorite
  // marginal; roots located by sign change + bisection
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = v[i] * grid.fmax[i] - (1.0 - grid.Fmax[i]);
  auto g_at = [&](double p) {
    return p * num::interp(v, grid.fmax, p) - (1.0 - num::interp(v, grid.Fmax, p));
  };
  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (g[i] == 0.0) roots.push_back(v[i]);
    if (g[i] * g[i + 1] < 0.0)
      roots.push_back(num::bisect(g_at, v[i], v[i + 1], 1e-12 * grid.scale));
  }
  if (g.back() == 0.0) roots.push_back(v.back());
  if (roots.empty()) {
    r.verdict = Verdict::inconclusive;
    r.note = "no interior stationary price found";
    return r;
  }

  // diagonal density integral from each stationary price to the top
  Vec fdiag(n);
  for (std::size_t i = 0; i < n; ++i) fdiag[i] = grid.diagonal_density(v[i]);
  Vec Idiag = num::cumtrapz(v, fdiag);
  double Itotal = Idiag.back();

  double min_test = kInf;
  bool degenerate = false;
  double worst_p = roots.front();
  for (double p : roots) {
    double fd = grid.diagonal_density(p);
    if (fd <= kDensityFloor) {
      degenerate = true;
      continue;
    }
    double tail = Itotal - num::interp(v, Idiag, p);
    double test = p - 2.0 * tail / fd;
    if (test < min_test) {
      min_test = test;
      worst_p = p;
    }
  }
  if (min_test == kInf) {
    r.verdict = Verdict::inconclusive;
    r.note = "diagonal density vanishes at every stationary price";
    return r;
  }
  if (degenerate) r.note = "some stationary prices had vanishing diagonal density";
  r.margin = min_test;
  if (min_test > tol) {
    // deviation improves revenue at every stationary price
    r.verdict = Verdict::fail;
    r.witness = Witness{{worst_p, worst_p},
                        {worst_p, worst_p},
                        "half-half lottery deviation gain at stationary price",
                        min_test};
    r.note = "uniform pricing provably suboptimal";
  } else {
    r.verdict = Verdict::inconclusive;
    if (r.note.empty()) r.note = "consistent with optimality of uniform pricing";
  }
  return r;
}

// ---------------------------------------------------------------------------
// Certification pipelines
// ---------------------------------------------------------------------------

Mode mode_from_string(const std::string& s) {
  if (s == "unit_demand") return Mode::unit_demand;
  if (s == "additive") return Mode::additive;
  if (s == "unit_demand_ironed") return Mode::unit_demand_ironed;
  fail(ErrorCode::invalid_argument, "unknown mode: " + s);
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::unit_demand: return "unit_demand";
    case Mode::additive: return "additive";
    default: return "unit_demand_ironed";
  }
}

namespace {

void finish_report(CertificationReport& rep) {
  rep.overall = Verdict::pass;
  for (auto& c : rep.checks) {
    if (!c.required) continue;
    if (c.verdict == Verdict::fail) {
      rep.overall = Verdict::fail;
      return;
    }
    if (c.verdict == Verdict::inconclusive) rep.overall = Verdict::inconclusive;
  }
}

}  // namespace

CertificationReport certify(const dist::MaxRatioGrid& grid, Mode mode,
                            double tol) {
  require(mode != Mode::additive, "additive mode takes a sum-ratio grid");
  CertificationReport rep;
  rep.mode = to_string(mode);
  auto marg = dist::favorite_marginal(grid);

  CheckResult regular = check_regular_favorite(marg, tol);
  CheckResult fosd = check_fosd_ratio(grid, tol);
  CheckResult convex = check_convex_equiquantile(grid, tol);
  CheckResult logsup = check_mr_log_supermodular(grid, tol);
  CheckResult necessary = check_necessary_uniform(grid, tol);

  if (mode == Mode::unit_demand) {
    regular.required = true;
    fosd.required = true;
    convex.required = false;
    logsup.required = false;
    rep.checks = {regular, fosd, convex, logsup, necessary};
  } else {  // unit_demand_ironed: convexity alone certifies
    convex.required = true;
    regular.required = false;
    fosd.required = false;
    logsup.required = false;
    rep.checks = {convex, regular, fosd, logsup, necessary};
  }
  finish_report(rep);
  return rep;
}

CertificationReport certify(const dist::SumRatioGrid& grid, double tol) {
  CertificationReport rep;
  rep.mode = to_string(Mode::additive);
  dist::FavoriteMarginal sum_marg;
  sum_marg.v_nodes = grid.s_nodes;
  sum_marg.F = grid.Fsum;
  sum_marg.f = grid.fsum;
  sum_marg.scale = grid.scale;
  CheckResult regular = check_regular_favorite(sum_marg, tol);
  regular.name = "regular_sum";
  CheckResult fosd = check_fosd_sum(grid, tol);
  rep.checks = {regular, fosd};
  if (grid.correlated_band && grid.theta_of_s) {
    CheckResult curve = check_ratio_monotone_curve(
        Curve(grid.s_nodes, [&] {
          Vec y(grid.ns());
          for (std::size_t i = 0; i < grid.ns(); ++i)
            y[i] = grid.s_nodes[i] * (*grid.theta_of_s)(grid.s_nodes[i]);
          return y;
        }()),
        RatioDirection::non_increasing, tol);
    curve.name = "ratio_monotone_theta_of_s";
    curve.required = false;
    rep.checks.push_back(curve);
  }
  finish_report(rep);
  return rep;
}

}  // namespace screenlab::conditions
