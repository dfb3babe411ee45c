// SPDX-License-Identifier: Apache-2.0
#include "core/amort.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/numerics.hpp"

namespace screenlab::amort {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Ratio at conditional level q in one grid column; NaN for empty columns.
double theta_at_level(const Vec& theta_nodes, const Vec& cdf, double q) {
  if (cdf.back() <= 0.5) return std::numeric_limits<double>::quiet_NaN();
  return num::inverse_monotone(theta_nodes, cdf, q);
}

}  // namespace

const char* to_string(Construction c) {
  switch (c) {
    case Construction::extension2d_formula: return "extension2d_formula";
    case Construction::extension2d_integrated: return "extension2d_integrated";
    case Construction::sum_extension: return "sum_extension";
    case Construction::sum_canonical: return "sum_canonical";
    default: return "ironed_quantile";
  }
}

double AmortizationField::h_axis() const {
  double h = 0.0;
  for (std::size_t i = 0; i + 1 < axis.size(); ++i)
    h = std::max(h, axis[i + 1] - axis[i]);
  return h;
}

std::array<double, 2> AmortizationField::phi_at(double t1v, double t2v) const {
  double a = additive ? t1v + t2v : t1v;
  double th = t1v > 1e-300 ? t2v / t1v : 0.0;
  th = std::clamp(th, theta.front(), theta.back());
  a = std::clamp(a, axis.front(), axis.back());
  std::size_t i = num::lower_cell(axis, a);
  std::size_t j = num::lower_cell(theta, th);
  double wa = std::clamp((a - axis[i]) / (axis[i + 1] - axis[i]), 0.0, 1.0);
  double wt = std::clamp((th - theta[j]) / (theta[j + 1] - theta[j]), 0.0, 1.0);
  auto bil = [&](const Vec& z) {
    double z0 = (1.0 - wa) * z[idx(i, j)] + wa * z[idx(i + 1, j)];
    double z1 = (1.0 - wa) * z[idx(i, j + 1)] + wa * z[idx(i + 1, j + 1)];
    return (1.0 - wt) * z0 + wt * z1;
  };
  return {bil(phi1), bil(phi2)};
}

// ---------------------------------------------------------------------------
// Unit-demand two-dimensional extension
// ---------------------------------------------------------------------------

namespace {

struct LatticeDeriv {
  // derivative along the axis at fixed theta index, one-sided at the ends
  static double d_axis(const AmortizationField& F, const Vec& w, std::size_t i,
                       std::size_t j) {
    const Vec& x = F.axis;
    std::size_t n = x.size();
    if (i == 0) return (w[F.idx(1, j)] - w[F.idx(0, j)]) / (x[1] - x[0]);
    if (i == n - 1)
      return (w[F.idx(n - 1, j)] - w[F.idx(n - 2, j)]) / (x[n - 1] - x[n - 2]);
    return (w[F.idx(i + 1, j)] - w[F.idx(i - 1, j)]) / (x[i + 1] - x[i - 1]);
  }
  static double d_theta(const AmortizationField& F, const Vec& w, std::size_t i,
                        std::size_t j) {
    const Vec& x = F.theta;
    std::size_t n = x.size();
    if (j == 0) return (w[F.idx(i, 1)] - w[F.idx(i, 0)]) / (x[1] - x[0]);
    if (j == n - 1)
      return (w[F.idx(i, n - 1)] - w[F.idx(i, n - 2)]) / (x[n - 1] - x[n - 2]);
    return (w[F.idx(i, j + 1)] - w[F.idx(i, j - 1)]) / (x[j + 1] - x[j - 1]);
  }
};

// Cartesian partials reconstructed from lattice derivatives.
// Unit demand fan (v, theta): t = (v, v*theta).
double d_t1_unit(const AmortizationField& F, const Vec& w, std::size_t i,
                 std::size_t j) {
  double v = F.axis[i], th = F.theta[j];
  double dv = LatticeDeriv::d_axis(F, w, i, j);
  double dth = LatticeDeriv::d_theta(F, w, i, j);
  return dv - th / v * dth;
}
// Additive fan (s, theta): t = (s/(1+theta), s*theta/(1+theta)).
double d_t1_sum(const AmortizationField& F, const Vec& w, std::size_t i,
                std::size_t j) {
  double s = F.axis[i], th = F.theta[j], one = 1.0 + th;
  double A = LatticeDeriv::d_axis(F, w, i, j);
  double B = LatticeDeriv::d_theta(F, w, i, j);
  return A - th * one * B / s;
}
double d_t2_sum(const AmortizationField& F, const Vec& w, std::size_t i,
                std::size_t j) {
  double s = F.axis[i], th = F.theta[j], one = 1.0 + th;
  double A = LatticeDeriv::d_axis(F, w, i, j);
  double B = LatticeDeriv::d_theta(F, w, i, j);
  return A + one * B / s;
}

// Equi-quantile tangent slope dt2/dt1 at every node of a max-ratio grid.
Vec node_curve_slopes(const dist::MaxRatioGrid& g) {
  std::size_t nv = g.nv(), nt = g.nt();
  Vec slope(nv * nt, 0.0);
  if (g.correlated_band) {
    for (std::size_t i = 0; i < nv; ++i) {
      double s = g.curve->slope(g.v_nodes[i]);
      for (std::size_t j = 0; j < nt; ++j) slope[i * nt + j] = s;
    }
    return slope;
  }
  std::vector<bool> ok(nv);
  for (std::size_t i = 0; i < nv; ++i) ok[i] = g.cond_cdf[i].back() > 0.5;
  for (std::size_t i = 0; i < nv; ++i) {
    if (!ok[i]) continue;
    // neighbours used for the centered difference
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(i) - 1;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(i) + 1;
    while (lo >= 0 && !ok[static_cast<std::size_t>(lo)]) --lo;
    while (hi < static_cast<std::ptrdiff_t>(nv) &&
           !ok[static_cast<std::size_t>(hi)])
      ++hi;
    if (lo < 0) lo = static_cast<std::ptrdiff_t>(i);
    if (hi >= static_cast<std::ptrdiff_t>(nv))
      hi = static_cast<std::ptrdiff_t>(i);
    if (lo == hi) continue;
    auto a = static_cast<std::size_t>(lo), b = static_cast<std::size_t>(hi);
    for (std::size_t j = 0; j < nt; ++j) {
      double q = g.cond_cdf[i][j];
      double ta = theta_at_level(g.theta_nodes, g.cond_cdf[a], q);
      double tb = theta_at_level(g.theta_nodes, g.cond_cdf[b], q);
      if (std::isnan(ta) || std::isnan(tb)) continue;
      slope[i * nt + j] =
          (g.v_nodes[b] * tb - g.v_nodes[a] * ta) / (g.v_nodes[b] - g.v_nodes[a]);
    }
  }
  return slope;
}

}  // namespace

AmortizationField build_extension_2d(const dist::MaxRatioGrid& grid,
                                     Construction method) {
  require(method == Construction::extension2d_formula ||
              method == Construction::extension2d_integrated,
          "build_extension_2d: method must be a 2d extension");
  AmortizationField F;
  F.tag = method;
  F.additive = false;
  F.axis = grid.v_nodes;
  F.theta = grid.theta_nodes;
  F.scale = grid.scale;
  std::size_t nv = F.na(), nt = F.nt(), N = nv * nt;
  F.t1.resize(N);
  F.t2.resize(N);
  F.f.resize(N);
  F.lambda1.assign(N, 0.0);
  F.lambda2.assign(N, 0.0);
  F.phi1.resize(N);
  F.phi2.resize(N);
  F.active.assign(N, 0);
  F.flagged.assign(N, 0);
  F.curve_slope = node_curve_slopes(grid);

  double fpeak = 0.0;
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = 0; j < nt; ++j)
      fpeak = std::max(fpeak, grid.cart_density(i, j));
  double f_floor = std::max(kDensityFloor, 1e-9 * fpeak);
  double fmax_peak = *std::max_element(grid.fmax.begin(), grid.fmax.end());

  std::vector<bool> col_ok(nv);
  for (std::size_t i = 0; i < nv; ++i)
    col_ok[i] = grid.fmax[i] > 1e-9 * fmax_peak && grid.v_nodes[i] > 0.0;

  for (std::size_t i = 0; i < nv; ++i) {
    double v = grid.v_nodes[i];
    double ratio = col_ok[i] ? (1.0 - grid.Fmax[i]) / grid.fmax[i] : 0.0;
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t k = F.idx(i, j);
      F.t1[k] = v;
      F.t2[k] = v * grid.theta_nodes[j];
      F.f[k] = grid.cart_density(i, j);
      bool on = grid.in_support(i, j) && F.f[k] > f_floor && col_ok[i];
      F.active[k] = on ? 1 : 0;
      if (!col_ok[i]) F.flagged[k] = 1;
      F.lambda1[k] = on || (col_ok[i] && grid.in_support(i, j))
                         ? F.f[k] * ratio
                         : 0.0;
    }
  }

  if (method == Construction::extension2d_formula) {
    for (std::size_t k = 0; k < N; ++k)
      F.lambda2[k] = F.lambda1[k] * F.curve_slope[k];
  } else {
    // integrate d2 lambda2 = -f - d1 lambda1 upward from the bottom support
    // boundary, where orthogonality fixes lambda2 = lambda1 * boundary slope
    Vec bottom_t2(nv), bottom_slope(nv);
    for (std::size_t i = 0; i < nv; ++i)
      bottom_t2[i] = grid.v_nodes[i] * grid.theta_lo[i];
    bottom_slope = num::gradient(grid.v_nodes, bottom_t2);
    for (std::size_t i = 0; i < nv; ++i) {
      if (!col_ok[i]) continue;
      std::size_t j0 = 0;
      while (j0 + 1 < nt && !grid.in_support(i, j0)) ++j0;
      Vec g(nt, 0.0);
      for (std::size_t j = 0; j < nt; ++j) {
        std::size_t k = F.idx(i, j);
        g[j] = F.f[k] + d_t1_unit(F, F.lambda1, i, j);
      }
      F.lambda2[F.idx(i, j0)] = F.lambda1[F.idx(i, j0)] * bottom_slope[i];
      for (std::size_t j = j0; j + 1 < nt; ++j) {
        double dt2 = grid.v_nodes[i] *
                     (grid.theta_nodes[j + 1] - grid.theta_nodes[j]);
        F.lambda2[F.idx(i, j + 1)] =
            F.lambda2[F.idx(i, j)] - 0.5 * (g[j] + g[j + 1]) * dt2;
      }
    }
  }

  for (std::size_t k = 0; k < N; ++k) {
    if (F.active[k]) {
      F.phi1[k] = F.t1[k] - F.lambda1[k] / F.f[k];
      F.phi2[k] = F.t2[k] - F.lambda2[k] / F.f[k];
    } else {
      F.phi1[k] = F.t1[k];
      F.phi2[k] = F.t2[k];
      F.lambda1[k] = F.lambda2[k] = 0.0;
      F.flagged[k] = 1;
    }
  }
  return F;
}

// ---------------------------------------------------------------------------
// Additive fields
// ---------------------------------------------------------------------------

AmortizationField build_sum_extension(const dist::SumRatioGrid& grid) {
  AmortizationField F;
  F.tag = Construction::sum_extension;
  F.additive = true;
  F.axis = grid.s_nodes;
  F.theta = grid.theta_nodes;
  F.scale = grid.scale;
  std::size_t ns = F.na(), nt = F.nt(), N = ns * nt;
  F.t1.resize(N);
  F.t2.resize(N);
  F.f.resize(N);
  F.lambda1.assign(N, 0.0);
  F.lambda2.assign(N, 0.0);
  F.phi1.resize(N);
  F.phi2.resize(N);
  F.curve_slope.assign(N, 0.0);
  F.active.assign(N, 0);
  F.flagged.assign(N, 0);

  double fpeak = 0.0;
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = 0; j < nt; ++j)
      fpeak = std::max(fpeak, grid.cart_density(i, j));
  double f_floor = std::max(kDensityFloor, 1e-9 * fpeak);
  double fsum_peak = *std::max_element(grid.fsum.begin(), grid.fsum.end());

  for (std::size_t i = 0; i < ns; ++i) {
    double s = grid.s_nodes[i];
    bool col_ok = grid.fsum[i] > 1e-9 * fsum_peak && s > 0.0;
    double phis = col_ok ? s - (1.0 - grid.Fsum[i]) / grid.fsum[i] : 0.0;
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t k = F.idx(i, j);
      double th = grid.theta_nodes[j], one = 1.0 + th;
      F.t1[k] = s / one;
      F.t2[k] = s * th / one;
      F.f[k] = grid.cart_density(i, j);
      bool on = grid.in_support(i, j) && F.f[k] > f_floor && col_ok;
      F.active[k] = on ? 1 : 0;
      if (on) {
        F.phi1[k] = F.t1[k] / s * phis;
        F.phi2[k] = F.t2[k] / s * phis;
        F.lambda1[k] = (F.t1[k] - F.phi1[k]) * F.f[k];
        F.lambda2[k] = (F.t2[k] - F.phi2[k]) * F.f[k];
      } else {
        F.phi1[k] = F.t1[k];
        F.phi2[k] = F.t2[k];
        F.flagged[k] = 1;
      }
    }
  }
  return F;
}

AmortizationField build_sum_canonical(const dist::SumRatioGrid& grid) {
  AmortizationField F = build_sum_extension(grid);
  F.tag = Construction::sum_canonical;
  std::size_t ns = F.na(), nt = F.nt();

  std::vector<bool> ok(ns);
  for (std::size_t i = 0; i < ns; ++i) ok[i] = grid.cond_cdf[i].back() > 0.5;

  // tangent of the constant-quantile curve, parameterized by s; the
  // components automatically sum to one
  for (std::size_t i = 0; i < ns; ++i) {
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(i) - 1;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(i) + 1;
    while (lo >= 0 && !ok[static_cast<std::size_t>(lo)]) --lo;
    while (hi < static_cast<std::ptrdiff_t>(ns) &&
           !ok[static_cast<std::size_t>(hi)])
      ++hi;
    if (lo < 0) lo = static_cast<std::ptrdiff_t>(i);
    if (hi >= static_cast<std::ptrdiff_t>(ns))
      hi = static_cast<std::ptrdiff_t>(i);
    auto a = static_cast<std::size_t>(lo), b = static_cast<std::size_t>(hi);
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t k = F.idx(i, j);
      if (!F.active[k]) continue;
      if (a == b) {
        F.flagged[k] = 1;
        F.active[k] = 0;
        continue;
      }
      double ta, tb;
      if (grid.correlated_band) {
        ta = std::clamp((*grid.theta_of_s)(grid.s_nodes[a]), 0.0, 1.0);
        tb = std::clamp((*grid.theta_of_s)(grid.s_nodes[b]), 0.0, 1.0);
      } else {
        double q = grid.cond_cdf[i][j];
        ta = theta_at_level(grid.theta_nodes, grid.cond_cdf[a], q);
        tb = theta_at_level(grid.theta_nodes, grid.cond_cdf[b], q);
        if (std::isnan(ta) || std::isnan(tb)) {
          F.flagged[k] = 1;
          continue;
        }
      }
      double ds = grid.s_nodes[b] - grid.s_nodes[a];
      double t1a = grid.s_nodes[a] / (1.0 + ta);
      double t1b = grid.s_nodes[b] / (1.0 + tb);
      double dt1_ds = (t1b - t1a) / ds;
      double dt2_ds = 1.0 - dt1_ds;
      if (std::fabs(dt1_ds) > 50.0) {  // near-vertical tangent in s
        F.flagged[k] = 1;
        continue;
      }
      double m = F.f[k] * (1.0 - grid.Fsum[i]) /
                 std::max(grid.fsum[i], kDensityFloor);
      F.lambda1[k] = m * dt1_ds;
      F.lambda2[k] = m * dt2_ds;
      F.phi1[k] = F.t1[k] - F.lambda1[k] / F.f[k];
      F.phi2[k] = F.t2[k] - F.lambda2[k] / F.f[k];
      F.curve_slope[k] = dt1_ds != 0.0 ? dt2_ds / dt1_ds : 0.0;
    }
  }
  return F;
}

// ---------------------------------------------------------------------------
// Verifications
// ---------------------------------------------------------------------------

DivergenceReport verify_divergence(const AmortizationField& F,
                                   double interior_inset, double c_pass) {
  DivergenceReport rep;
  std::size_t na = F.na(), nt = F.nt();
  rep.h = F.h_axis();
  double fpeak = max_abs(F.f);
  auto ilo = static_cast<std::size_t>(std::ceil(interior_inset * (na - 1)));
  auto ihi = na - 1 - ilo;
  auto jlo = static_cast<std::size_t>(std::ceil(interior_inset * (nt - 1)));
  auto jhi = nt - 1 - jlo;
  double sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = std::max<std::size_t>(ilo, 1); i + 1 < na && i <= ihi;
       ++i) {
    for (std::size_t j = std::max<std::size_t>(jlo, 1); j + 1 < nt && j <= jhi;
         ++j) {
      bool usable = F.active[F.idx(i, j)] && F.active[F.idx(i - 1, j)] &&
                    F.active[F.idx(i + 1, j)] && F.active[F.idx(i, j - 1)] &&
                    F.active[F.idx(i, j + 1)];
      if (!usable) continue;
      double div;
      if (!F.additive) {
        double v = F.axis[i], th = F.theta[j];
        double dl1 =
            LatticeDeriv::d_axis(F, F.lambda1, i, j) -
            th / v * LatticeDeriv::d_theta(F, F.lambda1, i, j);
        double dl2 = LatticeDeriv::d_theta(F, F.lambda2, i, j) / v;
        div = dl1 + dl2;
      } else {
        div = d_t1_sum(F, F.lambda1, i, j) + d_t2_sum(F, F.lambda2, i, j);
      }
      double r = std::fabs(div + F.f[F.idx(i, j)]);
      sum2 += r * r;
      ++count;
      if (r > rep.sup_centered) {
        rep.sup_centered = r;
        rep.argmax_i = i;
        rep.argmax_j = j;
      }
    }
  }
  rep.l2_centered = count ? std::sqrt(sum2 / count) : 0.0;
  rep.c_measured = rep.h > 0.0 ? rep.sup_centered / rep.h : 0.0;
  rep.pass = rep.sup_centered <= c_pass * rep.h * std::max(fpeak, 1e-300);

  // residual of the trapezoid operator the integrated construction inverts
  if (!F.additive) {
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < na; ++i) {
      for (std::size_t j = 0; j + 1 < nt; ++j) {
        std::size_t k0 = F.idx(i, j), k1 = F.idx(i, j + 1);
        if (!F.active[k0] || !F.active[k1]) continue;
        if (!F.active[F.idx(i - 1, j)] || !F.active[F.idx(i + 1, j)] ||
            !F.active[F.idx(i - 1, j + 1)] || !F.active[F.idx(i + 1, j + 1)])
          continue;
        double g0 = F.f[k0] + d_t1_unit(F, F.lambda1, i, j);
        double g1 = F.f[k1] + d_t1_unit(F, F.lambda1, i, j + 1);
        double dt2 = F.t2[k1] - F.t2[k0];
        double r = (F.lambda2[k1] - F.lambda2[k0]) / dt2 + 0.5 * (g0 + g1);
        worst = std::max(worst, std::fabs(r));
      }
    }
    rep.sup_consistent = worst;
  } else {
    rep.sup_consistent = rep.sup_centered;
  }
  return rep;
}

BoundaryReport verify_boundary(const AmortizationField& F) {
  BoundaryReport rep;
  std::size_t na = F.na(), nt = F.nt();
  double lscale = std::max({max_abs(F.lambda1), max_abs(F.lambda2), 1e-300});
  double tol = 25.0 * F.h_axis() / F.scale * lscale;

  // first/last in-support theta index per column
  std::vector<std::ptrdiff_t> jlo(na, -1), jhi(na, -1);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nt; ++j)
      if (F.active[F.idx(i, j)]) {
        if (jlo[i] < 0) jlo[i] = static_cast<std::ptrdiff_t>(j);
        jhi[i] = static_cast<std::ptrdiff_t>(j);
      }

  auto boundary_normal_flow = [&](std::size_t i, bool top) -> double {
    std::ptrdiff_t j = top ? jhi[i] : jlo[i];
    if (j < 0) return 0.0;
    std::size_t ia = i > 0 && jlo[i - 1] >= 0 ? i - 1 : i;
    std::size_t ib = i + 1 < na && jlo[i + 1] >= 0 ? i + 1 : i;
    if (ia == ib) return 0.0;
    std::ptrdiff_t ja = top ? jhi[ia] : jlo[ia];
    std::ptrdiff_t jb = top ? jhi[ib] : jlo[ib];
    auto ka = F.idx(ia, static_cast<std::size_t>(ja));
    auto kb = F.idx(ib, static_cast<std::size_t>(jb));
    double tan1 = F.t1[kb] - F.t1[ka], tan2 = F.t2[kb] - F.t2[ka];
    double norm = std::hypot(tan1, tan2);
    if (norm <= 0.0) return 0.0;
    std::size_t k = F.idx(i, static_cast<std::size_t>(j));
    return (-tan2 * F.lambda1[k] + tan1 * F.lambda2[k]) / norm;
  };

  for (std::size_t i = 1; i + 1 < na; ++i) {
    if (jlo[i] < 0) continue;
    rep.max_abs_top = std::max(rep.max_abs_top,
                               std::fabs(boundary_normal_flow(i, true)));
    rep.max_abs_bottom = std::max(rep.max_abs_bottom,
                                  std::fabs(boundary_normal_flow(i, false)));
  }

  // right boundary: no outflow through the terminal axis slice
  for (std::size_t j = 0; j < nt; ++j) {
    std::size_t k = F.idx(na - 1, j);
    double flow = F.additive ? (F.lambda1[k] + F.lambda2[k]) / std::sqrt(2.0)
                             : F.lambda1[k];
    rep.max_abs_right = std::max(rep.max_abs_right, std::fabs(flow));
  }
  // left boundary: inflow allowed, outflow is a violation
  rep.worst_left_inflow = kInf;
  bool left_has_active = false;
  for (std::size_t j = 0; j < nt; ++j) {
    std::size_t k = F.idx(0, j);
    if (!F.active[k]) continue;
    left_has_active = true;
    double inward = F.additive ? (F.lambda1[k] + F.lambda2[k]) / std::sqrt(2.0)
                               : F.lambda1[k];
    rep.worst_left_inflow = std::min(rep.worst_left_inflow, inward);
  }
  if (!left_has_active) {
    rep.singleton_left = true;
    rep.worst_left_inflow = 0.0;
  }
  rep.pass = rep.max_abs_top <= tol && rep.max_abs_bottom <= tol &&
             rep.max_abs_right <= tol && rep.worst_left_inflow >= -tol;
  return rep;
}

TangencyReport verify_tangency(const AmortizationField& F, double c_pass) {
  TangencyReport rep;
  double lscale = std::max({max_abs(F.lambda1), max_abs(F.lambda2)});
  double floor = 1e-9 * lscale;
  for (std::size_t i = 0; i < F.na(); ++i) {
    for (std::size_t j = 0; j < F.nt(); ++j) {
      std::size_t k = F.idx(i, j);
      if (!F.active[k]) continue;
      double mag = std::hypot(F.lambda1[k], F.lambda2[k]);
      if (mag <= floor) {
        ++rep.skipped;
        continue;
      }
      double a1 = std::atan2(F.lambda2[k], F.lambda1[k]);
      double a2 = std::atan2(F.curve_slope[k], 1.0);
      rep.max_angle = std::max(rep.max_angle, std::fabs(a1 - a2));
    }
  }
  rep.pass = rep.max_angle <= c_pass * F.h_axis() / F.scale;
  return rep;
}

VsmUniformReport verify_vsm_uniform(const AmortizationField& F, double cost,
                                    double tol) {
  VsmUniformReport rep;
  rep.margin_angle = kInf;
  rep.margin_dominance = kInf;
  rep.margin_below_cost = kInf;
  rep.margin_upset = kInf;
  double lscale = std::max({max_abs(F.lambda1), max_abs(F.lambda2), 1e-300});
  std::size_t na = F.na(), nt = F.nt();
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t k = F.idx(i, j);
      if (!F.active[k]) continue;
      double angle =
          (F.t1[k] * F.lambda2[k] - F.t2[k] * F.lambda1[k]) / (F.scale * lscale);
      rep.margin_angle = std::min(rep.margin_angle, angle);
      if (F.phi1[k] >= cost)
        rep.margin_dominance = std::min(rep.margin_dominance,
                                        F.phi1[k] - F.phi2[k]);
      if (F.phi1[k] <= cost)
        rep.margin_below_cost = std::min(rep.margin_below_cost,
                                         cost - F.phi2[k]);
    }
  }
  // service threshold from the column amortization phi1(t1)
  Vec col_phi(na, kInf);
  rep.threshold = F.axis.back();
  bool found = false;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nt; ++j)
      if (F.active[F.idx(i, j)]) {
        col_phi[i] = F.phi1[F.idx(i, j)];
        break;
      }
    if (!found && col_phi[i] != kInf && col_phi[i] >= cost) {
      found = true;
      rep.threshold = F.axis[i];
      if (i > 0 && col_phi[i - 1] != kInf && col_phi[i - 1] < cost) {
        double w = (cost - col_phi[i - 1]) / (col_phi[i] - col_phi[i - 1]);
        rep.threshold = F.axis[i - 1] + w * (F.axis[i] - F.axis[i - 1]);
      }
    }
    if (found && col_phi[i] != kInf)
      rep.margin_upset = std::min(rep.margin_upset, col_phi[i] - cost);
  }
  if (!found) rep.threshold = F.axis.back() + 1.0;  // empty service region
  if (rep.margin_upset == kInf) rep.margin_upset = 0.0;
  rep.pass = rep.margin_angle >= -tol && rep.margin_dominance >= -tol &&
             rep.margin_below_cost >= -tol && rep.margin_upset >= -tol;
  return rep;
}

ShiftReport verify_shift_condition(const AmortizationField& F, double tol) {
  require(F.additive, "shift condition applies to additive fields");
  ShiftReport rep;
  rep.margin = kInf;
  double lscale = std::max({max_abs(F.lambda1), max_abs(F.lambda2), 1e-300});
  for (std::size_t i = 0; i < F.na(); ++i)
    for (std::size_t j = 0; j < F.nt(); ++j) {
      std::size_t k = F.idx(i, j);
      if (!F.active[k] || F.flagged[k]) continue;
      double slack =
          (F.t2[k] * F.lambda1[k] - F.t1[k] * F.lambda2[k]) / (F.scale * lscale);
      if (slack < rep.margin) {
        rep.margin = slack;
        rep.argmax_i = i;
        rep.argmax_j = j;
      }
    }
  rep.pass = rep.margin >= -tol;
  return rep;
}

VsmBundleReport verify_vsm_bundle(const AmortizationField& F, double cost,
                                  double tol) {
  require(F.additive, "bundle check applies to additive fields");
  VsmBundleReport rep;
  rep.margin_same_sign = kInf;
  rep.margin_monotone = kInf;
  std::size_t na = F.na(), nt = F.nt();
  Vec colsum(na, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < na; ++i) {
    double lo = kInf, hi = -kInf;
    for (std::size_t j = 0; j < nt; ++j) {
      std::size_t k = F.idx(i, j);
      if (!F.active[k]) continue;
      double p1 = F.phi1[k], p2 = F.phi2[k];
      rep.margin_same_sign =
          std::min(rep.margin_same_sign, p1 * p2 / (F.scale * F.scale));
      double sum = p1 + p2;
      lo = std::min(lo, sum);
      hi = std::max(hi, sum);
    }
    if (lo <= hi) {
      colsum[i] = 0.5 * (lo + hi);
      rep.max_theta_spread = std::max(rep.max_theta_spread, hi - lo);
    }
  }
  double prev = -kInf;
  bool priced = false;
  rep.price = F.axis.back() + 1.0;
  for (std::size_t i = 0; i < na; ++i) {
    if (std::isnan(colsum[i])) continue;
    if (prev != -kInf)
      rep.margin_monotone = std::min(rep.margin_monotone, colsum[i] - prev);
    if (!priced && colsum[i] >= cost) {
      priced = true;
      rep.price = F.axis[i];
    }
    prev = colsum[i];
  }
  if (rep.margin_same_sign == kInf) rep.margin_same_sign = 0.0;
  if (rep.margin_monotone == kInf) rep.margin_monotone = 0.0;
  rep.pass = rep.margin_same_sign >= -tol && rep.margin_monotone >= -tol &&
             rep.max_theta_spread <= std::max(tol * F.scale, 40.0 * tol);
  return rep;
}

double threshold_virtual_surplus(const AmortizationField& F,
                                 const dist::MaxRatioGrid& grid,
                                 double threshold, double cost) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < grid.nv(); ++i) {
    double vc = 0.5 * (grid.v_nodes[i] + grid.v_nodes[i + 1]);
    if (vc < threshold) continue;
    for (std::size_t j = 0; j + 1 < grid.nt(); ++j) {
      double m = grid.cell_mass[i][j];
      if (m <= 0.0) continue;
      double thc = 0.5 * (grid.theta_nodes[j] + grid.theta_nodes[j + 1]);
      auto phi = F.phi_at(vc, vc * thc);
      acc += m * (phi[0] - cost);
    }
  }
  return acc;
}

double threshold_virtual_surplus(const AmortizationField& F,
                                 const dist::SumRatioGrid& grid,
                                 double threshold, double cost) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < grid.ns(); ++i) {
    double sc = 0.5 * (grid.s_nodes[i] + grid.s_nodes[i + 1]);
    if (sc < threshold) continue;
    for (std::size_t j = 0; j + 1 < grid.nt(); ++j) {
      double m = grid.cell_mass[i][j];
      if (m <= 0.0) continue;
      double thc = 0.5 * (grid.theta_nodes[j] + grid.theta_nodes[j + 1]);
      double t1 = sc / (1.0 + thc), t2 = sc - t1;
      auto phi = F.phi_at(t1, t2);
      acc += m * (phi[0] + phi[1] - cost);
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Quantile-space ironing
// ---------------------------------------------------------------------------

IronedField build_ironed_quantile(const dist::MaxRatioGrid& grid,
                                  std::size_t n_q1, std::size_t n_q2) {
  dist::QuantileMap qm = dist::quantile_map(grid);
  IronedField ir;
  ir.scale = grid.scale;
  if (n_q1 == 0) n_q1 = std::max<std::size_t>(2 * grid.nv() + 1, 129);
  if (n_q2 == 0) n_q2 = std::max<std::size_t>(grid.nt(), 33);
  ir.q1 = num::linspace(0.0, 1.0, n_q1);
  ir.q2 = num::linspace(0.0, 1.0, n_q2);

  ir.t1_of_q1.resize(n_q1);
  for (std::size_t i = 0; i < n_q1; ++i)
    ir.t1_of_q1[i] = qm.t1_of_q1(ir.q1[i]);

  ir.H.resize(n_q1);
  for (std::size_t i = 0; i < n_q1; ++i) ir.H[i] = ir.q1[i] * ir.t1_of_q1[i];
  ir.H_hull = num::concave_majorant_values(ir.q1, ir.H);
  ir.phi1bar = num::concave_majorant_slopes(ir.q1, ir.H);
  ir.hull_breakpoints = num::concave_majorant(ir.q1, ir.H);

  ir.suffix_gap.resize(n_q1);
  for (std::size_t i = 0; i < n_q1; ++i)
    ir.suffix_gap[i] = ir.H[i] - ir.H_hull[i];

  // pointwise virtual value and bridge flags
  double fmax_peak = *std::max_element(grid.fmax.begin(), grid.fmax.end());
  double vspan = grid.v_hi() - grid.v_lo();
  double jump_tol = 6.0 * std::max(vspan / (n_q1 - 1),
                                   vspan / (grid.nv() - 1));
  ir.bridged.assign(n_q1, 0);
  ir.phi1q.resize(n_q1);
  for (std::size_t i = 0; i < n_q1; ++i) {
    double t1 = ir.t1_of_q1[i];
    double fm = num::interp(grid.v_nodes, grid.fmax, t1);
    if (fm <= 1e-9 * fmax_peak) {
      ir.bridged[i] = 1;
      ir.phi1q[i] = ir.phi1bar[i];
    } else {
      ir.phi1q[i] = t1 - ir.q1[i] / fm;
    }
    if (i > 0 && std::fabs(ir.t1_of_q1[i] - ir.t1_of_q1[i - 1]) > jump_tol) {
      ir.bridged[i] = 1;
      ir.bridged[i - 1] = 1;
    }
  }

  // second coordinate, tangent slope and the corrected second component
  std::size_t N = n_q1 * n_q2;
  ir.t2.resize(N);
  ir.mu.assign(N, 0.0);
  ir.phi2q.assign(N, 0.0);
  ir.phi2bar.assign(N, 0.0);
  ir.kink.assign(n_q1, 0);
  for (std::size_t i = 0; i < n_q1; ++i)
    for (std::size_t k = 0; k < n_q2; ++k)
      ir.t2[ir.idx(i, k)] = qm.t2_of(ir.t1_of_q1[i], ir.q2[k]);

  for (std::size_t k = 0; k < n_q2; ++k) {
    for (std::size_t i = 0; i < n_q1; ++i) {
      std::size_t a = i > 0 ? i - 1 : i;
      std::size_t b = i + 1 < n_q1 ? i + 1 : i;
      double dt1 = ir.t1_of_q1[b] - ir.t1_of_q1[a];
      double dt2 = ir.t2[ir.idx(b, k)] - ir.t2[ir.idx(a, k)];
      if (grid.correlated_band) {
        ir.mu[ir.idx(i, k)] = grid.curve->slope(ir.t1_of_q1[i]);
      } else if (std::fabs(dt1) <= 1e-12 * ir.scale) {
        ir.kink[i] = 1;
        ir.mu[ir.idx(i, k)] = 0.0;
      } else {
        ir.mu[ir.idx(i, k)] = dt2 / dt1;
      }
    }
  }
  for (std::size_t i = 0; i < n_q1; ++i) {
    double t1 = ir.t1_of_q1[i];
    double fm = num::interp(grid.v_nodes, grid.fmax, t1);
    bool have_fm = fm > 1e-9 * fmax_peak;
    // discrete slope of H stands in for the pointwise virtual value; the two
    // agree on continuous supports and the slope handles support jumps
    std::size_t a = i > 0 ? i - 1 : i;
    std::size_t b = i + 1 < n_q1 ? i + 1 : i;
    double phi1_slope = (ir.H[b] - ir.H[a]) / (ir.q1[b] - ir.q1[a]);
    for (std::size_t k = 0; k < n_q2; ++k) {
      std::size_t kk = ir.idx(i, k);
      double mu = ir.mu[kk];
      double dmu = 0.0;
      {
        double m_a = ir.mu[ir.idx(a, k)], m_b = ir.mu[ir.idx(b, k)];
        dmu = (m_b - m_a) / (ir.q1[b] - ir.q1[a]);
      }
      double phi2 = have_fm ? ir.t2[kk] - mu * ir.q1[i] / fm
                            : ir.t2[kk] - mu * (t1 - phi1_slope);
      ir.phi2q[kk] = phi2;
      ir.phi2bar[kk] = phi2 + (ir.phi1bar[i] - phi1_slope) * mu -
                       ir.suffix_gap[i] * dmu;
    }
  }
  return ir;
}

IronedDominanceReport verify_ironed_dominance(const IronedField& ir,
                                              double tol) {
  IronedDominanceReport rep;
  rep.margin_dominance = kInf;
  rep.margin_t1 = kInf;
  for (std::size_t i = 0; i < ir.nq1(); ++i) {
    if (ir.bridged[i] || ir.kink[i]) {
      ++rep.skipped;
      continue;
    }
    double t1 = ir.t1_of_q1[i];
    rep.margin_t1 = std::min(rep.margin_t1, t1 - ir.phi1bar[i]);
    if (t1 <= 1e-12 * ir.scale) continue;
    for (std::size_t k = 0; k < ir.nq2(); ++k) {
      std::size_t kk = ir.idx(i, k);
      double theta = ir.t2[kk] / t1;
      rep.margin_dominance = std::min(
          rep.margin_dominance, theta * ir.phi1bar[i] - ir.phi2bar[kk]);
    }
  }
  rep.pass = rep.margin_dominance >= -tol && rep.margin_t1 >= -tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Exact discrete amortization
// ---------------------------------------------------------------------------

double DiscreteAmortization::virtual_surplus(
    const std::vector<std::array<double, 2>>& x, const Vec& probs) const {
  double acc = 0.0;
  for (std::size_t t = 0; t < phi.size(); ++t)
    acc += probs[t] * (phi[t][0] * x[t][0] + phi[t][1] * x[t][1]);
  return acc;
}

DiscreteAmortization build_discrete_extension(
    const std::vector<std::array<double, 2>>& types, const Vec& probs,
    bool additive) {
  require(types.size() == probs.size(), "types/probs size mismatch");
  std::size_t n = types.size();
  DiscreteAmortization out;
  out.phi.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.phi[t] = types[t];  // default: top slice

  double scale = 1e-300;
  for (auto& t : types) scale = std::max({scale, t[0], t[1]});
  double key_tol = 1e-9 * scale;

  // branch split: favorite coordinate first; additive instances are
  // branch-symmetric in the same way
  for (int branch = 0; branch < 2; ++branch) {
    std::vector<std::size_t> members;
    for (std::size_t t = 0; t < n; ++t) {
      if (probs[t] <= 0.0) continue;
      bool first_fav = types[t][0] >= types[t][1];
      if ((branch == 0) == first_fav) members.push_back(t);
    }
    if (members.empty()) continue;
    auto key = [&](std::size_t t) {
      return additive ? types[t][0] + types[t][1]
                      : std::max(types[t][0], types[t][1]);
    };
    auto minor = [&](std::size_t t) {
      return std::min(types[t][0], types[t][1]);
    };
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      if (std::fabs(key(a) - key(b)) > key_tol) return key(a) < key(b);
      if (minor(a) != minor(b)) return minor(a) < minor(b);
      return a < b;
    });
    // slice into columns of equal key
    std::vector<std::vector<std::size_t>> cols;
    for (std::size_t m : members) {
      if (cols.empty() || std::fabs(key(cols.back().front()) - key(m)) > key_tol)
        cols.emplace_back();
      cols.back().push_back(m);
    }
    // per-column mass and conditional quantile intervals
    std::size_t nc = cols.size();
    Vec colmass(nc, 0.0);
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t m : cols[i]) colmass[i] += probs[m];
    double branch_total = std::accumulate(colmass.begin(), colmass.end(), 0.0);
    if (branch_total <= 0.0) continue;
    // intervals in (0,1) of the conditional distribution of the minor value
    std::vector<Vec> edges(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      edges[i].resize(cols[i].size() + 1);
      edges[i][0] = 0.0;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols[i].size(); ++j) {
        acc += probs[cols[i][j]] / colmass[i];
        edges[i][j + 1] = acc;
      }
      edges[i].back() = 1.0;
    }
    double tail = branch_total;  // mass of columns strictly above i
    for (std::size_t i = 0; i < nc; ++i) {
      tail -= colmass[i];
      if (i + 1 == nc) {
        for (std::size_t m : cols[i]) out.phi[m] = types[m];
        continue;
      }
      for (std::size_t j = 0; j < cols[i].size(); ++j) {
        std::size_t m = cols[i][j];
        double w = probs[m];
        std::array<double, 2> delta{0.0, 0.0};
        for (std::size_t j2 = 0; j2 < cols[i + 1].size(); ++j2) {
          double ov = std::min(edges[i][j + 1], edges[i + 1][j2 + 1]) -
                      std::max(edges[i][j], edges[i + 1][j2]);
          if (ov <= 0.0) continue;
          std::size_t m2 = cols[i + 1][j2];
          delta[0] += ov * (types[m2][0] - types[m][0]);
          delta[1] += ov * (types[m2][1] - types[m][1]);
        }
        out.phi[m][0] = types[m][0] - tail * delta[0] / w;
        out.phi[m][1] = types[m][1] - tail * delta[1] / w;
      }
    }
  }
  return out;
}

}  // namespace screenlab::amort
