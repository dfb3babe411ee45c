// SPDX-License-Identifier: Apache-2.0
#include "core/dist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "core/numerics.hpp"

namespace screenlab::dist {

namespace {

constexpr double kSupportTol = 1e-9;

struct AnalyticFamily {
  Vec v_nodes;
  Vec theta_nodes;
  std::function<double(double, double)> density;  // unnormalized f^MR
  std::function<double(double)> theta_lo;
  std::function<double(double)> theta_hi;
  std::array<double, 2> weights{0.5, 0.5};
  std::function<double(double)> Fmax, fmax;  // exact marginal when available
};

// Cell probabilities by midpoint subsampling; robust to support boundaries
// that cut through cells.
std::vector<Vec> cell_masses(const Vec& xs, const Vec& ys,
                             const std::function<double(double, double)>& f) {
  const int sub = 8;
  std::vector<Vec> mass(xs.size() - 1, Vec(ys.size() - 1, 0.0));
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    double dx = xs[i + 1] - xs[i];
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      double dy = ys[j + 1] - ys[j];
      double acc = 0.0;
      for (int a = 0; a < sub; ++a) {
        double x = xs[i] + (a + 0.5) * dx / sub;
        for (int b = 0; b < sub; ++b) acc += f(x, ys[j] + (b + 0.5) * dy / sub);
      }
      mass[i][j] = acc / (sub * sub) * dx * dy;
    }
  }
  return mass;
}

double mass_total(const std::vector<Vec>& mass) {
  double total = 0.0;
  for (auto& row : mass) total = std::accumulate(row.begin(), row.end(), total);
  return total;
}

void normalize(std::vector<Vec>& density, std::vector<Vec>& mass) {
  double total = mass_total(mass);
  require(total > 0.0, "grid density is identically zero");
  for (auto& row : density)
    for (auto& v : row) v /= total;
  for (auto& row : mass)
    for (auto& v : row) v /= total;
}

Vec column_cdf(const Vec& theta, const Vec& col) {
  Vec cdf = num::cumtrapz(theta, col);
  double total = cdf.back();
  if (total > 0.0)
    for (auto& v : cdf) v /= total;
  return cdf;
}

Vec numeric_F_from_masses(const std::vector<Vec>& mass, std::size_t n_axis) {
  Vec F(n_axis, 0.0);
  for (std::size_t i = 0; i + 1 < n_axis; ++i)
    F[i + 1] = F[i] + std::accumulate(mass[i].begin(), mass[i].end(), 0.0);
  if (F.back() > 0.0)
    for (auto& v : F) v /= F.back();
  return F;
}

double trapz_node_weight(const Vec& x, std::size_t j) {
  if (j == 0) return 0.5 * (x[1] - x[0]);
  if (j + 1 == x.size()) return 0.5 * (x[j] - x[j - 1]);
  return 0.5 * (x[j + 1] - x[j - 1]);
}

}  // namespace

bool FamilySpec::additive() const {
  return std::holds_alternative<TruncatedUniformSimplexSpec>(value) ||
         std::holds_alternative<PerfectlyCorrelatedSumSpec>(value);
}

std::string FamilySpec::name() const {
  struct N {
    std::string operator()(const IidUniformSpec&) const { return "iid_uniform"; }
    std::string operator()(const PerfectlyCorrelatedSpec&) const {
      return "perfectly_correlated";
    }
    std::string operator()(const UniformAboveCurveSpec&) const {
      return "uniform_above_curve";
    }
    std::string operator()(const ProductLogDensitySpec&) const {
      return "product_log_density";
    }
    std::string operator()(const TruncatedUniformSimplexSpec&) const {
      return "truncated_uniform_simplex";
    }
    std::string operator()(const PerfectlyCorrelatedSumSpec&) const {
      return "perfectly_correlated_sum";
    }
    std::string operator()(const RawGridSpec&) const { return "raw_grid"; }
  };
  return std::visit(N{}, value);
}

// ---------------------------------------------------------------------------
// Grid members
// ---------------------------------------------------------------------------

double MaxRatioGrid::cart_density(std::size_t i, std::size_t j) const {
  double v = v_nodes[i];
  if (v <= 0.0) return 0.0;
  return density[i][j] / v;
}

double MaxRatioGrid::diagonal_density(double v) const {
  if (v < v_lo() || v > v_hi() || v <= 0.0) return 0.0;
  std::size_t i = num::lower_cell(v_nodes, v);
  double w = std::clamp((v - v_nodes[i]) / (v_nodes[i + 1] - v_nodes[i]), 0.0, 1.0);
  double d = density[i].back() * (1.0 - w) + density[i + 1].back() * w;
  return branch_weights[0] * d / v;
}

bool MaxRatioGrid::in_support(std::size_t i, std::size_t j) const {
  return theta_nodes[j] >= theta_lo[i] - kSupportTol &&
         theta_nodes[j] <= theta_hi[i] + kSupportTol;
}

void MaxRatioGrid::validate() const {
  require(v_nodes.size() >= 2 && theta_nodes.size() >= 2, "grid too small");
  for (std::size_t i = 0; i + 1 < v_nodes.size(); ++i)
    require(v_nodes[i + 1] > v_nodes[i], "v nodes not increasing");
  for (std::size_t j = 0; j + 1 < theta_nodes.size(); ++j)
    require(theta_nodes[j + 1] > theta_nodes[j], "theta nodes not increasing");
  require(theta_nodes.back() <= 1.0 + 1e-12, "ratio above 1");
  require(std::fabs(mass_total(cell_mass) - 1.0) <= 1e-8,
          "grid mass not normalized");
  double fmax_peak = *std::max_element(fmax.begin(), fmax.end());
  for (std::size_t i = 0; i < nv(); ++i) {
    const Vec& cdf = cond_cdf[i];
    for (std::size_t j = 0; j + 1 < cdf.size(); ++j)
      require(cdf[j + 1] >= cdf[j] - 1e-12, "conditional CDF decreasing");
    if (fmax[i] > 1e-9 * fmax_peak)
      require(std::fabs(cdf.back() - 1.0) <= 1e-8,
              "conditional CDF does not reach 1");
    for (std::size_t j = 0; j < nt(); ++j)
      require(std::isfinite(density[i][j]) && density[i][j] >= 0.0,
              "bad density value");
  }
  require(std::fabs(branch_weights[0] + branch_weights[1] - 1.0) <= 1e-12,
          "branch weights must sum to 1");
}

double SumRatioGrid::cart_density(std::size_t i, std::size_t j) const {
  double s = s_nodes[i], th = theta_nodes[j];
  if (s <= 0.0) return 0.0;
  double one = 1.0 + th;
  return density[i][j] * one * one / s;
}

bool SumRatioGrid::in_support(std::size_t i, std::size_t j) const {
  return theta_nodes[j] >= theta_lo[i] - kSupportTol &&
         theta_nodes[j] <= theta_hi[i] + kSupportTol;
}

void SumRatioGrid::validate() const {
  require(s_nodes.size() >= 2 && theta_nodes.size() >= 2, "grid too small");
  require(std::fabs(mass_total(cell_mass) - 1.0) <= 1e-8,
          "grid mass not normalized");
  for (std::size_t i = 0; i < ns(); ++i)
    for (std::size_t j = 0; j + 1 < nt(); ++j)
      require(cond_cdf[i][j + 1] >= cond_cdf[i][j] - 1e-12,
              "conditional CDF decreasing");
}

// ---------------------------------------------------------------------------
// Family constructions
// ---------------------------------------------------------------------------

namespace {

AnalyticFamily make_iid_uniform(const IidUniformSpec& s, std::size_t nv,
                                std::size_t nt) {
  require(s.b > s.a && s.a >= 0.0, "iid_uniform: bad support");
  AnalyticFamily fam;
  fam.v_nodes = num::linspace(s.a, s.b, nv);
  double tlo = s.a > 0.0 ? s.a / s.b : 0.0;
  fam.theta_nodes = num::linspace(tlo, 1.0, nt);
  double a = s.a, span = s.b - s.a;
  fam.density = [a, span](double v, double th) {
    if (v * th < a - 1e-15) return 0.0;
    return 2.0 * v / (span * span);
  };
  fam.theta_lo = [a](double v) { return v > 0.0 ? std::min(1.0, a / v) : 1.0; };
  fam.Fmax = [a, span](double v) {
    double u = std::clamp((v - a) / span, 0.0, 1.0);
    return u * u;
  };
  fam.fmax = [a, span](double v) {
    double u = std::clamp((v - a) / span, 0.0, 1.0);
    return 2.0 * u / span;
  };
  return fam;
}

AnalyticFamily make_uniform_above_curve(const UniformAboveCurveSpec& s,
                                        std::size_t nv, std::size_t nt) {
  const Curve& C = s.curve;
  for (std::size_t i = 0; i < C.x.size(); ++i)
    require(C.y[i] <= C.x[i] + 1e-12, "curve must satisfy C(t1) <= t1");
  AnalyticFamily fam;
  fam.v_nodes = num::linspace(s.fmax.lo(), s.fmax.hi(), nv);
  auto ratio_lo = [C](double v) {
    if (v <= 1e-15) return std::clamp(C.slope(0.0), 0.0, 1.0);
    return std::clamp(C(v) / v, 0.0, 1.0);
  };
  double tlo = 1.0;
  for (double v : fam.v_nodes) tlo = std::min(tlo, ratio_lo(v));
  fam.theta_nodes = num::linspace(tlo, 1.0, nt);
  OneDSpec marg = s.fmax;
  fam.density = [marg, C, ratio_lo](double v, double th) {
    if (v <= 0.0 || th < ratio_lo(v) - 1e-15) return 0.0;
    double width = v - C(v);
    if (width <= 0.0) return 0.0;
    return marg.pdf(v) * v / width;
  };
  fam.theta_lo = ratio_lo;
  fam.Fmax = [marg](double v) { return marg.cdf(v); };
  fam.fmax = [marg](double v) { return marg.pdf(v); };
  return fam;
}

AnalyticFamily make_product_log_density(const ProductLogDensitySpec& s,
                                        std::size_t nv, std::size_t nt) {
  require(s.hi > 0.0, "product_log_density: need hi > 0");
  Curve h = s.h;
  // Curve interpolation clamps outside the sampled log-range, so the
  // one-dimensional density extends continuously to x = 0.
  auto g_raw = [h](double x) {
    return std::exp(h(x > 1e-300 ? std::log(x) : h.lo()));
  };
  const std::size_t fine = 4097;
  Vec xs = num::linspace(0.0, s.hi, fine), gs(fine);
  for (std::size_t i = 0; i < fine; ++i) gs[i] = g_raw(xs[i]);
  double Z = num::trapz(xs, gs);
  Vec cdf = num::cumtrapz(xs, gs);
  for (auto& c : cdf) c /= Z;
  AnalyticFamily fam;
  fam.v_nodes = num::linspace(0.0, s.hi, nv);
  fam.theta_nodes = num::linspace(0.0, 1.0, nt);
  auto g1 = [g_raw, Z](double x) { return g_raw(x) / Z; };
  fam.density = [g1](double v, double th) {
    return 2.0 * v * g1(v) * g1(v * th);
  };
  fam.theta_lo = [](double) { return 0.0; };
  fam.Fmax = [xs, cdf](double v) {
    double F1 = num::interp(xs, cdf, v);
    return F1 * F1;
  };
  fam.fmax = [xs, cdf, g1](double v) {
    return 2.0 * num::interp(xs, cdf, v) * g1(v);
  };
  return fam;
}

AnalyticFamily make_simplex_unit_demand(const TruncatedUniformSimplexSpec& s,
                                        std::size_t nv, std::size_t nt) {
  require(s.b > s.a && s.a >= 0.0, "simplex: bad support");
  double a = s.a, b = s.b, span = b - a;
  AnalyticFamily fam;
  fam.v_nodes = num::linspace(a, b, nv);
  fam.theta_nodes = num::linspace(a > 0.0 ? a / b : 0.0, 1.0, nt);
  fam.density = [a, b, span](double v, double th) {
    double t2 = v * th;
    if (t2 < a - 1e-15 || v + t2 > a + b + 1e-15) return 0.0;
    return 4.0 * v / (span * span);
  };
  fam.theta_lo = [a](double v) { return v > 0.0 ? std::min(1.0, a / v) : 1.0; };
  fam.theta_hi = [a, b](double v) {
    return v > 0.0 ? std::clamp((a + b - v) / v, 0.0, 1.0) : 1.0;
  };
  return fam;
}

MaxRatioGrid build_from_analytic(const AnalyticFamily& fam) {
  MaxRatioGrid g;
  g.v_nodes = fam.v_nodes;
  g.theta_nodes = fam.theta_nodes;
  g.branch_weights = fam.weights;
  g.scale = g.v_nodes.back();
  std::size_t nv = g.nv(), nt = g.nt();
  g.density.assign(nv, Vec(nt, 0.0));
  g.theta_lo.resize(nv);
  g.theta_hi.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    double v = g.v_nodes[i];
    g.theta_lo[i] = fam.theta_lo(v);
    g.theta_hi[i] = fam.theta_hi ? fam.theta_hi(v) : 1.0;
    for (std::size_t j = 0; j < nt; ++j)
      g.density[i][j] = fam.density(v, g.theta_nodes[j]);
  }
  g.cell_mass = cell_masses(g.v_nodes, g.theta_nodes, fam.density);
  normalize(g.density, g.cell_mass);
  g.cond_cdf.resize(nv);
  for (std::size_t i = 0; i < nv; ++i)
    g.cond_cdf[i] = column_cdf(g.theta_nodes, g.density[i]);
  g.Fmax.resize(nv);
  g.fmax.resize(nv);
  if (fam.Fmax) {
    for (std::size_t i = 0; i < nv; ++i) {
      g.Fmax[i] = fam.Fmax(g.v_nodes[i]);
      g.fmax[i] = fam.fmax(g.v_nodes[i]);
    }
  } else {
    g.Fmax = numeric_F_from_masses(g.cell_mass, nv);
    for (std::size_t i = 0; i < nv; ++i)
      g.fmax[i] = num::trapz(g.theta_nodes, g.density[i]);
    double s = num::trapz(g.v_nodes, g.fmax);
    if (s > 0.0)
      for (auto& f : g.fmax) f /= s;
  }
  return g;
}

// All conditional mass in the theta cell the curve passes through; the exact
// curve is kept in metadata for curve-based checks.
template <class G>
void fill_band(G& g, const Vec& axis, const std::function<double(double)>& ratio,
               const OneDSpec& marginal) {
  std::size_t n = axis.size(), nt = g.theta_nodes.size();
  const Vec& th = g.theta_nodes;
  g.density.assign(n, Vec(nt, 0.0));
  g.cell_mass.assign(n - 1, Vec(nt - 1, 0.0));
  g.theta_lo.resize(n);
  g.theta_hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = std::clamp(ratio(axis[i]), th.front(), th.back());
    g.theta_lo[i] = r;
    g.theta_hi[i] = r;
    std::size_t j = num::lower_cell(th, r);
    std::size_t jstar = (r - th[j] <= th[j + 1] - r) ? j : j + 1;
    double w = trapz_node_weight(th, jstar);
    g.density[i][jstar] = marginal.pdf(axis[i]) / w;
  }
  const int sub = 32;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (int a = 0; a < sub; ++a) {
      double x0 = axis[i] + (axis[i + 1] - axis[i]) * a / sub;
      double x1 = axis[i] + (axis[i + 1] - axis[i]) * (a + 1) / sub;
      double m = marginal.cdf(x1) - marginal.cdf(x0);
      double r = std::clamp(ratio(0.5 * (x0 + x1)), th.front(), th.back());
      g.cell_mass[i][num::lower_cell(th, r)] += m;
    }
  }
}

MaxRatioGrid make_perfectly_correlated(const PerfectlyCorrelatedSpec& s,
                                       std::size_t nv, std::size_t nt) {
  const Curve& C = s.curve;
  for (std::size_t i = 0; i < C.x.size(); ++i)
    require(C.y[i] <= C.x[i] + 1e-12, "curve must satisfy C(t1) <= t1");
  MaxRatioGrid g;
  g.v_nodes = num::linspace(s.fmax.lo(), s.fmax.hi(), nv);
  auto ratio = [&C](double v) {
    if (v <= 1e-15) return std::clamp(C.slope(0.0), 0.0, 1.0);
    return std::clamp(C(v) / v, 0.0, 1.0);
  };
  double tlo = 1.0;
  for (double v : g.v_nodes) tlo = std::min(tlo, ratio(v));
  g.theta_nodes = num::linspace(std::max(0.0, tlo - 1e-6), 1.0, nt);
  g.branch_weights = {1.0, 0.0};
  g.scale = g.v_nodes.back();
  g.correlated_band = true;
  g.curve = C;
  fill_band(g, g.v_nodes, ratio, s.fmax);
  normalize(g.density, g.cell_mass);
  std::size_t n = g.nv();
  g.cond_cdf.assign(n, Vec(nt, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double r = ratio(g.v_nodes[i]);
    for (std::size_t j = 0; j < nt; ++j)
      g.cond_cdf[i][j] = g.theta_nodes[j] >= r - 1e-15 ? 1.0 : 0.0;
  }
  g.Fmax.resize(n);
  g.fmax.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.Fmax[i] = s.fmax.cdf(g.v_nodes[i]);
    g.fmax[i] = s.fmax.pdf(g.v_nodes[i]);
  }
  g.warnings.push_back("perfectly correlated support stored as one-cell band");
  return g;
}

}  // namespace

MaxRatioGrid build_grid(const FamilySpec& spec, std::size_t n_v,
                        std::size_t n_theta) {
  require(n_v >= 8 && n_theta >= 8, "resolution must be at least 8 per axis");
  MaxRatioGrid g;
  if (auto* s = std::get_if<IidUniformSpec>(&spec.value)) {
    g = build_from_analytic(make_iid_uniform(*s, n_v, n_theta));
  } else if (auto* s = std::get_if<UniformAboveCurveSpec>(&spec.value)) {
    g = build_from_analytic(make_uniform_above_curve(*s, n_v, n_theta));
  } else if (auto* s = std::get_if<ProductLogDensitySpec>(&spec.value)) {
    g = build_from_analytic(make_product_log_density(*s, n_v, n_theta));
  } else if (auto* s = std::get_if<TruncatedUniformSimplexSpec>(&spec.value)) {
    g = build_from_analytic(make_simplex_unit_demand(*s, n_v, n_theta));
  } else if (auto* s = std::get_if<PerfectlyCorrelatedSpec>(&spec.value)) {
    g = make_perfectly_correlated(*s, n_v, n_theta);
  } else if (auto* s = std::get_if<RawGridSpec>(&spec.value)) {
    g = load_raw_grid(s->path, n_v, n_theta);
  } else {
    fail(ErrorCode::unsupported,
         "family '" + spec.name() + "' has no max-ratio grid form");
  }
  g.validate();
  return g;
}

FavoriteMarginal favorite_marginal(const MaxRatioGrid& grid) {
  FavoriteMarginal m;
  m.v_nodes = grid.v_nodes;
  m.F = grid.Fmax;
  m.f = grid.fmax;
  m.scale = grid.scale;
  return m;
}

FavoriteMarginal marginal_from_spec(const OneDSpec& spec, std::size_t n) {
  FavoriteMarginal m;
  m.v_nodes = num::linspace(spec.lo(), spec.hi(), n);
  m.F.resize(n);
  m.f.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.F[i] = spec.cdf(m.v_nodes[i]);
    m.f[i] = spec.pdf(m.v_nodes[i]);
  }
  m.scale = m.v_nodes.back();
  return m;
}

std::function<double(double)> conditional_ratio_cdf(const MaxRatioGrid& grid,
                                                    double v,
                                                    std::size_t branch) {
  require(branch < 2, "branch index out of range");
  require(grid.branch_weights[branch] > 0.0, "branch carries no mass");
  require(v >= grid.v_lo() - 1e-12 && v <= grid.v_hi() + 1e-12,
          "favorite value outside support");
  if (grid.correlated_band) {
    double r = std::clamp((*grid.curve)(v) / std::max(v, 1e-300), 0.0, 1.0);
    return [r](double th) { return th >= r - 1e-15 ? 1.0 : 0.0; };
  }
  double fv = num::interp(grid.v_nodes, grid.fmax, v);
  double fmax_peak = *std::max_element(grid.fmax.begin(), grid.fmax.end());
  require(fv > 1e-9 * fmax_peak,
          "degenerate conditioning: favorite density vanishes at v");
  std::size_t i = num::lower_cell(grid.v_nodes, v);
  double w = std::clamp((v - grid.v_nodes[i]) /
                            (grid.v_nodes[i + 1] - grid.v_nodes[i]),
                        0.0, 1.0);
  Vec theta = grid.theta_nodes;
  Vec cdf(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j)
    cdf[j] = (1.0 - w) * grid.cond_cdf[i][j] + w * grid.cond_cdf[i + 1][j];
  return [theta, cdf](double th) { return num::interp(theta, cdf, th); };
}

// ---------------------------------------------------------------------------
// Equi-quantile curves
// ---------------------------------------------------------------------------

namespace {

// Ratio at conditional quantile level q in column i; empty columns take the
// value interpolated between their nearest populated neighbours.
template <class G>
Vec column_quantiles(const G& g, const Vec& axis, double q) {
  std::size_t n = axis.size();
  Vec theta_q(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) {
    if (g.cond_cdf[i].back() <= 0.5)  // empty column (CDF never normalized)
      continue;
    theta_q[i] = num::inverse_monotone(g.theta_nodes, g.cond_cdf[i], q);
  }
  // fill gaps
  std::ptrdiff_t first = -1, last = -1;
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isnan(theta_q[i])) {
      if (first < 0) first = static_cast<std::ptrdiff_t>(i);
      last = static_cast<std::ptrdiff_t>(i);
    }
  require(first >= 0, "equi-quantile: all columns empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isnan(theta_q[i])) continue;
    if (static_cast<std::ptrdiff_t>(i) < first)
      theta_q[i] = theta_q[first];
    else if (static_cast<std::ptrdiff_t>(i) > last)
      theta_q[i] = theta_q[last];
    else {
      std::size_t a = i, b = i;
      while (std::isnan(theta_q[a])) --a;
      while (std::isnan(theta_q[b])) ++b;
      double w = (axis[i] - axis[a]) / (axis[b] - axis[a]);
      theta_q[i] = (1.0 - w) * theta_q[a] + w * theta_q[b];
    }
  }
  return theta_q;
}

}  // namespace

EquiQuantileCurve equi_quantile(const MaxRatioGrid& grid, double q) {
  require(q >= 0.0 && q <= 1.0, "quantile outside [0,1]");
  EquiQuantileCurve c;
  c.q = q;
  c.anchors = grid.v_nodes;
  c.values.resize(grid.nv());
  if (grid.correlated_band) {
    for (std::size_t i = 0; i < grid.nv(); ++i)
      c.values[i] = (*grid.curve)(grid.v_nodes[i]);
  } else {
    Vec theta_q = column_quantiles(grid, grid.v_nodes, q);
    for (std::size_t i = 0; i < grid.nv(); ++i)
      c.values[i] = grid.v_nodes[i] * theta_q[i];
  }
  c.slopes = num::gradient(c.anchors, c.values);
  return c;
}

EquiQuantileCurve equi_quantile(const SumRatioGrid& grid, double q) {
  require(q >= 0.0 && q <= 1.0, "quantile outside [0,1]");
  EquiQuantileCurve c;
  c.q = q;
  c.anchors = grid.s_nodes;
  c.values.resize(grid.ns());
  if (grid.correlated_band) {
    for (std::size_t i = 0; i < grid.ns(); ++i) {
      double th = std::clamp((*grid.theta_of_s)(grid.s_nodes[i]), 0.0, 1.0);
      c.values[i] = grid.s_nodes[i] * th / (1.0 + th);
    }
  } else {
    Vec theta_q = column_quantiles(grid, grid.s_nodes, q);
    for (std::size_t i = 0; i < grid.ns(); ++i) {
      double th = theta_q[i];
      c.values[i] = grid.s_nodes[i] * th / (1.0 + th);
    }
  }
  c.slopes = num::gradient(c.anchors, c.values);
  return c;
}

// ---------------------------------------------------------------------------
// Quantile map
// ---------------------------------------------------------------------------

QuantileMap quantile_map(const MaxRatioGrid& grid) {
  QuantileMap qm;
  qm.grid = &grid;
  qm.v_nodes = grid.v_nodes;
  qm.theta_nodes = grid.theta_nodes;
  std::size_t nv = grid.nv(), nt = grid.nt();
  double fmax_peak = *std::max_element(grid.fmax.begin(), grid.fmax.end());
  qm.q1.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) qm.q1[i] = 1.0 - grid.Fmax[i];
  qm.q2.assign(nv, Vec(nt));
  for (std::size_t i = 0; i < nv; ++i) {
    bool flat = false;
    for (std::size_t j = 0; j < nt; ++j) {
      qm.q2[i][j] = 1.0 - grid.cond_cdf[i][j];
      if (j > 0 && grid.in_support(i, j) && grid.in_support(i, j - 1) &&
          grid.theta_lo[i] < grid.theta_hi[i] - 1e-12 &&
          grid.cond_cdf[i][j] - grid.cond_cdf[i][j - 1] <= 1e-14)
        flat = true;
    }
    if (flat || grid.fmax[i] <= 1e-9 * fmax_peak) qm.flat_columns.push_back(i);
  }
  if (!grid.correlated_band) {
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < nv; ++i) {
      if (grid.fmax[i] <= 1e-6 * fmax_peak) continue;
      double dq1 = num::gradient_at(grid.v_nodes, qm.q1, i);  // = -fmax
      for (std::size_t j = 1; j + 1 < nt; ++j) {
        if (grid.density[i][j] <= kDensityFloor) continue;
        if (!grid.in_support(i, j - 1) || !grid.in_support(i, j + 1)) continue;
        double dt2 = grid.v_nodes[i] *
                     (grid.theta_nodes[j + 1] - grid.theta_nodes[j - 1]);
        double dq2 = (qm.q2[i][j + 1] - qm.q2[i][j - 1]) / dt2;
        double det = dq1 * dq2;  // off-diagonal term vanishes: q1 = q1(t1)
        double f = grid.cart_density(i, j);
        worst = std::max(worst, std::fabs(det - f) / std::max(f, 1e-6));
      }
    }
    qm.jacobian_max_err = worst;
  }
  return qm;
}

double QuantileMap::t1_of_q1(double q) const {
  Vec F(v_nodes.size());
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = 1.0 - q1[i];
  return num::inverse_monotone(v_nodes, F, 1.0 - q, /*pick_upper=*/true);
}

double QuantileMap::t2_of(double t1, double q2v) const {
  double level = 1.0 - q2v;
  if (grid && grid->correlated_band) return (*grid->curve)(t1);
  std::size_t i = num::lower_cell(v_nodes, t1);
  double w = std::clamp((t1 - v_nodes[i]) / (v_nodes[i + 1] - v_nodes[i]), 0.0, 1.0);
  double lo = num::inverse_monotone(theta_nodes, grid->cond_cdf[i], level);
  double hi = num::inverse_monotone(theta_nodes, grid->cond_cdf[i + 1], level);
  return t1 * ((1.0 - w) * lo + w * hi);
}

// ---------------------------------------------------------------------------
// Sum-ratio pipeline
// ---------------------------------------------------------------------------

namespace {

SumRatioGrid sum_grid_from_analytic(
    const Vec& s_nodes, const Vec& theta_nodes,
    const std::function<double(double, double)>& density,
    const std::function<double(double)>& theta_lo,
    const std::function<double(double)>& theta_hi,
    const std::function<double(double)>& Fsum,
    const std::function<double(double)>& fsum) {
  SumRatioGrid g;
  g.s_nodes = s_nodes;
  g.theta_nodes = theta_nodes;
  g.scale = s_nodes.back();
  std::size_t ns = g.ns(), nt = g.nt();
  g.density.assign(ns, Vec(nt, 0.0));
  g.theta_lo.resize(ns);
  g.theta_hi.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    g.theta_lo[i] = theta_lo(s_nodes[i]);
    g.theta_hi[i] = theta_hi ? theta_hi(s_nodes[i]) : 1.0;
    for (std::size_t j = 0; j < nt; ++j)
      g.density[i][j] = density(s_nodes[i], theta_nodes[j]);
  }
  g.cell_mass = cell_masses(s_nodes, theta_nodes, density);
  normalize(g.density, g.cell_mass);
  g.cond_cdf.resize(ns);
  for (std::size_t i = 0; i < ns; ++i)
    g.cond_cdf[i] = column_cdf(theta_nodes, g.density[i]);
  g.Fsum.resize(ns);
  g.fsum.resize(ns);
  if (Fsum) {
    for (std::size_t i = 0; i < ns; ++i) {
      g.Fsum[i] = Fsum(s_nodes[i]);
      g.fsum[i] = fsum(s_nodes[i]);
    }
  } else {
    g.Fsum = numeric_F_from_masses(g.cell_mass, ns);
    for (std::size_t i = 0; i < ns; ++i)
      g.fsum[i] = num::trapz(theta_nodes, g.density[i]);
    double total = num::trapz(s_nodes, g.fsum);
    if (total > 0.0)
      for (auto& f : g.fsum) f /= total;
  }
  return g;
}

}  // namespace

SumRatioGrid build_sum_grid(const FamilySpec& spec, std::size_t n_s,
                            std::size_t n_theta) {
  require(n_s >= 8 && n_theta >= 8, "resolution must be at least 8 per axis");
  if (auto* s = std::get_if<TruncatedUniformSimplexSpec>(&spec.value)) {
    double a = s->a, b = s->b, span = b - a;
    require(span > 0.0 && a >= 0.0, "simplex: bad support");
    Vec sn = num::linspace(2.0 * a, a + b, n_s);
    Vec tn = num::linspace(a > 0.0 ? a / b : 0.0, 1.0, n_theta);
    auto theta_lo = [a](double sv) {
      return sv > 2.0 * a ? std::min(1.0, a / std::max(sv - a, 1e-300)) : 1.0;
    };
    auto dens = [span, theta_lo](double sv, double th) {
      if (th < theta_lo(sv) - 1e-15) return 0.0;
      double one = 1.0 + th;
      return 4.0 / (span * span) * sv / (one * one);
    };
    auto F = [a, span](double sv) {
      double u = std::clamp((sv - 2.0 * a) / span, 0.0, 1.0);
      return u * u;
    };
    auto f = [a, span](double sv) {
      double u = std::clamp((sv - 2.0 * a) / span, 0.0, 1.0);
      return 2.0 * u / span;
    };
    auto g = sum_grid_from_analytic(sn, tn, dens, theta_lo, nullptr, F, f);
    g.validate();
    return g;
  }
  if (auto* s = std::get_if<IidUniformSpec>(&spec.value)) {
    double a = s->a, b = s->b, span = b - a;
    Vec sn = num::linspace(2.0 * a, 2.0 * b, n_s);
    Vec tn = num::linspace(a > 0.0 ? a / b : 0.0, 1.0, n_theta);
    auto theta_lo = [a, b](double sv) {
      double r1 = (sv > 2.0 * a && a > 0.0) ? a / (sv - a) : 0.0;
      double r2 = sv > b ? (sv - b) / b : 0.0;
      return std::min(1.0, std::max(r1, r2));
    };
    auto dens = [span, theta_lo](double sv, double th) {
      if (th < theta_lo(sv) - 1e-15) return 0.0;
      double one = 1.0 + th;
      return 2.0 * sv / (span * span * one * one);
    };
    auto F = [a, b, span](double sv) {
      if (sv <= 2.0 * a) return 0.0;
      if (sv >= 2.0 * b) return 1.0;
      if (sv <= a + b) {
        double u = sv - 2.0 * a;
        return 0.5 * u * u / (span * span);
      }
      double u = 2.0 * b - sv;
      return 1.0 - 0.5 * u * u / (span * span);
    };
    auto f = [a, b, span](double sv) {
      if (sv < 2.0 * a || sv > 2.0 * b) return 0.0;
      if (sv <= a + b) return (sv - 2.0 * a) / (span * span);
      return (2.0 * b - sv) / (span * span);
    };
    auto g = sum_grid_from_analytic(sn, tn, dens, theta_lo, nullptr, F, f);
    g.validate();
    return g;
  }
  if (auto* s = std::get_if<PerfectlyCorrelatedSumSpec>(&spec.value)) {
    SumRatioGrid g;
    g.s_nodes = num::linspace(s->fsum.lo(), s->fsum.hi(), n_s);
    const Curve& th = s->theta_of_s;
    auto ratio = [&th](double sv) { return std::clamp(th(sv), 0.0, 1.0); };
    double tlo = 1.0;
    for (double sv : g.s_nodes) tlo = std::min(tlo, ratio(sv));
    g.theta_nodes = num::linspace(std::max(0.0, tlo - 1e-6), 1.0, n_theta);
    g.scale = g.s_nodes.back();
    g.correlated_band = true;
    g.theta_of_s = th;
    fill_band(g, g.s_nodes, ratio, s->fsum);
    normalize(g.density, g.cell_mass);
    std::size_t ns = g.ns(), nt = g.nt();
    g.cond_cdf.assign(ns, Vec(nt, 0.0));
    for (std::size_t i = 0; i < ns; ++i)
      for (std::size_t j = 0; j < nt; ++j)
        g.cond_cdf[i][j] =
            g.theta_nodes[j] >= ratio(g.s_nodes[i]) - 1e-15 ? 1.0 : 0.0;
    g.Fsum.resize(ns);
    g.fsum.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      g.Fsum[i] = s->fsum.cdf(g.s_nodes[i]);
      g.fsum[i] = s->fsum.pdf(g.s_nodes[i]);
    }
    g.warnings.push_back("perfectly correlated support stored as one-cell band");
    g.validate();
    return g;
  }
  fail(ErrorCode::unsupported, "family '" + spec.name() + "' has no sum-ratio form");
}

SumRatioGrid to_sum_ratio(const MaxRatioGrid& grid, std::size_t n_s) {
  require(!grid.correlated_band,
          "use the perfectly_correlated_sum family for correlated instances");
  if (n_s == 0) n_s = grid.nv();
  double s_min = std::numeric_limits<double>::infinity(), s_max = 0.0;
  for (std::size_t i = 0; i < grid.nv(); ++i) {
    s_min = std::min(s_min, grid.v_nodes[i] * (1.0 + grid.theta_lo[i]));
    s_max = std::max(s_max, grid.v_nodes[i] * (1.0 + grid.theta_hi[i]));
  }
  Vec sn = num::linspace(s_min, s_max, n_s);
  Vec tn = grid.theta_nodes;
  auto mr_density = [&grid](double v, double th) -> double {
    if (v < grid.v_lo() || v > grid.v_hi()) return 0.0;
    std::size_t i = num::lower_cell(grid.v_nodes, v);
    double wv = std::clamp(
        (v - grid.v_nodes[i]) / (grid.v_nodes[i + 1] - grid.v_nodes[i]), 0.0, 1.0);
    double tl = (1.0 - wv) * grid.theta_lo[i] + wv * grid.theta_lo[i + 1];
    double tu = (1.0 - wv) * grid.theta_hi[i] + wv * grid.theta_hi[i + 1];
    if (th < tl - 1e-12 || th > tu + 1e-12) return 0.0;
    std::size_t j = num::lower_cell(grid.theta_nodes, th);
    double wt = std::clamp((th - grid.theta_nodes[j]) /
                               (grid.theta_nodes[j + 1] - grid.theta_nodes[j]),
                           0.0, 1.0);
    double d0 = (1.0 - wv) * grid.density[i][j] + wv * grid.density[i + 1][j];
    double d1 =
        (1.0 - wv) * grid.density[i][j + 1] + wv * grid.density[i + 1][j + 1];
    return (1.0 - wt) * d0 + wt * d1;
  };
  auto dens = [mr_density](double sv, double th) {
    return mr_density(sv / (1.0 + th), th) / (1.0 + th);
  };
  auto theta_lo = [&grid](double sv) {
    double lo = 1.0;
    for (std::size_t i = 0; i < grid.nv(); ++i) {
      double v = grid.v_nodes[i];
      if (sv >= v * (1.0 + grid.theta_lo[i]) - 1e-12 &&
          sv <= v * (1.0 + grid.theta_hi[i]) + 1e-12)
        lo = std::min(lo, std::clamp(sv / v - 1.0, grid.theta_lo[i],
                                     grid.theta_hi[i]));
    }
    return lo;
  };
  auto g = sum_grid_from_analytic(sn, tn, dens, theta_lo, nullptr, nullptr,
                                  nullptr);
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

FamilySampler::FamilySampler(const FamilySpec& spec) : spec_(spec) {
  if (auto* s = std::get_if<ProductLogDensitySpec>(&spec_.value)) {
    const std::size_t fine = 4097;
    table_x_ = num::linspace(0.0, s->hi, fine);
    Vec gs(fine);
    for (std::size_t i = 0; i < fine; ++i) {
      double x = table_x_[i];
      gs[i] = std::exp(s->h(x > 1e-300 ? std::log(x) : s->h.lo()));
    }
    table_cdf_ = num::cumtrapz(table_x_, gs);
    for (auto& c : table_cdf_) c /= table_cdf_.back();
  }
}

std::array<double, 2> FamilySampler::draw(SplitMix64& rng) const {
  if (auto* s = std::get_if<IidUniformSpec>(&spec_.value))
    return {rng.uniform(s->a, s->b), rng.uniform(s->a, s->b)};
  if (auto* s = std::get_if<PerfectlyCorrelatedSpec>(&spec_.value)) {
    double v = s->fmax.inverse_cdf(rng.uniform());
    return {v, s->curve(v)};
  }
  if (auto* s = std::get_if<UniformAboveCurveSpec>(&spec_.value)) {
    double v = s->fmax.inverse_cdf(rng.uniform());
    double t2 = rng.uniform(s->curve(v), v);
    if (rng.uniform() < 0.5) return {t2, v};
    return {v, t2};
  }
  if (std::get_if<ProductLogDensitySpec>(&spec_.value)) {
    double t1 = num::inverse_monotone(table_x_, table_cdf_, rng.uniform());
    double t2 = num::inverse_monotone(table_x_, table_cdf_, rng.uniform());
    return {t1, t2};
  }
  if (auto* s = std::get_if<TruncatedUniformSimplexSpec>(&spec_.value)) {
    for (;;) {
      double t1 = rng.uniform(s->a, s->b), t2 = rng.uniform(s->a, s->b);
      if (t1 + t2 <= s->a + s->b) return {t1, t2};
    }
  }
  if (auto* s = std::get_if<PerfectlyCorrelatedSumSpec>(&spec_.value)) {
    double sv = s->fsum.inverse_cdf(rng.uniform());
    double th = std::clamp(s->theta_of_s(sv), 0.0, 1.0);
    double t1 = sv / (1.0 + th);
    return {t1, sv - t1};
  }
  fail(ErrorCode::unsupported, "family has no sampler");
}

// ---------------------------------------------------------------------------
// Raw grid CSV
// ---------------------------------------------------------------------------

MaxRatioGrid load_raw_grid(const std::string& path, std::size_t, std::size_t) {
  std::ifstream in(path);
  require(in.good(), "cannot open raw grid file: " + path, ErrorCode::io);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  require(header == "v,theta,density" || header == "s,theta,density",
          "raw grid header must be 'v,theta,density' or 's,theta,density'",
          ErrorCode::io);
  std::vector<double> vs, ts, ds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double a, b, c;
    char comma;
    ls >> a >> comma >> b >> comma >> c;
    require(!ls.fail(), "malformed raw grid row: " + line, ErrorCode::io);
    vs.push_back(a);
    ts.push_back(b);
    ds.push_back(c);
  }
  Vec vn = vs, tn = ts;
  std::sort(vn.begin(), vn.end());
  vn.erase(std::unique(vn.begin(), vn.end()), vn.end());
  std::sort(tn.begin(), tn.end());
  tn.erase(std::unique(tn.begin(), tn.end()), tn.end());
  require(vn.size() >= 2 && tn.size() >= 2, "raw grid needs a 2x2 lattice",
          ErrorCode::io);
  require(vs.size() == vn.size() * tn.size(),
          "raw grid rows do not form a complete lattice", ErrorCode::io);
  MaxRatioGrid g;
  g.v_nodes = vn;
  g.theta_nodes = tn;
  g.branch_weights = {1.0, 0.0};
  g.scale = vn.back();
  g.density.assign(vn.size(), Vec(tn.size(), 0.0));
  for (std::size_t r = 0; r < vs.size(); ++r) {
    auto i = static_cast<std::size_t>(
        std::lower_bound(vn.begin(), vn.end(), vs[r]) - vn.begin());
    auto j = static_cast<std::size_t>(
        std::lower_bound(tn.begin(), tn.end(), ts[r]) - tn.begin());
    require(ds[r] >= 0.0, "raw grid density must be non-negative");
    g.density[i][j] = ds[r];
  }
  g.theta_lo.assign(vn.size(), tn.front());
  g.theta_hi.assign(vn.size(), tn.back());
  for (std::size_t i = 0; i < vn.size(); ++i) {
    std::size_t j = 0;
    while (j + 1 < tn.size() && g.density[i][j] <= 0.0) ++j;
    g.theta_lo[i] = tn[j];
  }
  auto dens = [&g](double v, double th) -> double {
    std::size_t i = num::lower_cell(g.v_nodes, v);
    std::size_t j = num::lower_cell(g.theta_nodes, th);
    double wv = std::clamp(
        (v - g.v_nodes[i]) / (g.v_nodes[i + 1] - g.v_nodes[i]), 0.0, 1.0);
    double wt = std::clamp((th - g.theta_nodes[j]) /
                               (g.theta_nodes[j + 1] - g.theta_nodes[j]),
                           0.0, 1.0);
    double d0 = (1.0 - wv) * g.density[i][j] + wv * g.density[i + 1][j];
    double d1 = (1.0 - wv) * g.density[i][j + 1] + wv * g.density[i + 1][j + 1];
    return (1.0 - wt) * d0 + wt * d1;
  };
  g.cell_mass = cell_masses(g.v_nodes, g.theta_nodes, dens);
  normalize(g.density, g.cell_mass);
  g.cond_cdf.resize(g.nv());
  for (std::size_t i = 0; i < g.nv(); ++i)
    g.cond_cdf[i] = column_cdf(g.theta_nodes, g.density[i]);
  g.Fmax = numeric_F_from_masses(g.cell_mass, g.nv());
  g.fmax.resize(g.nv());
  for (std::size_t i = 0; i < g.nv(); ++i)
    g.fmax[i] = num::trapz(g.theta_nodes, g.density[i]);
  double s = num::trapz(g.v_nodes, g.fmax);
  if (s > 0.0)
    for (auto& f : g.fmax) f /= s;
  return g;
}

void write_raw_grid_csv(const MaxRatioGrid& grid, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write raw grid file: " + path, ErrorCode::io);
  out << "v,theta,density\n";
  char buf[96];
  for (std::size_t i = 0; i < grid.nv(); ++i)
    for (std::size_t j = 0; j < grid.nt(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", grid.v_nodes[i],
                    grid.theta_nodes[j], grid.density[i][j]);
      out << buf;
    }
}

}  // namespace screenlab::dist
