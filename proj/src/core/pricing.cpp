// SPDX-License-Identifier: Apache-2.0
#include "core/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/numerics.hpp"
#include "core/threads.hpp"

namespace screenlab::pricing {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// max over p of (p - c) * (1 - F(p)) for a piecewise-linear CDF; each cell
// is a quadratic with a closed-form vertex, so the optimum is exact for the
// interpolant.
PriceResult best_posted_price(const Vec& v, const Vec& F, double c) {
  require(v.size() == F.size() && v.size() >= 2, "bad marginal");
  PriceResult best{v.back(), 0.0};
  auto consider = [&](double p, double rev) {
    if (rev > best.revenue + 1e-15 ||
        (rev > best.revenue - 1e-15 && p < best.price)) {
      best.price = p;
      best.revenue = rev;
    }
  };
  consider(v.back(), (v.back() - c) * (1.0 - F.back()));
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    double a = v[i], b = v[i + 1];
    double Fa = F[i], Fb = F[i + 1];
    double m = (Fb - Fa) / (b - a);
    auto rev = [&](double p) { return (p - c) * (1.0 - Fa - m * (p - a)); };
    consider(a, rev(a));
    if (m > 0.0) {
      // vertex of (p - c)(1 - Fa - m (p - a))
      double p_star = 0.5 * (c + a + (1.0 - Fa) / m);
      if (p_star > a && p_star < b) consider(p_star, rev(p_star));
    }
  }
  if (best.revenue < 0.0) {  // no profitable sale
    best.revenue = 0.0;
    best.price = v.back();
  }
  return best;
}

}  // namespace

void MenuMechanism::validate() const {
  for (const auto& o : options) {
    require(std::isfinite(o.price), "menu price must be finite");
    require(o.allocation[0] >= -1e-12 && o.allocation[1] >= -1e-12 &&
                o.allocation[0] <= 1.0 + 1e-12 && o.allocation[1] <= 1.0 + 1e-12,
            "menu allocation outside [0,1]");
    if (!additive)
      require(o.allocation[0] + o.allocation[1] <= 1.0 + 1e-9,
              "unit-demand allocation must lie in the simplex");
  }
}

// ---------------------------------------------------------------------------
// One-dimensional machinery
// ---------------------------------------------------------------------------

MyersonResult myerson_1d(const OneDProblem& prob) {
  require(prob.values.size() >= 2 && prob.values.size() == prob.F.size() &&
              prob.f.size() == prob.values.size(),
          "bad one-dimensional problem");
  MyersonResult res;
  std::size_t n = prob.values.size();
  double fpeak = 0.0;
  for (double x : prob.f) fpeak = std::max(fpeak, x);

  res.phi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double f = prob.f[i];
    res.phi[i] = f > 1e-12 * std::max(fpeak, 1.0)
                     ? prob.values[i] - (1.0 - prob.F[i]) / f
                     : -kInf;
  }

  // iron in quantile space: slopes of the concave majorant of q * v(q)
  Vec q(n), R(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = 1.0 - prob.F[n - 1 - i];
    R[i] = q[i] * prob.values[n - 1 - i];
  }
  // collapse duplicate quantiles (support gaps): keep the larger revenue
  Vec qc, Rc;
  for (std::size_t i = 0; i < n; ++i) {
    if (!qc.empty() && q[i] - qc.back() <= 1e-14) {
      Rc.back() = std::max(Rc.back(), R[i]);
      continue;
    }
    qc.push_back(q[i]);
    Rc.push_back(R[i]);
  }
  res.phi_ironed.resize(n);
  if (qc.size() >= 2) {
    Vec slopes = num::concave_majorant_slopes(qc, Rc);
    for (std::size_t i = 0; i < n; ++i) {
      double qi = 1.0 - prob.F[i];
      std::size_t k = num::lower_cell(qc, qi);
      res.phi_ironed[i] = slopes[k];
    }
  } else {
    res.phi_ironed = res.phi;
  }

  res.threshold = prob.values.back();
  for (std::size_t i = 0; i < n; ++i)
    if (res.phi_ironed[i] >= prob.cost) {
      res.threshold = prob.values[i];
      break;
    }
  res.revenue = best_posted_price(prob.values, prob.F, prob.cost).revenue;
  return res;
}

PriceResult optimal_uniform_price(const dist::FavoriteMarginal& marg,
                                  double c) {
  return best_posted_price(marg.v_nodes, marg.F, c);
}

PriceResult optimal_bundle_price(const Vec& s_nodes, const Vec& Fsum,
                                 double c) {
  return best_posted_price(s_nodes, Fsum, c);
}

// ---------------------------------------------------------------------------
// Menu evaluation
// ---------------------------------------------------------------------------

namespace {

struct Choice {
  double utility = 0.0;
  double price = 0.0;
  double cost_term = 0.0;
};

Choice best_choice(const std::vector<MenuOption>& options, double t1, double t2,
                   bool additive, double utol) {
  Choice ch;  // null option
  for (const auto& o : options) {
    double u = t1 * o.allocation[0] + t2 * o.allocation[1] - o.price;
    if (u < -utol) continue;
    double cost_term = additive ? std::max(o.allocation[0], o.allocation[1])
                                : o.allocation[0] + o.allocation[1];
    if (u > ch.utility + utol ||
        (u > ch.utility - utol && o.price > ch.price)) {
      ch = {u, o.price, cost_term};
    }
  }
  return ch;
}

std::vector<MenuOption> symmetrized(const MenuMechanism& menu) {
  std::vector<MenuOption> opts = menu.options;
  for (const auto& o : menu.options) {
    if (std::fabs(o.allocation[0] - o.allocation[1]) > 1e-15)
      opts.push_back({{o.allocation[1], o.allocation[0]}, o.price});
  }
  return opts;
}

// Exact expected profit of a menu over a one-parameter type curve with an
// analytic parameter marginal. Decision regions are resolved by bisecting
// pairwise utility crossings on a refined parameter lattice.
double menu_revenue_on_curve(
    const std::vector<MenuOption>& options, bool additive,
    const std::function<std::array<double, 2>(double)>& type_at,
    const OneDSpec& marginal, double c) {
  const std::size_t refine = 8;
  Vec base = num::linspace(marginal.lo(), marginal.hi(),
                           1 + refine * 512);
  auto util = [&](const MenuOption& o, double par) {
    auto t = type_at(par);
    return t[0] * o.allocation[0] + t[1] * o.allocation[1] - o.price;
  };
  auto winner_at = [&](double par) -> int {
    int w = -1;
    double bu = 0.0, bp = -kInf;
    for (std::size_t k = 0; k < options.size(); ++k) {
      double u = util(options[k], par);
      if (u < -1e-15) continue;
      if (u > bu + 1e-15 || (u > bu - 1e-15 && options[k].price > bp)) {
        bu = u;
        bp = options[k].price;
        w = static_cast<int>(k);
      }
    }
    return w;
  };
  double total = 0.0;
  for (std::size_t seg = 0; seg + 1 < base.size(); ++seg) {
    double a = base[seg], b = base[seg + 1];
    // candidate switch points inside the micro-interval
    Vec cuts{a, b};
    for (std::size_t k = 0; k < options.size(); ++k) {
      for (std::size_t l = k + 1; l <= options.size(); ++l) {
        // l == options.size() encodes the null option
        auto diff = [&](double par) {
          double uk = util(options[k], par);
          double ul = l < options.size() ? util(options[l], par) : 0.0;
          return uk - ul;
        };
        double da = diff(a), db = diff(b);
        if (da == 0.0) cuts.push_back(a);
        if (da * db < 0.0)
          cuts.push_back(num::bisect(diff, a, b, 1e-14 * (b - a + 1.0)));
      }
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      double lo = cuts[p], hi = cuts[p + 1];
      if (hi - lo <= 0.0) continue;
      double mass = marginal.cdf(hi) - marginal.cdf(lo);
      if (mass <= 0.0) continue;
      int w = winner_at(0.5 * (lo + hi));
      if (w < 0) continue;
      const auto& o = options[static_cast<std::size_t>(w)];
      double cost_term = additive
                             ? std::max(o.allocation[0], o.allocation[1])
                             : o.allocation[0] + o.allocation[1];
      total += mass * (o.price - c * cost_term);
    }
  }
  return total;
}

}  // namespace

double menu_revenue(const MenuMechanism& menu, const dist::MaxRatioGrid& grid,
                    double c) {
  menu.validate();
  require(!menu.additive, "additive menu against a max-ratio grid");
  double utol = 1e-12 * grid.scale;
  std::vector<MenuOption> opts = grid.branch_weights[1] > 0.0
                                     ? symmetrized(menu)
                                     : menu.options;
  if (grid.correlated_band) {
    // integrate exactly along the stored curve against the node CDF
    // (piecewise linear = a mixture of uniform cells)
    const Curve& C = *grid.curve;
    auto type_at = [&C](double v) { return std::array<double, 2>{v, C(v)}; };
    std::vector<MixtureComponent> cells;
    const Vec& vn = grid.v_nodes;
    for (std::size_t i = 0; i + 1 < vn.size(); ++i) {
      double mass_cell = grid.Fmax[i + 1] - grid.Fmax[i];
      if (mass_cell > 0.0) cells.push_back({mass_cell, vn[i], vn[i + 1]});
    }
    return menu_revenue_on_curve(opts, false, type_at,
                                 mixture_1d(std::move(cells)), c);
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < grid.nv(); ++i) {
    double vc = 0.5 * (grid.v_nodes[i] + grid.v_nodes[i + 1]);
    for (std::size_t j = 0; j + 1 < grid.nt(); ++j) {
      double m = grid.cell_mass[i][j];
      if (m <= 0.0) continue;
      double thc = 0.5 * (grid.theta_nodes[j] + grid.theta_nodes[j + 1]);
      Choice ch = best_choice(opts, vc, vc * thc, false, utol);
      total += m * (ch.price - c * ch.cost_term);
    }
  }
  return total;
}

double menu_revenue(const MenuMechanism& menu, const dist::SumRatioGrid& grid,
                    double c) {
  menu.validate();
  require(menu.additive, "unit-demand menu against a sum-ratio grid");
  double utol = 1e-12 * grid.scale;
  std::vector<MenuOption> opts = symmetrized(menu);
  if (grid.correlated_band) {
    const Curve& TH = *grid.theta_of_s;
    auto type_at = [&TH](double s) {
      double th = std::clamp(TH(s), 0.0, 1.0);
      double t1 = s / (1.0 + th);
      return std::array<double, 2>{t1, s - t1};
    };
    std::vector<MixtureComponent> cells;
    const Vec& sn = grid.s_nodes;
    for (std::size_t i = 0; i + 1 < sn.size(); ++i) {
      double mass_cell = grid.Fsum[i + 1] - grid.Fsum[i];
      if (mass_cell > 0.0) cells.push_back({mass_cell, sn[i], sn[i + 1]});
    }
    return menu_revenue_on_curve(opts, true, type_at,
                                 mixture_1d(std::move(cells)), c);
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < grid.ns(); ++i) {
    double sc = 0.5 * (grid.s_nodes[i] + grid.s_nodes[i + 1]);
    for (std::size_t j = 0; j + 1 < grid.nt(); ++j) {
      double m = grid.cell_mass[i][j];
      if (m <= 0.0) continue;
      double thc = 0.5 * (grid.theta_nodes[j] + grid.theta_nodes[j + 1]);
      double t1 = sc / (1.0 + thc);
      Choice ch = best_choice(opts, t1, sc - t1, true, utol);
      total += m * (ch.price - c * ch.cost_term);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Counterexample constructions
// ---------------------------------------------------------------------------

namespace {

Counterexample run_ladder(Counterexample ce,
                          const std::function<double(double)>& gain_at,
                          double anchor) {
  double best_gain = -kInf, best_eps = 0.0;
  for (int k = 2; k <= 20; ++k) {
    double eps = std::ldexp(anchor, -k);  // anchor * 2^-k
    double g = gain_at(eps);
    ce.ladder_eps.push_back(eps);
    ce.ladder_gain.push_back(g);
    if (g > best_gain) {
      best_gain = g;
      best_eps = eps;
    }
  }
  require(best_gain > 0.0,
          "no improving discount found; curve dip too shallow for the ladder",
          ErrorCode::internal);
  ce.epsilon = best_eps;
  ce.gain = best_gain;
  ce.menu_rev = ce.base_revenue + best_gain;
  return ce;
}

}  // namespace

Counterexample construct_counterexample(const Curve& c_cor, double p) {
  require(p > c_cor.lo() && p < c_cor.hi(),
          "price must lie strictly inside the curve domain");
  double dp = 1e-6 * (c_cor.hi() - c_cor.lo());
  double r_lo = c_cor(p - dp) / (p - dp), r_hi = c_cor(p + dp) / (p + dp);
  require(r_hi < r_lo - 1e-12,
          "curve ratio is not strictly decreasing at the supplied price");
  Counterexample ce;
  ce.anchor_price = p;
  ce.family.value = dist::PerfectlyCorrelatedSpec{uniform_1d(0.0, 2.0 * p),
                                                  c_cor};
  ce.base_revenue = 0.5 * p;  // p * (1 - p / (2p))
  OneDSpec fmax = uniform_1d(0.0, 2.0 * p);
  auto type_at = [&c_cor](double v) {
    return std::array<double, 2>{v, c_cor(v)};
  };
  double cp = c_cor(p);
  auto gain_at = [&](double eps) {
    std::vector<MenuOption> opts{{{1.0, 0.0}, p}, {{0.0, 1.0}, cp - eps}};
    return menu_revenue_on_curve(opts, false, type_at, fmax, 0.0) -
           ce.base_revenue;
  };
  ce = run_ladder(std::move(ce), gain_at, p);
  ce.menu.options = {{{1.0, 0.0}, p}, {{0.0, 1.0}, cp - ce.epsilon}};
  ce.menu.additive = false;
  return ce;
}

Counterexample construct_counterexample_additive(const Curve& theta_of_s,
                                                 double s0) {
  require(s0 > theta_of_s.lo() && s0 < theta_of_s.hi(),
          "bundle value must lie strictly inside the curve domain");
  double ds = 1e-6 * (theta_of_s.hi() - theta_of_s.lo());
  require(theta_of_s(s0 + ds) > theta_of_s(s0 - ds) + 1e-12,
          "theta(s) is not strictly increasing at the supplied bundle value");
  Counterexample ce;
  ce.anchor_price = s0;
  ce.family.value =
      dist::PerfectlyCorrelatedSumSpec{uniform_1d(0.0, 2.0 * s0), theta_of_s};
  ce.base_revenue = 0.5 * s0;
  OneDSpec fsum = uniform_1d(0.0, 2.0 * s0);
  auto type_at = [&theta_of_s](double s) {
    double th = std::clamp(theta_of_s(s), 0.0, 1.0);
    double t1 = s / (1.0 + th);
    return std::array<double, 2>{t1, s - t1};
  };
  double item_value = type_at(s0)[0];
  auto gain_at = [&](double eps) {
    std::vector<MenuOption> opts{{{1.0, 1.0}, s0},
                                 {{1.0, 0.0}, item_value - eps}};
    return menu_revenue_on_curve(opts, true, type_at, fsum, 0.0) -
           ce.base_revenue;
  };
  ce = run_ladder(std::move(ce), gain_at, s0);
  ce.menu.options = {{{1.0, 1.0}, s0}, {{1.0, 0.0}, item_value - ce.epsilon}};
  ce.menu.additive = true;
  return ce;
}

// ---------------------------------------------------------------------------
// Multi-agent favorite-value allocation
// ---------------------------------------------------------------------------

MultiAgentResult multi_agent_allocate(
    const std::vector<dist::FavoriteMarginal>& marginals, double c,
    std::size_t n_samples, std::uint64_t seed) {
  require(!marginals.empty() && n_samples > 0, "need agents and samples");
  struct Agent {
    Vec v, F, phi;
  };
  std::vector<Agent> agents;
  for (const auto& m : marginals) {
    Agent a;
    a.v = m.v_nodes;
    a.F = m.F;
    a.phi.resize(m.v_nodes.size());
    double fpeak = 0.0;
    for (double x : m.f) fpeak = std::max(fpeak, x);
    double prev = -kInf;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
      double f = m.f[i];
      a.phi[i] = f > 1e-12 * std::max(fpeak, 1.0)
                     ? a.v[i] - (1.0 - m.F[i]) / f
                     : prev;  // carry through isolated zero-density nodes
      require(a.phi[i] >= prev - 1e-9 * m.scale,
              "irregular marginal: use the ironed single-agent pipeline",
              ErrorCode::unsupported);
      prev = std::max(prev, a.phi[i]);
    }
    agents.push_back(std::move(a));
  }
  std::size_t na = agents.size();
  Vec revenue(n_samples, 0.0);
  Vec served(n_samples, 0.0);
  parallel_for(n_samples, [&](std::size_t s) {
    SplitMix64 rng(seed, s);
    double best_phi = -kInf, second = -kInf;
    std::size_t winner = na;
    for (std::size_t a = 0; a < na; ++a) {
      double v = num::inverse_monotone(agents[a].v, agents[a].F, rng.uniform());
      double phi = num::interp(agents[a].v, agents[a].phi, v);
      if (phi > best_phi) {
        second = best_phi;
        best_phi = phi;
        winner = a;
      } else if (phi > second) {
        second = phi;
      }
    }
    if (winner == na || best_phi < c) return;
    double level = std::max(c, second);
    double pay = num::inverse_monotone(agents[winner].v, agents[winner].phi,
                                       level);
    revenue[s] = pay - c;
    served[s] = 1.0;
  });
  MultiAgentResult res;
  res.n_samples = n_samples;
  double sum = std::accumulate(revenue.begin(), revenue.end(), 0.0);
  res.revenue = sum / static_cast<double>(n_samples);
  double var = 0.0;
  for (double r : revenue) var += (r - res.revenue) * (r - res.revenue);
  var /= std::max<std::size_t>(n_samples - 1, 1);
  res.std_error = std::sqrt(var / static_cast<double>(n_samples));
  res.serve_rate = std::accumulate(served.begin(), served.end(), 0.0) /
                   static_cast<double>(n_samples);
  return res;
}

}  // namespace screenlab::pricing
