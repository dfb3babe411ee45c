// SPDX-License-Identifier: Apache-2.0
#include "core/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace screenlab::num {

Vec linspace(double lo, double hi, std::size_t n) {
  require(n >= 2, "linspace needs at least 2 nodes");
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = hi;
  return v;
}

double trapz(const Vec& x, const Vec& y) {
  require(x.size() == y.size() && x.size() >= 2, "trapz: bad sizes");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    s += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return s;
}

Vec cumtrapz(const Vec& x, const Vec& y) {
  require(x.size() == y.size() && x.size() >= 2, "cumtrapz: bad sizes");
  Vec out(x.size(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    out[i + 1] = out[i] + 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return out;
}

std::size_t lower_cell(const Vec& x, double v) {
  if (v <= x.front()) return 0;
  if (v >= x[x.size() - 2]) return x.size() - 2;
  auto it = std::upper_bound(x.begin(), x.end(), v);
  return static_cast<std::size_t>(it - x.begin()) - 1;
}

double interp(const Vec& x, const Vec& y, double v) {
  if (v <= x.front()) return y.front();
  if (v >= x.back()) return y.back();
  std::size_t i = lower_cell(x, v);
  double w = (v - x[i]) / (x[i + 1] - x[i]);
  return y[i] + w * (y[i + 1] - y[i]);
}

double inverse_monotone(const Vec& x, const Vec& y, double level,
                        bool pick_upper) {
  require(x.size() == y.size() && x.size() >= 2, "inverse_monotone: bad sizes");
  if (level <= y.front()) {
    if (!pick_upper) return x.front();
    std::size_t i = 0;
    while (i + 1 < y.size() && y[i + 1] <= level) ++i;
    return x[i];
  }
  if (level >= y.back()) {
    if (pick_upper) return x.back();
    std::size_t i = y.size() - 1;
    while (i > 0 && y[i - 1] >= level) --i;
    return x[i];
  }
  if (!pick_upper) {
    // first cell whose right value reaches the level
    std::size_t i = 0;
    while (i + 1 < y.size() && y[i + 1] < level) ++i;
    double dy = y[i + 1] - y[i];
    if (dy <= 0.0) return x[i + 1];
    return x[i] + (level - y[i]) / dy * (x[i + 1] - x[i]);
  }
  // last cell whose left value is below the level
  std::size_t i = y.size() - 2;
  while (i > 0 && y[i] > level) --i;
  double dy = y[i + 1] - y[i];
  if (dy <= 0.0) return x[i];
  double t = x[i] + (level - y[i]) / dy * (x[i + 1] - x[i]);
  // extend through any flat run to the right at the same level
  std::size_t j = i + 1;
  while (j + 1 < y.size() && y[j + 1] <= level) ++j;
  return (y[j] <= level) ? std::max(t, x[j]) : t;
}

double gradient_at(const Vec& x, const Vec& y, std::size_t i) {
  std::size_t n = x.size();
  if (i == 0) return (y[1] - y[0]) / (x[1] - x[0]);
  if (i == n - 1) return (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
  return (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]);
}

Vec gradient(const Vec& x, const Vec& y) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = gradient_at(x, y, i);
  return g;
}

std::vector<std::size_t> concave_majorant(const Vec& x, const Vec& y) {
  require(x.size() == y.size() && x.size() >= 2, "concave_majorant: bad sizes");
  std::vector<std::size_t> hull;
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (hull.size() >= 2) {
      std::size_t a = hull[hull.size() - 2], b = hull[hull.size() - 1];
      double cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
      if (cross >= 0.0)  // b lies on or below chord a--i: drop it
        hull.pop_back();
      else
        break;
    }
    hull.push_back(i);
  }
  return hull;
}

Vec concave_majorant_values(const Vec& x, const Vec& y) {
  auto hull = concave_majorant(x, y);
  Vec out(x.size());
  std::size_t seg = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (seg + 1 < hull.size() && x[hull[seg + 1]] < x[i]) ++seg;
    std::size_t a = hull[seg], b = hull[std::min(seg + 1, hull.size() - 1)];
    if (a == b) {
      out[i] = y[a];
    } else {
      double w = (x[i] - x[a]) / (x[b] - x[a]);
      out[i] = y[a] + w * (y[b] - y[a]);
    }
  }
  return out;
}

Vec concave_majorant_slopes(const Vec& x, const Vec& y) {
  auto hull = concave_majorant(x, y);
  Vec out(x.size());
  std::size_t seg = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (seg + 2 < hull.size() && x[hull[seg + 1]] <= x[i]) ++seg;
    std::size_t a = hull[seg], b = hull[seg + 1 < hull.size() ? seg + 1 : seg];
    if (a == b) {
      out[i] = 0.0;
    } else {
      out[i] = (y[b] - y[a]) / (x[b] - x[a]);
    }
  }
  return out;
}

double bisect(const std::function<double(double)>& f, double a, double b,
              double xtol, int max_iter) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  require(fa * fb < 0.0, "bisect: endpoints do not bracket a root");
  for (int k = 0; k < max_iter && (b - a) > xtol; ++k) {
    double m = 0.5 * (a + b), fm = f(m);
    if (fm == 0.0) return m;
    if (fa * fm < 0.0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
  }
  return 0.5 * (a + b);
}

namespace {

// log Gamma via Lanczos
double lgamma_pos(double z) { return std::lgamma(z); }

double gamma_p_series(double a, double x) {
  double sum = 1.0 / a, term = sum;
  for (int n = 1; n < 500; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - lgamma_pos(a));
}

double gamma_q_cf(double a, double x) {
  // Lentz continued fraction for Q(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - lgamma_pos(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
  require(a > 0.0 && x >= 0.0, "gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_sf(double stat, double dof) {
  if (stat <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * stat);
}

}  // namespace screenlab::num
