// SPDX-License-Identifier: Apache-2.0
#include "core/oned.hpp"

#include <algorithm>
#include <cmath>

#include "core/numerics.hpp"

namespace screenlab {

Curve::Curve(Vec xs, Vec ys) : x(std::move(xs)), y(std::move(ys)) {
  require(x.size() == y.size() && x.size() >= 2, "curve needs >= 2 samples");
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    require(x[i + 1] > x[i], "curve anchors must be strictly increasing");
}

double Curve::operator()(double v) const { return num::interp(x, y, v); }

double Curve::slope(double v) const {
  std::size_t i = num::lower_cell(x, v);
  return (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
}

namespace {

struct Lo {
  double operator()(const UniformSpec& s) const { return s.a; }
  double operator()(const PowerSpec& s) const { return s.a; }
  double operator()(const UniformMixtureSpec& s) const {
    double m = s.parts.front().a;
    for (auto& p : s.parts) m = std::min(m, p.a);
    return m;
  }
};
struct Hi {
  double operator()(const UniformSpec& s) const { return s.b; }
  double operator()(const PowerSpec& s) const { return s.b; }
  double operator()(const UniformMixtureSpec& s) const {
    double m = s.parts.front().b;
    for (auto& p : s.parts) m = std::max(m, p.b);
    return m;
  }
};

struct Cdf {
  double v;
  double operator()(const UniformSpec& s) const {
    if (v <= s.a) return 0.0;
    if (v >= s.b) return 1.0;
    return (v - s.a) / (s.b - s.a);
  }
  double operator()(const PowerSpec& s) const {
    if (v <= s.a) return 0.0;
    if (v >= s.b) return 1.0;
    return std::pow((v - s.a) / (s.b - s.a), s.k);
  }
  double operator()(const UniformMixtureSpec& s) const {
    double acc = 0.0;
    for (auto& p : s.parts) {
      if (v >= p.b)
        acc += p.weight;
      else if (v > p.a)
        acc += p.weight * (v - p.a) / (p.b - p.a);
    }
    return acc;
  }
};

struct Pdf {
  double v;
  double operator()(const UniformSpec& s) const {
    return (v >= s.a && v <= s.b) ? 1.0 / (s.b - s.a) : 0.0;
  }
  double operator()(const PowerSpec& s) const {
    if (v < s.a || v > s.b) return 0.0;
    double u = (v - s.a) / (s.b - s.a);
    if (u <= 0.0) return s.k > 1.0 ? 0.0 : s.k / (s.b - s.a);
    return s.k * std::pow(u, s.k - 1.0) / (s.b - s.a);
  }
  double operator()(const UniformMixtureSpec& s) const {
    double acc = 0.0;
    for (auto& p : s.parts)
      if (v >= p.a && v <= p.b) acc += p.weight / (p.b - p.a);
    return acc;
  }
};

struct InvCdf {
  double q;
  double operator()(const UniformSpec& s) const { return s.a + q * (s.b - s.a); }
  double operator()(const PowerSpec& s) const {
    return s.a + std::pow(q, 1.0 / s.k) * (s.b - s.a);
  }
  double operator()(const UniformMixtureSpec& s) const {
    double acc = 0.0;
    for (auto& p : s.parts) {
      if (q <= acc + p.weight + 1e-15) {
        double u = std::clamp((q - acc) / p.weight, 0.0, 1.0);
        return p.a + u * (p.b - p.a);
      }
      acc += p.weight;
    }
    return s.parts.back().b;
  }
};

}  // namespace

double OneDSpec::lo() const { return std::visit(Lo{}, value); }
double OneDSpec::hi() const { return std::visit(Hi{}, value); }
double OneDSpec::cdf(double v) const { return std::visit(Cdf{v}, value); }
double OneDSpec::pdf(double v) const { return std::visit(Pdf{v}, value); }
double OneDSpec::inverse_cdf(double q) const {
  require(q >= 0.0 && q <= 1.0, "inverse_cdf: q outside [0,1]");
  return std::visit(InvCdf{q}, value);
}

OneDSpec uniform_1d(double a, double b) {
  require(b > a, "uniform_1d: empty support");
  return OneDSpec{UniformSpec{a, b}};
}

OneDSpec power_1d(double k, double a, double b) {
  require(k > 0.0 && b > a, "power_1d: bad parameters");
  return OneDSpec{PowerSpec{k, a, b}};
}

OneDSpec mixture_1d(std::vector<MixtureComponent> parts) {
  require(!parts.empty(), "mixture_1d: no components");
  double total = 0.0;
  std::sort(parts.begin(), parts.end(),
            [](const MixtureComponent& x, const MixtureComponent& y) {
              return x.a < y.a;
            });
  for (auto& p : parts) {
    require(p.weight > 0.0 && p.b > p.a, "mixture_1d: bad component");
    total += p.weight;
  }
  for (auto& p : parts) p.weight /= total;
  return OneDSpec{UniformMixtureSpec{std::move(parts)}};
}

}  // namespace screenlab
