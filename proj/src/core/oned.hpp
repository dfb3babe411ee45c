// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <variant>

#include "core/common.hpp"

namespace screenlab {

// Piecewise-linear curve through sorted sample points.
struct Curve {
  Vec x;
  Vec y;

  Curve() = default;
  Curve(Vec xs, Vec ys);

  double operator()(double v) const;
  double slope(double v) const;  // slope of the segment containing v
  double lo() const { return x.front(); }
  double hi() const { return x.back(); }
};

// Closed-form one-dimensional marginals used by the parametric families.
struct UniformSpec {
  double a = 0.0, b = 1.0;
};
struct PowerSpec {  // F(v) = ((v - a) / (b - a))^k on [a, b]
  double k = 2.0;
  double a = 0.0, b = 1.0;
};
struct MixtureComponent {
  double weight, a, b;
};
struct UniformMixtureSpec {
  std::vector<MixtureComponent> parts;
};

struct OneDSpec {
  std::variant<UniformSpec, PowerSpec, UniformMixtureSpec> value;

  double lo() const;
  double hi() const;
  double cdf(double v) const;
  double pdf(double v) const;
  double inverse_cdf(double q) const;  // left-continuous over gaps
};

OneDSpec uniform_1d(double a, double b);
OneDSpec power_1d(double k, double a, double b);
OneDSpec mixture_1d(std::vector<MixtureComponent> parts);

}  // namespace screenlab
