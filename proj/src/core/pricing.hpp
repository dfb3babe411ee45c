// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/dist.hpp"

namespace screenlab::pricing {

struct MenuOption {
  std::array<double, 2> allocation{0.0, 0.0};
  double price = 0.0;
};

// Finite menu; the null option (0, 0) is implicit. Ties at the choice stage
// go to the highest-priced option.
struct MenuMechanism {
  std::vector<MenuOption> options;
  bool additive = false;  // allocations in [0,1]^2 instead of the simplex

  void validate() const;
};

struct OneDProblem {
  Vec values;
  Vec F;
  Vec f;
  double cost = 0.0;
};

struct MyersonResult {
  Vec phi;
  Vec phi_ironed;
  double threshold = 0.0;
  double revenue = 0.0;
};

MyersonResult myerson_1d(const OneDProblem& prob);

struct PriceResult {
  double price = 0.0;
  double revenue = 0.0;
};

PriceResult optimal_uniform_price(const dist::FavoriteMarginal& marg, double c);
PriceResult optimal_bundle_price(const Vec& s_nodes, const Vec& Fsum, double c);

// Expected profit of a menu against a grid (cell quadrature on the branch
// representation; for two-branch symmetric grids the menu is closed under
// coordinate swap before evaluating). Band grids integrate exactly along the
// stored curve.
double menu_revenue(const MenuMechanism& menu, const dist::MaxRatioGrid& grid,
                    double c);
double menu_revenue(const MenuMechanism& menu, const dist::SumRatioGrid& grid,
                    double c);

struct Counterexample {
  dist::FamilySpec family;
  MenuMechanism menu;
  double anchor_price = 0.0;  // stationary price the construction targets
  double epsilon = 0.0;
  double base_revenue = 0.0;  // best uniform (or bundle) revenue
  double menu_rev = 0.0;
  double gain = 0.0;
  Vec ladder_eps, ladder_gain;  // evaluated discount ladder
};

// Regular favorite-value distribution plus a discounted second-outcome menu
// that strictly beats the best uniform price; requires the curve ratio to be
// strictly decreasing at p.
Counterexample construct_counterexample(const Curve& c_cor, double p);

// Additive analogue: theta(s) strictly increasing at s0 yields an improving
// single-item offer against the best bundle price.
Counterexample construct_counterexample_additive(const Curve& theta_of_s,
                                                 double s0);

struct MultiAgentResult {
  double revenue = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  double serve_rate = 0.0;
};

// Favorite-value second-price-style allocation: highest virtual value wins
// when it clears the cost, pays the threshold value. Marginals must be
// regular.
MultiAgentResult multi_agent_allocate(
    const std::vector<dist::FavoriteMarginal>& marginals, double c,
    std::size_t n_samples, std::uint64_t seed);

}  // namespace screenlab::pricing
