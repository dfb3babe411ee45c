// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "core/common.hpp"
#include "core/oned.hpp"
#include "core/rng.hpp"

namespace screenlab::dist {

// ---------------------------------------------------------------------------
// Type families
// ---------------------------------------------------------------------------

struct IidUniformSpec {
  double a = 0.0, b = 1.0;
};

// Values on a curve t2 = C(t1) <= t1, favorite value drawn from fmax.
struct PerfectlyCorrelatedSpec {
  OneDSpec fmax;
  Curve curve;
};

// Favorite value from fmax, second value uniform on [C(v), v].
struct UniformAboveCurveSpec {
  OneDSpec fmax;
  Curve curve;
};

// Values iid with density proportional to exp(h(log x)) on [0, hi];
// h piecewise linear, convex, non-decreasing, extended by constants
// beyond its sampled log-range.
struct ProductLogDensitySpec {
  Curve h;
  double hi = 1.0;
};

// Uniform on [a,b]^2 truncated to t1 + t2 <= a + b (additive pipeline).
struct TruncatedUniformSimplexSpec {
  double a = 0.0, b = 1.0;
};

// Additive analogue of the perfectly correlated family: bundle value s from
// fsum, item split fixed by the ratio curve theta(s) in (0, 1].
struct PerfectlyCorrelatedSumSpec {
  OneDSpec fsum;
  Curve theta_of_s;
};

struct RawGridSpec {
  std::string path;
};

struct FamilySpec {
  std::variant<IidUniformSpec, PerfectlyCorrelatedSpec, UniformAboveCurveSpec,
               ProductLogDensitySpec, TruncatedUniformSimplexSpec,
               PerfectlyCorrelatedSumSpec, RawGridSpec>
      value;

  bool additive() const;  // natively a sum-ratio family
  std::string name() const;
};

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

struct FavoriteMarginal {
  Vec v_nodes;
  Vec F;  // CDF, 0 -> 1
  Vec f;  // density
  double scale = 1.0;
};

// Discretized max-symmetric density in (favorite value v, ratio theta)
// coordinates, conditioned on the branch t1 >= t2 and normalized to total
// mass one. branch_weights carries the probability of each favorite branch.
struct MaxRatioGrid {
  Vec v_nodes;
  Vec theta_nodes;
  std::vector<Vec> density;      // density[i][j] = f^MR(v_i, theta_j)
  std::vector<Vec> cond_cdf;     // conditional ratio CDF per column
  std::vector<Vec> cell_mass;    // (n_v-1) x (n_t-1) cell probabilities
  Vec theta_lo;                  // declared support lower bound per column
  Vec theta_hi;                  // declared support upper bound per column
  Vec fmax, Fmax;                // favorite marginal at v_nodes
  std::array<double, 2> branch_weights{1.0, 0.0};
  double scale = 1.0;
  bool correlated_band = false;  // one-cell band; exact curve in `curve`
  std::optional<Curve> curve;
  std::vector<std::string> warnings;

  std::size_t nv() const { return v_nodes.size(); }
  std::size_t nt() const { return theta_nodes.size(); }
  double v_lo() const { return v_nodes.front(); }
  double v_hi() const { return v_nodes.back(); }
  // Cartesian branch-conditional density at node (i, j).
  double cart_density(std::size_t i, std::size_t j) const;
  // Full-space density on the diagonal t1 = t2 = v.
  double diagonal_density(double v) const;
  bool in_support(std::size_t i, std::size_t j) const;
  void validate() const;
};

// Density in (bundle value s, ratio theta) coordinates for the additive
// pipeline, same conventions as MaxRatioGrid.
struct SumRatioGrid {
  Vec s_nodes;
  Vec theta_nodes;
  std::vector<Vec> density;  // f^SR(s_i, theta_j)
  std::vector<Vec> cond_cdf;
  std::vector<Vec> cell_mass;
  Vec theta_lo;
  Vec theta_hi;
  Vec fsum, Fsum;
  double scale = 1.0;
  bool correlated_band = false;
  std::optional<Curve> theta_of_s;
  std::vector<std::string> warnings;

  std::size_t ns() const { return s_nodes.size(); }
  std::size_t nt() const { return theta_nodes.size(); }
  // Cartesian branch-conditional density at node (i, j).
  double cart_density(std::size_t i, std::size_t j) const;
  bool in_support(std::size_t i, std::size_t j) const;
  void validate() const;
};

struct EquiQuantileCurve {
  double q = 0.0;
  Vec anchors;  // t1 (favorite conditioning) or s (sum conditioning)
  Vec values;   // second coordinate t2 on the curve
  Vec slopes;   // finite-difference tangent d(value)/d(anchor)
};

struct QuantileMap {
  Vec v_nodes;
  Vec theta_nodes;
  Vec q1;                    // 1 - Fmax(v) at v_nodes
  std::vector<Vec> q2;       // 1 - F(theta | v) at nodes
  double jacobian_max_err = 0.0;  // |num. Jacobian - f| / max(f, floor), interior
  std::vector<std::size_t> flat_columns;  // non-invertible columns, reported

  double t1_of_q1(double q) const;            // sup convention over flats
  double t2_of(double t1, double q2v) const;  // inverse conditional at 1-q2v
  const MaxRatioGrid* grid = nullptr;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

MaxRatioGrid build_grid(const FamilySpec& spec, std::size_t n_v,
                        std::size_t n_theta);

FavoriteMarginal favorite_marginal(const MaxRatioGrid& grid);
FavoriteMarginal marginal_from_spec(const OneDSpec& spec, std::size_t n);

// Monotone interpolant of the conditional ratio CDF at favorite value v.
// Both branches share the conditional by max-symmetry; `branch` is validated
// against the declared branch weights.
std::function<double(double)> conditional_ratio_cdf(const MaxRatioGrid& grid,
                                                    double v,
                                                    std::size_t branch = 0);

EquiQuantileCurve equi_quantile(const MaxRatioGrid& grid, double q);
EquiQuantileCurve equi_quantile(const SumRatioGrid& grid, double q);

QuantileMap quantile_map(const MaxRatioGrid& grid);

SumRatioGrid to_sum_ratio(const MaxRatioGrid& grid, std::size_t n_s = 0);
SumRatioGrid build_sum_grid(const FamilySpec& spec, std::size_t n_s,
                            std::size_t n_theta);

// Full-space sampler for a family; draws are reproducible given the rng
// stream. Used by the Monte-Carlo validation tests.
class FamilySampler {
 public:
  explicit FamilySampler(const FamilySpec& spec);
  std::array<double, 2> draw(SplitMix64& rng) const;

 private:
  FamilySpec spec_;
  Vec table_x_, table_cdf_;  // fine inverse-CDF table for numeric marginals
};

MaxRatioGrid load_raw_grid(const std::string& path, std::size_t, std::size_t);
void write_raw_grid_csv(const MaxRatioGrid& grid, const std::string& path);

}  // namespace screenlab::dist
