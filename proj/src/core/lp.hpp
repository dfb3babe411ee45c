// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "core/common.hpp"

namespace screenlab::lp {

// max c'z subject to sparse rows a'z <= b and finite box bounds lo <= z <= up.
// Rows are stored sparsely; the IC rows of a mechanism program touch six
// variables each, so a dense matrix would be overwhelmingly structural zeros.
struct LpProblem {
  int n = 0;
  Vec c;
  Vec lo, up;
  std::vector<std::vector<std::pair<int, double>>> rows;
  Vec b;
  std::vector<std::array<int, 2>> row_tags;  // e.g. (type, reported type)

  void add_row(std::vector<std::pair<int, double>> a, double rhs,
               std::array<int, 2> tag = {-1, -1});
  void validate() const;
};

enum class LpStatus { optimal, infeasible, iteration_limit, numerical_error };

const char* to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::numerical_error;
  Vec z;
  double objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap_rel = 0.0;
  double max_row_violation = 0.0;
  double max_bound_violation = 0.0;
  std::size_t iterations = 0;
  double condition_estimate = 0.0;
};

// Deterministic bounded-variable solver: revised primal simplex applied to
// the explicit dual (basis order = variable count), Dantzig pricing with
// lowest-index ties and a Bland fallback under stalling. Identical input
// yields an identical pivot sequence.
LpSolution solve_lp(const LpProblem& prob, std::size_t max_iter = 0);

}  // namespace screenlab::lp
