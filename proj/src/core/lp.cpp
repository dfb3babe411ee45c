// SPDX-License-Identifier: Apache-2.0
#include "core/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace screenlab::lp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void LpProblem::add_row(std::vector<std::pair<int, double>> a, double rhs,
                        std::array<int, 2> tag) {
  rows.push_back(std::move(a));
  b.push_back(rhs);
  row_tags.push_back(tag);
}

void LpProblem::validate() const {
  require(n > 0 && static_cast<int>(c.size()) == n, "objective size mismatch");
  require(static_cast<int>(lo.size()) == n && static_cast<int>(up.size()) == n,
          "bounds size mismatch");
  for (int j = 0; j < n; ++j) {
    require(std::isfinite(lo[j]) && std::isfinite(up[j]) && lo[j] <= up[j],
            "bounds must be finite with lo <= up");
    require(std::isfinite(c[j]), "objective must be finite");
  }
  require(rows.size() == b.size() && rows.size() == row_tags.size(),
          "row bookkeeping out of sync");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(std::isfinite(b[r]), "rhs must be finite");
    for (auto& [j, v] : rows[r])
      require(j >= 0 && j < n && std::isfinite(v), "bad row entry");
  }
}

namespace {

// The dual of (max c'z : Az <= b, lo <= z <= up) in equality standard form:
//   min  b'y + up'w+ - lo'w-   s.t.  A'y + w+ - w- = c,   y, w+, w- >= 0.
// Columns 0..m-1 are the primal rows, then n up-columns, then n lo-columns.
// The w columns make a trivially feasible starting basis, so no phase one is
// needed, and at optimality the simplex multipliers are the primal solution.
class DualSimplexSolver {
 public:
  DualSimplexSolver(const LpProblem& p, std::size_t max_iter)
      : prob_(p),
        n_(static_cast<std::size_t>(p.n)),
        m_(p.rows.size()),
        max_iter_(max_iter) {}

  LpSolution run() {
    build_columns();
    init_basis();
    LpSolution out;
    double cscale = 1.0;
    for (double v : cost_) cscale = std::max(cscale, std::fabs(v));
    const double tol_d = 1e-11 * cscale;
    const double tol_piv = 1e-10;
    std::size_t stall = 0;
    bool bland = false;
    std::size_t it = 0;
    for (; it < max_iter_; ++it) {
      if (it > 0 && it % 2000 == 0) refactor();
      compute_pi();
      // pricing over nonbasic columns
      std::size_t enter = npos;
      double best = -tol_d;
      for (std::size_t j = 0; j < ncols_; ++j) {
        if (in_basis_[j]) continue;
        double d = cost_[j] - dot_col(j);
        if (bland) {
          if (d < -tol_d) {
            enter = j;
            break;
          }
        } else if (d < best - 1e-300) {
          best = d;
          enter = j;
        }
      }
      if (enter == npos) {
        out.status = LpStatus::optimal;
        break;
      }
      // direction w = Binv * A_enter
      col_to_dense(enter, scratch_);
      for (std::size_t i = 0; i < n_; ++i) {
        double acc = 0.0;
        const double* row = &binv_[i * n_];
        for (std::size_t r2 = 0; r2 < n_; ++r2) acc += row[r2] * scratch_[r2];
        dir_[i] = acc;
      }
      // ratio test; ties by smallest basic column id
      std::size_t leave = npos;
      double theta = kInf;
      for (std::size_t i = 0; i < n_; ++i) {
        if (dir_[i] <= tol_piv) continue;
        double ratio = xb_[i] / dir_[i];
        double eps = 1e-12 * (1.0 + std::fabs(theta));
        if (ratio < theta - eps ||
            (ratio < theta + eps &&
             (leave == npos || basis_[i] < basis_[leave]))) {
          theta = std::min(theta, ratio);
          leave = i;
        }
      }
      if (leave == npos) {
        out.status = LpStatus::infeasible;  // dual unbounded
        break;
      }
      if (theta <= 1e-13) {
        if (++stall > 200) bland = true;
      } else {
        stall = 0;
        bland = false;
      }
      pivot(enter, leave, theta);
    }
    if (it >= max_iter_) out.status = LpStatus::iteration_limit;
    out.iterations = it;
    finish(out);
    return out;
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  const LpProblem& prob_;
  std::size_t n_, m_, ncols_ = 0;
  std::size_t max_iter_;
  // sparse columns of the dual equality system
  std::vector<std::vector<std::pair<int, double>>> cols_;
  Vec cost_;
  std::vector<std::uint8_t> in_basis_;
  std::vector<std::size_t> basis_;  // basis_[slot] = column id
  Vec binv_;                        // n x n row-major
  Vec xb_, pi_, scratch_, dir_;

  void build_columns() {
    ncols_ = m_ + 2 * n_;
    cols_.resize(m_);  // only row columns stored sparsely; w columns implicit
    cost_.resize(ncols_);
    for (std::size_t r = 0; r < m_; ++r) {
      cols_[r].reserve(prob_.rows[r].size());
      for (auto& [j, v] : prob_.rows[r]) cols_[r].push_back({j, v});
      cost_[r] = prob_.b[r];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      cost_[m_ + j] = prob_.up[j];
      cost_[m_ + n_ + j] = -prob_.lo[j];
    }
    in_basis_.assign(ncols_, 0);
    xb_.assign(n_, 0.0);
    pi_.assign(n_, 0.0);
    scratch_.assign(n_, 0.0);
    dir_.assign(n_, 0.0);
  }

  void init_basis() {
    basis_.resize(n_);
    binv_.assign(n_ * n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      bool plus = prob_.c[j] >= 0.0;
      basis_[j] = plus ? m_ + j : m_ + n_ + j;
      in_basis_[basis_[j]] = 1;
      binv_[j * n_ + j] = plus ? 1.0 : -1.0;
      xb_[j] = std::fabs(prob_.c[j]);
    }
  }

  void col_to_dense(std::size_t col, Vec& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (col < m_) {
      for (auto& [j, v] : cols_[col]) out[static_cast<std::size_t>(j)] = v;
    } else if (col < m_ + n_) {
      out[col - m_] = 1.0;
    } else {
      out[col - m_ - n_] = -1.0;
    }
  }

  double dot_col(std::size_t col) const {
    if (col < m_) {
      double acc = 0.0;
      for (auto& [j, v] : cols_[col]) acc += pi_[static_cast<std::size_t>(j)] * v;
      return acc;
    }
    if (col < m_ + n_) return pi_[col - m_];
    return -pi_[col - m_ - n_];
  }

  void compute_pi() {
    for (std::size_t r = 0; r < n_; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_; ++i)
        acc += cost_[basis_[i]] * binv_[i * n_ + r];
      pi_[r] = acc;
    }
  }

  void pivot(std::size_t enter, std::size_t leave, double theta) {
    double piv = dir_[leave];
    for (std::size_t i = 0; i < n_; ++i) xb_[i] -= theta * dir_[i];
    xb_[leave] = theta;
    in_basis_[basis_[leave]] = 0;
    in_basis_[enter] = 1;
    basis_[leave] = enter;
    double* prow = &binv_[leave * n_];
    for (std::size_t r = 0; r < n_; ++r) prow[r] /= piv;
    for (std::size_t i = 0; i < n_; ++i) {
      if (i == leave) continue;
      double factor = dir_[i];
      if (factor == 0.0) continue;
      double* row = &binv_[i * n_];
      for (std::size_t r = 0; r < n_; ++r) row[r] -= factor * prow[r];
    }
    for (std::size_t i = 0; i < n_; ++i)
      if (xb_[i] < 0.0 && xb_[i] > -1e-11) xb_[i] = 0.0;
  }

  // Gauss-Jordan rebuild of the basis inverse and basic values.
  void refactor() {
    std::size_t n = n_;
    Vec B(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      col_to_dense(basis_[i], scratch_);
      for (std::size_t r = 0; r < n; ++r) B[r * n + i] = scratch_[r];
    }
    Vec inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (std::size_t colp = 0; colp < n; ++colp) {
      std::size_t piv_row = colp;
      double best = std::fabs(B[colp * n + colp]);
      for (std::size_t r = colp + 1; r < n; ++r) {
        double v = std::fabs(B[r * n + colp]);
        if (v > best) {
          best = v;
          piv_row = r;
        }
      }
      require(best > 1e-300, "singular basis during refactorization",
              ErrorCode::solver);
      if (piv_row != colp) {
        for (std::size_t k2 = 0; k2 < n; ++k2) {
          std::swap(B[piv_row * n + k2], B[colp * n + k2]);
          std::swap(inv[piv_row * n + k2], inv[colp * n + k2]);
        }
      }
      double piv = B[colp * n + colp];
      for (std::size_t k2 = 0; k2 < n; ++k2) {
        B[colp * n + k2] /= piv;
        inv[colp * n + k2] /= piv;
      }
      for (std::size_t r = 0; r < n; ++r) {
        if (r == colp) continue;
        double f = B[r * n + colp];
        if (f == 0.0) continue;
        for (std::size_t k2 = 0; k2 < n; ++k2) {
          B[r * n + k2] -= f * B[colp * n + k2];
          inv[r * n + k2] -= f * inv[colp * n + k2];
        }
      }
    }
    // the columns of binv map equality rows to basis slots; B was assembled
    // column-per-slot so inv rows line up with slots already
    binv_ = std::move(inv);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += binv_[i * n + r] * prob_.c[r];
      xb_[i] = std::max(acc, 0.0);
    }
  }

  void finish(LpSolution& out) {
    compute_pi();
    out.z.assign(n_, 0.0);
    out.max_bound_violation = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      double z = pi_[j];
      double clipped = std::clamp(z, prob_.lo[j], prob_.up[j]);
      out.max_bound_violation =
          std::max(out.max_bound_violation, std::fabs(z - clipped));
      out.z[j] = clipped;
    }
    out.objective = 0.0;
    for (std::size_t j = 0; j < n_; ++j) out.objective += prob_.c[j] * out.z[j];
    out.dual_objective = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      out.dual_objective += cost_[basis_[i]] * xb_[i];
    out.duality_gap_rel = std::fabs(out.objective - out.dual_objective) /
                          (1.0 + std::fabs(out.objective));
    out.max_row_violation = 0.0;
    for (std::size_t r = 0; r < m_; ++r) {
      double acc = 0.0;
      for (auto& [j, v] : prob_.rows[r])
        acc += out.z[static_cast<std::size_t>(j)] * v;
      out.max_row_violation = std::max(out.max_row_violation, acc - prob_.b[r]);
    }
    if (out.status == LpStatus::optimal &&
        (out.duality_gap_rel > 1e-8 || !std::isfinite(out.objective)))
      out.status = LpStatus::numerical_error;
    if (out.status == LpStatus::numerical_error ||
        out.status == LpStatus::iteration_limit) {
      // 1-norm condition estimate of the final basis
      double bnorm = 0.0, inorm = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        col_to_dense(basis_[i], scratch_);
        double cn = 0.0;
        for (double v : scratch_) cn += std::fabs(v);
        bnorm = std::max(bnorm, cn);
      }
      for (std::size_t r = 0; r < n_; ++r) {
        double cn = 0.0;
        for (std::size_t i = 0; i < n_; ++i) cn += std::fabs(binv_[i * n_ + r]);
        inorm = std::max(inorm, cn);
      }
      out.condition_estimate = bnorm * inorm;
    }
  }
};

}  // namespace

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::iteration_limit: return "iteration_limit";
    default: return "numerical_error";
  }
}

LpSolution solve_lp(const LpProblem& prob, std::size_t max_iter) {
  prob.validate();
  if (max_iter == 0)
    max_iter = 5000 + 200 * static_cast<std::size_t>(prob.n) +
               prob.rows.size() / 2;
  DualSimplexSolver solver(prob, max_iter);
  return solver.run();
}

}  // namespace screenlab::lp
