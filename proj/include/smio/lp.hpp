#pragma once

// Dense linear programming.
//
// Two entry points:
//   * solve_lp: free-variable inequality-form LP (min c'x s.t. Gx <= h),
//     solved by a two-phase tableau simplex with Bland's anti-cycling rule.
//   * detail::simplex_standard_form: the underlying standard-form solver
//     (min c'x s.t. Ax = b, x >= 0), reused by the band-fitting fast path in
//     abstraction.hpp, which solves the dual of the band LP (few equality
//     rows, many nonnegative multipliers) instead of the wide primal.
//
// All pivoting uses Bland's rule (lowest eligible index), which guarantees
// termination; tableaus are dense Eigen matrices.

#include "smio/interval.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace smio {

inline constexpr double kLpTol = 1e-9;

class LpInfeasible : public std::runtime_error {
 public:
  LpInfeasible(int constraint_index, const std::string& msg)
      : std::runtime_error(msg), constraint_index(constraint_index) {}
  int constraint_index;  // a violated constraint witnessing infeasibility, -1 if unknown
};

class LpUnbounded : public std::runtime_error {
 public:
  explicit LpUnbounded(const std::string& msg) : std::runtime_error(msg) {}
};

// coeffs . x <= rhs
struct LinearConstraint {
  Vec coeffs;
  double rhs;
};

struct LpResult {
  Vec x;
  double objective;
};

namespace detail {

enum class SimplexStatus { kOptimal, kInfeasible, kUnbounded };

struct StandardFormResult {
  SimplexStatus status = SimplexStatus::kInfeasible;
  Vec x;                    // primal solution, size n
  double objective = 0.0;
  std::vector<int> basis;   // basic variable index per row (artificials excluded rows dropped)
  int infeasible_row = -1;  // row whose artificial stayed positive
};

// min c'x s.t. Ax = b, x >= 0. Rows with negative b are negated internally.
// Bland's rule throughout. `basis` in the result maps surviving tableau rows
// to variable indices in 0..n-1.
inline StandardFormResult simplex_standard_form(Mat a, Vec b, const Vec& c) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  StandardFormResult res;
  if (m == 0) {
    // min c'x over x >= 0 alone: either 0 at the origin or unbounded.
    if (c.size() > 0 && c.minCoeff() < -kLpTol) {
      res.status = SimplexStatus::kUnbounded;
    } else {
      res.status = SimplexStatus::kOptimal;
      res.x = Vec::Zero(n);
      res.objective = 0.0;
    }
    return res;
  }

  for (int i = 0; i < m; ++i) {
    if (b[i] < 0) {
      a.row(i) = -a.row(i);
      b[i] = -b[i];
    }
  }

  // Tableau: columns [x (n) | artificials (m) | rhs]; rows [constraints (m) | cost].
  const int cols = n + m + 1;
  Mat t = Mat::Zero(m + 1, cols);
  t.block(0, 0, m, n) = a;
  t.block(0, n, m, m) = Mat::Identity(m, m);
  t.col(cols - 1).head(m) = b;

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  // `allowed` marks columns eligible to enter.
  std::vector<char> allowed(n + m, 1);

  auto price_out = [&](const Vec& cost) {
    // cost row = cost' - cost_B' * rows (for current basis)
    t.row(m).setZero();
    for (int j = 0; j < n + m; ++j) t(m, j) = j < static_cast<int>(cost.size()) ? cost[j] : 0.0;
    t(m, cols - 1) = 0.0;
    for (int i = 0; i < m; ++i) {
      const double cb = basis[i] < static_cast<int>(cost.size()) ? cost[basis[i]] : 0.0;
      if (cb != 0.0) t.row(m) -= cb * t.row(i);
    }
  };

  auto iterate = [&]() -> SimplexStatus {
    for (long iter = 0;; ++iter) {
      if (iter > 200000) {
        throw std::runtime_error("simplex: iteration cap exceeded (cycling?)");
      }
      int enter = -1;
      for (int j = 0; j < n + m; ++j) {
        if (allowed[j] && t(m, j) < -kLpTol) {
          enter = j;
          break;  // Bland: lowest index
        }
      }
      if (enter < 0) return SimplexStatus::kOptimal;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        const double piv = t(i, enter);
        if (piv > kLpTol) {
          const double ratio = t(i, cols - 1) / piv;
          if (ratio < best_ratio - kLpTol) {
            best_ratio = ratio;
            leave = i;
          } else if (ratio <= best_ratio + kLpTol && leave >= 0 && basis[i] < basis[leave]) {
            // Bland tie-break: smallest basic variable index among min ratios.
            if (ratio < best_ratio) best_ratio = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return SimplexStatus::kUnbounded;

      const double piv = t(leave, enter);
      t.row(leave) /= piv;
      for (int i = 0; i <= m; ++i) {
        if (i == leave) continue;
        const double f = t(i, enter);
        if (f != 0.0) t.row(i) -= f * t.row(leave);
      }
      basis[leave] = enter;
    }
  };

  // Phase 1: minimize the sum of artificials.
  Vec phase1_cost = Vec::Zero(n + m);
  phase1_cost.tail(m).setOnes();
  price_out(phase1_cost);
  iterate();  // phase 1 cannot be unbounded (cost bounded below by 0)

  if (t(m, cols - 1) < -1e-7) {  // priced-out objective = -sum(artificials)
    res.status = SimplexStatus::kInfeasible;
    for (int i = 0; i < m; ++i) {
      if (basis[i] >= n && t(i, cols - 1) > 1e-7) {
        res.infeasible_row = i;
        break;
      }
    }
    return res;
  }

  // Drive zero-level artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    int enter = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(t(i, j)) > 1e-7) {
        enter = j;
        break;
      }
    }
    if (enter >= 0) {
      const double piv = t(i, enter);
      t.row(i) /= piv;
      for (int k = 0; k <= m; ++k) {
        if (k == i) continue;
        const double f = t(k, enter);
        if (f != 0.0) t.row(k) -= f * t.row(i);
      }
      basis[i] = enter;
    }
    // else: redundant row; the artificial stays basic at level zero and is
    // harmless because artificials are barred from re-entering.
  }

  for (int j = n; j < n + m; ++j) allowed[j] = 0;

  // Phase 2.
  Vec phase2_cost = Vec::Zero(n + m);
  phase2_cost.head(n) = c;
  price_out(phase2_cost);
  if (iterate() == SimplexStatus::kUnbounded) {
    res.status = SimplexStatus::kUnbounded;
    return res;
  }

  res.status = SimplexStatus::kOptimal;
  res.x = Vec::Zero(n);
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) res.x[basis[i]] = t(i, cols - 1);
  }
  res.objective = c.dot(res.x);
  res.basis = basis;
  return res;
}

}  // namespace detail

// min objective . x  subject to  constraints[i].coeffs . x <= constraints[i].rhs,
// x free. Returns an optimal vertex (in the lifted standard form).
inline LpResult solve_lp(const Vec& objective, const std::vector<LinearConstraint>& constraints) {
  const int n = static_cast<int>(objective.size());
  const int m = static_cast<int>(constraints.size());
  for (int i = 0; i < m; ++i) {
    if (constraints[i].coeffs.size() != n) {
      throw std::invalid_argument("solve_lp: constraint " + std::to_string(i) +
                                  " has wrong dimension");
    }
  }

  // Standard form: x = u - v with u, v >= 0, slack s >= 0 per constraint.
  const int n_std = 2 * n + m;
  Mat a = Mat::Zero(m, n_std);
  Vec b(m);
  for (int i = 0; i < m; ++i) {
    a.row(i).head(n) = constraints[i].coeffs.transpose();
    a.row(i).segment(n, n) = -constraints[i].coeffs.transpose();
    a(i, 2 * n + i) = 1.0;
    b[i] = constraints[i].rhs;
  }
  Vec c = Vec::Zero(n_std);
  c.head(n) = objective;
  c.segment(n, n) = -objective;

  auto res = detail::simplex_standard_form(std::move(a), std::move(b), c);
  switch (res.status) {
    case detail::SimplexStatus::kInfeasible:
      throw LpInfeasible(res.infeasible_row,
                         "solve_lp: infeasible (witness constraint " +
                             std::to_string(res.infeasible_row) + ")");
    case detail::SimplexStatus::kUnbounded:
      throw LpUnbounded("solve_lp: objective unbounded below");
    case detail::SimplexStatus::kOptimal:
      break;
  }
  LpResult out;
  out.x = res.x.head(n) - res.x.segment(n, n);
  out.objective = objective.dot(out.x);
  return out;
}

}  // namespace smio
