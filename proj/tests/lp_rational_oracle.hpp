#pragma once

// Exact-arithmetic LP oracle for testing the double-precision simplex.
//
// For an LP  min c'x  s.t.  Gx <= h  with integer data and a bounded feasible
// region, the optimum is attained at a vertex, and every vertex solves some
// n-subset of tight constraints. Enumerating all subsets with rational
// Gaussian elimination gives the exact optimal objective.

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <vector>

namespace lp_oracle {

using Rational = boost::multiprecision::cpp_rational;

struct IntLp {
  std::vector<std::vector<long>> g;  // m x n
  std::vector<long> h;               // m
  std::vector<long> c;               // n
};

// Solves the square rational system rows(S) x = rhs(S); returns nothing if singular.
inline std::optional<std::vector<Rational>> solve_square(const IntLp& lp,
                                                         const std::vector<int>& subset) {
  const int n = static_cast<int>(lp.c.size());
  std::vector<std::vector<Rational>> a(n, std::vector<Rational>(n + 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a[i][j] = lp.g[subset[i]][j];
    a[i][n] = lp.h[subset[i]];
  }
  for (int col = 0; col < n; ++col) {
    int piv = -1;
    for (int row = col; row < n; ++row) {
      if (a[row][col] != 0) {
        piv = row;
        break;
      }
    }
    if (piv < 0) return std::nullopt;
    std::swap(a[col], a[piv]);
    const Rational d = a[col][col];
    for (int j = col; j <= n; ++j) a[col][j] /= d;
    for (int row = 0; row < n; ++row) {
      if (row == col || a[row][col] == 0) continue;
      const Rational f = a[row][col];
      for (int j = col; j <= n; ++j) a[row][j] -= f * a[col][j];
    }
  }
  std::vector<Rational> x(n);
  for (int i = 0; i < n; ++i) x[i] = a[i][n];
  return x;
}

inline bool feasible(const IntLp& lp, const std::vector<Rational>& x) {
  const int n = static_cast<int>(lp.c.size());
  for (size_t i = 0; i < lp.g.size(); ++i) {
    Rational dot = 0;
    for (int j = 0; j < n; ++j) dot += Rational(lp.g[i][j]) * x[j];
    if (dot > Rational(lp.h[i])) return false;
  }
  return true;
}

// Exact optimal objective over all vertices; nothing when no feasible vertex
// exists (for the generated instances this means infeasible, since the box
// constraints make the region bounded and thus vertex-pointed).
inline std::optional<Rational> brute_force_min(const IntLp& lp) {
  const int n = static_cast<int>(lp.c.size());
  const int m = static_cast<int>(lp.g.size());
  std::optional<Rational> best;

  std::vector<int> subset(n);
  // iterate over all n-subsets of [0, m)
  for (int i = 0; i < n; ++i) subset[i] = i;
  for (;;) {
    auto x = solve_square(lp, subset);
    if (x && feasible(lp, *x)) {
      Rational obj = 0;
      for (int j = 0; j < n; ++j) obj += Rational(lp.c[j]) * (*x)[j];
      if (!best || obj < *best) best = obj;
    }
    // next combination
    int k = n - 1;
    while (k >= 0 && subset[k] == m - n + k) --k;
    if (k < 0) break;
    ++subset[k];
    for (int j = k + 1; j < n; ++j) subset[j] = subset[j - 1] + 1;
  }
  return best;
}

}  // namespace lp_oracle
