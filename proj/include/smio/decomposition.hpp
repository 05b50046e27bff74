#pragma once

// Mixed-monotone decomposition functions built from Jacobian bounds.
//
// A decomposition of q is a two-argument function q_d with q_d(x, x) = q(x),
// nondecreasing in its first argument and nonincreasing in its second. It
// turns any nonmonotone q into a monotone interval propagator:
//
//   x in [lo, hi]  =>  q_d(lo, hi) <= q(x) <= q_d(hi, lo).
//
// Construction per output i, input j, from bounds a <= dq_i/dx_j <= b:
//   a_{i,j} >= 0          -> argument j read from x, no slope term
//   b_{i,j} <= 0          -> argument j read from y, no slope term
//   a_{i,j} < 0 < b_{i,j} -> argument j read from x, slope C_{i,j} = |a_{i,j}|
// and q_d(x, y)_i = q_i(z^i) + C_i (x - y). The slope term makes the mixed
// partial nonnegative in x (dq_i/dx_j + |a_{i,j}| >= 0) and nonpositive in y.

#include "smio/abstraction.hpp"
#include "smio/interval.hpp"

#include <functional>
#include <stdexcept>
#include <utility>

namespace smio {

struct JacobianBounds {
  Mat a;  // entrywise lower bounds on the Jacobian
  Mat b;  // entrywise upper bounds

  JacobianBounds() = default;

  JacobianBounds(Mat a_, Mat b_) : a(std::move(a_)), b(std::move(b_)) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw std::invalid_argument("JacobianBounds: shape mismatch");
    }
    if (!a.allFinite() || !b.allFinite()) {
      throw std::invalid_argument("JacobianBounds: non-finite bound");
    }
    if (((b - a).array() < 0.0).any()) {
      throw std::invalid_argument("JacobianBounds: a > b at some entry");
    }
  }
};

class DecompositionFunction {
 public:
  DecompositionFunction() = default;

  DecompositionFunction(VectorField q, JacobianBounds bounds)
      : q_(std::move(q)), bounds_(std::move(bounds)) {
    const Eigen::Index m = bounds_.a.rows();
    const Eigen::Index n = bounds_.a.cols();
    c_ = Mat::Zero(m, n);
    take_x_ = Eigen::MatrixXi::Zero(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (bounds_.a(i, j) >= 0.0) {
          take_x_(i, j) = 1;
        } else if (bounds_.b(i, j) <= 0.0) {
          take_x_(i, j) = 0;
        } else {
          take_x_(i, j) = 1;
          c_(i, j) = std::abs(bounds_.a(i, j));
        }
      }
    }
  }

  const Mat& slope() const { return c_; }
  const JacobianBounds& bounds() const { return bounds_; }
  Eigen::Index outputs() const { return bounds_.a.rows(); }
  Eigen::Index inputs() const { return bounds_.a.cols(); }

  Vec eval(const Vec& x, const Vec& y) const {
    const Eigen::Index m = outputs();
    const Eigen::Index n = inputs();
    if (x.size() != n || y.size() != n) {
      throw std::invalid_argument("DecompositionFunction::eval: argument dimension mismatch");
    }
    Vec out(m);
    Vec z(n);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) z[j] = take_x_(i, j) ? x[j] : y[j];
      out[i] = q_(z)[i] + c_.row(i).dot(x - y);
    }
    return out;
  }

 private:
  VectorField q_;
  JacobianBounds bounds_;
  Mat c_;
  Eigen::MatrixXi take_x_;
};

inline DecompositionFunction build_decomposition(VectorField q, JacobianBounds bounds) {
  return DecompositionFunction(std::move(q), std::move(bounds));
}

inline Vec eval_decomposition(const DecompositionFunction& fd, const Vec& x, const Vec& y) {
  return fd.eval(x, y);
}

// Upper bound on q_d(hi, lo) - q_d(lo, hi) over ordered pairs of spread dz:
// (|A_full| + 2C) dz + (e_hi - e_lo), from the abstraction sandwich applied
// to the decomposition's two evaluations.
inline Vec growth_bound(const DecompositionFunction& fd, const AffineAbstraction& global_abs,
                        const Vec& dz) {
  if ((dz.array() < 0.0).any()) {
    throw std::invalid_argument("growth_bound: negative interval width");
  }
  const Mat full = global_abs.full();
  if (full.cols() != dz.size() || fd.inputs() != dz.size()) {
    throw std::invalid_argument("growth_bound: dimension mismatch");
  }
  return (full.cwiseAbs() + 2.0 * fd.slope()) * dz + (global_abs.e_hi - global_abs.e_lo);
}

// Jacobian bounds by sampling: slope-zero band fit per matrix entry,
// a_{i,j} = min_s J(s)_{i,j} - sigma_{i,j}, b_{i,j} = max_s + sigma_{i,j},
// with sigma from per-entry Lipschitz constants of the derivative itself.
inline JacobianBounds jacobian_bounds_by_sampling(
    const std::function<Mat(const Vec&)>& jacobian, const IntervalVector& space,
    const Mat& entry_lipschitz, int grid_res) {
  const SampleGrid grid = SampleGrid::make(space, grid_res);
  if ((entry_lipschitz.array() < 0.0).any()) {
    throw std::invalid_argument("jacobian_bounds_by_sampling: negative Lipschitz entry");
  }
  Mat mn, mx;
  bool first = true;
  for (const Vec& p : grid.points) {
    const Mat j = jacobian(p);
    if (first) {
      mn = j;
      mx = j;
      first = false;
    } else {
      mn = mn.cwiseMin(j);
      mx = mx.cwiseMax(j);
    }
  }
  const Mat sig = entry_lipschitz * grid.cell_half_diag;
  return JacobianBounds(mn - sig, mx + sig);
}

}  // namespace smio
