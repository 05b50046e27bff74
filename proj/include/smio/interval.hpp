#pragma once

// Interval vectors and sign-split linear maps.
//
// Everything downstream rests on one fact: splitting a matrix M into
// nonnegative parts M = plus - plusplus turns an interval [lo, hi] into a
// guaranteed enclosure of the image set,
//
//   { M x : lo <= x <= hi }  subset of  [plus*lo - plusplus*hi,
//                                        plus*hi - plusplus*lo].
//
// The split is exact in IEEE arithmetic (clamping and negation are exact),
// so plus - plusplus reproduces M bit for bit.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>

namespace smio {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Absolute tolerance below which a matrix entry counts as zero when deciding
// row support.
inline constexpr double kZeroTol = 1e-9;

// Relative tolerance for discarding singular values in the pseudoinverse:
// sigma_i is kept iff sigma_i > kRankTol * sigma_max.
inline constexpr double kRankTol = 1e-10;

// Thrown when a quantity that is mathematically guaranteed (a nonempty
// enclosure, a containment invariant) fails numerically. Indicates a bug or
// an unsound input, never a recoverable condition.
class SoundnessFault : public std::runtime_error {
 public:
  explicit SoundnessFault(const std::string& what) : std::runtime_error(what) {}
};

// Closed axis-aligned box { x : lo <= x <= hi }. Bounds must be finite and
// ordered; zero-width axes are allowed.
struct IntervalVector {
  Vec lo;
  Vec hi;

  IntervalVector() = default;

  IntervalVector(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) {
      throw std::invalid_argument("IntervalVector: lo and hi sizes differ");
    }
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
        throw std::invalid_argument("IntervalVector: non-finite bound at index " +
                                    std::to_string(i));
      }
      if (lo[i] > hi[i]) {
        throw std::invalid_argument("IntervalVector: lo > hi at index " +
                                    std::to_string(i) + " (" + std::to_string(lo[i]) +
                                    " > " + std::to_string(hi[i]) + ")");
      }
    }
  }

  static IntervalVector point(const Vec& v) { return IntervalVector(v, v); }

  Eigen::Index size() const { return lo.size(); }

  Vec midpoint() const { return 0.5 * (lo + hi); }

  // Per-axis widths, always >= 0.
  Vec widths() const { return hi - lo; }

  // Scalar width: 2-norm of the per-axis widths.
  double width() const { return (hi - lo).norm(); }

  bool contains(const Vec& x, double slack = 0.0) const {
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    }
    return true;
  }

  // Concatenates boxes along the axis dimension.
  static IntervalVector concat(const IntervalVector& a, const IntervalVector& b) {
    Vec lo(a.size() + b.size()), hi(a.size() + b.size());
    lo << a.lo, b.lo;
    hi << a.hi, b.hi;
    return IntervalVector(std::move(lo), std::move(hi));
  }

  IntervalVector segment(Eigen::Index start, Eigen::Index len) const {
    return IntervalVector(lo.segment(start, len), hi.segment(start, len));
  }
};

// Intersection of two boxes. Both arguments are assumed to contain a common
// point; an empty intersection is a soundness fault.
inline IntervalVector intersect(const IntervalVector& a, const IntervalVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("intersect: dimension mismatch");
  }
  Vec lo = a.lo.cwiseMax(b.lo);
  Vec hi = a.hi.cwiseMin(b.hi);
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      throw SoundnessFault("intersect: empty intersection at axis " + std::to_string(i));
    }
  }
  return IntervalVector(std::move(lo), std::move(hi));
}

// Sign split of a matrix: plus = max(M, 0), plusplus = plus - M.
// Both parts are entrywise nonnegative and plus - plusplus == M exactly.
struct SplitMatrix {
  Mat plus;
  Mat plusplus;

  Mat abs() const { return plus + plusplus; }
};

inline SplitMatrix split(const Mat& m) {
  if (!m.allFinite()) {
    throw std::invalid_argument("split: non-finite matrix entry");
  }
  SplitMatrix s;
  s.plus = m.cwiseMax(0.0);
  s.plusplus = s.plus - m;
  return s;
}

// Tight interval enclosure of { A x : x in box }.
inline IntervalVector bound_linear_map(const SplitMatrix& a, const IntervalVector& box) {
  if (a.plus.cols() != box.size()) {
    throw std::invalid_argument("bound_linear_map: dimension mismatch");
  }
  return IntervalVector(a.plus * box.lo - a.plusplus * box.hi,
                        a.plus * box.hi - a.plusplus * box.lo);
}

inline IntervalVector bound_linear_map(const Mat& a, const IntervalVector& box) {
  return bound_linear_map(split(a), box);
}

// Row support indicator: r_i = 0 iff every entry of row i has magnitude
// below tol, else 1.
inline Eigen::VectorXi rowsupp(const Mat& m, double tol = kZeroTol) {
  Eigen::VectorXi r(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    r[i] = (m.row(i).cwiseAbs().maxCoeff() < tol) ? 0 : 1;
  }
  return r;
}

// Moore-Penrose pseudoinverse via SVD. Singular values at or below
// kRankTol * sigma_max are treated as zero; the zero matrix maps to the
// (transposed) zero matrix.
inline Mat pseudoinverse(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return Mat::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  const double cut = kRankTol * smax;
  Vec inv = Vec::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cut && s[i] > 0.0) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Largest singular value.
inline double spectral_norm(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()[0];
}

}  // namespace smio
