#pragma once

// Parallel affine abstraction of an interval-valued nonlinear map.
//
// Given bounding functions q_lo <= q_hi on a box, find per output row j a
// slope vector a_j and offsets (e_lo_j, e_hi_j) minimizing the band height
// such that at every grid sample zeta_s
//
//   a_j.zeta_s + e_lo_j + sigma_j <= q_lo(zeta_s)_j,
//   q_hi(zeta_s)_j <= a_j.zeta_s + e_hi_j - sigma_j,
//
// where sigma_j = L_j * (half the grid cell diagonal) covers the deviation of
// an L_j-Lipschitz function between samples. The stored offsets are the LP's
// sigma-inflated values, so the band bounds q everywhere on the box whenever
// the supplied Lipschitz constants are valid.
//
// The local variant additionally nests the band inside a global abstraction.
// Nesting is imposed at the box vertices; both band boundaries are affine in
// zeta, so vertex constraints imply nesting over the whole box.
//
// Each row LP has dim+2 unknowns and hundreds of constraints; it is solved
// through its dual (dim+2 equality rows, one nonnegative multiplier per
// constraint), with the primal vertex recovered from the tight constraint
// set and verified. On any verification failure the row falls back to the
// general primal simplex.

#include "smio/interval.hpp"
#include "smio/lp.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smio {

using VectorField = std::function<Vec(const Vec&)>;

// Coordinate layout of the abstraction input zeta = (z, u, noise).
struct ZetaDims {
  int n_z = 0;
  int n_u = 0;
  int n_w = 0;
  int total() const { return n_z + n_u + n_w; }
};

struct SampleGrid {
  IntervalVector box;
  std::vector<int> subdivisions;  // per dimension; 0 for zero-width dimensions
  std::vector<Vec> points;
  double cell_half_diag = 0.0;

  // Uniform subdivision including endpoints. Zero-width dimensions contribute
  // a single coordinate. grid_res >= 1 subdivisions per non-degenerate
  // dimension; vertices are always included (they are the endpoints).
  static SampleGrid make(const IntervalVector& box, int grid_res) {
    return make(box, std::vector<int>(static_cast<size_t>(box.size()), grid_res));
  }

  static SampleGrid make(const IntervalVector& box, std::vector<int> res) {
    const int dim = static_cast<int>(box.size());
    if (static_cast<int>(res.size()) != dim) {
      throw std::invalid_argument("SampleGrid: resolution size mismatch");
    }
    SampleGrid g;
    g.box = box;
    g.subdivisions.resize(dim);
    std::vector<std::vector<double>> axes(dim);
    double diag_sq = 0.0;
    size_t count = 1;
    for (int i = 0; i < dim; ++i) {
      const double wi = box.hi[i] - box.lo[i];
      if (wi <= 0.0) {
        g.subdivisions[i] = 0;
        axes[i] = {box.lo[i]};
      } else {
        if (res[i] < 1) throw std::invalid_argument("SampleGrid: grid_res must be >= 1");
        g.subdivisions[i] = res[i];
        axes[i].resize(res[i] + 1);
        for (int k = 0; k <= res[i]; ++k) {
          axes[i][k] = box.lo[i] + wi * static_cast<double>(k) / res[i];
        }
        axes[i].back() = box.hi[i];
        const double side = wi / res[i];
        diag_sq += side * side;
      }
      count *= axes[i].size();
      if (count > 2000000) {
        throw std::invalid_argument("SampleGrid: too many points (" + std::to_string(count) +
                                    "+); reduce grid_res or dimensionality");
      }
    }
    g.cell_half_diag = 0.5 * std::sqrt(diag_sq);

    g.points.reserve(count);
    Vec p(dim);
    std::vector<size_t> idx(dim, 0);
    for (;;) {
      for (int i = 0; i < dim; ++i) p[i] = axes[i][idx[i]];
      g.points.push_back(p);
      int i = dim - 1;
      while (i >= 0 && ++idx[i] == axes[i].size()) {
        idx[i] = 0;
        --i;
      }
      if (i < 0) break;
    }
    return g;
  }

  // The 2^k box vertices (k = number of non-degenerate dimensions).
  std::vector<Vec> vertices() const {
    std::vector<Vec> out;
    const int dim = static_cast<int>(box.size());
    std::vector<int> active;
    for (int i = 0; i < dim; ++i) {
      if (box.hi[i] > box.lo[i]) active.push_back(i);
    }
    const size_t n = size_t{1} << active.size();
    out.reserve(n);
    Vec p = box.lo;
    for (size_t mask = 0; mask < n; ++mask) {
      for (size_t k = 0; k < active.size(); ++k) {
        p[active[k]] = (mask >> k & 1) ? box.hi[active[k]] : box.lo[active[k]];
      }
      out.push_back(p);
    }
    return out;
  }
};

// sigma_j = L_j * cell_half_diag: worst-case deviation of an L_j-Lipschitz
// function from its value at the nearest grid point.
inline Vec sigma(const Vec& lipschitz, const SampleGrid& grid) {
  for (Eigen::Index j = 0; j < lipschitz.size(); ++j) {
    if (lipschitz[j] < 0.0) {
      throw std::invalid_argument("sigma: negative Lipschitz constant at output " +
                                  std::to_string(j));
    }
  }
  return lipschitz * grid.cell_half_diag;
}

struct AffineAbstraction {
  Mat a;  // slope over the augmented state z
  Mat b;  // slope over the known input u
  Mat w;  // slope over the noise coordinate
  Vec e_hi;
  Vec e_lo;
  double theta = 0.0;       // max_j (e_hi_j - e_lo_j - 2 sigma_j), the LP objective
  IntervalVector domain;    // the zeta box this abstraction certifies
  int fallback_rows = 0;    // local rows that reverted to the global band

  Mat full() const {
    Mat m(a.rows(), a.cols() + b.cols() + w.cols());
    m << a, b, w;
    return m;
  }

  Eigen::Index outputs() const { return e_hi.size(); }

  double upper_at(Eigen::Index row, const Vec& zeta, const Mat& full_mat) const {
    return full_mat.row(row).dot(zeta) + e_hi[row];
  }

  Vec upper_at(const Vec& zeta) const { return full() * zeta + e_hi; }
  Vec lower_at(const Vec& zeta) const { return full() * zeta + e_lo; }
};

namespace detail {

struct BandRow {
  Vec a;
  double e_hi = 0.0;
  double e_lo = 0.0;
  bool feasible = true;
};

struct NestingLine {
  Vec a;        // global slope row (full zeta)
  double e_hi;  // global offsets
  double e_lo;
  std::vector<Vec> points;  // where nesting is imposed (box vertices)
};

// Solves one row of the band LP:
//   min e_hi - e_lo
//   s.t. a.zeta_s + e_lo <= lo_s - sigma,  hi_s + sigma <= a.zeta_s + e_hi,
//        [nesting] global_lo(zeta_t) <= a.zeta_t + e_lo,
//                  a.zeta_t + e_hi <= global_hi(zeta_t).
inline BandRow fit_band_row(const std::vector<Vec>& pts, const std::vector<double>& lo,
                            const std::vector<double>& hi, double sig,
                            const NestingLine* nest) {
  const int dim = static_cast<int>(pts.empty() ? 0 : pts[0].size());
  const int nv = dim + 2;  // (a, e_hi, e_lo)
  const size_t ns = pts.size();
  const size_t m_c = 2 * ns + (nest ? 2 * nest->points.size() : 0);

  // Constraint rows G x <= h with x = (a, e_hi, e_lo).
  Mat g(m_c, nv);
  Vec h(m_c);
  size_t r = 0;
  for (size_t s = 0; s < ns; ++s) {
    g.row(r).head(dim) = -pts[s].transpose();
    g(r, dim) = -1.0;
    g(r, dim + 1) = 0.0;
    h[r] = -hi[s] - sig;
    ++r;
    g.row(r).head(dim) = pts[s].transpose();
    g(r, dim) = 0.0;
    g(r, dim + 1) = 1.0;
    h[r] = lo[s] - sig;
    ++r;
  }
  if (nest) {
    for (const Vec& t : nest->points) {
      const double glob_hi = nest->a.dot(t) + nest->e_hi;
      const double glob_lo = nest->a.dot(t) + nest->e_lo;
      g.row(r).head(dim) = t.transpose();
      g(r, dim) = 1.0;
      g(r, dim + 1) = 0.0;
      h[r] = glob_hi;
      ++r;
      g.row(r).head(dim) = -t.transpose();
      g(r, dim) = 0.0;
      g(r, dim + 1) = -1.0;
      h[r] = -glob_lo;
      ++r;
    }
  }

  Vec c = Vec::Zero(nv);
  c[dim] = 1.0;
  c[dim + 1] = -1.0;

  BandRow out;
  out.a = Vec::Zero(dim);

  // Slopes along directions the sample box does not span are unidentifiable,
  // and the vertex the LP lands on can put large values there, which later
  // wrecks the conditioning of pseudoinverse-based update steps. Pin them to
  // the nesting reference (zero for a global fit); all samples share that
  // coordinate, so after an offset refit the band is unchanged on the box
  // and nesting at the vertices is untouched.
  const auto snap_degenerate = [&](BandRow& row) {
    for (int i = 0; i < dim; ++i) {
      double mn = std::numeric_limits<double>::infinity(), mx = -mn;
      for (size_t s = 0; s < ns; ++s) {
        mn = std::min(mn, pts[s][i]);
        mx = std::max(mx, pts[s][i]);
      }
      const double tol = 1e-12 * std::max(1.0, std::max(std::abs(mn), std::abs(mx)));
      if (mx - mn <= tol) row.a[i] = nest ? nest->a[i] : 0.0;
    }
  };

  // Offsets are recomputed from the samples for whatever slope the LP
  // returns: this is the tightest sound pair for that slope, is ordered by
  // construction (the raw LP values can invert by ~1e-16 on degenerate
  // rows), and only moves inward so nesting constraints stay satisfied.
  const auto refit_offsets = [&](BandRow& row) {
    double ehi = -std::numeric_limits<double>::infinity();
    double elo = std::numeric_limits<double>::infinity();
    for (size_t s = 0; s < ns; ++s) {
      const double proj = row.a.dot(pts[s]);
      ehi = std::max(ehi, hi[s] + sig - proj);
      elo = std::min(elo, lo[s] - sig - proj);
    }
    row.e_hi = ehi;
    row.e_lo = elo;
  };

  // Dual: min h'mu s.t. G'mu = -c, mu >= 0. Unbounded dual <=> infeasible primal.
  bool need_primal_fallback = false;
  try {
    auto dual = simplex_standard_form(g.transpose(), Vec(-c), h);
    if (dual.status == SimplexStatus::kUnbounded) {
      out.feasible = false;
      return out;
    }
    if (dual.status == SimplexStatus::kInfeasible) {
      // Primal unbounded: impossible for a band LP (height is bounded below
      // by the sample spread); treat as numerical trouble.
      need_primal_fallback = true;
    } else {
      // The optimal dual basis identifies a complementary primal vertex:
      // solving the basic constraints as equalities (zero-level basic
      // multipliers included) reproduces it. Degenerate rows the basis
      // skipped are caught by the feasibility re-check below.
      std::vector<int> tight;
      for (int bi : dual.basis) {
        if (bi < static_cast<int>(m_c)) tight.push_back(bi);
      }
      Mat gb(tight.size(), nv);
      Vec hb(tight.size());
      for (size_t i = 0; i < tight.size(); ++i) {
        gb.row(i) = g.row(tight[i]);
        hb[i] = h[tight[i]];
      }
      Vec x = pseudoinverse(gb) * hb;
      const double obj = c.dot(x);
      // Strong duality for min c'x s.t. Gx <= h: c'x* = -h'mu*.
      const double scale = std::max(1.0, std::abs(dual.objective));
      bool ok = std::abs(obj + dual.objective) <= 1e-6 * scale;
      if (ok) {
        for (size_t i = 0; i < m_c && ok; ++i) {
          ok = g.row(i).dot(x) <= h[i] + 1e-7;
        }
      }
      if (ok) {
        out.a = x.head(dim);
        snap_degenerate(out);
        refit_offsets(out);
        return out;
      }
      need_primal_fallback = true;
    }
  } catch (const std::runtime_error&) {
    need_primal_fallback = true;
  }

  if (need_primal_fallback) {
    std::vector<LinearConstraint> cons;
    cons.reserve(m_c);
    for (size_t i = 0; i < m_c; ++i) cons.push_back({g.row(i).transpose(), h[i]});
    try {
      auto res = solve_lp(c, cons);
      out.a = res.x.head(dim);
      snap_degenerate(out);
      refit_offsets(out);
    } catch (const LpInfeasible&) {
      out.feasible = false;
    }
  }
  return out;
}

struct SampledValues {
  std::vector<double> lo;
  std::vector<double> hi;
};

inline std::vector<SampledValues> evaluate_pair(const VectorField& q_lo, const VectorField& q_hi,
                                                const std::vector<Vec>& pts, int outputs) {
  std::vector<SampledValues> vals(outputs);
  for (auto& v : vals) {
    v.lo.reserve(pts.size());
    v.hi.reserve(pts.size());
  }
  for (const Vec& p : pts) {
    const Vec lo = q_lo(p);
    const Vec hi = q_hi(p);
    if (lo.size() != outputs || hi.size() != outputs) {
      throw std::invalid_argument("abstraction: field output dimension mismatch");
    }
    for (int j = 0; j < outputs; ++j) {
      if (lo[j] > hi[j]) {
        throw std::invalid_argument("abstraction: q_lo > q_hi at a sample (output " +
                                    std::to_string(j) + ")");
      }
      vals[j].lo.push_back(lo[j]);
      vals[j].hi.push_back(hi[j]);
    }
  }
  return vals;
}

inline AffineAbstraction assemble(const std::vector<BandRow>& rows, const Vec& sig,
                                  const ZetaDims& dims, const IntervalVector& domain,
                                  int fallback_rows) {
  const int outputs = static_cast<int>(rows.size());
  AffineAbstraction abs;
  abs.a = Mat::Zero(outputs, dims.n_z);
  abs.b = Mat::Zero(outputs, dims.n_u);
  abs.w = Mat::Zero(outputs, dims.n_w);
  abs.e_hi = Vec::Zero(outputs);
  abs.e_lo = Vec::Zero(outputs);
  abs.domain = domain;
  abs.fallback_rows = fallback_rows;
  double theta = 0.0;
  for (int j = 0; j < outputs; ++j) {
    abs.a.row(j) = rows[j].a.head(dims.n_z).transpose();
    abs.b.row(j) = rows[j].a.segment(dims.n_z, dims.n_u).transpose();
    abs.w.row(j) = rows[j].a.tail(dims.n_w).transpose();
    abs.e_hi[j] = rows[j].e_hi;
    abs.e_lo[j] = rows[j].e_lo;
    theta = std::max(theta, rows[j].e_hi - rows[j].e_lo - 2.0 * sig[j]);
  }
  abs.theta = theta;
  return abs;
}

}  // namespace detail

// Global abstraction over `space` (the full zeta box). `lipschitz` has one
// entry per output row of q.
inline AffineAbstraction abstract_global(const VectorField& q_lo, const VectorField& q_hi,
                                         const IntervalVector& space, const Vec& lipschitz,
                                         int grid_res, const ZetaDims& dims) {
  if (space.size() != dims.total()) {
    throw std::invalid_argument("abstract_global: space dimension does not match dims");
  }
  const SampleGrid grid = SampleGrid::make(space, grid_res);
  const Vec sig = sigma(lipschitz, grid);
  const int outputs = static_cast<int>(lipschitz.size());
  const auto vals = detail::evaluate_pair(q_lo, q_hi, grid.points, outputs);

  std::vector<detail::BandRow> rows(outputs);
  for (int j = 0; j < outputs; ++j) {
    rows[j] = detail::fit_band_row(grid.points, vals[j].lo, vals[j].hi, sig[j], nullptr);
    if (!rows[j].feasible) {
      throw std::runtime_error("abstract_global: row LP infeasible (internal error)");
    }
  }
  return detail::assemble(rows, sig, dims, space, 0);
}

// Local abstraction on box, nested inside global_abs. Rows whose nested LP is
// infeasible (the sigma margin cannot fit inside the global band) fall back
// to the global band restricted to the box, which is sound and trivially
// nested; fallback_rows counts them.
inline AffineAbstraction abstract_local(const VectorField& q_lo, const VectorField& q_hi,
                                        const IntervalVector& box,
                                        const AffineAbstraction& global_abs, const Vec& lipschitz,
                                        int grid_res, const ZetaDims& dims) {
  if (box.size() != dims.total()) {
    throw std::invalid_argument("abstract_local: box dimension does not match dims");
  }
  for (Eigen::Index i = 0; i < box.size(); ++i) {
    const double pad = 1e-9 * std::max(1.0, std::abs(global_abs.domain.hi[i]));
    if (box.lo[i] < global_abs.domain.lo[i] - pad || box.hi[i] > global_abs.domain.hi[i] + pad) {
      throw std::invalid_argument("abstract_local: box not contained in the global domain");
    }
  }
  const SampleGrid grid = SampleGrid::make(box, grid_res);
  const Vec sig = sigma(lipschitz, grid);
  const int outputs = static_cast<int>(lipschitz.size());
  const auto vals = detail::evaluate_pair(q_lo, q_hi, grid.points, outputs);
  const Mat global_full = global_abs.full();
  const auto verts = grid.vertices();

  std::vector<detail::BandRow> rows(outputs);
  int fallbacks = 0;
  for (int j = 0; j < outputs; ++j) {
    detail::NestingLine nest;
    nest.a = global_full.row(j).transpose();
    nest.e_hi = global_abs.e_hi[j];
    nest.e_lo = global_abs.e_lo[j];
    nest.points = verts;
    rows[j] = detail::fit_band_row(grid.points, vals[j].lo, vals[j].hi, sig[j], &nest);
    if (!rows[j].feasible) {
      rows[j].a = nest.a;
      rows[j].e_hi = nest.e_hi;
      rows[j].e_lo = nest.e_lo;
      rows[j].feasible = true;
      ++fallbacks;
    }
  }
  return detail::assemble(rows, sig, dims, box, fallbacks);
}

// Slope-zero abstraction: the row LP with the slope pinned to zero, whose
// optimum is e_hi_j = max_s q_hi_j + sigma_j, e_lo_j = min_s q_lo_j - sigma_j.
inline AffineAbstraction abstract_horizontal(const VectorField& q_lo, const VectorField& q_hi,
                                             const IntervalVector& space, const Vec& lipschitz,
                                             int grid_res, const ZetaDims& dims) {
  const SampleGrid grid = SampleGrid::make(space, grid_res);
  const Vec sig = sigma(lipschitz, grid);
  const int outputs = static_cast<int>(lipschitz.size());
  const auto vals = detail::evaluate_pair(q_lo, q_hi, grid.points, outputs);

  std::vector<detail::BandRow> rows(outputs);
  for (int j = 0; j < outputs; ++j) {
    double mx = vals[j].hi[0], mn = vals[j].lo[0];
    for (size_t s = 1; s < grid.points.size(); ++s) {
      mx = std::max(mx, vals[j].hi[s]);
      mn = std::min(mn, vals[j].lo[s]);
    }
    rows[j].a = Vec::Zero(dims.total());
    rows[j].e_hi = mx + sig[j];
    rows[j].e_lo = mn - sig[j];
  }
  return detail::assemble(rows, sig, dims, space, 0);
}

}  // namespace smio
