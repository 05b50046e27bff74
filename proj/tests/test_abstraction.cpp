#include "smio/abstraction.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using smio::AffineAbstraction;
using smio::IntervalVector;
using smio::Mat;
using smio::SampleGrid;
using smio::Vec;
using smio::VectorField;
using smio::ZetaDims;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

IntervalVector box1(double lo, double hi) {
  Vec l(1), h(1);
  l << lo;
  h << hi;
  return IntervalVector(l, h);
}

// Random smooth scalar field sum_i c_i sin(k_i . zeta + phi_i) with a known
// Lipschitz bound sum_i |c_i| ||k_i||.
struct TrigField {
  std::vector<double> c, phi;
  std::vector<Vec> k;
  double lipschitz = 0.0;

  static TrigField random(std::mt19937_64& rng, int dim, int terms) {
    TrigField f;
    for (int t = 0; t < terms; ++t) {
      f.c.push_back(uniform(rng, -1, 1));
      f.phi.push_back(uniform(rng, -3, 3));
      Vec k(dim);
      for (int i = 0; i < dim; ++i) k[i] = uniform(rng, -1.5, 1.5);
      f.k.push_back(k);
      f.lipschitz += std::abs(f.c.back()) * k.norm();
    }
    return f;
  }

  double operator()(const Vec& z) const {
    double v = 0.0;
    for (size_t t = 0; t < c.size(); ++t) v += c[t] * std::sin(k[t].dot(z) + phi[t]);
    return v;
  }
};

}  // namespace

TEST_CASE("sample grid structure") {
  Vec lo(3), hi(3);
  lo << 0, 1, 2;
  hi << 1, 1, 4;  // middle axis degenerate
  auto g = SampleGrid::make(IntervalVector(lo, hi), 2);
  REQUIRE(g.points.size() == 9);  // 3 * 1 * 3
  REQUIRE(g.subdivisions == std::vector<int>({2, 0, 2}));
  // cell sides (0.5, -, 1.0)
  REQUIRE(g.cell_half_diag == Catch::Approx(0.5 * std::sqrt(0.25 + 1.0)));

  auto verts = g.vertices();
  REQUIRE(verts.size() == 4);
  for (const auto& v : verts) {
    bool found = false;
    for (const auto& p : g.points) found = found || (p - v).norm() == 0.0;
    REQUIRE(found);  // vertices are grid points
  }
}

TEST_CASE("sigma formula") {
  Vec lo(2), hi(2);
  lo << 0, 0;
  hi << 0.1, 0.1;
  auto g = SampleGrid::make(IntervalVector(lo, hi), 1);
  Vec L(1);
  L << 2.0;
  REQUIRE(smio::sigma(L, g)[0] == Catch::Approx(2.0 * 0.5 * std::hypot(0.1, 0.1)));

  L << 0.0;
  REQUIRE(smio::sigma(L, g)[0] == 0.0);

  auto point_grid = SampleGrid::make(IntervalVector(lo, lo), 3);
  L << 5.0;
  REQUIRE(point_grid.points.size() == 1);
  REQUIRE(smio::sigma(L, point_grid)[0] == 0.0);

  Vec bad(1);
  bad << -1.0;
  REQUIRE_THROWS_AS(smio::sigma(bad, g), std::invalid_argument);
}

TEST_CASE("affine fields abstract exactly") {
  Mat a0(2, 3);
  a0 << 1, -2, 0.5, 0, 3, -1;
  Vec c0(2);
  c0 << 0.25, -4;
  VectorField f = [&](const Vec& z) { return Vec(a0 * z + c0); };

  Vec lo(3), hi(3);
  lo << -1, 0, 2;
  hi << 1, 2, 5;
  IntervalVector space(lo, hi);
  ZetaDims dims{3, 0, 0};

  // Zero Lipschitz slack is exact for an affine residual.
  auto abs0 = smio::abstract_global(f, f, space, Vec::Zero(2), 2, dims);
  REQUIRE((abs0.a - a0).cwiseAbs().maxCoeff() < 1e-7);
  REQUIRE((abs0.e_hi - c0).cwiseAbs().maxCoeff() < 1e-7);
  REQUIRE((abs0.e_lo - c0).cwiseAbs().maxCoeff() < 1e-7);
  REQUIRE(abs0.theta < 1e-7);

  // Positive Lipschitz inflates offsets by sigma but not theta.
  Vec L = Vec::Ones(2);
  auto g = SampleGrid::make(space, 2);
  const double sig = smio::sigma(L, g)[0];
  auto abs1 = smio::abstract_global(f, f, space, L, 2, dims);
  REQUIRE((abs1.e_hi - (c0.array() + sig).matrix()).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE((abs1.e_lo - (c0.array() - sig).matrix()).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(abs1.theta < 1e-6);
}

TEST_CASE("square function has a flat minimal band") {
  VectorField f = [](const Vec& z) {
    Vec v(1);
    v << z[0] * z[0];
    return v;
  };
  IntervalVector space = box1(-1, 1);
  ZetaDims dims{1, 0, 0};
  Vec L(1);
  L << 2.0;  // |d/dz z^2| <= 2 on [-1,1]
  const int res = 200;
  auto abs = smio::abstract_global(f, f, space, L, res, dims);

  // Brute-force slope sweep on the same samples: minimal height at slope 0.
  auto g = SampleGrid::make(space, res);
  double best = std::numeric_limits<double>::infinity();
  double best_slope = 0;
  for (double a = -3.0; a <= 3.0; a += 0.005) {
    double mx = -1e300, mn = 1e300;
    for (const auto& p : g.points) {
      const double r = p[0] * p[0] - a * p[0];
      mx = std::max(mx, r);
      mn = std::min(mn, r);
    }
    if (mx - mn < best) {
      best = mx - mn;
      best_slope = a;
    }
  }
  REQUIRE(std::abs(best_slope) < 0.01);
  REQUIRE(best == Catch::Approx(1.0).margin(0.01));
  REQUIRE(abs.theta == Catch::Approx(best).margin(1e-6));
  REQUIRE(std::abs(abs.a(0, 0)) < 0.02);
  const double sig = smio::sigma(L, g)[0];
  REQUIRE(abs.e_hi[0] - abs.e_lo[0] == Catch::Approx(1.0 + 2 * sig).margin(0.01));
}

TEST_CASE("band soundness at fresh random points") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    const int dim = 2 + static_cast<int>(rng() % 2);
    auto f1 = TrigField::random(rng, dim, 3);
    auto f2 = TrigField::random(rng, dim, 2);
    VectorField q = [&](const Vec& z) {
      Vec v(2);
      v << f1(z), f2(z);
      return v;
    };
    Vec lo(dim), hi(dim);
    for (int i = 0; i < dim; ++i) {
      lo[i] = uniform(rng, -2, 0);
      hi[i] = lo[i] + uniform(rng, 0.5, 2.5);
    }
    IntervalVector space(lo, hi);
    ZetaDims dims{dim, 0, 0};
    // Generous constants: Lipschitz of the field plus slack for the band slope.
    Vec L(2);
    L << 2.2 * (f1.lipschitz + 1.0), 2.2 * (f2.lipschitz + 1.0);
    auto abs = smio::abstract_global(q, q, space, L, 3, dims);

    const Mat full = abs.full();
    for (int trial = 0; trial < 2000; ++trial) {
      Vec z(dim);
      for (int i = 0; i < dim; ++i) z[i] = uniform(rng, lo[i], hi[i]);
      const Vec v = q(z);
      const Vec up = full * z + abs.e_hi;
      const Vec dn = full * z + abs.e_lo;
      REQUIRE((v - up).maxCoeff() <= 1e-8);
      REQUIRE((dn - v).maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("local band nests inside the global band") {
  std::mt19937_64 rng(47);
  auto f1 = TrigField::random(rng, 2, 3);
  VectorField q = [&](const Vec& z) {
    Vec v(1);
    v << f1(z);
    return v;
  };
  Vec lo(2), hi(2);
  lo << -2, -2;
  hi << 2, 2;
  IntervalVector space(lo, hi);
  ZetaDims dims{2, 0, 0};
  Vec L(1);
  L << 2.2 * (f1.lipschitz + 1.0);

  auto global = smio::abstract_global(q, q, space, L, 2, dims);

  for (int rep = 0; rep < 10; ++rep) {
    Vec blo(2), bhi(2);
    for (int i = 0; i < 2; ++i) {
      blo[i] = uniform(rng, -2, 1);
      bhi[i] = blo[i] + uniform(rng, 0.2, 1.0);
      bhi[i] = std::min(bhi[i], 2.0);
    }
    IntervalVector box(blo, bhi);
    auto local = smio::abstract_local(q, q, box, global, L, 1, dims);

    const Mat lf = local.full();
    const Mat gf = global.full();
    auto grid = SampleGrid::make(box, 2);
    for (const auto& p : grid.points) {
      const double llo = (lf * p + local.e_lo)[0];
      const double lhi = (lf * p + local.e_hi)[0];
      const double glo = (gf * p + global.e_lo)[0];
      const double ghi = (gf * p + global.e_hi)[0];
      REQUIRE(glo <= llo + 1e-8);
      REQUIRE(lhi <= ghi + 1e-8);
      REQUIRE(llo <= lhi + 1e-8);
    }
  }
}

TEST_CASE("local on the full space is at least as tight as global") {
  std::mt19937_64 rng(53);
  auto f1 = TrigField::random(rng, 2, 3);
  VectorField q = [&](const Vec& z) {
    Vec v(1);
    v << f1(z);
    return v;
  };
  Vec lo(2), hi(2);
  lo << -1, -1;
  hi << 1, 1;
  IntervalVector space(lo, hi);
  ZetaDims dims{2, 0, 0};
  Vec L(1);
  L << 2.2 * (f1.lipschitz + 1.0);

  auto global = smio::abstract_global(q, q, space, L, 2, dims);
  auto local = smio::abstract_local(q, q, space, global, L, 2, dims);
  REQUIRE(local.theta <= global.theta + 1e-7);
}

TEST_CASE("zero-width box collapses the band") {
  VectorField qlo = [](const Vec& z) {
    Vec v(1);
    v << std::sin(z[0]) - 0.25;
    return v;
  };
  VectorField qhi = [](const Vec& z) {
    Vec v(1);
    v << std::sin(z[0]) + 0.5;
    return v;
  };
  Vec z0(1);
  z0 << 0.7;
  IntervalVector point(z0, z0);
  ZetaDims dims{1, 0, 0};
  Vec L(1);
  L << 3.0;
  auto abs = smio::abstract_global(qlo, qhi, point, L, 2, dims);
  // sigma' = 0 on a zero-width box; the band pinches onto the values at z0.
  REQUIRE(abs.upper_at(z0)[0] == Catch::Approx(std::sin(0.7) + 0.5).margin(1e-8));
  REQUIRE(abs.lower_at(z0)[0] == Catch::Approx(std::sin(0.7) - 0.25).margin(1e-8));
  REQUIRE(abs.theta == Catch::Approx(0.75).margin(1e-8));
}

TEST_CASE("nested boxes inherit feasibility") {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 8; ++rep) {
    auto f1 = TrigField::random(rng, 2, 3);
    VectorField q = [&](const Vec& z) {
      Vec v(1);
      v << f1(z);
      return v;
    };
    Vec lo(2), hi(2);
    lo << -1.5, -1.5;
    hi << 1.5, 1.5;
    IntervalVector b1(lo, hi);
    Vec slo(2), shi(2);
    slo << -0.5, -0.4;
    shi << 0.8, 1.0;
    IntervalVector b2(slo, shi);

    Vec L(1);
    L << 2.2 * (f1.lipschitz + 1.0);
    ZetaDims dims{2, 0, 0};
    auto a1 = smio::abstract_global(q, q, b1, L, 2, dims);
    auto a2 = smio::abstract_global(q, q, b2, L, 2, dims);
    const double s1 = smio::sigma(L, SampleGrid::make(b1, 2))[0];
    const double s2 = smio::sigma(L, SampleGrid::make(b2, 2))[0];
    REQUIRE(a2.theta <= a1.theta + 2 * (s1 - s2) + 1e-7);
  }
}

TEST_CASE("stored band height shrinks under grid refinement") {
  std::mt19937_64 rng(71);
  auto f1 = TrigField::random(rng, 2, 3);
  VectorField q = [&](const Vec& z) {
    Vec v(1);
    v << f1(z);
    return v;
  };
  Vec lo(2), hi(2);
  lo << -1, -1;
  hi << 1, 1;
  IntervalVector space(lo, hi);
  ZetaDims dims{2, 0, 0};
  Vec L(1);
  L << 2.2 * (f1.lipschitz + 1.0);

  double prev = std::numeric_limits<double>::infinity();
  for (int res : {1, 2, 4, 8}) {
    auto abs = smio::abstract_global(q, q, space, L, res, dims);
    const double height = abs.e_hi[0] - abs.e_lo[0];
    REQUIRE(height <= prev + 1e-7);
    prev = height;
  }
}

TEST_CASE("invalid bounding pair is rejected") {
  VectorField qlo = [](const Vec&) {
    Vec v(1);
    v << 1.0;
    return v;
  };
  VectorField qhi = [](const Vec&) {
    Vec v(1);
    v << 0.0;
    return v;
  };
  IntervalVector space = box1(0, 1);
  REQUIRE_THROWS_AS(
      smio::abstract_global(qlo, qhi, space, Vec::Zero(1), 2, ZetaDims{1, 0, 0}),
      std::invalid_argument);
}

TEST_CASE("horizontal abstraction takes sampled extrema") {
  VectorField q = [](const Vec& z) {
    Vec v(1);
    v << std::cos(z[0]);
    return v;
  };
  IntervalVector space = box1(-3.2, 3.2);
  Vec L(1);
  L << 1.0;
  auto abs = smio::abstract_horizontal(q, q, space, L, 50, ZetaDims{1, 0, 0});
  REQUIRE(abs.a.isZero(0.0));
  auto g = SampleGrid::make(space, 50);
  const double sig = smio::sigma(L, g)[0];
  // Sound (covers the true extrema) and tight to within the sigma slack.
  REQUIRE(abs.e_hi[0] >= 1.0);
  REQUIRE(abs.e_hi[0] <= 1.0 + sig + 1e-9);
  REQUIRE(abs.e_lo[0] <= -1.0);
  REQUIRE(abs.e_lo[0] >= -1.0 - sig - 1e-9);
}

TEST_CASE("dual fast path agrees with the primal simplex") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 2 + static_cast<int>(rng() % 2);
    const int npts = 6 + static_cast<int>(rng() % 10);
    std::vector<Vec> pts;
    std::vector<double> lo, hi;
    for (int s = 0; s < npts; ++s) {
      Vec p(dim);
      for (int i = 0; i < dim; ++i) p[i] = uniform(rng, -2, 2);
      pts.push_back(p);
      const double base = uniform(rng, -1, 1);
      lo.push_back(base - uniform(rng, 0, 0.5));
      hi.push_back(base + uniform(rng, 0, 0.5));
    }
    const double sig = uniform(rng, 0, 0.1);

    auto row = smio::detail::fit_band_row(pts, lo, hi, sig, nullptr);
    REQUIRE(row.feasible);

    // Reference: the same LP through the general primal solver.
    std::vector<smio::LinearConstraint> cons;
    for (int s = 0; s < npts; ++s) {
      Vec cu(dim + 2), cl(dim + 2);
      cu.head(dim) = -pts[s];
      cu[dim] = -1;
      cu[dim + 1] = 0;
      cons.push_back({cu, -hi[s] - sig});
      cl.head(dim) = pts[s];
      cl[dim] = 0;
      cl[dim + 1] = 1;
      cons.push_back({cl, lo[s] - sig});
    }
    Vec c = Vec::Zero(dim + 2);
    c[dim] = 1;
    c[dim + 1] = -1;
    auto ref = smio::solve_lp(c, cons);
    REQUIRE(row.e_hi - row.e_lo == Catch::Approx(ref.objective).margin(1e-6));

    // Feasibility of the fast-path row at every sample.
    for (int s = 0; s < npts; ++s) {
      const double mid = row.a.dot(pts[s]);
      REQUIRE(mid + row.e_hi >= hi[s] + sig - 1e-7);
      REQUIRE(mid + row.e_lo <= lo[s] - sig + 1e-7);
    }
  }
}
