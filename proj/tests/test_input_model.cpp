#include "smio/input_model.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using smio::DataPoint;
using smio::IntervalVector;
using smio::LearnedInputModel;
using smio::Vec;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

IntervalVector box2(double l0, double h0, double l1, double h1) {
  return IntervalVector(vec2(l0, l1), vec2(h0, h1));
}

// Scalar-output ground truth, Lipschitz with constant 0.3*sqrt(1.25) < 0.5.
double truth(const Vec& zeta) { return 0.3 * std::sin(zeta[0] + 0.5 * zeta[1]); }

// Model populated from noisy-but-consistent observations of `truth`.
LearnedInputModel consistent_model(std::mt19937_64& rng, int count, double half_width) {
  Vec lips(1);
  lips << 0.5;  // over-estimate of the true constant, as the observer would use
  IntervalVector domain(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0));
  LearnedInputModel m(lips, domain);
  for (int s = 0; s < count; ++s) {
    Vec z = vec2(uniform(rng, -3, 3), uniform(rng, -3, 3));
    Vec r = vec2(uniform(rng, 0, half_width), uniform(rng, 0, half_width));
    IntervalVector in(z - r, z + r);
    const double margin = uniform(rng, 0.0, 0.2);
    IntervalVector out(Vec::Constant(1, truth(z) - margin), Vec::Constant(1, truth(z) + margin));
    m.add_datum(in, out);
  }
  return m;
}

}  // namespace

TEST_CASE("slack formula from framer width") {
  Vec lips = vec2(1.0, 1.0);
  LearnedInputModel m(lips, box2(-5, 5, -5, 5));

  m.add_datum(IntervalVector::point(vec2(0.3, -0.1)), box2(0, 1, 0, 1));
  CHECK(m.data().back().input_width == 0.0);
  CHECK(m.data().back().eps[0] == 0.0);
  CHECK(m.data().back().eps[1] == 0.0);

  m.add_datum(box2(0.0, 0.2, 0.0, 0.2), box2(0, 1, 0, 1));
  const double w = std::sqrt(0.2 * 0.2 + 0.2 * 0.2);
  CHECK(m.data().back().input_width == Catch::Approx(w).epsilon(1e-12));
  CHECK(m.data().back().eps[0] == Catch::Approx(0.5657).margin(1e-4));
  CHECK(m.data().back().eps[1] == Catch::Approx(2.0 * w).epsilon(1e-12));
}

TEST_CASE("empty model falls back to the declared output domain") {
  LearnedInputModel m(vec2(1.0, 2.0), box2(-0.3, 0.3, -0.2, 1.2));
  Vec z = vec2(17.0, -4.0);
  CHECK(m.eval_upper(z, 0) == 0.3);
  CHECK(m.eval_upper(z, 1) == 1.2);
  CHECK(m.eval_lower(z, 0) == -0.3);
  CHECK(m.eval_lower(z, 1) == -0.2);
}

TEST_CASE("single-cone evaluation") {
  // eps = 0.1 comes from framer width 0.025 at L = 2.
  Vec lips = Vec::Constant(1, 2.0);
  LearnedInputModel m(lips, IntervalVector(Vec::Constant(1, -100.0), Vec::Constant(1, 100.0)));
  IntervalVector in(Vec::Constant(1, -0.0125), Vec::Constant(1, 0.0125));
  m.add_datum(in, IntervalVector::point(Vec::Constant(1, 1.0)));
  REQUIRE(m.data().front().eps[0] == Catch::Approx(0.1).epsilon(1e-12));

  Vec query = Vec::Constant(1, 0.5);
  CHECK(m.eval_upper(query, 0) == Catch::Approx(2.1).epsilon(1e-12));
  CHECK(m.eval_lower(query, 0) == Catch::Approx(-0.1).margin(1e-12));
}

TEST_CASE("duplicate datum leaves the envelopes unchanged") {
  std::mt19937_64 rng(11);
  Vec lips = Vec::Constant(1, 0.7);
  LearnedInputModel m(lips, IntervalVector(Vec::Constant(1, -3.0), Vec::Constant(1, 3.0)));
  IntervalVector in = box2(-0.5, 0.5, 0.2, 0.6);
  IntervalVector out(Vec::Constant(1, 0.4), Vec::Constant(1, 0.9));
  m.add_datum(in, out);

  std::vector<Vec> probes;
  std::vector<double> up, lo;
  for (int t = 0; t < 100; ++t) {
    Vec z = vec2(uniform(rng, -4, 4), uniform(rng, -4, 4));
    probes.push_back(z);
    up.push_back(m.eval_upper(z, 0));
    lo.push_back(m.eval_lower(z, 0));
  }
  m.add_datum(in, out);
  for (int t = 0; t < 100; ++t) {
    CHECK(m.eval_upper(probes[t], 0) == up[t]);
    CHECK(m.eval_lower(probes[t], 0) == lo[t]);
  }
}

TEST_CASE("pointwise min selects the dominating cone") {
  Vec lips = Vec::Constant(1, 1.0);
  LearnedInputModel m(lips, IntervalVector(Vec::Constant(1, -50.0), Vec::Constant(1, 50.0)));
  // Same apex, same slope: the cone with the smaller constant dominates the min everywhere.
  IntervalVector apex = IntervalVector::point(vec2(0.1, -0.2));
  m.add_datum(apex, IntervalVector(Vec::Constant(1, -0.5), Vec::Constant(1, 0.5)));
  m.add_datum(apex, IntervalVector(Vec::Constant(1, 2.0), Vec::Constant(1, 3.0)));

  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    Vec z = vec2(uniform(rng, -6, 6), uniform(rng, -6, 6));
    const double dist = (z - apex.lo).norm();
    CHECK(m.eval_upper(z, 0) == Catch::Approx(std::min(50.0, 0.5 + dist)).epsilon(1e-12));
    CHECK(m.eval_lower(z, 0) == Catch::Approx(std::max(-50.0, 2.0 - dist)).margin(1e-12));
  }
}

TEST_CASE("consistent data keep the envelopes ordered and containing") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 5; ++rep) {
    LearnedInputModel m = consistent_model(rng, 40, 0.3);
    for (int t = 0; t < 200; ++t) {
      Vec z = vec2(uniform(rng, -3, 3), uniform(rng, -3, 3));
      const double up = m.eval_upper(z, 0);
      const double lo = m.eval_lower(z, 0);
      REQUIRE(lo <= up + 1e-12);
      REQUIRE(lo <= truth(z) + 1e-12);
      REQUIRE(truth(z) <= up + 1e-12);
    }
  }
}

TEST_CASE("adding data never loosens the envelopes") {
  std::mt19937_64 rng(13);
  Vec lips = Vec::Constant(1, 0.5);
  IntervalVector domain(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0));
  LearnedInputModel m(lips, domain);

  std::vector<Vec> probes;
  for (int t = 0; t < 100; ++t) probes.push_back(vec2(uniform(rng, -3, 3), uniform(rng, -3, 3)));

  std::vector<double> up(probes.size(), 0), lo(probes.size(), 0);
  for (size_t t = 0; t < probes.size(); ++t) {
    up[t] = m.eval_upper(probes[t], 0);
    lo[t] = m.eval_lower(probes[t], 0);
  }
  for (int s = 0; s < 30; ++s) {
    Vec z = vec2(uniform(rng, -3, 3), uniform(rng, -3, 3));
    Vec r = vec2(uniform(rng, 0, 0.2), uniform(rng, 0, 0.2));
    const double margin = uniform(rng, 0.0, 0.3);
    m.add_datum(IntervalVector(z - r, z + r),
                IntervalVector(Vec::Constant(1, truth(z) - margin), Vec::Constant(1, truth(z) + margin)));
    for (size_t t = 0; t < probes.size(); ++t) {
      const double u2 = m.eval_upper(probes[t], 0);
      const double l2 = m.eval_lower(probes[t], 0);
      REQUIRE(u2 <= up[t]);
      REQUIRE(l2 >= lo[t]);
      up[t] = u2;
      lo[t] = l2;
    }
  }
}

TEST_CASE("upper envelope is Lipschitz in the query") {
  std::mt19937_64 rng(21);
  LearnedInputModel m = consistent_model(rng, 25, 0.4);
  const double lj = m.lipschitz()[0];
  for (int t = 0; t < 500; ++t) {
    Vec a = vec2(uniform(rng, -4, 4), uniform(rng, -4, 4));
    Vec b = a + vec2(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
    CHECK(std::abs(m.eval_upper(a, 0) - m.eval_upper(b, 0)) <= lj * (a - b).norm() + 1e-12);
    CHECK(std::abs(m.eval_lower(a, 0) - m.eval_lower(b, 0)) <= lj * (a - b).norm() + 1e-12);
  }
}

TEST_CASE("box range encloses the envelope values inside the box") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    LearnedInputModel m = consistent_model(rng, 20, 0.3);
    Vec c = vec2(uniform(rng, -2, 2), uniform(rng, -2, 2));
    Vec r = vec2(uniform(rng, 0.1, 1.5), uniform(rng, 0.1, 1.5));
    IntervalVector box(c - r, c + r);
    IntervalVector range = m.range_over_box(box);
    CHECK(range.lo[0] >= m.domain_output_box().lo[0]);
    CHECK(range.hi[0] <= m.domain_output_box().hi[0]);
    for (int t = 0; t < 200; ++t) {
      Vec z = vec2(uniform(rng, box.lo[0], box.hi[0]), uniform(rng, box.lo[1], box.hi[1]));
      REQUIRE(m.eval_upper(z, 0) <= range.hi[0] + 1e-12);
      REQUIRE(m.eval_lower(z, 0) >= range.lo[0] - 1e-12);
    }
  }
}

TEST_CASE("box range is exact for a single cone") {
  Vec lips = Vec::Constant(1, 1.5);
  LearnedInputModel m(lips, IntervalVector(Vec::Constant(1, -90.0), Vec::Constant(1, 90.0)));
  IntervalVector in = box2(-0.1, 0.1, 0.3, 0.5);
  m.add_datum(in, IntervalVector(Vec::Constant(1, -0.2), Vec::Constant(1, 0.7)));
  IntervalVector box = box2(-1.0, 2.0, -1.0, 1.0);
  IntervalVector range = m.range_over_box(box);

  // One cone and a slack cap: max over the box is attained at the farthest corner.
  double best_hi = -1e30;
  const int res = 400;
  for (int i = 0; i <= res; ++i) {
    for (int j = 0; j <= res; ++j) {
      Vec z = vec2(box.lo[0] + (box.hi[0] - box.lo[0]) * i / res,
                   box.lo[1] + (box.hi[1] - box.lo[1]) * j / res);
      best_hi = std::max(best_hi, m.eval_upper(z, 0));
    }
  }
  CHECK(best_hi <= range.hi[0] + 1e-12);
  CHECK(range.hi[0] - best_hi <= 2e-2);
}

TEST_CASE("snapshot round trip preserves the model") {
  std::mt19937_64 rng(41);
  LearnedInputModel m = consistent_model(rng, 15, 0.25);
  const std::string text = m.serialize();
  REQUIRE(text.rfind("smio-model-dump v1", 0) == 0);

  LearnedInputModel back = LearnedInputModel::deserialize(text);
  REQUIRE(back.data().size() == m.data().size());
  for (size_t s = 0; s < m.data().size(); ++s) {
    CHECK(back.data()[s].input_mid == m.data()[s].input_mid);
    CHECK(back.data()[s].input_width == m.data()[s].input_width);
    CHECK(back.data()[s].eps == m.data()[s].eps);
  }
  for (int t = 0; t < 100; ++t) {
    Vec z = vec2(uniform(rng, -4, 4), uniform(rng, -4, 4));
    CHECK(back.eval_upper(z, 0) == m.eval_upper(z, 0));
    CHECK(back.eval_lower(z, 0) == m.eval_lower(z, 0));
  }
}

TEST_CASE("window cap drops the oldest data") {
  Vec lips = Vec::Constant(1, 1.0);
  LearnedInputModel m(lips, IntervalVector(Vec::Constant(1, -9.0), Vec::Constant(1, 9.0)), 3);
  for (int s = 0; s < 5; ++s) {
    m.add_datum(IntervalVector::point(Vec::Constant(1, double(s))),
                IntervalVector::point(Vec::Constant(1, 0.0)));
  }
  REQUIRE(m.data().size() == 3);
  CHECK(m.data().front().input_mid[0] == 2.0);
  CHECK(m.data().back().input_mid[0] == 4.0);
}

TEST_CASE("dimension mismatches are rejected") {
  LearnedInputModel m(vec2(1.0, 1.0), box2(-1, 1, -1, 1));
  CHECK_THROWS_AS(m.add_datum(IntervalVector::point(vec2(0, 0)),
                              IntervalVector::point(Vec::Constant(1, 0.0))),
                  std::invalid_argument);
  m.add_datum(IntervalVector::point(vec2(0, 0)), box2(-0.5, 0.5, -0.5, 0.5));
  CHECK_THROWS_AS(m.add_datum(IntervalVector::point(Vec::Constant(3, 0.0)), box2(0, 1, 0, 1)),
                  std::invalid_argument);
  CHECK_THROWS(LearnedInputModel(vec2(-1.0, 1.0), box2(-1, 1, -1, 1)));
  CHECK_THROWS(LearnedInputModel(Vec::Constant(3, 1.0), box2(-1, 1, -1, 1)));
}
