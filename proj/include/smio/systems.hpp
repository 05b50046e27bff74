#pragma once

// System descriptions consumed by the observer and the CLI: dimensions,
// vector fields as parsed expressions, noise and operating boxes, Jacobian
// bounds for the known dynamics, and Lipschitz data for the unknown input
// map. A registry provides ready-made benchmark systems.

#include "smio/abstraction.hpp"
#include "smio/decomposition.hpp"
#include "smio/expression.hpp"
#include "smio/interval.hpp"

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smio {

struct SystemDims {
  int n = 0;  // states
  int p = 0;  // unknown inputs
  int m = 0;  // known inputs
  int l = 0;  // measurements
};

// Variable naming convention shared by expressions and config files:
// f and h read (x1..xn, d1..dp, u1..um, w1..wn); g reads (x.., d.., u.., v1..vl).
inline std::vector<std::string> state_stack_names(const SystemDims& dims, bool measurement) {
  std::vector<std::string> names;
  auto push = [&](const char* stem, int count) {
    for (int i = 1; i <= count; ++i) names.push_back(stem + std::to_string(i));
  };
  push("x", dims.n);
  push("d", dims.p);
  push("u", dims.m);
  if (measurement) {
    push("v", dims.l);
  } else {
    push("w", dims.n);
  }
  return names;
}

struct SystemSpec {
  std::string name;
  SystemDims dims;

  std::vector<Expression> f;         // n components over (x, d, u, w)
  std::vector<Expression> g;         // l components over (x, d, u, v)
  std::vector<Expression> h_oracle;  // p components over (x, d, u, w); empty if unavailable

  JacobianBounds f_jacobian_bounds;  // n rows, n+p+m+n columns

  IntervalVector w_box;  // dimension n
  IntervalVector v_box;  // dimension l
  IntervalVector x_space, d_space, u_space;
  IntervalVector x0_box, d0_box;

  Vec lipschitz_h;         // cone slopes for the learned input model, per output
  Vec sigma_lipschitz_f;   // residual slack rates for band fitting, per output
  Vec sigma_lipschitz_g;
  Vec sigma_lipschitz_h;   // used when abstracting a known h directly

  int f_input_dim() const { return dims.n + dims.p + dims.m + dims.n; }
  int g_input_dim() const { return dims.n + dims.p + dims.m + dims.l; }
  ZetaDims f_zeta_dims() const { return {dims.n + dims.p, dims.m, dims.n}; }
  ZetaDims g_zeta_dims() const { return {dims.n + dims.p, dims.m, dims.l}; }
  bool has_h_oracle() const { return !h_oracle.empty(); }

  IntervalVector z_space() const { return IntervalVector::concat(x_space, d_space); }

  Vec eval_f(const Vec& x, const Vec& d, const Vec& u, const Vec& w) const {
    return eval_stack(f, x, d, u, w);
  }
  Vec eval_g(const Vec& x, const Vec& d, const Vec& u, const Vec& v) const {
    return eval_stack(g, x, d, u, v);
  }
  Vec eval_h(const Vec& x, const Vec& d, const Vec& u, const Vec& w) const {
    if (!has_h_oracle()) throw std::logic_error("eval_h: no oracle for the unknown input map");
    return eval_stack(h_oracle, x, d, u, w);
  }

  // Handles over the stacked input, in the declared variable order.
  VectorField f_field() const { return field_of(f); }
  VectorField g_field() const { return field_of(g); }
  VectorField h_field() const {
    if (!has_h_oracle()) throw std::logic_error("h_field: no oracle for the unknown input map");
    return field_of(h_oracle);
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("SystemSpec: " + what); };
    if (dims.n < 1 || dims.p < 1 || dims.m < 0 || dims.l < 1) fail("bad dimensions");
    if (static_cast<int>(f.size()) != dims.n) fail("f component count");
    if (static_cast<int>(g.size()) != dims.l) fail("g component count");
    if (!h_oracle.empty() && static_cast<int>(h_oracle.size()) != dims.p) fail("h component count");
    if (f_jacobian_bounds.a.rows() != dims.n || f_jacobian_bounds.a.cols() != f_input_dim()) {
      fail("f Jacobian bound shape");
    }
    if (w_box.size() != dims.n) fail("w box dimension");
    if (v_box.size() != dims.l) fail("v box dimension");
    if (x_space.size() != dims.n || d_space.size() != dims.p || u_space.size() != dims.m) {
      fail("operating space dimension");
    }
    if (x0_box.size() != dims.n || d0_box.size() != dims.p) fail("initial box dimension");
    for (Eigen::Index i = 0; i < x0_box.size(); ++i) {
      if (x0_box.lo[i] < x_space.lo[i] || x0_box.hi[i] > x_space.hi[i]) {
        fail("initial state box outside the state space");
      }
    }
    for (Eigen::Index i = 0; i < d0_box.size(); ++i) {
      if (d0_box.lo[i] < d_space.lo[i] || d0_box.hi[i] > d_space.hi[i]) {
        fail("initial input box outside the input space");
      }
    }
    if (lipschitz_h.size() != dims.p || (lipschitz_h.array() < 0).any()) fail("lipschitz_h");
    if (sigma_lipschitz_f.size() != dims.n) fail("sigma_lipschitz_f size");
    if (sigma_lipschitz_g.size() != dims.l) fail("sigma_lipschitz_g size");
    if (sigma_lipschitz_h.size() != dims.p) fail("sigma_lipschitz_h size");
  }

 private:
  static Vec eval_stack(const std::vector<Expression>& field, const Vec& a, const Vec& b,
                        const Vec& c, const Vec& d) {
    std::vector<double> buf;
    buf.reserve(static_cast<size_t>(a.size() + b.size() + c.size() + d.size()));
    for (const Vec* part : {&a, &b, &c, &d}) {
      for (Eigen::Index i = 0; i < part->size(); ++i) buf.push_back((*part)[i]);
    }
    Vec out(field.size());
    for (size_t i = 0; i < field.size(); ++i) out[static_cast<Eigen::Index>(i)] = field[i].eval(buf);
    return out;
  }

  static VectorField field_of(std::vector<Expression> field) {
    return [field = std::move(field)](const Vec& zeta) {
      Vec out(field.size());
      for (size_t i = 0; i < field.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = field[i].eval(zeta.data());
      }
      return out;
    };
  }
};

namespace detail {

inline std::vector<Expression> parse_field(const std::vector<std::string>& sources,
                                           const std::vector<std::string>& vars) {
  std::vector<Expression> out;
  out.reserve(sources.size());
  for (const std::string& src : sources) out.push_back(parse(src, vars));
  return out;
}

// Two-state benchmark: mildly nonlinear known dynamics with additive process
// noise, a two-channel nonlinear measurement, and a two-dimensional unknown
// input evolving through a bounded self-map of its box (so the declared input
// space is forward invariant).
inline SystemSpec make_deangelis_modified() {
  SystemSpec s;
  s.name = "deangelis_modified";
  s.dims = {2, 2, 1, 2};

  const auto fvars = state_stack_names(s.dims, false);
  const auto gvars = state_stack_names(s.dims, true);
  s.f = parse_field({"0.6*x1 - 0.12*x2 + 1.1*sin(0.3*x2 - 0.2*x1) + w1",
                     "-0.2*x1 - 0.14*x2 + w2"},
                    fvars);
  s.g = parse_field({"0.2*x1 + 0.65*x2 + 0.8*sin(0.3*x1 + 0.2*x2) + v1", "sin(x1) + v2"}, gvars);
  s.h_oracle = parse_field({"0.1*cos(d1)", "1/(1 + exp(d2)) - 0.1*d1"}, fvars);

  // Entry-wise bounds on the Jacobian of f over the operating region; the
  // epsilon on the affine row keeps the entries in open intervals.
  const double eps = 1e-6;
  Mat ja = Mat::Zero(2, 7), jb = Mat::Zero(2, 7);
  ja(0, 0) = 0.38;
  jb(0, 0) = 0.82;
  ja(0, 1) = -0.46;
  jb(0, 1) = 0.21;
  ja(1, 0) = -0.2 - eps;
  jb(1, 0) = -0.2 + eps;
  ja(1, 1) = -0.14 - eps;
  jb(1, 1) = -0.14 + eps;
  ja(0, 5) = jb(0, 5) = 1.0;
  ja(1, 6) = jb(1, 6) = 1.0;
  s.f_jacobian_bounds = JacobianBounds(ja, jb);

  Vec two02 = Vec::Constant(2, 0.2);
  s.w_box = IntervalVector(-two02, two02);
  s.v_box = IntervalVector(-two02, two02);

  s.x_space = IntervalVector(Vec::Constant(2, -7.0), Vec::Constant(2, 7.0));
  Vec dlo(2), dhi(2);
  dlo << -0.3, -0.2;
  dhi << 0.3, 1.2;
  s.d_space = IntervalVector(dlo, dhi);
  s.u_space = IntervalVector::point(Vec::Zero(1));

  Vec xlo(2), xhi(2);
  xlo << -1.1, -2.0;
  xhi << 2.0, 1.1;
  s.x0_box = IntervalVector(xlo, xhi);
  s.d0_box = s.d_space;

  // Cone slopes: |d h1| <= 0.1; h2's gradient never exceeds (0.1, 0.25) entrywise.
  Vec lh(2);
  lh << 0.1, 0.27;
  s.lipschitz_h = lh;

  // Residual slack rates for band fitting: zero only where the component is
  // exactly affine (grids always sample cell corners).
  Vec sf(2), sg(2), sh(2);
  sf << 1.5, 0.0;
  sg << 1.5, 3.0;
  sh << 0.3, 0.6;
  s.sigma_lipschitz_f = sf;
  s.sigma_lipschitz_g = sg;
  s.sigma_lipschitz_h = sh;

  s.validate();
  return s;
}

}  // namespace detail

inline std::vector<std::string> builtin_names() { return {"deangelis_modified"}; }

inline SystemSpec builtin(const std::string& name) {
  if (name == "deangelis_modified") return detail::make_deangelis_modified();
  std::ostringstream msg;
  msg << "unknown system '" << name << "'; available:";
  for (const std::string& s : builtin_names()) msg << ' ' << s;
  throw std::invalid_argument(msg.str());
}

}  // namespace smio
