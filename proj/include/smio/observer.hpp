#pragma once

// Recursive interval observer for the augmented state z = [x; d]:
// propagate through the known dynamics and the learned input model, contract
// with each measurement by inverting a local affine abstraction of the
// observation map, then feed the contracted input estimate back into the
// learned model. Every intermediate interval is a sound enclosure of the
// true augmented state; the update step only ever shrinks it.

#include "smio/abstraction.hpp"
#include "smio/decomposition.hpp"
#include "smio/input_model.hpp"
#include "smio/interval.hpp"
#include "smio/systems.hpp"

#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace smio {

struct ObserverConfig {
  int grid_res_global = 2;
  int grid_res_local = 1;  // vertices only; raise for tighter per-step bands
  double tol_mu = 1e-6;
  int max_mu_iters = 10;
  size_t model_window = 0;  // 0 keeps the full history
  bool force_global = false;  // apply global bands instead of per-step local ones
};

// Upper/lower application of an affine band over an interval box:
//   [hi_out; lo_out] = [[J+, -J++], [-J++, J+]] [box.hi; box.lo] + [B; B] u + [e_hi; e_lo]
// with J = [A | W] acting on the stacked (z, w) part of the box.
struct StackedGains {
  Mat j_stack;
  Mat b_stack;
  Vec e_stack;

  static StackedGains make(const Mat& j, const Mat& b, const Vec& e_hi, const Vec& e_lo) {
    const SplitMatrix s = split(j);
    StackedGains g;
    g.j_stack.resize(2 * j.rows(), 2 * j.cols());
    g.j_stack << s.plus, -s.plusplus, -s.plusplus, s.plus;
    g.b_stack.resize(2 * b.rows(), b.cols());
    g.b_stack << b, b;
    g.e_stack.resize(e_hi.size() + e_lo.size());
    g.e_stack << e_hi, e_lo;
    return g;
  }

  // box pairs with J column-wise; u pairs with B.
  IntervalVector apply(const IntervalVector& box, const Vec& u) const {
    Vec stacked(2 * box.size());
    stacked << box.hi, box.lo;
    Vec out = j_stack * stacked + b_stack * u + e_stack;
    const Eigen::Index half = out.size() / 2;
    return IntervalVector(out.tail(half), out.head(half));
  }
};

struct StepRecord {
  int k = 0;
  IntervalVector previous;    // z_{k-1}
  IntervalVector propagated;  // z^p_k after clipping to the declared spaces
  IntervalVector updated;     // z_k
  std::vector<Vec> mu_widths;  // framer widths after each update iteration
  int mu_iters = 0;
  AffineAbstraction local_f;              // band used by the propagation minimum
  IntervalVector d_band;                  // input-model range used for the d block
  std::vector<AffineAbstraction> local_g;  // band per update iteration
};

struct ObserverState {
  SystemSpec spec;
  ObserverConfig config;
  int k = 0;
  IntervalVector framer;  // z_k
  LearnedInputModel model;
  AffineAbstraction global_f, global_g, global_h;
  DecompositionFunction f_decomp;
  std::vector<StepRecord> trace;
};

namespace detail {

inline IntervalVector stack_zeta(const IntervalVector& z, const Vec& u,
                                 const IntervalVector& noise_box) {
  return IntervalVector::concat(IntervalVector::concat(z, IntervalVector::point(u)), noise_box);
}

inline IntervalVector clip_to_spaces(const IntervalVector& z, const SystemSpec& spec,
                                     const char* where) {
  IntervalVector space = spec.z_space();
  try {
    return intersect(z, space);
  } catch (const SoundnessFault&) {
    throw SoundnessFault(std::string(where) +
                         ": framer left the declared operating space entirely");
  }
}

}  // namespace detail

inline ObserverState initialize(const SystemSpec& spec, const IntervalVector& z0_box,
                                const ObserverConfig& config) {
  spec.validate();
  if (z0_box.size() != spec.dims.n + spec.dims.p) {
    throw std::invalid_argument("initialize: z0 dimension mismatch");
  }
  IntervalVector space = spec.z_space();
  for (Eigen::Index i = 0; i < z0_box.size(); ++i) {
    if (z0_box.lo[i] < space.lo[i] || z0_box.hi[i] > space.hi[i]) {
      throw std::invalid_argument("initialize: z0 box outside the declared operating space");
    }
  }

  ObserverState st;
  st.spec = spec;
  st.config = config;
  st.framer = z0_box;
  st.model = LearnedInputModel(spec.lipschitz_h, spec.d_space, config.model_window);

  IntervalVector space_f = IntervalVector::concat(IntervalVector::concat(space, spec.u_space),
                                                  spec.w_box);
  IntervalVector space_g = IntervalVector::concat(IntervalVector::concat(space, spec.u_space),
                                                  spec.v_box);

  st.global_f = abstract_global(spec.f_field(), spec.f_field(), space_f, spec.sigma_lipschitz_f,
                                config.grid_res_global, spec.f_zeta_dims());
  st.global_g = abstract_global(spec.g_field(), spec.g_field(), space_g, spec.sigma_lipschitz_g,
                                config.grid_res_global, spec.g_zeta_dims());
  // The empty model evaluates to the declared input box everywhere, so this
  // is the constant band spanning that box; it stays fixed for the whole run
  // and every later per-step range is nested inside it.
  auto h_pair = st.model.as_pair();
  st.global_h = abstract_horizontal(h_pair.first, h_pair.second, space_f,
                                    Vec::Zero(spec.dims.p), 1, spec.f_zeta_dims());

  st.f_decomp = DecompositionFunction(spec.f_field(), spec.f_jacobian_bounds);
  return st;
}

// One propagation through the known dynamics and the learned input model.
// u_prev is the known input that acted during the transition.
inline IntervalVector propagate(ObserverState& st, const Vec& u_prev, StepRecord* rec = nullptr) {
  const SystemSpec& spec = st.spec;
  const IntervalVector box_f = detail::stack_zeta(st.framer, u_prev, spec.w_box);

  AffineAbstraction band;
  if (st.config.force_global) {
    band = st.global_f;
  } else {
    band = abstract_local(spec.f_field(), spec.f_field(), box_f, st.global_f,
                          spec.sigma_lipschitz_f, st.config.grid_res_local, spec.f_zeta_dims());
  }
  Mat j(band.a.rows(), band.a.cols() + band.w.cols());
  j << band.a, band.w;
  IntervalVector zw = IntervalVector::concat(st.framer, spec.w_box);
  IntervalVector x_band = StackedGains::make(j, band.b, band.e_hi, band.e_lo).apply(zw, u_prev);

  Vec arg_hi(box_f.size()), arg_lo(box_f.size());
  arg_hi << st.framer.hi, u_prev, spec.w_box.hi;
  arg_lo << st.framer.lo, u_prev, spec.w_box.lo;
  const Vec fd_hi = st.f_decomp.eval(arg_hi, arg_lo);
  const Vec fd_lo = st.f_decomp.eval(arg_lo, arg_hi);

  Vec x_hi = fd_hi.cwiseMin(x_band.hi);
  Vec x_lo = fd_lo.cwiseMax(x_band.lo);
  for (Eigen::Index i = 0; i < x_hi.size(); ++i) {
    if (x_lo[i] > x_hi[i]) {
      throw SoundnessFault("propagate: decomposition and band enclosures are disjoint");
    }
  }

  const IntervalVector d_band = st.model.range_over_box(box_f);

  IntervalVector z_p = detail::clip_to_spaces(
      IntervalVector::concat(IntervalVector(x_lo, x_hi), d_band), spec, "propagate");
  if (rec != nullptr) {
    rec->local_f = std::move(band);
    rec->d_band = d_band;
  }
  return z_p;
}

// Iterative measurement-update contraction. Returns the final framer, always
// a subset of z_p.
inline IntervalVector measurement_update(ObserverState& st, const Vec& y, const Vec& u_now,
                                         const IntervalVector& z_p, StepRecord* rec = nullptr) {
  const SystemSpec& spec = st.spec;
  const double inf = std::numeric_limits<double>::infinity();
  IntervalVector cur = z_p;

  for (int iter = 1; iter <= st.config.max_mu_iters; ++iter) {
    const IntervalVector box_g = detail::stack_zeta(cur, u_now, spec.v_box);
    AffineAbstraction band;
    if (st.config.force_global) {
      band = st.global_g;
    } else {
      band = abstract_local(spec.g_field(), spec.g_field(), box_g, st.global_g,
                            spec.sigma_lipschitz_g, st.config.grid_res_local, spec.g_zeta_dims());
    }

    const SplitMatrix ws = split(band.w);
    const Vec base = y - band.b * u_now;
    const Vec t_hi = base + ws.plusplus * spec.v_box.hi - ws.plus * spec.v_box.lo - band.e_lo;
    const Vec t_lo = base - ws.plus * spec.v_box.hi + ws.plusplus * spec.v_box.lo - band.e_hi;

    const IntervalVector az = bound_linear_map(split(band.a), cur);
    const Vec alpha_hi = t_hi.cwiseMin(az.hi);
    const Vec alpha_lo = t_lo.cwiseMax(az.lo);

    const Mat adag = pseudoinverse(band.a);
    const Eigen::VectorXi r =
        rowsupp(Mat(Mat::Identity(adag.rows(), adag.rows()) - adag * band.a));
    const SplitMatrix ds = split(adag);
    Vec cand_hi = ds.plus * alpha_hi - ds.plusplus * alpha_lo;
    Vec cand_lo = ds.plus * alpha_lo - ds.plusplus * alpha_hi;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (r[i] == 1) {  // no measurement information reaches this coordinate
        cand_hi[i] = inf;
        cand_lo[i] = -inf;
      }
    }

    Vec new_hi = cand_hi.cwiseMin(cur.hi);
    Vec new_lo = cand_lo.cwiseMax(cur.lo);
    for (Eigen::Index i = 0; i < new_hi.size(); ++i) {
      if (new_lo[i] > new_hi[i]) {
        // Inversions at rounding scale are pinched to a point; anything
        // larger means the measurement truly contradicts the framer.
        const double tol = 1e-9 * std::max(1.0, std::max(std::abs(new_lo[i]), std::abs(new_hi[i])));
        if (new_lo[i] - new_hi[i] > tol) {
          throw SoundnessFault(
              "measurement_update: measurement is incompatible with the propagated framer "
              "(check noise bounds and declared Lipschitz constants)");
        }
        new_lo[i] = new_hi[i] = 0.5 * (new_lo[i] + new_hi[i]);
      }
    }

    const Vec prev_width = cur.widths();
    cur = IntervalVector(std::move(new_lo), std::move(new_hi));
    if (rec != nullptr) {
      rec->local_g.push_back(std::move(band));
      rec->mu_widths.push_back(cur.widths());
      rec->mu_iters = iter;
    }
    if ((prev_width - cur.widths()).lpNorm<Eigen::Infinity>() < st.config.tol_mu) break;
  }
  return cur;
}

inline void model_update(ObserverState& st, const IntervalVector& prev_zeta_framer,
                         const IntervalVector& new_d_framer) {
  st.model.add_datum(prev_zeta_framer, new_d_framer);
}

// One full observer step: k-1 -> k under known input u_prev during the
// transition, known input u_now and measurement y_now at the new time.
inline const StepRecord& step(ObserverState& st, const Vec& u_prev, const Vec& u_now,
                              const Vec& y_now) {
  StepRecord rec;
  rec.k = st.k + 1;
  rec.previous = st.framer;

  const IntervalVector zeta_prev = detail::stack_zeta(st.framer, u_prev, st.spec.w_box);
  rec.propagated = propagate(st, u_prev, &rec);
  rec.updated = measurement_update(st, y_now, u_now, rec.propagated, &rec);

  st.framer = rec.updated;
  st.k += 1;
  model_update(st, zeta_prev, rec.updated.segment(st.spec.dims.n, st.spec.dims.p));

  st.trace.push_back(std::move(rec));
  return st.trace.back();
}

}  // namespace smio
