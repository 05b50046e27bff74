#pragma once

// Experiment harness: ground-truth simulation, per-seed observer runs with
// CSV traces, certificate assembly in oracle or learned mode, and slice
// dumps of the affine bands. All file output uses 17 significant digits so
// repeated runs with the same config and seed are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "smio/config.hpp"
#include "smio/observer.hpp"
#include "smio/stability.hpp"

namespace smio {

// Deterministic uniforms: the raw 64-bit draw is mapped to [0,1) through the
// top 53 bits so results do not depend on the library's distribution
// implementation.
inline double uniform_sample(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

inline Vec sample_box(std::mt19937_64& rng, const IntervalVector& box) {
  Vec v(box.size());
  for (Eigen::Index i = 0; i < box.size(); ++i) v[i] = uniform_sample(rng, box.lo[i], box.hi[i]);
  return v;
}

// Ground-truth simulator. The process noise w is shared between the state
// map and the unknown-input map, matching the modeled coupling.
struct GroundTruth {
  SystemSpec spec;
  std::mt19937_64 rng;
  Vec x, d;

  GroundTruth(const SystemSpec& s, uint64_t seed) : spec(s), rng(seed) {
    if (!spec.has_h_oracle()) {
      throw ConfigError("simulation requires the true input map h (keys h1..hp)");
    }
    x = sample_box(rng, spec.x0_box);
    d = sample_box(rng, spec.d0_box);
  }

  // Advances the truth one step and returns the new measurement.
  Vec advance(const Vec& u_prev, const Vec& u_now) {
    const Vec w = sample_box(rng, spec.w_box);
    const Vec v = sample_box(rng, spec.v_box);
    const Vec xn = spec.eval_f(x, d, u_prev, w);
    const Vec dn = spec.eval_h(x, d, u_prev, w);
    x = xn;
    d = dn;
    return spec.eval_g(x, d, u_now, v);
  }

  Vec z() const {
    Vec out(x.size() + d.size());
    out << x, d;
    return out;
  }
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline Vec center_input(const SystemSpec& s) {
  if (s.dims.m == 0) return Vec(0);
  return 0.5 * (s.u_space.lo + s.u_space.hi);
}

}  // namespace detail

// Certificate inputs derived from an observer state. The gain matrices come
// from the global bands; the input-map band is either a sloped abstraction
// of the declared true h (oracle mode) or of the learned envelope pair
// (learned mode).
struct CertificateInputs {
  Mat a_f, a_g, a_h, c_f_z;
  Eigen::VectorXi r;
  NoiseWidthTerms noise;
  BandSpreads spreads;
};

inline CertificateInputs assemble_certificate_inputs(const ObserverState& st,
                                                     const std::string& mode) {
  const SystemSpec& s = st.spec;
  const int n = s.dims.n, p = s.dims.p;

  const IntervalVector h_space =
      IntervalVector::concat(IntervalVector::concat(s.z_space(), s.u_space), s.w_box);
  AffineAbstraction hband;
  if (mode == "oracle") {
    if (!s.has_h_oracle()) {
      throw ConfigError("stability_mode=oracle requires the true input map h (keys h1..hp)");
    }
    const VectorField h = s.h_field();
    hband = abstract_global(h, h, h_space, s.sigma_lipschitz_h, st.config.grid_res_global,
                            s.f_zeta_dims());
  } else if (mode == "learned") {
    const auto pr = st.model.as_pair();
    hband = abstract_global(pr.first, pr.second, h_space, s.sigma_lipschitz_h,
                            st.config.grid_res_global, s.f_zeta_dims());
  } else {
    throw ConfigError("stability mode must be oracle or learned, got '" + mode + "'");
  }

  CertificateInputs in;
  in.a_f = st.global_f.a;
  in.a_g = st.global_g.a;
  in.a_h = hband.a;
  const Mat c_full = st.f_decomp.slope();
  in.c_f_z = c_full.leftCols(n + p);
  const Mat adag = pseudoinverse(in.a_g);
  in.r = rowsupp(Mat(Mat::Identity(n + p, n + p) - adag * in.a_g));
  in.noise = NoiseWidthTerms{st.global_f.w.cwiseAbs() * s.w_box.widths(),
                             c_full.rightCols(n) * s.w_box.widths(),
                             st.global_g.w.cwiseAbs() * s.v_box.widths(),
                             hband.w.cwiseAbs() * s.w_box.widths()};
  in.spreads = BandSpreads{st.global_f.e_hi - st.global_f.e_lo,
                           st.global_g.e_hi - st.global_g.e_lo, hband.e_hi - hband.e_lo};
  return in;
}

// Runs the full certificate: enumeration, verdict and the finite width-bound
// sequence started from delta0 (the initial framer widths). The per-step
// iterate vectors are returned so callers can split them into state and
// input sub-norms.
inline std::vector<Vec> certify(StabilityReport& rep, const ObserverState& st,
                                const std::string& mode, const Vec& delta0, int horizon) {
  const CertificateInputs in = assemble_certificate_inputs(st, mode);
  rep = check_stability(in.a_f, in.a_g, in.a_h, in.c_f_z, in.r);
  return width_bound_sequence(rep, delta0, horizon, in.noise, in.spreads);
}

struct SeedOutcome {
  uint64_t seed = 0;
  bool contained = true;  // truth inside the framer at every emitted step
  int fault_k = -1;       // first step with a violation or soundness fault, -1 if none
  std::string message;
  std::filesystem::path csv_path;
};

namespace detail {

struct TraceRow {
  int k = 0;
  Vec x_true, d_true;
  IntervalVector framer;
  int mu_iters = 0;
  bool contained = true;
};

inline void write_trace_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                            uint64_t seed, const std::vector<TraceRow>& rows,
                            const Vec& delta0, const std::vector<Vec>& bound_iterates,
                            const std::string& fault_note) {
  const SystemSpec& s = cfg.system;
  const int n = s.dims.n, p = s.dims.p;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  out << "# smio trace v1\n";
  out << "# system=" << s.name << " seed=" << seed << " horizon=" << cfg.horizon
      << " stability_mode=" << cfg.stability_mode << "\n";
  out << "# noise law: w_k and v_k drawn i.i.d. uniform over the declared boxes below;"
         " w_k is shared by the state map and the input map\n";
  const auto box_note = [&out](const char* name, const IntervalVector& b) {
    out << "# " << name << " =";
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      out << " [" << detail::fmt17(b.lo[i]) << "," << detail::fmt17(b.hi[i]) << "]";
    }
    out << "\n";
  };
  box_note("w_box", s.w_box);
  box_note("v_box", s.v_box);

  out << "k";
  const auto cols = [&out](const char* stem, const char* suffix, int count) {
    for (int i = 1; i <= count; ++i) out << "," << stem << i << suffix;
  };
  cols("x", "_true", n);
  cols("d", "_true", p);
  cols("x", "_lo", n);
  cols("x", "_hi", n);
  cols("d", "_lo", p);
  cols("d", "_hi", p);
  out << ",width_x_norm,width_d_norm,err_x_norm,err_d_norm,bound_x,bound_d,mu_iters,contained\n";

  for (const TraceRow& row : rows) {
    out << row.k;
    const auto emit = [&out](const Vec& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) out << "," << detail::fmt17(v[i]);
    };
    emit(row.x_true);
    emit(row.d_true);
    emit(row.framer.lo.head(n));
    emit(row.framer.hi.head(n));
    emit(row.framer.lo.tail(p));
    emit(row.framer.hi.tail(p));
    const Vec widths = row.framer.widths();
    out << "," << detail::fmt17(widths.head(n).norm());
    out << "," << detail::fmt17(widths.tail(p).norm());
    const Vec err_lo_x = row.x_true - row.framer.lo.head(n);
    const Vec err_hi_x = row.framer.hi.head(n) - row.x_true;
    const Vec err_lo_d = row.d_true - row.framer.lo.tail(p);
    const Vec err_hi_d = row.framer.hi.tail(p) - row.d_true;
    out << "," << detail::fmt17(std::max(err_lo_x.norm(), err_hi_x.norm()));
    out << "," << detail::fmt17(std::max(err_lo_d.norm(), err_hi_d.norm()));
    double bx, bd;
    if (row.k == 0) {
      bx = delta0.head(n).norm();
      bd = delta0.tail(p).norm();
    } else if (row.k <= static_cast<int>(bound_iterates.size())) {
      const Vec& vk = bound_iterates[static_cast<size_t>(row.k - 1)];
      bx = vk.head(n).norm();
      bd = vk.tail(p).norm();
    } else {
      bx = bd = std::numeric_limits<double>::quiet_NaN();
    }
    out << "," << detail::fmt17(bx) << "," << detail::fmt17(bd);
    out << "," << row.mu_iters << "," << (row.contained ? 1 : 0) << "\n";
  }
  if (!fault_note.empty()) out << "# " << fault_note << "\n";
}

}  // namespace detail

// One full experiment for one seed: simulate, observe, certify, and write
// trace.csv, model.txt and stability.txt under <out>/seed_<seed>/.
// Containment is judged with a small absolute slack so boundary contacts at
// rounding scale do not count as violations.
inline SeedOutcome run_one_seed(const ExperimentConfig& cfg, uint64_t seed) {
  constexpr double kContainSlack = 1e-9;
  const SystemSpec& s = cfg.system;

  const std::filesystem::path dir =
      std::filesystem::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
  std::filesystem::create_directories(dir);

  ObserverState st = initialize(s, IntervalVector::concat(s.x0_box, s.d0_box), cfg.observer);
  const Vec delta0 = st.framer.widths();
  GroundTruth sim(s, seed);
  const Vec u = detail::center_input(s);

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.csv_path = dir / "trace.csv";

  std::vector<detail::TraceRow> rows;
  rows.reserve(static_cast<size_t>(cfg.horizon) + 1);
  {
    detail::TraceRow row;
    row.k = 0;
    row.x_true = sim.x;
    row.d_true = sim.d;
    row.framer = st.framer;
    row.contained = st.framer.contains(sim.z(), kContainSlack);
    rows.push_back(row);
    if (!row.contained) {
      outcome.contained = false;
      outcome.fault_k = 0;
      outcome.message = "truth outside the initial framer";
    }
  }

  std::string fault_note;
  for (int k = 1; k <= cfg.horizon; ++k) {
    Vec y;
    try {
      y = sim.advance(u, u);
      const StepRecord& rec = step(st, u, u, y);
      detail::TraceRow row;
      row.k = k;
      row.x_true = sim.x;
      row.d_true = sim.d;
      row.framer = st.framer;
      row.mu_iters = rec.mu_iters;
      row.contained = st.framer.contains(sim.z(), kContainSlack);
      rows.push_back(row);
      if (!row.contained && outcome.fault_k < 0) {
        outcome.contained = false;
        outcome.fault_k = k;
        outcome.message = "truth left the framer";
      }
    } catch (const SoundnessFault& e) {
      outcome.contained = false;
      outcome.fault_k = k;
      outcome.message = e.what();
      fault_note = "FAULT k=" + std::to_string(k) + " " + e.what();
      break;
    }
  }

  StabilityReport rep;
  std::vector<Vec> iterates = certify(rep, st, cfg.stability_mode, delta0, cfg.stability_steps());
  {
    std::ofstream rout(dir / "stability.txt");
    rout << serialize_stability_report(rep);
  }

  {
    std::ofstream mout(dir / "model.txt");
    mout << st.model.serialize();
  }
  detail::write_trace_csv(outcome.csv_path, cfg, seed, rows, delta0, iterates, fault_note);
  return outcome;
}

// Exit status contract: 0 when every seed kept the truth inside the framer
// at every step, 2 as soon as any seed saw a violation or soundness fault.
// Configuration problems throw ConfigError before any seed runs.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log,
                          std::vector<SeedOutcome>* outcomes = nullptr) {
  int status = 0;
  for (uint64_t seed : cfg.seeds) {
    SeedOutcome oc = run_one_seed(cfg, seed);
    log << "seed " << oc.seed << ": "
        << (oc.contained ? "containment held"
                         : ("FAULT at k=" + std::to_string(oc.fault_k) + ": " + oc.message))
        << " (" << oc.csv_path.string() << ")\n";
    if (!oc.contained) status = 2;
    if (outcomes != nullptr) outcomes->push_back(std::move(oc));
  }
  return status;
}

// Certificate entry point for the stability subcommand. Learned mode first
// runs the observer for the configured horizon (first seed, or the override)
// so the envelope pair has data behind it; oracle mode abstracts the
// declared h directly and runs nothing.
inline StabilityReport run_stability(const ExperimentConfig& cfg, std::ostream& out) {
  const SystemSpec& s = cfg.system;
  ObserverState st = initialize(s, IntervalVector::concat(s.x0_box, s.d0_box), cfg.observer);
  const Vec delta0 = st.framer.widths();

  if (cfg.stability_mode == "learned") {
    GroundTruth sim(s, cfg.seeds.front());
    const Vec u = detail::center_input(s);
    for (int k = 1; k <= cfg.horizon; ++k) {
      const Vec y = sim.advance(u, u);
      step(st, u, u, y);
    }
  }

  StabilityReport rep;
  certify(rep, st, cfg.stability_mode, delta0, cfg.stability_steps());

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / "stability.txt";
  std::ofstream fout(path);
  fout << serialize_stability_report(rep);

  out << "l_star = " << detail::fmt17(rep.l_star) << "\n";
  out << "verdict = " << rep.verdict << "\n";
  out << "feasible tuples = " << rep.feasible_count << "\n";
  out << "report = " << path.string() << "\n";
  return rep;
}

// Slice dump: sweeps one stacked input coordinate across its box while
// holding the others at the box center, and emits the target value together
// with the local and global band heights at each sample. For target h the
// "local" band is the learned envelope pair and the "global" band is the
// fixed declared-input-box band.
inline std::filesystem::path run_abstract(const ExperimentConfig& cfg, uint64_t seed,
                                          std::ostream& log) {
  const SystemSpec& s = cfg.system;
  const AbstractRequest& req = cfg.abstract_req;

  ObserverState st = initialize(s, IntervalVector::concat(s.x0_box, s.d0_box), cfg.observer);
  if (req.run_steps > 0) {
    GroundTruth sim(s, seed);
    const Vec u = detail::center_input(s);
    for (int k = 1; k <= req.run_steps; ++k) {
      const Vec y = sim.advance(u, u);
      step(st, u, u, y);
    }
  }

  const Vec u = detail::center_input(s);
  const bool target_g = req.target == "g";
  const IntervalVector noise_box = target_g ? s.v_box : s.w_box;
  const IntervalVector box = IntervalVector::concat(
      IntervalVector::concat(st.framer, IntervalVector::point(u)), noise_box);
  const int rows_out = req.target == "f" ? s.dims.n : (target_g ? s.dims.l : s.dims.p);
  if (req.row < 0 || req.row >= rows_out) {
    throw ConfigError("config [abstract] row: out of range for target " + req.target);
  }
  if (req.dim < 0 || req.dim >= box.size()) {
    throw ConfigError("config [abstract] dim: out of range for the stacked input");
  }

  AffineAbstraction local, global;
  VectorField truth;
  bool have_truth = true;
  if (req.target == "f") {
    global = st.global_f;
    truth = s.f_field();
    local = req.slope_zero
                ? abstract_horizontal(truth, truth, box, s.sigma_lipschitz_f, 1, s.f_zeta_dims())
                : abstract_local(truth, truth, box, st.global_f, s.sigma_lipschitz_f,
                                 cfg.observer.grid_res_local, s.f_zeta_dims());
  } else if (target_g) {
    global = st.global_g;
    truth = s.g_field();
    local = req.slope_zero
                ? abstract_horizontal(truth, truth, box, s.sigma_lipschitz_g, 1, s.g_zeta_dims())
                : abstract_local(truth, truth, box, st.global_g, s.sigma_lipschitz_g,
                                 cfg.observer.grid_res_local, s.g_zeta_dims());
  } else {
    global = st.global_h;
    have_truth = s.has_h_oracle();
    if (have_truth) truth = s.h_field();
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path path =
      std::filesystem::path(cfg.out_dir) / ("abstract_" + req.target + ".csv");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# smio abstract slice v1\n";
  out << "# system=" << s.name << " target=" << req.target << " row=" << req.row
      << " dim=" << req.dim << " run_steps=" << req.run_steps << " seed=" << seed << "\n";
  out << "t,q,local_lo,local_hi,global_lo,global_hi\n";

  const Vec mid = 0.5 * (box.lo + box.hi);
  const int j = req.row;
  for (int i = 0; i < req.samples; ++i) {
    const double t = box.lo[req.dim] + (box.hi[req.dim] - box.lo[req.dim]) * i /
                                           static_cast<double>(req.samples - 1);
    Vec pt = mid;
    pt[req.dim] = t;
    double q = std::numeric_limits<double>::quiet_NaN();
    if (have_truth) q = truth(pt)[j];
    // Band value at a full stacked point: slopes apply blockwise to the
    // (z, u, noise) segments of the point itself so sweeping a u coordinate
    // works too.
    const auto band_at = [&pt, j](const AffineAbstraction& band) {
      double proj = band.a.row(j).dot(pt.head(band.a.cols()));
      if (band.b.cols() > 0) proj += band.b.row(j).dot(pt.segment(band.a.cols(), band.b.cols()));
      if (band.w.cols() > 0) proj += band.w.row(j).dot(pt.tail(band.w.cols()));
      return proj;
    };
    double llo, lhi;
    if (req.target == "h") {
      llo = st.model.lower(pt)[j];
      lhi = st.model.upper(pt)[j];
    } else {
      const double proj = band_at(local);
      llo = proj + local.e_lo[j];
      lhi = proj + local.e_hi[j];
    }
    const double gproj = band_at(global);
    out << detail::fmt17(t) << "," << detail::fmt17(q) << "," << detail::fmt17(llo) << ","
        << detail::fmt17(lhi) << "," << detail::fmt17(gproj + global.e_lo[j]) << ","
        << detail::fmt17(gproj + global.e_hi[j]) << "\n";
  }
  log << "slice written to " << path.string() << "\n";
  return path;
}

// Runs the observer for the configured horizon and writes the learned input
// model snapshot.
inline std::filesystem::path dump_model(const ExperimentConfig& cfg, uint64_t seed,
                                        std::ostream& log) {
  const SystemSpec& s = cfg.system;
  ObserverState st = initialize(s, IntervalVector::concat(s.x0_box, s.d0_box), cfg.observer);
  GroundTruth sim(s, seed);
  const Vec u = detail::center_input(s);
  for (int k = 1; k <= cfg.horizon; ++k) {
    const Vec y = sim.advance(u, u);
    step(st, u, u, y);
  }
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path path = std::filesystem::path(cfg.out_dir) / "model.txt";
  std::ofstream out(path);
  out << st.model.serialize();
  log << "model written to " << path.string() << " (" << st.model.data().size() << " data)\n";
  return path;
}

}  // namespace smio
