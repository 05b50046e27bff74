#pragma once

// Stability certificate for the interval observer. The width recursion of the
// correction/propagation loop is bounded by a linear map selected from a
// finite family of binary diagonal "routing" tuples (D1, D2, D3): D1 picks
// coordinates corrected through the measurement pseudoinverse, D2 picks
// measurement rows charged to noise instead of the slope map, D3 picks rows
// where the decomposition spread is dropped. The certificate enumerates the
// family exhaustively, reports the smallest contraction factor, and derives
// width-bound sequences and steady-state values for the selected tuple.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "smio/interval.hpp"

namespace smio {

// Noise contributions to the additive width term, already multiplied through
// the relevant matrices so the assembly below only blends them per tuple:
//   f_w  = |W^f| dw,   f_cw = C^f_w dw,   g_v = |W^g| dv,   h_w = |W^h| dw.
struct NoiseWidthTerms {
  Vec f_w;
  Vec f_cw;
  Vec g_v;
  Vec h_w;
};

// Band offset spreads e_hi - e_lo per abstraction row.
struct BandSpreads {
  Vec f;
  Vec g;
  Vec h;
};

struct StabilityReport {
  double l_star = std::numeric_limits<double>::infinity();
  Vec d1, d2, d3;  // binary diagonals of the selected tuple
  Mat a_bar;       // contraction matrix of the selected tuple
  Vec delta_bar;   // additive width term (set once widths are supplied)
  long feasible_count = 0;
  std::vector<double> bound_sequence;  // ||width bound vector|| per step
  Vec claimed_limit;                   // expm(a_bar) * delta_bar
  Vec series_limit;                    // (I - a_bar)^{-1} delta_bar if contractive
  bool has_series_limit = false;
  std::string verdict;  // "certified" | "marginally certified" | "not certified"

  // Inputs retained so the width-selection pass can re-enumerate tuples.
  Mat a_f, a_g, a_h, c_f_z;
  Eigen::VectorXi r;
  int n = 0, p = 0, l = 0;
  bool widths_finalized = false;
};

namespace detail {

// Contraction map of the correction step for one (D1, D2) choice.
// Rows with d1 = 0 pass the propagated width through unchanged; rows with
// d1 = 1 route it through |A^{g+}| (I - D2) |A^g|.
inline Mat correction_map(const Vec& d1, const Vec& d2, const Mat& abs_adag, const Mat& abs_ag) {
  const Eigen::Index np = d1.size();
  Mat m = (Vec::Ones(np) - d1).asDiagonal();
  m += d1.asDiagonal() * abs_adag * (Vec::Ones(d2.size()) - d2).asDiagonal() * abs_ag;
  return m;
}

// Growth map of the propagation step for one D3 choice: the state block pays
// the decomposition spread 2 C^f_z on rows where d3 = 0, the input block is
// the learned-model slope magnitude.
inline Mat propagation_map(const Vec& d3, const Mat& abs_af, const Mat& abs_ah, const Mat& c_f_z) {
  const Eigen::Index n = abs_af.rows();
  const Eigen::Index p = abs_ah.rows();
  Mat m(n + p, abs_af.cols());
  m.topRows(n) = abs_af + 2.0 * (Vec::Ones(n) - d3).asDiagonal() * c_f_z;
  m.bottomRows(p) = abs_ah;
  return m;
}

// Additive width contributed by measurement noise and band offsets under
// (D1, D2): only rows routed through the pseudoinverse (d1 = 1) and charged
// to noise (d2 = 1) contribute.
inline Vec correction_offset(const Vec& d1, const Vec& d2, const Mat& abs_adag, const Vec& g_v,
                             const Vec& de_g) {
  const Vec q = d2.asDiagonal() * (g_v + de_g);
  return d1.asDiagonal() * (abs_adag * q);
}

// Additive width contributed by process noise and band offsets under D3.
inline Vec propagation_offset(const Vec& d3, const NoiseWidthTerms& noise, const BandSpreads& e) {
  const Eigen::Index n = noise.f_w.size();
  const Eigen::Index p = noise.h_w.size();
  Vec v(n + p);
  v.head(n) = noise.f_w + 2.0 * (Vec::Ones(n) - d3).asDiagonal() * noise.f_cw + e.f;
  v.tail(p) = noise.h_w + e.h;
  return v;
}

inline Vec bits_to_diag(unsigned mask, Eigen::Index size) {
  Vec d = Vec::Zero(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    if (mask & (1u << i)) d[i] = 1.0;
  }
  return d;
}

// Expands a mask over the free (r = 0) positions of D1 into a full diagonal.
inline Vec d1_from_mask(unsigned mask, const std::vector<int>& free_idx, Eigen::Index np) {
  Vec d = Vec::Zero(np);
  for (size_t b = 0; b < free_idx.size(); ++b) {
    if (mask & (1u << b)) d[free_idx[b]] = 1.0;
  }
  return d;
}

template <typename Fn>
void for_each_tuple(const StabilityReport& rep, const Mat& abs_adag, const Mat& abs_ag,
                    const Mat& abs_af, const Mat& abs_ah, Fn&& fn) {
  std::vector<int> free_idx;
  for (Eigen::Index i = 0; i < rep.r.size(); ++i) {
    if (rep.r[i] == 0) free_idx.push_back(static_cast<int>(i));
  }
  const unsigned n1 = 1u << free_idx.size();
  const unsigned n2 = 1u << rep.l;
  const unsigned n3 = 1u << rep.n;
  for (unsigned m1 = 0; m1 < n1; ++m1) {
    const Vec d1 = d1_from_mask(m1, free_idx, rep.n + rep.p);
    for (unsigned m2 = 0; m2 < n2; ++m2) {
      const Vec d2 = bits_to_diag(m2, rep.l);
      const Mat ag_map = correction_map(d1, d2, abs_adag, abs_ag);
      for (unsigned m3 = 0; m3 < n3; ++m3) {
        const Vec d3 = bits_to_diag(m3, rep.n);
        const Mat fh_map = propagation_map(d3, abs_af, abs_ah, rep.c_f_z);
        fn(d1, d2, d3, ag_map, fh_map);
      }
    }
  }
}

}  // namespace detail

// Exhaustive certificate: minimizes the spectral norm of the one-step width
// map over all admissible routing tuples. d1 entries are forced to zero on
// coordinates the measurement map cannot recover (r_i = 1).
inline StabilityReport check_stability(const Mat& a_f, const Mat& a_g, const Mat& a_h,
                                       const Mat& c_f_z, const Eigen::VectorXi& r) {
  const Eigen::Index n = a_f.rows();
  const Eigen::Index p = a_h.rows();
  const Eigen::Index l = a_g.rows();
  const Eigen::Index np = n + p;
  if (a_f.cols() != np || a_g.cols() != np || a_h.cols() != np) {
    throw std::invalid_argument("check_stability: slope blocks must have n+p columns");
  }
  if (c_f_z.rows() != n || c_f_z.cols() != np) {
    throw std::invalid_argument("check_stability: c_f_z must be n x (n+p)");
  }
  if (r.size() != np) {
    throw std::invalid_argument("check_stability: r must have n+p entries");
  }
  if (np > 24 || l > 24) {
    throw std::invalid_argument("check_stability: enumeration dimension too large");
  }

  StabilityReport rep;
  rep.n = static_cast<int>(n);
  rep.p = static_cast<int>(p);
  rep.l = static_cast<int>(l);
  rep.a_f = a_f;
  rep.a_g = a_g;
  rep.a_h = a_h;
  rep.c_f_z = c_f_z;
  rep.r = r;

  const Mat abs_adag = pseudoinverse(a_g).cwiseAbs();
  const Mat abs_ag = a_g.cwiseAbs();
  const Mat abs_af = a_f.cwiseAbs();
  const Mat abs_ah = a_h.cwiseAbs();

  long count = 0;
  detail::for_each_tuple(rep, abs_adag, abs_ag, abs_af, abs_ah,
                         [&](const Vec& d1, const Vec& d2, const Vec& d3, const Mat& ag_map,
                             const Mat& fh_map) {
                           ++count;
                           const Mat a_bar = ag_map * fh_map;
                           const double norm = spectral_norm(a_bar);
                           if (norm < rep.l_star) {
                             rep.l_star = norm;
                             rep.d1 = d1;
                             rep.d2 = d2;
                             rep.d3 = d3;
                             rep.a_bar = a_bar;
                           }
                         });
  rep.feasible_count = count;

  if (rep.l_star < 1.0 - 1e-9) {
    rep.verdict = "certified";
  } else if (rep.l_star <= 1.0 + 1e-9) {
    rep.verdict = "marginally certified";
  } else {
    rep.verdict = "not certified";
  }
  return rep;
}

// Raw width-bound recursion: v_0 = delta0, v_k = a_bar v_{k-1} + delta_bar,
// which unrolls to v_k = a_bar^k delta0 + sum_{j<k} a_bar^j delta_bar.
// Returns v_1..v_horizon.
inline std::vector<Vec> width_bound_iterates(const Mat& a_bar, const Vec& delta_bar,
                                             const Vec& delta0, int horizon) {
  if (horizon < 1) throw std::invalid_argument("width_bound_iterates: horizon must be >= 1");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(horizon));
  Vec v = delta0;
  for (int k = 1; k <= horizon; ++k) {
    v = a_bar * v + delta_bar;
    out.push_back(v);
  }
  return out;
}

// Finalizes the tuple selection with width data and emits the bound
// sequence. Among contracting tuples (factor < 1) the one minimizing
// ||expm(a_bar) delta_bar|| is chosen; if none contracts, the certificate's
// argmin tuple is kept. Fills delta_bar, claimed/series limits and the
// scalar bound_sequence on the report, and returns the bound vectors
// (callers take sub-norms for per-block traces).
inline std::vector<Vec> width_bound_sequence(StabilityReport& rep, const Vec& delta_z0,
                                             int horizon, const NoiseWidthTerms& noise_widths,
                                             const BandSpreads& e_widths) {
  if (horizon < 1) throw std::invalid_argument("width_bound_sequence: horizon must be >= 1");
  const Eigen::Index n = rep.n, p = rep.p, l = rep.l, np = n + p;
  if (delta_z0.size() != np) {
    throw std::invalid_argument("width_bound_sequence: delta_z0 must have n+p entries");
  }
  if (noise_widths.f_w.size() != n || noise_widths.f_cw.size() != n ||
      noise_widths.g_v.size() != l || noise_widths.h_w.size() != p) {
    throw std::invalid_argument("width_bound_sequence: noise term dimensions");
  }
  if (e_widths.f.size() != n || e_widths.g.size() != l || e_widths.h.size() != p) {
    throw std::invalid_argument("width_bound_sequence: band spread dimensions");
  }

  const Mat abs_adag = pseudoinverse(rep.a_g).cwiseAbs();
  const Mat abs_ag = rep.a_g.cwiseAbs();
  const Mat abs_af = rep.a_f.cwiseAbs();
  const Mat abs_ah = rep.a_h.cwiseAbs();

  const auto assemble_delta = [&](const Vec& d1, const Vec& d2, const Vec& d3,
                                  const Mat& ag_map) {
    const Vec dg = detail::correction_offset(d1, d2, abs_adag, noise_widths.g_v, e_widths.g);
    const Vec dfh = detail::propagation_offset(d3, noise_widths, e_widths);
    return Vec(dg + ag_map * dfh);
  };

  double best_obj = std::numeric_limits<double>::infinity();
  bool found = false;
  detail::for_each_tuple(rep, abs_adag, abs_ag, abs_af, abs_ah,
                         [&](const Vec& d1, const Vec& d2, const Vec& d3, const Mat& ag_map,
                             const Mat& fh_map) {
                           const Mat a_bar = ag_map * fh_map;
                           if (spectral_norm(a_bar) >= 1.0) return;
                           const Vec delta = assemble_delta(d1, d2, d3, ag_map);
                           const double obj = (a_bar.exp() * delta).norm();
                           if (obj < best_obj) {
                             best_obj = obj;
                             found = true;
                             rep.d1 = d1;
                             rep.d2 = d2;
                             rep.d3 = d3;
                             rep.a_bar = a_bar;
                             rep.delta_bar = delta;
                           }
                         });
  if (!found) {
    // No contracting tuple: keep the certificate's argmin and still emit the
    // (non-convergent) bound sequence.
    const Mat ag_map = detail::correction_map(rep.d1, rep.d2, abs_adag, abs_ag);
    rep.delta_bar = assemble_delta(rep.d1, rep.d2, rep.d3, ag_map);
  }

  rep.claimed_limit = rep.a_bar.exp() * rep.delta_bar;
  const double rho = rep.a_bar.eigenvalues().cwiseAbs().maxCoeff();
  if (rho < 1.0) {
    const Mat m = Mat::Identity(np, np) - rep.a_bar;
    rep.series_limit = m.partialPivLu().solve(rep.delta_bar);
    rep.has_series_limit = true;
  } else {
    rep.series_limit = Vec();
    rep.has_series_limit = false;
  }

  const std::vector<Vec> iterates = width_bound_iterates(rep.a_bar, rep.delta_bar, delta_z0, horizon);
  rep.bound_sequence.clear();
  rep.bound_sequence.reserve(iterates.size());
  for (const Vec& v : iterates) rep.bound_sequence.push_back(v.norm());
  rep.widths_finalized = true;
  return iterates;
}

// Steady-state values for the finalized report: the claimed limit
// expm(a_bar) delta_bar, and the geometric-series limit (I - a_bar)^{-1}
// delta_bar when the spectral radius is below one.
inline std::pair<Vec, std::optional<Vec>> steady_state_bounds(const StabilityReport& rep) {
  if (!rep.widths_finalized) {
    throw std::logic_error("steady_state_bounds: width data not supplied yet");
  }
  std::optional<Vec> series;
  if (rep.has_series_limit) series = rep.series_limit;
  return {rep.claimed_limit, series};
}

namespace detail {

inline void write_vec(std::ostream& os, const char* key, const Vec& v) {
  os << key;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    os << ' ' << buf;
  }
  os << '\n';
}

inline void write_mat(std::ostream& os, const char* key, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << key << ' ' << i;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      os << ' ' << buf;
    }
    os << '\n';
  }
}

}  // namespace detail

// Plain-text report, one "key values..." line per field:
//   smio-stability-report v1
//   dims N P L
//   l_star V | verdict W... | feasible_count C | finalized 0/1
//   d1/d2/d3: binary diagonals; r: recoverability flags
//   a_f/a_g/a_h/c_f_z/a_bar ROW v...: matrix rows
//   delta_bar/claimed_limit/series_limit v... (series_limit line absent if none)
//   bounds K v1 ... vK
inline std::string serialize_stability_report(const StabilityReport& rep) {
  std::ostringstream os;
  os << "smio-stability-report v1\n";
  os << "dims " << rep.n << ' ' << rep.p << ' ' << rep.l << '\n';
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", rep.l_star);
  os << "l_star " << buf << '\n';
  os << "verdict " << rep.verdict << '\n';
  os << "feasible_count " << rep.feasible_count << '\n';
  os << "finalized " << (rep.widths_finalized ? 1 : 0) << '\n';
  detail::write_vec(os, "d1", rep.d1);
  detail::write_vec(os, "d2", rep.d2);
  detail::write_vec(os, "d3", rep.d3);
  os << "r";
  for (Eigen::Index i = 0; i < rep.r.size(); ++i) os << ' ' << rep.r[i];
  os << '\n';
  detail::write_mat(os, "a_f", rep.a_f);
  detail::write_mat(os, "a_g", rep.a_g);
  detail::write_mat(os, "a_h", rep.a_h);
  detail::write_mat(os, "c_f_z", rep.c_f_z);
  detail::write_mat(os, "a_bar", rep.a_bar);
  if (rep.widths_finalized) {
    detail::write_vec(os, "delta_bar", rep.delta_bar);
    detail::write_vec(os, "claimed_limit", rep.claimed_limit);
    if (rep.has_series_limit) detail::write_vec(os, "series_limit", rep.series_limit);
    os << "bounds " << rep.bound_sequence.size();
    for (double b : rep.bound_sequence) {
      std::snprintf(buf, sizeof(buf), "%.17g", b);
      os << ' ' << buf;
    }
    os << '\n';
  }
  return os.str();
}

inline StabilityReport parse_stability_report(const std::string& text) {
  std::istringstream is(text);
  std::string header, version;
  is >> header >> version;
  if (header != "smio-stability-report" || version != "v1") {
    throw std::invalid_argument("parse_stability_report: bad header");
  }
  StabilityReport rep;
  const auto read_sized_vec = [&is](Eigen::Index size) {
    Vec v(size);
    for (Eigen::Index i = 0; i < size; ++i) is >> v[i];
    return v;
  };
  std::string key;
  Mat* mats[5] = {&rep.a_f, &rep.a_g, &rep.a_h, &rep.c_f_z, &rep.a_bar};
  const char* mat_keys[5] = {"a_f", "a_g", "a_h", "c_f_z", "a_bar"};
  while (is >> key) {
    if (key == "dims") {
      is >> rep.n >> rep.p >> rep.l;
    } else if (key == "l_star") {
      is >> rep.l_star;
    } else if (key == "verdict") {
      std::string line;
      std::getline(is, line);
      const size_t start = line.find_first_not_of(' ');
      rep.verdict = (start == std::string::npos) ? "" : line.substr(start);
    } else if (key == "feasible_count") {
      is >> rep.feasible_count;
    } else if (key == "finalized") {
      int v = 0;
      is >> v;
      rep.widths_finalized = (v != 0);
    } else if (key == "d1") {
      rep.d1 = read_sized_vec(rep.n + rep.p);
    } else if (key == "d2") {
      rep.d2 = read_sized_vec(rep.l);
    } else if (key == "d3") {
      rep.d3 = read_sized_vec(rep.n);
    } else if (key == "r") {
      rep.r.resize(rep.n + rep.p);
      for (Eigen::Index i = 0; i < rep.r.size(); ++i) is >> rep.r[i];
    } else if (key == "delta_bar") {
      rep.delta_bar = read_sized_vec(rep.n + rep.p);
    } else if (key == "claimed_limit") {
      rep.claimed_limit = read_sized_vec(rep.n + rep.p);
    } else if (key == "series_limit") {
      rep.series_limit = read_sized_vec(rep.n + rep.p);
      rep.has_series_limit = true;
    } else if (key == "bounds") {
      size_t count = 0;
      is >> count;
      rep.bound_sequence.resize(count);
      for (size_t i = 0; i < count; ++i) is >> rep.bound_sequence[i];
    } else {
      bool handled = false;
      for (int m = 0; m < 5 && !handled; ++m) {
        if (key == mat_keys[m]) {
          Eigen::Index row = 0;
          is >> row;
          const Eigen::Index np = rep.n + rep.p;
          const Eigen::Index rows = (m == 0) ? rep.n
                                   : (m == 1) ? rep.l
                                   : (m == 2) ? rep.p
                                   : (m == 3) ? rep.n
                                              : np;
          if (mats[m]->rows() != rows) mats[m]->setZero(rows, np);
          for (Eigen::Index j = 0; j < np; ++j) is >> (*mats[m])(row, j);
          handled = true;
        }
      }
      if (!handled) {
        throw std::invalid_argument("parse_stability_report: unknown key " + key);
      }
    }
  }
  if (!is.eof() && is.fail()) {
    throw std::invalid_argument("parse_stability_report: malformed value");
  }
  return rep;
}

}  // namespace smio
