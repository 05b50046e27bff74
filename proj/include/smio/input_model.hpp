#pragma once

// Data-driven over-approximation of the unknown input map.
//
// Each observed transition contributes a "cone" datum: the successor unknown
// input d_{s+1} = h(zeta_s) lies in a known output interval while zeta_s lies
// in a known input framer. For an L_j-Lipschitz h_j this pins h_j under
//
//   upper_j(zeta) = min_s ( d_hi_{s,j} + L_j ||zeta - mid_s|| + eps_{s,j} )
//
// capped by the declared output domain, and symmetrically above the lower
// envelope. The slack eps_{s,j} = 2 L_j ||framer width|| covers not knowing
// zeta_s exactly within its framer. Minima over a growing data set only
// tighten, which gives monotone-in-time envelopes by construction.

#include "smio/abstraction.hpp"
#include "smio/interval.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace smio {

struct DataPoint {
  Vec input_mid;        // midpoint of the input framer
  double input_width;   // 2-norm of the framer width vector
  IntervalVector output;
  Vec eps;              // 2 L_j input_width per output j
};

class LearnedInputModel {
 public:
  LearnedInputModel() = default;

  // window = 0 keeps the full history. A positive window drops the oldest
  // data beyond it; that trades memory for voiding the monotone-in-time
  // guarantee across the cap boundary.
  LearnedInputModel(Vec lipschitz, IntervalVector domain_output_box, size_t window = 0)
      : lipschitz_(std::move(lipschitz)),
        domain_output_(std::move(domain_output_box)),
        window_(window) {
    if (lipschitz_.size() != domain_output_.size()) {
      throw std::invalid_argument("LearnedInputModel: lipschitz/domain size mismatch");
    }
    if ((lipschitz_.array() < 0.0).any()) {
      throw std::invalid_argument("LearnedInputModel: negative Lipschitz constant");
    }
  }

  const Vec& lipschitz() const { return lipschitz_; }
  const IntervalVector& domain_output_box() const { return domain_output_; }
  const std::vector<DataPoint>& data() const { return data_; }
  Eigen::Index outputs() const { return lipschitz_.size(); }

  void add_datum(const IntervalVector& input_framer, const IntervalVector& output_framer) {
    if (output_framer.size() != outputs()) {
      throw std::invalid_argument("add_datum: output dimension mismatch");
    }
    if (!data_.empty() && data_.front().input_mid.size() != input_framer.size()) {
      throw std::invalid_argument("add_datum: input dimension mismatch");
    }
    DataPoint p;
    p.input_mid = input_framer.midpoint();
    p.input_width = input_framer.width();
    p.output = output_framer;
    p.eps = 2.0 * p.input_width * lipschitz_;
    data_.push_back(std::move(p));
    if (window_ > 0 && data_.size() > window_) {
      data_.erase(data_.begin(), data_.begin() + (data_.size() - window_));
    }
  }

  double eval_upper(const Vec& zeta, Eigen::Index j) const {
    double best = domain_output_.hi[j];
    const double lj = lipschitz_[j];
    for (const DataPoint& p : data_) {
      const double cone = p.output.hi[j] + lj * (zeta - p.input_mid).norm() + p.eps[j];
      best = std::min(best, cone);
    }
    return best;
  }

  double eval_lower(const Vec& zeta, Eigen::Index j) const {
    double best = domain_output_.lo[j];
    const double lj = lipschitz_[j];
    for (const DataPoint& p : data_) {
      const double cone = p.output.lo[j] - lj * (zeta - p.input_mid).norm() - p.eps[j];
      best = std::max(best, cone);
    }
    return best;
  }

  Vec upper(const Vec& zeta) const {
    Vec v(outputs());
    for (Eigen::Index j = 0; j < outputs(); ++j) v[j] = eval_upper(zeta, j);
    return v;
  }

  Vec lower(const Vec& zeta) const {
    Vec v(outputs());
    for (Eigen::Index j = 0; j < outputs(); ++j) v[j] = eval_lower(zeta, j);
    return v;
  }

  // Interval enclosing the envelope pair over a whole box:
  //   max_box upper_j <= min_s ( d_hi_{s,j} + eps_{s,j} + L_j maxdist(box, mid_s) )
  // (each cone's exact maximum over the box; the min over cones of the
  // per-cone maxima over-approximates the maximum of the min). Used for
  // interval propagation without sampling.
  IntervalVector range_over_box(const IntervalVector& zeta_box) const {
    Vec hi = domain_output_.hi;
    Vec lo = domain_output_.lo;
    for (const DataPoint& p : data_) {
      double far_sq = 0.0;
      for (Eigen::Index i = 0; i < zeta_box.size(); ++i) {
        const double dev = std::max(std::abs(zeta_box.lo[i] - p.input_mid[i]),
                                    std::abs(zeta_box.hi[i] - p.input_mid[i]));
        far_sq += dev * dev;
      }
      const double far = std::sqrt(far_sq);
      for (Eigen::Index j = 0; j < outputs(); ++j) {
        hi[j] = std::min(hi[j], p.output.hi[j] + p.eps[j] + lipschitz_[j] * far);
        lo[j] = std::max(lo[j], p.output.lo[j] - p.eps[j] - lipschitz_[j] * far);
      }
    }
    for (Eigen::Index j = 0; j < outputs(); ++j) {
      if (lo[j] > hi[j]) {
        throw SoundnessFault("LearnedInputModel: inconsistent data (lower envelope above upper)");
      }
    }
    return IntervalVector(std::move(lo), std::move(hi));
  }

  // The envelope pair as vector fields for the abstraction machinery. The
  // handles reference this model; use them before the next add_datum.
  std::pair<VectorField, VectorField> as_pair() const {
    VectorField lo = [this](const Vec& zeta) { return lower(zeta); };
    VectorField hi = [this](const Vec& zeta) { return upper(zeta); };
    return {std::move(lo), std::move(hi)};
  }

  // Plain-text snapshot, one datum per line.
  std::string serialize() const {
    std::ostringstream out;
    char buf[32];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << buf;
    };
    const Eigen::Index zd = data_.empty() ? 0 : data_.front().input_mid.size();
    out << "smio-model-dump v1\n";
    out << "outputs " << outputs() << " zeta_dim " << zd << " count " << data_.size() << "\n";
    out << "lipschitz";
    for (Eigen::Index j = 0; j < outputs(); ++j) {
      out << ' ';
      put(lipschitz_[j]);
    }
    out << "\ndomain_output";
    for (Eigen::Index j = 0; j < outputs(); ++j) {
      out << ' ';
      put(domain_output_.lo[j]);
      out << ' ';
      put(domain_output_.hi[j]);
    }
    out << "\n# columns: input_mid*" << zd << " input_width out_lo*" << outputs() << " out_hi*"
        << outputs() << " eps*" << outputs() << "\n";
    for (const DataPoint& p : data_) {
      bool first = true;
      auto field = [&](double v) {
        if (!first) out << ' ';
        first = false;
        put(v);
      };
      for (Eigen::Index i = 0; i < p.input_mid.size(); ++i) field(p.input_mid[i]);
      field(p.input_width);
      for (Eigen::Index j = 0; j < outputs(); ++j) field(p.output.lo[j]);
      for (Eigen::Index j = 0; j < outputs(); ++j) field(p.output.hi[j]);
      for (Eigen::Index j = 0; j < outputs(); ++j) field(p.eps[j]);
      out << "\n";
    }
    return out.str();
  }

  static LearnedInputModel deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string tag, version;
    in >> tag >> version;
    if (tag != "smio-model-dump" || version != "v1") {
      throw std::invalid_argument("model dump: bad header");
    }
    std::string key;
    Eigen::Index outputs = 0, zd = 0;
    size_t count = 0;
    in >> key >> outputs >> key >> zd >> key >> count;
    in >> key;  // "lipschitz"
    Vec lips(outputs);
    for (Eigen::Index j = 0; j < outputs; ++j) in >> lips[j];
    in >> key;  // "domain_output"
    Vec dlo(outputs), dhi(outputs);
    for (Eigen::Index j = 0; j < outputs; ++j) in >> dlo[j] >> dhi[j];
    if (!in) throw std::invalid_argument("model dump: truncated header");
    std::string comment_line;
    std::getline(in, comment_line);  // rest of domain line
    std::getline(in, comment_line);  // "# columns" line

    LearnedInputModel m(lips, IntervalVector(dlo, dhi));
    for (size_t s = 0; s < count; ++s) {
      DataPoint p;
      p.input_mid.resize(zd);
      for (Eigen::Index i = 0; i < zd; ++i) in >> p.input_mid[i];
      in >> p.input_width;
      Vec olo(outputs), ohi(outputs);
      for (Eigen::Index j = 0; j < outputs; ++j) in >> olo[j];
      for (Eigen::Index j = 0; j < outputs; ++j) in >> ohi[j];
      p.output = IntervalVector(olo, ohi);
      p.eps.resize(outputs);
      for (Eigen::Index j = 0; j < outputs; ++j) in >> p.eps[j];
      if (!in) throw std::invalid_argument("model dump: truncated data");
      m.data_.push_back(std::move(p));
    }
    return m;
  }

 private:
  Vec lipschitz_;
  IntervalVector domain_output_;
  size_t window_ = 0;
  std::vector<DataPoint> data_;
};

}  // namespace smio
