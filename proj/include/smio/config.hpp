#pragma once

// Experiment configuration: a line-oriented key = value format with
// [section] headers, '#' comments, quoted expression strings and
// whitespace-separated numeric lists. Recognized sections and keys:
//
//   [system]
//     builtin = <name>            use a registered system, or define inline:
//     n/p/m/l = <int>             dimensions
//     f1..fn, g1..gl = "<expr>"   dynamics and measurement expressions
//     h1..hp = "<expr>"           optional true input map (oracle use only)
//     w_box/v_box = lo hi ...     noise boxes, one lo hi pair per dimension
//     x_space/d_space/u_space     operating boxes
//     x0_box/d0_box               initial framer blocks
//     jac_f_lo/jac_f_hi           row-major Jacobian bounds of f
//     lipschitz_h                 cone slopes for the learned input model
//     sigma_lipschitz_f/g/h       residual slopes for abstraction slack
//   [observer]
//     grid_res_global = 2, grid_res_local = 1, tol_mu = 1e-6,
//     max_mu_iters = 10, model_window = 0, force_global = false
//   [run]
//     horizon = 500, seeds = 0 1 2, stability_mode = oracle|learned,
//     stability_horizon = <int> (defaults to horizon)
//   [abstract]
//     target = f|g|h, row = 0, dim = 0, samples = 200, run_steps = 0
//   [output]
//     dir = <path>
//
// Every key can be overridden by an environment variable
// SMIO_<SECTION>_<KEY> (upper case), e.g. SMIO_RUN_HORIZON=100;
// command-line flags take precedence over both.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smio/observer.hpp"
#include "smio/systems.hpp"

namespace smio {

struct AbstractRequest {
  std::string target = "f";  // f | g | h
  int row = 0;               // output row of the target map
  int dim = 0;               // stacked input coordinate swept over the slice
  int samples = 200;
  int run_steps = 0;  // observer steps executed before dumping (for h/local boxes)
  bool slope_zero = false;  // emit the horizontal (slope-free) band instead of the fitted one
};

struct ExperimentConfig {
  SystemSpec system;
  ObserverConfig observer;
  int horizon = 100;
  std::vector<uint64_t> seeds = {0};
  std::string stability_mode = "oracle";  // oracle | learned
  int stability_horizon = 0;              // 0: follow horizon
  std::string out_dir = "out";
  AbstractRequest abstract_req;

  // Length of the certificate's width-bound sequence; tracks the run horizon
  // unless overridden, including overrides applied after parsing.
  int stability_steps() const { return stability_horizon > 0 ? stability_horizon : horizon; }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// section -> key -> raw value, preserving insertion order per section so
// error messages can cite the offending line.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

inline RawConfig parse_raw(std::istream& in) {
  RawConfig raw;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      }
      raw[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    }
    raw[section][key] = value;
  }
  return raw;
}

inline void apply_env_overrides(RawConfig& raw) {
  // Only known sections are scanned; an env var for a key the file did not
  // set still applies (it introduces the key).
  static const char* sections[] = {"system", "observer", "run", "abstract", "output"};
  for (const char* sec : sections) {
    // Candidate keys: those already present plus the fixed vocabulary below.
    std::vector<std::string> keys;
    if (auto it = raw.find(sec); it != raw.end()) {
      for (const auto& [k, v] : it->second) keys.push_back(k);
    }
    static const std::map<std::string, std::vector<std::string>> vocab = {
        {"system", {"builtin"}},
        {"observer",
         {"grid_res_global", "grid_res_local", "tol_mu", "max_mu_iters", "model_window",
          "force_global"}},
        {"run", {"horizon", "seeds", "stability_mode", "stability_horizon"}},
        {"abstract", {"target", "row", "dim", "samples", "run_steps", "slope_zero"}},
        {"output", {"dir"}},
    };
    if (auto it = vocab.find(sec); it != vocab.end()) {
      for (const auto& k : it->second) keys.push_back(k);
    }
    for (const auto& key : keys) {
      const std::string env_name = "SMIO_" + upper(sec) + "_" + upper(key);
      if (const char* v = std::getenv(env_name.c_str())) {
        raw[sec][key] = v;
      }
    }
  }
}

inline double to_double(const std::string& section, const std::string& key,
                        const std::string& value) {
  try {
    size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config [" + section + "] " + key + ": expected a number, got '" + value +
                      "'");
  }
}

inline long to_int(const std::string& section, const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long i = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config [" + section + "] " + key + ": expected an integer, got '" + value +
                      "'");
  }
}

inline bool to_bool(const std::string& section, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config [" + section + "] " + key + ": expected true/false, got '" + value +
                    "'");
}

inline std::vector<double> to_doubles(const std::string& section, const std::string& key,
                                      const std::string& value) {
  std::istringstream is(value);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(to_double(section, key, tok));
  return out;
}

inline Vec to_vec(const std::string& section, const std::string& key, const std::string& value,
                  Eigen::Index expected) {
  const auto vals = to_doubles(section, key, value);
  if (static_cast<Eigen::Index>(vals.size()) != expected) {
    throw ConfigError("config [" + section + "] " + key + ": expected " +
                      std::to_string(expected) + " values, got " + std::to_string(vals.size()));
  }
  Vec v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = vals[static_cast<size_t>(i)];
  return v;
}

inline IntervalVector to_box(const std::string& section, const std::string& key,
                             const std::string& value, Eigen::Index dims) {
  const auto vals = to_doubles(section, key, value);
  if (static_cast<Eigen::Index>(vals.size()) != 2 * dims) {
    throw ConfigError("config [" + section + "] " + key + ": expected " +
                      std::to_string(2 * dims) + " values (lo hi per dimension), got " +
                      std::to_string(vals.size()));
  }
  Vec lo(dims), hi(dims);
  for (Eigen::Index i = 0; i < dims; ++i) {
    lo[i] = vals[static_cast<size_t>(2 * i)];
    hi[i] = vals[static_cast<size_t>(2 * i + 1)];
  }
  return IntervalVector(lo, hi);
}

inline Mat to_mat(const std::string& section, const std::string& key, const std::string& value,
                  Eigen::Index rows, Eigen::Index cols) {
  const auto vals = to_doubles(section, key, value);
  if (static_cast<Eigen::Index>(vals.size()) != rows * cols) {
    throw ConfigError("config [" + section + "] " + key + ": expected " +
                      std::to_string(rows * cols) + " values (row-major), got " +
                      std::to_string(vals.size()));
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = vals[static_cast<size_t>(i * cols + j)];
  }
  return m;
}

inline SystemSpec system_from_section(const std::map<std::string, std::string>& sec) {
  const auto get = [&sec](const std::string& key) -> const std::string* {
    auto it = sec.find(key);
    return it == sec.end() ? nullptr : &it->second;
  };

  if (const std::string* name = get("builtin")) {
    for (const auto& [k, v] : sec) {
      if (k != "builtin") {
        throw ConfigError("config [system]: builtin cannot be combined with key '" + k + "'");
      }
    }
    try {
      return builtin(*name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config [system] builtin: ") + e.what());
    }
  }

  SystemSpec s;
  s.name = "inline";
  const auto require = [&](const char* key) -> const std::string& {
    const std::string* v = get(key);
    if (v == nullptr) throw ConfigError(std::string("config [system]: missing key '") + key + "'");
    return *v;
  };
  s.dims.n = static_cast<int>(to_int("system", "n", require("n")));
  s.dims.p = static_cast<int>(to_int("system", "p", require("p")));
  s.dims.m = static_cast<int>(to_int("system", "m", require("m")));
  s.dims.l = static_cast<int>(to_int("system", "l", require("l")));
  if (s.dims.n < 1 || s.dims.p < 1 || s.dims.m < 0 || s.dims.l < 1) {
    throw ConfigError("config [system]: dimensions must satisfy n>=1, p>=1, m>=0, l>=1");
  }

  const auto fvars = state_stack_names(s.dims, false);
  const auto gvars = state_stack_names(s.dims, true);
  const auto parse_exprs = [&](const char* prefix, int count, const std::vector<std::string>& vars) {
    std::vector<Expression> out;
    for (int i = 1; i <= count; ++i) {
      const std::string key = std::string(prefix) + std::to_string(i);
      const std::string& src = require(key.c_str());
      try {
        out.push_back(parse(unquote(src), vars));
      } catch (const std::exception& e) {
        throw ConfigError("config [system] " + key + ": " + e.what());
      }
    }
    return out;
  };
  s.f = parse_exprs("f", s.dims.n, fvars);
  s.g = parse_exprs("g", s.dims.l, gvars);
  if (get("h1") != nullptr) s.h_oracle = parse_exprs("h", s.dims.p, fvars);

  const Eigen::Index n = s.dims.n, p = s.dims.p, m = s.dims.m, l = s.dims.l;
  s.w_box = to_box("system", "w_box", require("w_box"), n);
  s.v_box = to_box("system", "v_box", require("v_box"), l);
  s.x_space = to_box("system", "x_space", require("x_space"), n);
  s.d_space = to_box("system", "d_space", require("d_space"), p);
  s.u_space = m == 0 ? IntervalVector() : to_box("system", "u_space", require("u_space"), m);
  s.x0_box = to_box("system", "x0_box", require("x0_box"), n);
  s.d0_box = to_box("system", "d0_box", require("d0_box"), p);
  const Eigen::Index fz = n + p + m + n;
  s.f_jacobian_bounds = JacobianBounds(to_mat("system", "jac_f_lo", require("jac_f_lo"), n, fz),
                                       to_mat("system", "jac_f_hi", require("jac_f_hi"), n, fz));
  s.lipschitz_h = to_vec("system", "lipschitz_h", require("lipschitz_h"), p);
  s.sigma_lipschitz_f = to_vec("system", "sigma_lipschitz_f", require("sigma_lipschitz_f"), n);
  s.sigma_lipschitz_g = to_vec("system", "sigma_lipschitz_g", require("sigma_lipschitz_g"), l);
  s.sigma_lipschitz_h = to_vec("system", "sigma_lipschitz_h", require("sigma_lipschitz_h"), p);

  static const char* known[] = {
      "n", "p", "m", "l", "w_box", "v_box", "x_space", "d_space", "u_space", "x0_box", "d0_box",
      "jac_f_lo", "jac_f_hi", "lipschitz_h", "sigma_lipschitz_f", "sigma_lipschitz_g",
      "sigma_lipschitz_h"};
  for (const auto& [k, v] : sec) {
    bool ok = false;
    for (const char* kn : known) ok = ok || (k == kn);
    if (!ok && k.size() >= 2 && (k[0] == 'f' || k[0] == 'g' || k[0] == 'h')) {
      bool digits = true;
      for (size_t i = 1; i < k.size(); ++i) {
        digits = digits && std::isdigit(static_cast<unsigned char>(k[i]));
      }
      ok = digits;
    }
    if (!ok) throw ConfigError("config [system]: unknown key '" + k + "'");
  }

  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config [system]: ") + e.what());
  }
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config_stream(std::istream& in) {
  detail::RawConfig raw = detail::parse_raw(in);
  detail::apply_env_overrides(raw);

  ExperimentConfig cfg;
  for (const auto& [name, kv] : raw) {
    if (name != "system" && name != "observer" && name != "run" && name != "abstract" &&
        name != "output") {
      throw ConfigError("config: unknown section [" + name + "]");
    }
  }
  const auto section = [&raw](const char* name) -> const std::map<std::string, std::string>& {
    static const std::map<std::string, std::string> empty;
    auto it = raw.find(name);
    return it == raw.end() ? empty : it->second;
  };

  {
    const auto& sys = section("system");
    if (sys.empty()) throw ConfigError("config: missing [system] section");
    cfg.system = detail::system_from_section(sys);
  }

  for (const auto& [key, value] : section("observer")) {
    if (key == "grid_res_global") {
      cfg.observer.grid_res_global = static_cast<int>(detail::to_int("observer", key, value));
    } else if (key == "grid_res_local") {
      cfg.observer.grid_res_local = static_cast<int>(detail::to_int("observer", key, value));
    } else if (key == "tol_mu") {
      cfg.observer.tol_mu = detail::to_double("observer", key, value);
    } else if (key == "max_mu_iters") {
      cfg.observer.max_mu_iters = static_cast<int>(detail::to_int("observer", key, value));
    } else if (key == "model_window") {
      cfg.observer.model_window = static_cast<size_t>(detail::to_int("observer", key, value));
    } else if (key == "force_global") {
      cfg.observer.force_global = detail::to_bool("observer", key, value);
    } else {
      throw ConfigError("config [observer]: unknown key '" + key + "'");
    }
  }
  if (cfg.observer.grid_res_global < 1 || cfg.observer.grid_res_local < 1) {
    throw ConfigError("config [observer]: grid resolutions must be >= 1");
  }
  if (cfg.observer.max_mu_iters < 1) {
    throw ConfigError("config [observer]: max_mu_iters must be >= 1");
  }

  for (const auto& [key, value] : section("run")) {
    if (key == "horizon") {
      cfg.horizon = static_cast<int>(detail::to_int("run", key, value));
    } else if (key == "seeds") {
      std::istringstream is(value);
      cfg.seeds.clear();
      std::string tok;
      while (is >> tok) {
        cfg.seeds.push_back(static_cast<uint64_t>(detail::to_int("run", key, tok)));
      }
      if (cfg.seeds.empty()) throw ConfigError("config [run] seeds: at least one seed required");
    } else if (key == "stability_mode") {
      if (value != "oracle" && value != "learned") {
        throw ConfigError("config [run] stability_mode: expected oracle or learned, got '" +
                          value + "'");
      }
      cfg.stability_mode = value;
    } else if (key == "stability_horizon") {
      cfg.stability_horizon = static_cast<int>(detail::to_int("run", key, value));
    } else {
      throw ConfigError("config [run]: unknown key '" + key + "'");
    }
  }
  if (cfg.horizon < 1) throw ConfigError("config [run]: horizon must be >= 1");
  if (cfg.stability_horizon < 0) {
    throw ConfigError("config [run]: stability_horizon must be >= 0");
  }

  for (const auto& [key, value] : section("abstract")) {
    if (key == "target") {
      if (value != "f" && value != "g" && value != "h") {
        throw ConfigError("config [abstract] target: expected f, g or h, got '" + value + "'");
      }
      cfg.abstract_req.target = value;
    } else if (key == "row") {
      cfg.abstract_req.row = static_cast<int>(detail::to_int("abstract", key, value));
    } else if (key == "dim") {
      cfg.abstract_req.dim = static_cast<int>(detail::to_int("abstract", key, value));
    } else if (key == "samples") {
      cfg.abstract_req.samples = static_cast<int>(detail::to_int("abstract", key, value));
    } else if (key == "run_steps") {
      cfg.abstract_req.run_steps = static_cast<int>(detail::to_int("abstract", key, value));
    } else if (key == "slope_zero") {
      cfg.abstract_req.slope_zero = detail::to_bool("abstract", key, value);
    } else {
      throw ConfigError("config [abstract]: unknown key '" + key + "'");
    }
  }
  if (cfg.abstract_req.samples < 2) {
    throw ConfigError("config [abstract]: samples must be >= 2");
  }
  if (cfg.abstract_req.run_steps < 0) {
    throw ConfigError("config [abstract]: run_steps must be >= 0");
  }

  for (const auto& [key, value] : section("output")) {
    if (key == "dir") {
      cfg.out_dir = value;
    } else {
      throw ConfigError("config [output]: unknown key '" + key + "'");
    }
  }

  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config_stream(in);
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config_stream(is);
}

}  // namespace smio
