#pragma once

// Experiment configuration: a flat key-value text format, a canonical
// serialization (the digest input), and the built-in presets.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlelab/diagnostics.hpp"
#include "mlelab/models.hpp"
#include "mlelab/solver.hpp"

namespace mlelab {

// Raised for malformed or invalid configuration; the CLI maps it to exit 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
  Family family = Family::gaussian_location;
  ShapeParams shape;
  double theta0 = 0.0;
  ParamSet domain{-10.0, 10.0};
  std::vector<std::int64_t> n_grid;
  int replicates = 0;
  double epsilon = 0.1;
  std::vector<double> epsilon_sweep;
  EstimatorSettings estimator;
  SolverSettings solver;
  std::uint64_t seed = 0;
  std::string out = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline double parse_double_field(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(key + ": empty value");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": not a finite number: '" + t + "'");
  }
  return v;
}

inline std::int64_t parse_int_field(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(key + ": empty value");
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) throw ConfigError(key + ": not an integer: '" + t + "'");
  return static_cast<std::int64_t>(v);
}

inline std::uint64_t parse_uint_field(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t[0] == '-') throw ConfigError(key + ": not a non-negative integer: '" + t + "'");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) throw ConfigError(key + ": not an integer: '" + t + "'");
  return static_cast<std::uint64_t>(v);
}

// Values separated by spaces and/or commas.
inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline Family parse_family(const std::string& name) {
  if (name == "gaussian") return Family::gaussian_location;
  if (name == "pearson") return Family::pearson_iv_location;
  if (name == "logistic") return Family::logistic_location;
  if (name == "cauchy_scale") return Family::cauchy_scale;
  throw ConfigError("family: unknown value '" + name +
                    "' (expected gaussian, pearson, logistic, or cauchy_scale)");
}

// Structural checks beyond what Model's constructor enforces.
inline void validate_config(const ExperimentConfig& c) {
  if (c.n_grid.empty()) throw ConfigError("n_grid: must list at least one sample size");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] < 2) throw ConfigError("n_grid: sample sizes must be >= 2");
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) {
      throw ConfigError("n_grid: sample sizes must be strictly increasing");
    }
  }
  if (c.replicates < 100) throw ConfigError("replicates: must be >= 100");
  if (!(c.epsilon >= 0.0 && c.epsilon < 1.0)) throw ConfigError("epsilon: must lie in [0, 1)");
  for (double e : c.epsilon_sweep) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilon_sweep: values must lie in (0, 1)");
  }
  if (c.estimator.k < 1) throw ConfigError("estimator.k: must be >= 1");
  if (!(c.estimator.clip > 0.0)) throw ConfigError("estimator.clip: must be > 0");
  if (!(c.estimator.bandwidth_scale > 0.0)) throw ConfigError("estimator.bandwidth: must be > 0");
  if (c.solver.grid_points < 2) throw ConfigError("solver.grid_points: must be >= 2");
  if (!(c.solver.newton_tol > 0.0)) throw ConfigError("solver.newton_tol: must be > 0");
  if (c.solver.max_newton_iters < 1) throw ConfigError("solver.max_iters: must be >= 1");
  if (c.out.empty()) throw ConfigError("out: must not be empty");
  // Model's constructor owns the family-specific parameter checks; surface them
  // under the same error type so the CLI maps everything to exit 2.
  try {
    Model probe(c.family, c.shape, c.theta0, c.domain);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  bool saw_family = false, saw_theta0 = false, saw_lo = false, saw_hi = false;
  bool saw_n = false, saw_reps = false, saw_seed = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");

    if (key == "family") {
      c.family = parse_family(val);
      saw_family = true;
    } else if (key == "shape.sigma") {
      c.shape.sigma = detail::parse_double_field(key, val);
    } else if (key == "shape.m") {
      c.shape.m = detail::parse_double_field(key, val);
    } else if (key == "shape.nu") {
      c.shape.nu = detail::parse_double_field(key, val);
    } else if (key == "theta0") {
      c.theta0 = detail::parse_double_field(key, val);
      saw_theta0 = true;
    } else if (key == "K.lo") {
      c.domain.lo = detail::parse_double_field(key, val);
      saw_lo = true;
    } else if (key == "K.hi") {
      c.domain.hi = detail::parse_double_field(key, val);
      saw_hi = true;
    } else if (key == "n_grid") {
      c.n_grid.clear();
      for (const std::string& tok : detail::split_list(val)) {
        c.n_grid.push_back(detail::parse_int_field(key, tok));
      }
      saw_n = true;
    } else if (key == "replicates") {
      c.replicates = static_cast<int>(detail::parse_int_field(key, val));
      saw_reps = true;
    } else if (key == "epsilon") {
      c.epsilon = detail::parse_double_field(key, val);
    } else if (key == "epsilon_sweep") {
      c.epsilon_sweep.clear();
      for (const std::string& tok : detail::split_list(val)) {
        c.epsilon_sweep.push_back(detail::parse_double_field(key, tok));
      }
    } else if (key == "estimator.k") {
      c.estimator.k = static_cast<int>(detail::parse_int_field(key, val));
    } else if (key == "estimator.clip") {
      c.estimator.clip = detail::parse_double_field(key, val);
    } else if (key == "estimator.bandwidth") {
      c.estimator.bandwidth_scale = detail::parse_double_field(key, val);
    } else if (key == "solver.grid_points") {
      c.solver.grid_points = static_cast<int>(detail::parse_int_field(key, val));
    } else if (key == "solver.newton_tol") {
      c.solver.newton_tol = detail::parse_double_field(key, val);
    } else if (key == "solver.max_iters") {
      c.solver.max_newton_iters = static_cast<int>(detail::parse_int_field(key, val));
    } else if (key == "seed") {
      c.seed = detail::parse_uint_field(key, val);
      saw_seed = true;
    } else if (key == "out") {
      c.out = val;
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  if (!saw_family) throw ConfigError("family: required key missing");
  if (!saw_theta0) throw ConfigError("theta0: required key missing");
  if (!saw_lo) throw ConfigError("K.lo: required key missing");
  if (!saw_hi) throw ConfigError("K.hi: required key missing");
  if (!saw_n) throw ConfigError("n_grid: required key missing");
  if (!saw_reps) throw ConfigError("replicates: required key missing");
  if (!saw_seed) throw ConfigError("seed: required key missing");
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Fixed key order and %.17g floats, so equal configs always produce the same
// bytes. parse_config(serialize_config(c)) reproduces c exactly.
inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream out;
  out << "family = " << family_name(c.family) << "\n";
  out << "shape.sigma = " << format_double(c.shape.sigma) << "\n";
  out << "shape.m = " << format_double(c.shape.m) << "\n";
  out << "shape.nu = " << format_double(c.shape.nu) << "\n";
  out << "theta0 = " << format_double(c.theta0) << "\n";
  out << "K.lo = " << format_double(c.domain.lo) << "\n";
  out << "K.hi = " << format_double(c.domain.hi) << "\n";
  out << "n_grid =";
  for (std::int64_t n : c.n_grid) out << " " << n;
  out << "\n";
  out << "replicates = " << c.replicates << "\n";
  out << "epsilon = " << format_double(c.epsilon) << "\n";
  if (!c.epsilon_sweep.empty()) {
    out << "epsilon_sweep =";
    for (double e : c.epsilon_sweep) out << " " << format_double(e);
    out << "\n";
  }
  out << "estimator.k = " << c.estimator.k << "\n";
  out << "estimator.clip = " << format_double(c.estimator.clip) << "\n";
  out << "estimator.bandwidth = " << format_double(c.estimator.bandwidth_scale) << "\n";
  out << "solver.grid_points = " << c.solver.grid_points << "\n";
  out << "solver.newton_tol = " << format_double(c.solver.newton_tol) << "\n";
  out << "solver.max_iters = " << c.solver.max_newton_iters << "\n";
  out << "seed = " << c.seed << "\n";
  out << "out = " << c.out << "\n";
  return out.str();
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Digest of the canonical serialization; identifies the experiment.
inline std::string config_digest(const ExperimentConfig& c) {
  const std::string s = serialize_config(c);
  return digest_hex(fnv1a64(s.data(), s.size()));
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  return digest_hex(fnv1a64(s.data(), s.size()));
}

inline std::vector<std::string> preset_names() {
  return {"gaussian-control", "logistic", "pearson-cauchy", "cauchy-scale"};
}

inline ExperimentConfig make_preset(const std::string& name) {
  ExperimentConfig c;
  c.seed = 20260822;
  c.epsilon = 0.1;
  if (name == "gaussian-control") {
    c.family = Family::gaussian_location;
    c.theta0 = 0.0;
    c.domain = {-10.0, 10.0};
    c.n_grid = {5, 50, 500};
    c.replicates = 100000;
    c.out = "out-gaussian-control";
  } else if (name == "logistic") {
    c.family = Family::logistic_location;
    c.theta0 = 0.0;
    c.domain = {-10.0, 10.0};
    c.n_grid = {10, 50, 200, 1000};
    c.replicates = 10000;
    c.out = "out-logistic";
  } else if (name == "pearson-cauchy") {
    c.family = Family::pearson_iv_location;
    c.shape = {1.0, 1.0, 0.0};
    c.theta0 = 0.0;
    // Narrower than the location presets on purpose: the small-n Cauchy MLE
    // throws rare far-out estimates whose high moments would otherwise swamp
    // the sub-Gaussian norm at n=10.
    c.domain = {-4.0, 4.0};
    c.n_grid = {10, 50, 200, 1000};
    c.replicates = 10000;
    c.out = "out-pearson-cauchy";
  } else if (name == "cauchy-scale") {
    c.family = Family::cauchy_scale;
    c.theta0 = 1.0;
    c.domain = {0.5, 4.0};
    c.n_grid = {10, 50, 200, 1000};
    c.replicates = 10000;
    c.out = "out-cauchy-scale";
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  validate_config(c);
  return c;
}

}  // namespace mlelab
