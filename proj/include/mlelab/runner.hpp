#pragma once

// Orchestration: simulate -> estimate -> report artifacts, and the
// verify path that recomputes every diagnostic from the cached matrix.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlelab/config.hpp"
#include "mlelab/engine.hpp"
#include "mlelab/report.hpp"

namespace mlelab {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunPaths {
  std::string dir, cache, csv, json, manifest;
};

inline RunPaths run_paths(const std::string& dir) {
  RunPaths p;
  p.dir = dir;
  p.cache = dir + "/zn.znmx";
  p.csv = dir + "/report.csv";
  p.json = dir + "/report.json";
  p.manifest = dir + "/manifest.json";
  return p;
}

struct RunManifest {
  std::string tool_version;
  std::string config_digest;
  std::string cache_digest;
  double t_simulate = 0.0;  // wall-clock seconds; the one field exempt from
  double t_estimate = 0.0;  // byte-exact rerun reproducibility
  double t_write = 0.0;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["config_digest"] = m.config_digest;
  j["cache_digest"] = m.cache_digest;
  j["artifacts"] = {{"cache", "zn.znmx"},
                    {"report_csv", "report.csv"},
                    {"report_json", "report.json"},
                    {"manifest", "manifest.json"}};
  j["timings_seconds"] = {
      {"simulate", m.t_simulate}, {"estimate", m.t_estimate}, {"write", m.t_write}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.cache_digest = j.at("cache_digest").get<std::string>();
  const auto& t = j.at("timings_seconds");
  m.t_simulate = t.at("simulate").get<double>();
  m.t_estimate = t.at("estimate").get<double>();
  m.t_write = t.at("write").get<double>();
  return m;
}

// Central-difference check of score and score derivative against the
// log-density, over interior theta values and a reserved draw of data points.
// Deterministic, so run and verify agree exactly.
inline double score_fd_audit(const Model& model) {
  SeededStream fd_stream(0x4644303143ULL, 0, 0);
  const std::vector<double> xs = model.sample(fd_stream, 64);
  const double lo = model.domain().lo, hi = model.domain().hi;
  double worst = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double t = 0.05 + 0.9 * static_cast<double>(i) / 8.0;
    const double theta = lo + t * (hi - lo);
    const double h = 5e-6 * (1.0 + std::abs(theta));
    for (double x : xs) {
      const ScoreEval s = model.score(theta, x);
      const double fd_value =
          (model.log_pdf(theta + h, x) - model.log_pdf(theta - h, x)) / (2.0 * h);
      const double fd_deriv =
          (model.score(theta + h, x).value - model.score(theta - h, x).value) / (2.0 * h);
      worst = std::max(worst, std::abs(fd_value - s.value) / (1.0 + std::abs(s.value)));
      worst = std::max(worst, std::abs(fd_deriv - s.deriv) / (1.0 + std::abs(s.deriv)));
    }
  }
  return worst;
}

// Re-smooths the cached raw values at each sweep epsilon. Every (replicate,
// column) cell owns one reserved stream (lane 2); the s-th normal drawn from
// it belongs to the s-th sweep value, independent of the simulation lanes.
inline std::vector<EpsSweepEntry> compute_sweep(const ExperimentConfig& cfg, const ZnMatrix& m) {
  std::vector<EpsSweepEntry> out;
  const std::size_t S = cfg.epsilon_sweep.size();
  if (S == 0) return out;
  out.resize(S);
  for (std::size_t s = 0; s < S; ++s) out[s].epsilon = cfg.epsilon_sweep[s];

  std::vector<std::size_t> order(m.cols());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.n_grid[a] < m.n_grid[b]; });

  std::vector<std::vector<double>> smoothed(S);
  std::vector<double> g(S);
  for (std::size_t j : order) {
    for (std::size_t s = 0; s < S; ++s) smoothed[s].clear();
    for (std::int32_t r = 0; r < m.replicates; ++r) {
      SeededStream gs(cfg.seed, static_cast<std::uint64_t>(r), detail::cell_salt(j, 2));
      for (std::size_t s = 0; s < S; ++s) g[s] = gs.normal();
      const double raw = m.values[m.idx(static_cast<std::size_t>(r), j)];
      if (!std::isfinite(raw)) continue;
      for (std::size_t s = 0; s < S; ++s) {
        const double e = cfg.epsilon_sweep[s];
        smoothed[s].push_back(std::sqrt(1.0 - e) * raw + std::sqrt(e) * g[s]);
      }
    }
    for (std::size_t s = 0; s < S; ++s) {
      SweepKl row;
      row.n = m.n_grid[j];
      row.usable = static_cast<std::int64_t>(smoothed[s].size());
      if (row.usable >= 100) {
        row.kl = kl_to_std_normal(smoothed[s], DivMethod::KnnEntropy, cfg.estimator.k,
                                  cfg.estimator.clip);
      } else {
        row.kl.value = std::numeric_limits<double>::quiet_NaN();
      }
      out[s].rows.push_back(row);
    }
  }
  return out;
}

inline ConvergenceReport build_report(const ExperimentConfig& cfg, const Model& model,
                                      const ZnMatrix& m) {
  ConvergenceReport r;
  r.config_digest = config_digest(cfg);
  r.family = cfg.family;
  r.epsilon = cfg.epsilon;
  r.rows = entropic_curve(m, cfg.estimator);
  if (cfg.epsilon > 0.0) r.debruijn = debruijn_gap(m, cfg.estimator);
  r.audit = assumption_audit(model, m, cfg.estimator);
  r.score_fd_max_rel = score_fd_audit(model);
  r.sweep = compute_sweep(cfg, m);
  r.verdicts = compute_verdicts(r);
  return r;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Full pipeline; throws ConfigError for invalid settings and
// std::runtime_error for execution failures (partial artifacts stay on disk).
inline int run_experiment(const ExperimentConfig& cfg, int workers, std::ostream& os,
                          ConvergenceReport* out_report = nullptr) {
  validate_config(cfg);
  if (workers < 1) throw ConfigError("workers: must be >= 1");
  Model model(cfg.family, cfg.shape, cfg.theta0, cfg.domain);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  // a writable output directory is part of the config contract
  if (ec) throw ConfigError("out: cannot create output directory " + cfg.out + ": " + ec.message());
  const RunPaths paths = run_paths(cfg.out);

  auto t0 = std::chrono::steady_clock::now();
  const ZnMatrix m =
      simulate_zn(model, cfg.n_grid, cfg.replicates, cfg.epsilon, cfg.seed, cfg.solver, workers);
  write_zn_cache(paths.cache, m);
  const double t_sim = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const ConvergenceReport rep = build_report(cfg, model, m);
  const double t_est = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  {
    std::ofstream csv(paths.csv, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + paths.csv);
    write_report_csv(rep, csv);
  }
  {
    std::ofstream js(paths.json, std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + paths.json);
    js << report_json(rep).dump(2) << "\n";
  }
  RunManifest man;
  man.tool_version = kToolVersion;
  man.config_digest = rep.config_digest;
  man.cache_digest = file_digest(paths.cache);
  man.t_simulate = t_sim;
  man.t_estimate = t_est;
  man.t_write = detail::seconds_since(t0);
  write_manifest(paths.manifest, man);

  print_summary(rep, os);
  if (out_report != nullptr) *out_report = rep;
  return 0;
}

// Recomputes diagnostics from the cached matrix; never resimulates.
// Returns 0 when all applicable verdicts pass, 1 on a verdict failure,
// 4 on a digest mismatch between config, manifest, and cache.
inline int verify_experiment(const ExperimentConfig& cfg, std::ostream& os,
                             ConvergenceReport* out_report = nullptr) {
  validate_config(cfg);
  Model model(cfg.family, cfg.shape, cfg.theta0, cfg.domain);
  const RunPaths paths = run_paths(cfg.out);
  if (!std::filesystem::exists(paths.manifest) || !std::filesystem::exists(paths.cache)) {
    throw std::runtime_error("no completed run found in " + paths.dir);
  }
  const RunManifest man = read_manifest(paths.manifest);
  const std::string want = config_digest(cfg);
  if (man.config_digest != want) {
    os << "digest mismatch: manifest records config " << man.config_digest << ", current config is "
       << want << "\n";
    return 4;
  }
  if (file_digest(paths.cache) != man.cache_digest) {
    os << "digest mismatch: cache bytes do not match the manifest\n";
    return 4;
  }
  const ZnMatrix m = read_zn_cache(paths.cache);
  if (m.n_grid != cfg.n_grid || m.replicates != cfg.replicates || m.epsilon != cfg.epsilon) {
    os << "digest mismatch: cache dimensions disagree with the config\n";
    return 4;
  }
  const ConvergenceReport rep = build_report(cfg, model, m);
  print_verdicts(rep, os);
  if (out_report != nullptr) *out_report = rep;
  return rep.all_applicable_pass() ? 0 : 1;
}

}  // namespace mlelab
