#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mlelab/models.hpp"
#include "mlelab/rng.hpp"
#include "mlelab/solver.hpp"

namespace mlelab {

// Normalized-error draws for every (replicate, sample size) cell. Values are
// row-major with the replicate as the row; failed cells hold NaN.
struct ZnMatrix {
  std::vector<std::int64_t> n_grid;
  std::int32_t replicates = 0;
  double epsilon = 0.0;
  std::vector<double> values;
  std::vector<double> smoothed_values;
  std::vector<std::uint8_t> boundary_flags;
  std::int64_t failures = 0;

  std::size_t cols() const { return n_grid.size(); }
  std::size_t idx(std::size_t r, std::size_t j) const { return r * n_grid.size() + j; }
};

namespace detail {

// Per-cell substream salts: each (replicate, n-index) cell owns lane 0 for
// sampling and lane 1 for smoothing; higher lanes are reserved for
// re-smoothing sweeps keyed the same way.
constexpr std::uint64_t kLaneSample = 0;
constexpr std::uint64_t kLaneSmooth = 1;

inline std::uint64_t cell_salt(std::size_t n_index, std::uint64_t lane) {
  return static_cast<std::uint64_t>(n_index) * 4 + lane;
}

}  // namespace detail

// Elementwise sqrt(1-eps) v + sqrt(eps) g with fresh normals from the stream.
inline std::vector<double> smooth(const std::vector<double>& values, double epsilon,
                                  SeededStream& stream) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("smooth: epsilon must lie in [0, 1]");
  }
  const double a = std::sqrt(1.0 - epsilon);
  const double b = std::sqrt(epsilon);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = a * values[i] + b * stream.normal();
  }
  return out;
}

inline ZnMatrix simulate_zn(const Model& model, const std::vector<std::int64_t>& n_grid,
                            int replicates, double epsilon, std::uint64_t master_seed,
                            const SolverSettings& settings = SolverSettings{}, int workers = 1) {
  if (replicates < 100) throw std::invalid_argument("simulate_zn: replicates must be >= 100");
  if (n_grid.empty()) throw std::invalid_argument("simulate_zn: n_grid is empty");
  for (std::int64_t n : n_grid) {
    if (n < 2) throw std::invalid_argument("simulate_zn: every n must be >= 2");
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("simulate_zn: epsilon must lie in [0, 1)");
  }

  const std::size_t cols = n_grid.size();
  ZnMatrix out;
  out.n_grid = n_grid;
  out.replicates = replicates;
  out.epsilon = epsilon;
  out.values.assign(static_cast<std::size_t>(replicates) * cols, 0.0);
  out.smoothed_values.assign(static_cast<std::size_t>(replicates) * cols, 0.0);
  out.boundary_flags.assign(static_cast<std::size_t>(replicates) * cols, 0);

  const double theta0 = model.theta0();
  const double fisher0 = model.fisher0();
  const double sa = std::sqrt(1.0 - epsilon);
  const double sb = std::sqrt(epsilon);

  std::atomic<int> next{0};
  std::atomic<std::int64_t> failures{0};

  auto worker = [&]() {
    std::vector<double> data;
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicates) return;
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t cell = out.idx(static_cast<std::size_t>(r), j);
        SeededStream draw(master_seed, static_cast<std::uint64_t>(r),
                          detail::cell_salt(j, detail::kLaneSample));
        const std::size_t n = static_cast<std::size_t>(n_grid[j]);
        data.resize(n);
        model.sample_into(draw, data.data(), n);
        try {
          const MleResult res = solve(model, data, settings);
          const double z = std::sqrt(fisher0 * static_cast<double>(n)) * (res.theta_hat - theta0);
          out.values[cell] = z;
          out.boundary_flags[cell] = res.at_boundary ? 1 : 0;
          if (epsilon > 0.0) {
            SeededStream sm(master_seed, static_cast<std::uint64_t>(r),
                            detail::cell_salt(j, detail::kLaneSmooth));
            out.smoothed_values[cell] = sa * z + sb * sm.normal();
          } else {
            out.smoothed_values[cell] = z;
          }
        } catch (const std::exception&) {
          out.values[cell] = std::numeric_limits<double>::quiet_NaN();
          out.smoothed_values[cell] = std::numeric_limits<double>::quiet_NaN();
          out.boundary_flags[cell] = 0;
          failures.fetch_add(1);
        }
      }
    }
  };

  const int nw = workers < 1 ? 1 : workers;
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  out.failures = failures.load();
  return out;
}

// Columnar binary cache: magic "ZNMX", u16 version, u16 reserved, u32 column
// count, u32 replicates, f64 epsilon, i64 n_grid[], then the three arrays in
// row-major replicate order. Little-endian throughout.
static_assert(std::endian::native == std::endian::little,
              "cache layout assumes a little-endian host");

namespace detail {

constexpr char kCacheMagic[4] = {'Z', 'N', 'M', 'X'};
constexpr std::uint16_t kCacheVersion = 1;

template <class T>
void put_raw(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get_raw(std::ifstream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

inline void write_zn_cache(const std::string& path, const ZnMatrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open cache file for writing: " + path);
  os.write(detail::kCacheMagic, 4);
  detail::put_raw(os, detail::kCacheVersion);
  detail::put_raw(os, static_cast<std::uint16_t>(0));
  detail::put_raw(os, static_cast<std::uint32_t>(m.n_grid.size()));
  detail::put_raw(os, static_cast<std::uint32_t>(m.replicates));
  detail::put_raw(os, m.epsilon);
  os.write(reinterpret_cast<const char*>(m.n_grid.data()),
           static_cast<std::streamsize>(m.n_grid.size() * sizeof(std::int64_t)));
  os.write(reinterpret_cast<const char*>(m.values.data()),
           static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(m.smoothed_values.data()),
           static_cast<std::streamsize>(m.smoothed_values.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(m.boundary_flags.data()),
           static_cast<std::streamsize>(m.boundary_flags.size()));
  if (!os) throw std::runtime_error("short write to cache file: " + path);
}

inline ZnMatrix read_zn_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cache file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kCacheMagic, 4) != 0) {
    throw std::runtime_error("not a simulation cache file: " + path);
  }
  std::uint16_t version = 0, reserved = 0;
  std::uint32_t cols = 0, reps = 0;
  detail::get_raw(is, version);
  detail::get_raw(is, reserved);
  if (version != detail::kCacheVersion) {
    throw std::runtime_error("unsupported cache version " + std::to_string(version));
  }
  detail::get_raw(is, cols);
  detail::get_raw(is, reps);
  ZnMatrix m;
  detail::get_raw(is, m.epsilon);
  if (!is || cols == 0 || reps == 0) throw std::runtime_error("corrupt cache header: " + path);
  m.replicates = static_cast<std::int32_t>(reps);
  m.n_grid.resize(cols);
  is.read(reinterpret_cast<char*>(m.n_grid.data()),
          static_cast<std::streamsize>(cols * sizeof(std::int64_t)));
  const std::size_t cells = static_cast<std::size_t>(cols) * reps;
  m.values.resize(cells);
  is.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(cells * sizeof(double)));
  m.smoothed_values.resize(cells);
  is.read(reinterpret_cast<char*>(m.smoothed_values.data()),
          static_cast<std::streamsize>(cells * sizeof(double)));
  m.boundary_flags.resize(cells);
  is.read(reinterpret_cast<char*>(m.boundary_flags.data()), static_cast<std::streamsize>(cells));
  if (!is) throw std::runtime_error("truncated cache file: " + path);
  char extra;
  if (is.read(&extra, 1)) throw std::runtime_error("trailing bytes in cache file: " + path);
  std::int64_t fails = 0;
  for (double v : m.values) fails += std::isnan(v) ? 1 : 0;
  m.failures = fails;
  return m;
}

}  // namespace mlelab
