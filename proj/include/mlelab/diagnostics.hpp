#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mlelab/engine.hpp"
#include "mlelab/estimators.hpp"
#include "mlelab/models.hpp"
#include "mlelab/rng.hpp"

namespace mlelab {

struct MomentEstimate {
  double value = 0.0;
  double std_err = 0.0;
};

struct MomentTable {
  std::int64_t n = 0;
  std::array<MomentEstimate, 8> moments{};   // index m-1 holds E|Z|^m
  std::array<double, 8> gaussian_targets{};  // E|N(0,1)|^m
};

struct TailRatioPoint {
  double t = 0.0;
  double ratio = 0.0;  // log survival over -t^2/2; NaN when no exceedances
  std::int64_t exceed_count = 0;
};

struct SubGaussianFit {
  std::int64_t n = 0;
  double c_hat = 0.0;
  std::vector<TailRatioPoint> tail_ratio_curve;
};

struct EstimatorSettings {
  int k = 5;
  double clip = 1e-12;
  double bandwidth_scale = 1.0;
  double bobkov_T = 4.0;
};

struct CurveRow {
  std::int64_t n = 0;
  std::int64_t usable = 0;  // replicates with a finite cell
  double boundary_rate = 0.0;
  double var_raw = 0.0;   // sample variance of the raw column
  double ad_a2_raw = 0.0; // Anderson-Darling A^2 of the raw column against N(0,1)
  bool has_moments = false;
  MomentTable moments;
  bool has_fit = false;
  SubGaussianFit fit;
  DivergenceEstimate kl_smoothed_knn;
  DivergenceEstimate kl_smoothed_kde;
  bool raw_estimable = false;  // no boundary atoms realized in this column
  DivergenceEstimate kl_raw_knn;
  DivergenceEstimate kl_raw_kde;
  bool has_fisher = false;
  DensityFisherInfo fisher;
  double fisher_clip_lo = 0.0;  // info at clip 1e-10
  double fisher_clip_hi = 0.0;  // info at clip 1e-14
  double max_abs_dpdf = 0.0;
  BobkovBoundReport bobkov;
};

struct DebruijnRow {
  std::int64_t n = 0;
  bool valid = false;
  double slack = 0.0;
  double std_err = 0.0;
};

struct AuditFisherRow {
  std::int64_t n = 0;
  bool used_smoothed = false;
  double info = 0.0;
  double info_clip_lo = 0.0;
  double info_clip_hi = 0.0;
  double max_abs_dpdf = 0.0;
};

struct AuditRecord {
  bool envelope_unbounded = false;
  double envelope_bound = 0.0;  // meaningless when unbounded
  double score_sup = 0.0;
  bool envelope_ok = false;
  double subexp_norm = 0.0;  // max_m (E|s'(theta0,X)|^m)^{1/m} / m
  std::vector<AuditFisherRow> fisher_rows;
};

// Absolute moment of the standard normal: 2^{m/2} Gamma((m+1)/2) / sqrt(pi).
inline double gaussian_abs_moment(int m) {
  if (m < 1) throw std::invalid_argument("gaussian_abs_moment: order must be >= 1");
  return std::pow(2.0, 0.5 * m) * std::tgamma(0.5 * (m + 1)) / std::sqrt(kPi);
}

// Anderson-Darling statistic against N(0,1) with known parameters.
inline double anderson_darling_a2(std::vector<double> x) {
  if (x.size() < 8) throw std::invalid_argument("anderson_darling_a2: need at least 8 samples");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  auto log_cdf = [](double v) { return std::log(0.5 * std::erfc(-v / std::sqrt(2.0))); };
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += (2.0 * static_cast<double>(i) + 1.0) * (log_cdf(x[i]) + log_cdf(-x[n - 1 - i]));
  }
  return -static_cast<double>(n) - acc / static_cast<double>(n);
}

inline MomentTable moment_table(const std::vector<double>& column, std::int64_t n) {
  if (column.size() < 1000) throw std::invalid_argument("moment_table: need at least 1000 values");
  MomentTable out;
  out.n = n;
  const std::size_t count = column.size();
  for (int m = 1; m <= 8; ++m) {
    double acc = 0.0;
    for (double z : column) acc += std::pow(std::abs(z), m);
    out.moments[static_cast<std::size_t>(m - 1)].value = acc / static_cast<double>(count);
    out.moments[static_cast<std::size_t>(m - 1)].std_err =
        detail::delete_d_jackknife_stderr(count, [&](int j) {
          double s = 0.0;
          std::size_t c = 0;
          for (std::size_t i = 0; i < count; ++i) {
            if (static_cast<int>(i % detail::kJackknifeGroups) == j) continue;
            s += std::pow(std::abs(column[i]), m);
            ++c;
          }
          return s / static_cast<double>(c);
        });
    out.gaussian_targets[static_cast<std::size_t>(m - 1)] = gaussian_abs_moment(m);
  }
  return out;
}

inline SubGaussianFit subgaussian_fit(const std::vector<double>& column, std::int64_t n) {
  if (column.size() < 10000) {
    throw std::invalid_argument("subgaussian_fit: need at least 10000 values");
  }
  SubGaussianFit out;
  out.n = n;
  const double count = static_cast<double>(column.size());
  for (int m = 1; m <= 8; ++m) {
    double acc = 0.0;
    for (double z : column) acc += std::pow(std::abs(z), m);
    const double norm = std::pow(acc / count, 1.0 / m) / std::sqrt(static_cast<double>(m));
    out.c_hat = std::max(out.c_hat, norm);
  }
  for (double t : {1.0, 1.5, 2.0, 2.5, 3.0}) {
    TailRatioPoint pt;
    pt.t = t;
    std::int64_t exceed = 0;
    for (double z : column) exceed += std::abs(z) > t ? 1 : 0;
    pt.exceed_count = exceed;
    pt.ratio = exceed == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : std::log(static_cast<double>(exceed) / count) / (-0.5 * t * t);
    out.tail_ratio_curve.push_back(pt);
  }
  return out;
}

namespace detail {

struct ColumnPair {
  std::vector<double> raw;
  std::vector<double> smoothed;
  std::int64_t boundary_hits = 0;
  std::int64_t usable = 0;
};

inline ColumnPair extract_column(const ZnMatrix& m, std::size_t j) {
  ColumnPair out;
  out.raw.reserve(static_cast<std::size_t>(m.replicates));
  out.smoothed.reserve(static_cast<std::size_t>(m.replicates));
  for (std::int32_t r = 0; r < m.replicates; ++r) {
    const std::size_t cell = m.idx(static_cast<std::size_t>(r), j);
    if (std::isnan(m.values[cell])) continue;
    out.raw.push_back(m.values[cell]);
    out.smoothed.push_back(m.smoothed_values[cell]);
    out.boundary_hits += m.boundary_flags[cell] != 0 ? 1 : 0;
    ++out.usable;
  }
  return out;
}

}  // namespace detail

inline std::vector<CurveRow> entropic_curve(const ZnMatrix& m,
                                            const EstimatorSettings& settings = EstimatorSettings{}) {
  std::vector<CurveRow> rows;
  std::vector<std::size_t> order(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.n_grid[a] < m.n_grid[b]; });
  for (std::size_t j : order) {
    const detail::ColumnPair col = detail::extract_column(m, j);
    CurveRow row;
    row.n = m.n_grid[j];
    row.usable = col.usable;
    if (col.usable == 0) {
      rows.push_back(row);
      continue;
    }
    row.boundary_rate = static_cast<double>(col.boundary_hits) / static_cast<double>(col.usable);
    {
      double mean = 0.0;
      for (double v : col.raw) mean += v;
      mean /= static_cast<double>(col.raw.size());
      double ss = 0.0;
      for (double v : col.raw) ss += (v - mean) * (v - mean);
      row.var_raw = col.raw.size() > 1 ? ss / static_cast<double>(col.raw.size() - 1) : 0.0;
    }
    row.ad_a2_raw = col.raw.size() >= 8 ? anderson_darling_a2(col.raw)
                                        : std::numeric_limits<double>::quiet_NaN();
    if (col.raw.size() >= 1000) {
      row.has_moments = true;
      row.moments = moment_table(col.raw, row.n);
    }
    if (col.raw.size() >= 10000) {
      row.has_fit = true;
      row.fit = subgaussian_fit(col.raw, row.n);
    }
    row.kl_smoothed_knn = kl_to_std_normal(col.smoothed, DivMethod::KnnEntropy, settings.k, settings.clip);
    row.kl_smoothed_kde = kl_to_std_normal(col.smoothed, DivMethod::KdePlugin, settings.k, settings.clip);
    row.raw_estimable = col.boundary_hits == 0;
    if (row.raw_estimable) {
      row.kl_raw_knn = kl_to_std_normal(col.raw, DivMethod::KnnEntropy, settings.k, settings.clip);
      row.kl_raw_kde = kl_to_std_normal(col.raw, DivMethod::KdePlugin, settings.k, settings.clip);
      const KdeDensity dens = kde(col.raw, settings.bandwidth_scale);
      row.has_fisher = true;
      row.fisher = density_fisher_information(dens.grid, settings.clip);
      row.fisher_clip_lo = density_fisher_information(dens.grid, 1e-10).info;
      row.fisher_clip_hi = density_fisher_information(dens.grid, 1e-14).info;
      for (double d : dens.grid.dpdf) row.max_abs_dpdf = std::max(row.max_abs_dpdf, std::abs(d));
      row.bobkov = bobkov_bound(dens.grid, settings.bobkov_T, settings.clip);
    }
    rows.push_back(row);
  }
  return rows;
}

// Slack in the smoothing inequality: eps J(Z_n)/2 - (D(Z_n|Z) - D(Ztilde_n|Z)),
// with a paired delete-d jackknife so both divergences share replicate groups.
inline std::vector<DebruijnRow> debruijn_gap(const ZnMatrix& m,
                                             const EstimatorSettings& settings = EstimatorSettings{}) {
  if (!(m.epsilon > 0.0)) throw std::invalid_argument("debruijn_gap: matrix epsilon must be > 0");
  std::vector<DebruijnRow> rows;
  std::vector<std::size_t> order(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.n_grid[a] < m.n_grid[b]; });
  for (std::size_t j : order) {
    const detail::ColumnPair col = detail::extract_column(m, j);
    DebruijnRow row;
    row.n = m.n_grid[j];
    if (col.boundary_hits > 0 || col.raw.size() < 100) {
      rows.push_back(row);
      continue;
    }
    auto slack_of = [&](const std::vector<double>& raw, const std::vector<double>& sm) {
      const double jinfo =
          density_fisher_information(kde(raw, settings.bandwidth_scale).grid, settings.clip)
              .standardized_j;
      const double d_raw = detail::kl_knn_core(raw, settings.k, nullptr);
      const double d_sm = detail::kl_knn_core(sm, settings.k, nullptr);
      return 0.5 * m.epsilon * jinfo - (d_raw - d_sm);
    };
    row.valid = true;
    row.slack = slack_of(col.raw, col.smoothed);
    row.std_err = detail::delete_d_jackknife_stderr(col.raw.size(), [&](int g) {
      return slack_of(detail::drop_group(col.raw, g), detail::drop_group(col.smoothed, g));
    });
    rows.push_back(row);
  }
  return rows;
}

inline AuditRecord assumption_audit(const Model& model, const ZnMatrix& m,
                                    const EstimatorSettings& settings = EstimatorSettings{}) {
  AuditRecord out;

  // reserved stream keeps the audit draw independent of every replicate lane
  SeededStream audit_stream(0x4155444954ULL, 0, 0);
  const std::vector<double> xs = model.sample(audit_stream, 4000);

  const std::optional<double> bound = model.lipschitz_bound();
  out.envelope_unbounded = !bound.has_value();
  out.envelope_bound = bound.value_or(std::numeric_limits<double>::quiet_NaN());
  const double lo = model.domain().lo, hi = model.domain().hi;
  double sup = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double theta = lo + (hi - lo) * i / 199.0;
    for (double x : xs) sup = std::max(sup, std::abs(model.score(theta, x).value));
  }
  out.score_sup = sup;
  out.envelope_ok = out.envelope_unbounded || sup <= *bound + 1e-12;

  for (int mm = 1; mm <= 8; ++mm) {
    double acc = 0.0;
    for (double x : xs) acc += std::pow(std::abs(model.score(model.theta0(), x).deriv), mm);
    acc /= static_cast<double>(xs.size());
    out.subexp_norm = std::max(out.subexp_norm, std::pow(acc, 1.0 / mm) / static_cast<double>(mm));
  }

  std::vector<std::size_t> order(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.n_grid[a] < m.n_grid[b]; });
  for (std::size_t j : order) {
    const detail::ColumnPair col = detail::extract_column(m, j);
    AuditFisherRow row;
    row.n = m.n_grid[j];
    if (col.usable < 100) {
      row.info = std::numeric_limits<double>::quiet_NaN();
      out.fisher_rows.push_back(row);
      continue;
    }
    row.used_smoothed = col.boundary_hits > 0;
    const std::vector<double>& src = row.used_smoothed ? col.smoothed : col.raw;
    const KdeDensity dens = kde(src, settings.bandwidth_scale);
    row.info = density_fisher_information(dens.grid, settings.clip).info;
    row.info_clip_lo = density_fisher_information(dens.grid, 1e-10).info;
    row.info_clip_hi = density_fisher_information(dens.grid, 1e-14).info;
    for (double d : dens.grid.dpdf) row.max_abs_dpdf = std::max(row.max_abs_dpdf, std::abs(d));
    out.fisher_rows.push_back(row);
  }
  return out;
}

}  // namespace mlelab
