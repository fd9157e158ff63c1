#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mlelab/diagnostics.hpp"
#include "mlelab/quadrature.hpp"
#include "mlelab/rng.hpp"

using mlelab::AuditRecord;
using mlelab::CurveRow;
using mlelab::DebruijnRow;
using mlelab::EstimatorSettings;
using mlelab::Family;
using mlelab::Model;
using mlelab::MomentTable;
using mlelab::ParamSet;
using mlelab::SeededStream;
using mlelab::ShapeParams;
using mlelab::SubGaussianFit;
using mlelab::ZnMatrix;

namespace {

constexpr double kPi = 3.14159265358979323846;

Model make(Family f, double sigma, double m, double nu, double theta0, double lo, double hi) {
  ShapeParams s;
  s.sigma = sigma;
  s.m = m;
  s.nu = nu;
  return Model(f, s, theta0, ParamSet{lo, hi});
}

std::vector<double> normal_draws(std::size_t n, double mu, double sigma, std::uint64_t stream) {
  SeededStream rs(77, stream, 0);
  std::vector<double> out(n);
  for (double& x : out) x = mu + sigma * rs.normal();
  return out;
}

// Synthetic matrix whose raw column is sd * N(0,1) and whose smoothed column
// applies the exact smoothing map; no solver involved.
ZnMatrix synth_matrix(const std::vector<std::int64_t>& n_grid, int reps, double eps,
                      std::uint64_t seed, double sd) {
  ZnMatrix m;
  m.n_grid = n_grid;
  m.replicates = reps;
  m.epsilon = eps;
  const std::size_t cells = n_grid.size() * static_cast<std::size_t>(reps);
  m.values.resize(cells);
  m.smoothed_values.resize(cells);
  m.boundary_flags.assign(cells, 0);
  SeededStream v(seed, 0, 0), g(seed, 1, 0);
  for (std::size_t i = 0; i < cells; ++i) {
    m.values[i] = sd * v.normal();
    m.smoothed_values[i] = std::sqrt(1.0 - eps) * m.values[i] + std::sqrt(eps) * g.normal();
  }
  return m;
}

double closed_kl_var(double s2) { return 0.5 * (s2 - 1.0 - std::log(s2)); }

}  // namespace

TEST_CASE("gaussian absolute-moment targets match quadrature") {
  for (int m = 1; m <= 8; ++m) {
    const double target = mlelab::gaussian_abs_moment(m);
    const double quad = 2.0 * mlelab::integrate_interval(
                                  [m](double z) {
                                    return std::pow(z, m) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
                                  },
                                  0.0, 40.0, 1e-12);
    REQUIRE(std::abs(target - quad) < 1e-10);
  }
  REQUIRE(std::abs(mlelab::gaussian_abs_moment(1) - 0.7978845608028654) < 1e-12);
  REQUIRE(std::abs(mlelab::gaussian_abs_moment(2) - 1.0) < 1e-12);
  REQUIRE(std::abs(mlelab::gaussian_abs_moment(4) - 3.0) < 1e-12);
}

TEST_CASE("moment table: gaussian values, degenerate column, homogeneity") {
  const std::vector<double> z = normal_draws(100000, 0.0, 1.0, 1);
  const MomentTable t = mlelab::moment_table(z, 50);
  REQUIRE(t.n == 50);
  REQUIRE(std::abs(t.moments[1].value - 1.0) < 0.02);
  REQUIRE(std::abs(t.moments[3].value - 3.0) < 0.1);
  for (const auto& m : t.moments) REQUIRE(m.std_err > 0.0);

  const MomentTable zero = mlelab::moment_table(std::vector<double>(2000, 0.0), 10);
  for (const auto& m : zero.moments) REQUIRE(m.value == 0.0);

  std::vector<double> doubled = z;
  for (double& v : doubled) v *= 2.0;
  const MomentTable td = mlelab::moment_table(doubled, 50);
  for (int m = 1; m <= 8; ++m) {
    REQUIRE(td.moments[static_cast<std::size_t>(m - 1)].value ==
            Catch::Approx(std::pow(2.0, m) * t.moments[static_cast<std::size_t>(m - 1)].value)
                .epsilon(1e-12));
  }

  REQUIRE_THROWS_AS(mlelab::moment_table(std::vector<double>(500, 1.0), 5), std::invalid_argument);
}

TEST_CASE("sub-gaussian fit: norm constant and tail ratios") {
  const std::vector<double> z = normal_draws(100000, 0.0, 1.0, 2);
  const SubGaussianFit f = mlelab::subgaussian_fit(z, 50);
  REQUIRE(std::abs(f.c_hat - 0.7978845608028654) < 0.02);

  std::vector<double> doubled = z;
  for (double& v : doubled) v *= 2.0;
  REQUIRE(mlelab::subgaussian_fit(doubled, 50).c_hat == Catch::Approx(2.0 * f.c_hat).epsilon(1e-12));

  SeededStream rs(77, 3, 0);
  std::vector<double> u(100000);
  for (double& v : u) v = 2.0 * rs.uniform() - 1.0;
  REQUIRE(std::abs(mlelab::subgaussian_fit(u, 10).c_hat - 0.5) < 0.01);

  // frozen standard-normal ratios: log 2Phi(-t) / (-t^2/2)
  REQUIRE(f.tail_ratio_curve.size() == 5);
  const double expect_t1 = std::log(std::erfc(1.0 / std::sqrt(2.0))) / (-0.5);
  REQUIRE(std::abs(f.tail_ratio_curve[0].ratio - expect_t1) < 0.03);
  const double expect_t2 = std::log(std::erfc(2.0 / std::sqrt(2.0))) / (-2.0);
  REQUIRE(std::abs(f.tail_ratio_curve[2].ratio - expect_t2) < 0.05);
  for (std::size_t i = 0; i + 1 < 5; ++i) {
    REQUIRE(f.tail_ratio_curve[i].ratio > f.tail_ratio_curve[i + 1].ratio - 0.1);
  }

  // bounded support: no exceedances beyond 1 -> NaN ratios, zero counts
  const SubGaussianFit fu = mlelab::subgaussian_fit(u, 10);
  REQUIRE(fu.tail_ratio_curve[2].exceed_count == 0);
  REQUIRE(std::isnan(fu.tail_ratio_curve[2].ratio));

  REQUIRE_THROWS_AS(mlelab::subgaussian_fit(std::vector<double>(5000, 0.1), 5),
                    std::invalid_argument);
}

TEST_CASE("entropic curve rows: ordering, estimates, skip logic") {
  ZnMatrix m = synth_matrix({50, 10}, 2000, 0.1, 11, 1.0);
  const std::vector<CurveRow> rows = mlelab::entropic_curve(m);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].n == 10);  // sorted ascending regardless of input order
  REQUIRE(rows[1].n == 50);
  for (const CurveRow& r : rows) {
    REQUIRE(r.usable == 2000);
    REQUIRE(r.boundary_rate == 0.0);
    REQUIRE(r.has_moments);
    REQUIRE(!r.has_fit);  // below the eighth-moment stability floor
    REQUIRE(std::abs(r.kl_smoothed_knn.value) < 0.025);
    REQUIRE(r.kl_smoothed_knn.std_err > 0.0);
    REQUIRE(r.raw_estimable);
    REQUIRE(std::abs(r.kl_raw_knn.value) < 0.025);
    REQUIRE(r.has_fisher);
    REQUIRE(std::abs(r.fisher.info - 1.0) < 0.25);
    REQUIRE(r.max_abs_dpdf > 0.0);
    // bound consistency on an estimable row
    REQUIRE(r.bobkov.total >= r.kl_raw_kde.value - 3.0 * r.kl_raw_kde.std_err);
  }

  SECTION("boundary atoms skip the raw column only") {
    for (int r = 0; r < 5; ++r) m.boundary_flags[m.idx(static_cast<std::size_t>(r), 0)] = 1;
    const std::vector<CurveRow> rows2 = mlelab::entropic_curve(m);
    const CurveRow& hit = rows2[1];  // column 0 holds n=50
    REQUIRE(hit.n == 50);
    REQUIRE(hit.boundary_rate > 0.0);
    REQUIRE(!hit.raw_estimable);
    REQUIRE(!hit.has_fisher);
    REQUIRE(std::abs(hit.kl_smoothed_knn.value) < 0.025);  // smoothed survives
    REQUIRE(rows2[0].raw_estimable);
  }

  SECTION("failed cells are dropped from the usable count") {
    m.values[m.idx(3, 1)] = std::numeric_limits<double>::quiet_NaN();
    m.smoothed_values[m.idx(3, 1)] = std::numeric_limits<double>::quiet_NaN();
    const std::vector<CurveRow> rows3 = mlelab::entropic_curve(m);
    REQUIRE(rows3[0].usable == 1999);
    REQUIRE(rows3[1].usable == 2000);
  }
}

TEST_CASE("near-total smoothing drives every row to zero divergence") {
  // heavy-tailed raw values; eps=0.999 makes the smoothed column normal
  ZnMatrix m;
  m.n_grid = {5};
  m.replicates = 2000;
  m.epsilon = 0.999;
  m.values.resize(2000);
  m.smoothed_values.resize(2000);
  m.boundary_flags.assign(2000, 0);
  SeededStream u(12, 0, 0), g(12, 1, 0);
  for (std::size_t i = 0; i < 2000; ++i) {
    m.values[i] = std::tan(kPi * (u.uniform() - 0.5));
    m.smoothed_values[i] = std::sqrt(0.001) * m.values[i] + std::sqrt(0.999) * g.normal();
  }
  const std::vector<CurveRow> rows = mlelab::entropic_curve(m);
  REQUIRE(std::abs(rows[0].kl_smoothed_knn.value) < std::max(0.03, 3.0 * rows[0].kl_smoothed_knn.std_err));
}

TEST_CASE("smoothing-gap slack matches the closed-form gaussian oracle") {
  // Z ~ N(0, 1.21): J = 0, so slack reduces to the difference of closed KLs.
  const double eps = 0.1, s2 = 1.21;
  const double oracle = -(closed_kl_var(s2) - closed_kl_var((1.0 - eps) * s2 + eps));
  ZnMatrix m = synth_matrix({100}, 20000, eps, 13, std::sqrt(s2));
  const std::vector<DebruijnRow> rows = mlelab::debruijn_gap(m);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].valid);
  REQUIRE(rows[0].std_err > 0.0);
  INFO("slack=" << rows[0].slack << " oracle=" << oracle << " se=" << rows[0].std_err);
  REQUIRE(std::abs(rows[0].slack - oracle) < std::max(0.02, 5.0 * rows[0].std_err));
  REQUIRE(oracle < 0.0);  // the naive first-order gap bound overshoots slightly

  SECTION("standard-normal control sits at zero slack") {
    ZnMatrix c = synth_matrix({100}, 20000, eps, 14, 1.0);
    const std::vector<DebruijnRow> rc = mlelab::debruijn_gap(c);
    REQUIRE(std::abs(rc[0].slack) < std::max(0.02, 4.0 * rc[0].std_err));
  }
  SECTION("boundary atoms invalidate the row") {
    m.boundary_flags[m.idx(7, 0)] = 1;
    const std::vector<DebruijnRow> rb = mlelab::debruijn_gap(m);
    REQUIRE(!rb[0].valid);
  }
  SECTION("unsmoothed matrix is rejected") {
    ZnMatrix z0 = synth_matrix({100}, 200, 0.0, 15, 1.0);
    REQUIRE_THROWS_AS(mlelab::debruijn_gap(z0), std::invalid_argument);
  }
}

TEST_CASE("assumption audit: envelopes, score-derivative norm, fisher rows") {
  SECTION("logistic envelope holds at one") {
    const Model l = make(Family::logistic_location, 1, 1, 0, 0.0, -10, 10);
    const ZnMatrix m = mlelab::simulate_zn(l, {3}, 120, 0.1, 21);
    const AuditRecord a = mlelab::assumption_audit(l, m);
    REQUIRE(!a.envelope_unbounded);
    REQUIRE(a.envelope_bound == 1.0);
    REQUIRE(a.score_sup <= 1.0 + 1e-12);
    REQUIRE(a.envelope_ok);
    REQUIRE(a.subexp_norm > 0.0);
    REQUIRE(std::isfinite(a.subexp_norm));
    REQUIRE(a.fisher_rows.size() == 1);
    REQUIRE(std::isfinite(a.fisher_rows[0].info));
    REQUIRE(a.fisher_rows[0].max_abs_dpdf > 0.0);
  }
  SECTION("cauchy-location envelope holds at one") {
    const Model p = make(Family::pearson_iv_location, 1.0, 1.0, 0.0, 0.0, -10, 10);
    const ZnMatrix m = mlelab::simulate_zn(p, {3}, 120, 0.1, 22);
    const AuditRecord a = mlelab::assumption_audit(p, m);
    REQUIRE(a.envelope_bound == 1.0);
    REQUIRE(a.envelope_ok);
  }
  SECTION("scale family envelope is the inverse lower endpoint") {
    const Model c = make(Family::cauchy_scale, 1, 1, 0, 1.0, 0.5, 4.0);
    const ZnMatrix m = mlelab::simulate_zn(c, {4}, 120, 0.1, 23);
    const AuditRecord a = mlelab::assumption_audit(c, m);
    REQUIRE(a.envelope_bound == 2.0);
    REQUIRE(a.envelope_ok);
  }
  SECTION("gaussian control reports the envelope as unbounded") {
    const Model g = make(Family::gaussian_location, 1.0, 1, 0, 0.0, -10, 10);
    const ZnMatrix m = mlelab::simulate_zn(g, {3}, 120, 0.1, 24);
    const AuditRecord a = mlelab::assumption_audit(g, m);
    REQUIRE(a.envelope_unbounded);
    REQUIRE(a.envelope_ok);
    REQUIRE(a.score_sup > 1.0);  // linear score exceeds any fixed constant on the draw
  }
}

TEST_CASE("anderson-darling helper accepts normals and rejects a shift") {
  REQUIRE(mlelab::anderson_darling_a2(normal_draws(100000, 0.0, 1.0, 30)) < 6.0);
  REQUIRE(mlelab::anderson_darling_a2(normal_draws(10000, 0.5, 1.0, 31)) > 6.0);
  REQUIRE_THROWS_AS(mlelab::anderson_darling_a2({0.1, 0.2}), std::invalid_argument);
}
