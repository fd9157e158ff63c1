#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mlelab/models.hpp"

namespace mlelab {

struct MleResult {
  double theta_hat = 0.0;
  double loglik = 0.0;
  double score_at_hat = 0.0;  // L'_n at theta_hat
  bool at_boundary = false;
  bool hit_iteration_cap = false;
  int iterations = 0;
};

struct SolverSettings {
  int grid_points = 256;
  double newton_tol = 1e-10;
  int max_newton_iters = 100;
};

// Normalized log-likelihood: mean of per-point log densities.
inline double log_likelihood(const Model& model, const std::vector<double>& data, double theta) {
  if (data.empty()) throw std::invalid_argument("log_likelihood: data is empty");
  double acc = 0.0;
  for (double x : data) acc += model.log_pdf(theta, x);
  return acc / static_cast<double>(data.size());
}

namespace detail {

struct MeanScore {
  double value = 0.0;
  double deriv = 0.0;
};

inline MeanScore mean_score(const Model& model, const std::vector<double>& data, double theta) {
  MeanScore m;
  for (double x : data) {
    const ScoreEval e = model.score(theta, x);
    m.value += e.value;
    m.deriv += e.deriv;
  }
  const double n = static_cast<double>(data.size());
  m.value /= n;
  m.deriv /= n;
  return m;
}

}  // namespace detail

// Global grid scan over K followed by safeguarded Newton refinement of the
// best cell. Multimodal likelihoods are handled by the scan; the refinement
// never leaves the bracketing cell, so the returned value dominates every
// grid value.
inline MleResult solve(const Model& model, const std::vector<double>& data,
                       const SolverSettings& settings = SolverSettings{}) {
  if (data.empty()) throw std::invalid_argument("solve: data is empty");
  if (settings.grid_points < 8) throw std::invalid_argument("solve: grid_points must be >= 8");
  if (!(settings.newton_tol > 0.0)) throw std::invalid_argument("solve: newton_tol must be > 0");

  const double lo = model.domain().lo;
  const double hi = model.domain().hi;
  const int g = settings.grid_points;
  const double h = (hi - lo) / static_cast<double>(g - 1);

  std::vector<double> ll(g);
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < g; ++i) {
    const double theta = i == g - 1 ? hi : lo + h * i;
    ll[i] = log_likelihood(model, data, theta);
    if (std::isnan(ll[i])) throw std::runtime_error("solve: likelihood is not finite (corrupt data?)");
    best_ll = std::max(best_ll, ll[i]);
  }
  if (!std::isfinite(best_ll)) throw std::runtime_error("solve: likelihood is not finite (corrupt data?)");

  // ties within 1e-12 resolve to the smaller theta
  int best_idx = 0;
  for (int i = 0; i < g; ++i) {
    if (ll[i] >= best_ll - 1e-12) {
      best_idx = i;
      break;
    }
  }
  const double grid_theta = best_idx == g - 1 ? hi : lo + h * best_idx;
  const double grid_ll = ll[best_idx];

  MleResult out;
  out.theta_hat = grid_theta;
  out.loglik = grid_ll;

  // boundary maxima: the likelihood slopes outward at the endpoint
  if (best_idx == 0) {
    const detail::MeanScore s = detail::mean_score(model, data, lo);
    if (s.value <= 0.0) {
      out.score_at_hat = s.value;
      out.at_boundary = true;
      return out;
    }
  }
  if (best_idx == g - 1) {
    const detail::MeanScore s = detail::mean_score(model, data, hi);
    if (s.value >= 0.0) {
      out.score_at_hat = s.value;
      out.at_boundary = true;
      return out;
    }
  }

  const double a = best_idx == 0 ? lo : lo + h * (best_idx - 1);
  const double b = best_idx >= g - 2 ? hi : lo + h * (best_idx + 1);

  // establish a sign bracket [xa, xb] with L' >= 0 at xa and <= 0 at xb
  double xa = a, xb = b;
  detail::MeanScore sa = detail::mean_score(model, data, xa);
  detail::MeanScore sb = detail::mean_score(model, data, xb);
  detail::MeanScore sm = detail::mean_score(model, data, grid_theta);
  if (sm.value >= 0.0 && sb.value <= 0.0) {
    xa = grid_theta;
    sa = sm;
  } else if (sa.value >= 0.0 && sm.value <= 0.0) {
    xb = grid_theta;
    sb = sm;
  }

  double x = grid_theta;
  detail::MeanScore sx = sm;
  if (!(sa.value >= 0.0 && sb.value <= 0.0)) {
    // no derivative sign change across the cell; maximize L directly
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double la = xa, lb = xb;
    double m1 = lb - gr * (lb - la), m2 = la + gr * (lb - la);
    double f1 = log_likelihood(model, data, m1), f2 = log_likelihood(model, data, m2);
    int it = 0;
    while (lb - la > settings.newton_tol && it < 200) {
      if (f1 < f2) {
        la = m1;
        m1 = m2;
        f1 = f2;
        m2 = la + gr * (lb - la);
        f2 = log_likelihood(model, data, m2);
      } else {
        lb = m2;
        m2 = m1;
        f2 = f1;
        m1 = lb - gr * (lb - la);
        f1 = log_likelihood(model, data, m1);
      }
      ++it;
    }
    x = 0.5 * (la + lb);
    sx = detail::mean_score(model, data, x);
    out.iterations = it;
    if (std::abs(sx.value) > settings.newton_tol) out.hit_iteration_cap = true;
  } else {
    int it = 0;
    for (; it < settings.max_newton_iters; ++it) {
      sx = detail::mean_score(model, data, x);
      if (std::abs(sx.value) <= settings.newton_tol) break;
      if (sx.value > 0.0) {
        xa = x;
      } else {
        xb = x;
      }
      double xn;
      if (sx.deriv < 0.0) {
        xn = x - sx.value / sx.deriv;
        if (!(xn > xa && xn < xb)) xn = 0.5 * (xa + xb);
      } else {
        xn = 0.5 * (xa + xb);
      }
      if (xn == x) break;
      x = xn;
    }
    out.iterations = it;
    if (std::abs(sx.value) > settings.newton_tol) out.hit_iteration_cap = true;
  }

  x = std::clamp(x, lo, hi);
  const double refined_ll = log_likelihood(model, data, x);
  if (refined_ll >= grid_ll) {
    out.theta_hat = x;
    out.loglik = refined_ll;
    out.score_at_hat = sx.value;
  } else {
    // refinement fell below the scan value; keep the certified grid point
    out.score_at_hat = sm.value;
    out.hit_iteration_cap = true;
  }
  out.at_boundary = std::abs(out.theta_hat - lo) <= settings.newton_tol ||
                    std::abs(out.theta_hat - hi) <= settings.newton_tol;
  return out;
}

}  // namespace mlelab
