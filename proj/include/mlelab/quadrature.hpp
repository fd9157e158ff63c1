#pragma once
// Thin wrappers over double-exponential quadrature rules. Both handle the
// integrands this project actually meets: algebraic tails on the real line
// (Cauchy-type densities) and integrable endpoint singularities on finite
// intervals (the cos^{2m-2} Pearson normalizer near m = 1/2).

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace mlelab {

// Integral of f over (-inf, inf). Throws if the requested tolerance was not
// reached; the message carries the achieved error estimate.
template <class F>
double integrate_real_line(F&& f, double tol = 1e-11, double* err_out = nullptr) {
  static thread_local boost::math::quadrature::sinh_sinh<double> rule;
  double error = 0.0, l1 = 0.0;
  const double v = rule.integrate(f, tol, &error, &l1);
  if (err_out != nullptr) *err_out = error;
  if (!(error <= 1e-8 * (1.0 + std::abs(v)))) {
    throw std::runtime_error("real-line quadrature did not converge: achieved error " +
                             std::to_string(error));
  }
  return v;
}

// Integral of f over [a, b]; endpoint singularities are fine.
template <class F>
double integrate_interval(F&& f, double a, double b, double tol = 1e-11,
                          double* err_out = nullptr) {
  static thread_local boost::math::quadrature::tanh_sinh<double> rule;
  double error = 0.0, l1 = 0.0;
  const double v = rule.integrate(f, a, b, tol, &error, &l1);
  if (err_out != nullptr) *err_out = error;
  if (!(error <= 1e-8 * (1.0 + std::abs(v)))) {
    throw std::runtime_error("interval quadrature did not converge: achieved error " +
                             std::to_string(error));
  }
  return v;
}

// Integral over [a, b] for integrands singular at an endpoint whose
// coordinate cannot hold precision (e.g. cos(phi) near pi/2). The functor
// receives (x, xc) where xc is the signed exact distance to the nearest
// endpoint (positive near a, negative near b); compute the singular factor
// from |xc| instead of x.
template <class F>
double integrate_interval_singular(F&& f, double a, double b, double tol = 1e-11,
                                   double* err_out = nullptr) {
  static thread_local boost::math::quadrature::tanh_sinh<double> rule;
  double error = 0.0, l1 = 0.0;
  const double v = rule.integrate(f, a, b, tol, &error, &l1);
  if (err_out != nullptr) *err_out = error;
  if (!(error <= 1e-8 * (1.0 + std::abs(v)))) {
    throw std::runtime_error("singular interval quadrature did not converge: achieved error " +
                             std::to_string(error));
  }
  return v;
}

// Trapezoid sum of uniformly spaced values; the workhorse for KDE-grid
// functionals where the integrand is only known on the grid.
inline double trapezoid(const std::vector<double>& values, double step) {
  if (values.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  s -= 0.5 * (values.front() + values.back());
  return s * step;
}

}  // namespace mlelab
