#pragma once
// The parametric families under study, behind one uniform interface:
// log-density with exact normalizer, score and its theta-derivative, exact
// sampler, Fisher information by quadrature, and the closed-form uniform
// score envelope where one exists. Gaussian location is the exact-normality
// control; its score is unbounded in x, so it reports no envelope.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlelab/quadrature.hpp"
#include "mlelab/rng.hpp"

namespace mlelab {

inline constexpr double kPi = 3.14159265358979323846;

enum class Family { gaussian_location, pearson_iv_location, logistic_location, cauchy_scale };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian_location: return "gaussian";
    case Family::pearson_iv_location: return "pearson";
    case Family::logistic_location: return "logistic";
    case Family::cauchy_scale: return "cauchy_scale";
  }
  return "?";
}

struct ShapeParams {
  double sigma = 1.0;  // gaussian / pearson scale
  double m = 1.0;      // pearson tail exponent, > 1/2
  double nu = 0.0;     // pearson skew
};

// Compact parameter interval K.
struct ParamSet {
  double lo = 0.0;
  double hi = 0.0;
};

struct ScoreEval {
  double value = 0.0;  // d/dtheta log f
  double deriv = 0.0;  // d^2/dtheta^2 log f
};

namespace detail {

inline double logsum(double la, double lb) {
  const double m = std::max(la, lb);
  return m + std::log1p(std::exp(std::min(la, lb) - m));
}

// Normalizer of the Pearson angle density cos^{2m-2}(phi) e^{nu phi} on
// (-pi/2, pi/2). The endpoint singularity is removed exactly by the power
// substitution delta = r^{1/(2m-1)}, which keeps the scheme accurate
// arbitrarily close to m = 1/2 where nearly all mass hugs the endpoints.
inline double pearson_angle_norm(double m, double nu) {
  const double p = 2.0 * m - 2.0;
  const double q = 1.0 / (2.0 * m - 1.0);
  auto sinc = [](double z) { return z == 0.0 ? 1.0 : std::sin(z) / z; };
  const double central = integrate_interval(
      [p, nu](double phi) { return std::pow(std::cos(phi), p) * std::exp(nu * phi); },
      -kPi / 4.0, kPi / 4.0, 1e-12);
  const double r_hi = std::pow(kPi / 4.0, 2.0 * m - 1.0);
  const double right = q * integrate_interval(
      [p, q, nu, sinc](double r) {
        const double d = std::pow(r, q);
        return std::pow(sinc(d), p) * std::exp(nu * (kPi / 2.0 - d));
      },
      0.0, r_hi, 1e-12);
  const double left = q * integrate_interval(
      [p, q, nu, sinc](double r) {
        const double d = std::pow(r, q);
        return std::pow(sinc(d), p) * std::exp(nu * (d - kPi / 2.0));
      },
      0.0, r_hi, 1e-12);
  return central + right + left;
}

}  // namespace detail

class Model {
 public:
  Model(Family family, ShapeParams shape, double theta0, ParamSet k)
      : family_(family), shape_(shape), theta0_(theta0), k_(k) {
    if (!(std::isfinite(k_.lo) && std::isfinite(k_.hi)) || !(k_.lo < k_.hi)) {
      throw std::invalid_argument("K: need finite lo < hi");
    }
    if (!(theta0_ > k_.lo && theta0_ < k_.hi)) {
      throw std::invalid_argument("theta0: must lie strictly inside (K.lo, K.hi)");
    }
    switch (family_) {
      case Family::gaussian_location:
      case Family::pearson_iv_location:
        if (!(shape_.sigma > 0.0)) throw std::invalid_argument("shape.sigma: must be > 0");
        break;
      case Family::logistic_location:
        break;
      case Family::cauchy_scale:
        if (!(k_.lo > 0.0)) throw std::invalid_argument("K.lo: must be > 0 for a scale family");
        break;
    }
    if (family_ == Family::pearson_iv_location) {
      if (!(shape_.m > 0.5)) throw std::invalid_argument("shape.m: must be > 1/2");
      if (!std::isfinite(shape_.nu)) throw std::invalid_argument("shape.nu: must be finite");
      log_norm_ = std::log(shape_.sigma) + std::log(detail::pearson_angle_norm(shape_.m, shape_.nu));
    } else if (family_ == Family::gaussian_location) {
      log_norm_ = 0.5 * std::log(2.0 * kPi * shape_.sigma * shape_.sigma);
    }
    fisher0_ = fisher_information(theta0_);
  }

  Family family() const { return family_; }
  const ShapeParams& shape() const { return shape_; }
  double theta0() const { return theta0_; }
  const ParamSet& domain() const { return k_; }
  // Fisher information at theta0, cached at construction.
  double fisher0() const { return fisher0_; }

  double log_pdf(double theta, double x) const {
    check_theta(theta);
    switch (family_) {
      case Family::gaussian_location: {
        const double y = x - theta;
        return -log_norm_ - y * y / (2.0 * shape_.sigma * shape_.sigma);
      }
      case Family::pearson_iv_location: {
        const double w = (x - theta) / shape_.sigma;
        return -log_norm_ - shape_.m * std::log1p(w * w) + shape_.nu * std::atan(w);
      }
      case Family::logistic_location: {
        // -u - 2*softplus(-u), stable on both tails.
        const double u = x - theta;
        const double sp = u >= 0.0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
        return -u - 2.0 * sp;
      }
      case Family::cauchy_scale: {
        const double w = x / theta;
        return -std::log(kPi) - std::log(theta) - std::log1p(w * w);
      }
    }
    return 0.0;
  }

  ScoreEval score(double theta, double x) const {
    check_theta(theta);
    ScoreEval e;
    switch (family_) {
      case Family::gaussian_location: {
        const double s2 = shape_.sigma * shape_.sigma;
        e.value = (x - theta) / s2;
        e.deriv = -1.0 / s2;
        break;
      }
      case Family::pearson_iv_location: {
        const double m = shape_.m, nu = shape_.nu, sg = shape_.sigma;
        const double y = x - theta;
        if (std::abs(y) > 1e80) {
          // Scaled form; the direct ratio is inf/inf out here.
          const double inv = 1.0 / y;
          const double c = 1.0 + sg * sg * inv * inv;
          e.value = (2.0 * m - nu * sg * inv) * inv / c;
          e.deriv = (2.0 * m * (1.0 - sg * sg * inv * inv) - 2.0 * nu * sg * inv) * inv * inv / (c * c);
        } else {
          const double d = sg * sg + y * y;
          e.value = (2.0 * m * y - nu * sg) / d;
          e.deriv = (2.0 * m * (y * y - sg * sg) - 2.0 * nu * sg * y) / (d * d);
        }
        break;
      }
      case Family::logistic_location: {
        const double t = std::tanh((x - theta) / 2.0);
        e.value = t;
        e.deriv = -(1.0 - t * t) / 2.0;
        break;
      }
      case Family::cauchy_scale: {
        if (std::abs(x) > 1e80) {
          e.value = 1.0 / theta;
          e.deriv = -1.0 / (theta * theta);
        } else {
          const double d = theta * theta + x * x;
          e.value = (x * x - theta * theta) / (theta * d);
          e.deriv = -1.0 / (theta * theta) - 2.0 * (x * x - theta * theta) / (d * d);
        }
        break;
      }
    }
    return e;
  }

  // i.i.d. draws from f(.|theta0); exact transforms only, so the output law
  // is the model law up to floating-point representation.
  void sample_into(SeededStream& rs, double* out, std::size_t count) const {
    for (std::size_t i = 0; i < count; ++i) out[i] = draw_one(rs);
  }

  std::vector<double> sample(SeededStream& rs, std::size_t count) const {
    if (count < 1) throw std::invalid_argument("count: must be >= 1");
    std::vector<double> v(count);
    sample_into(rs, v.data(), count);
    return v;
  }

  // I_X(theta) = -E[score deriv] by adaptive quadrature; strictly positive.
  double fisher_information(double theta) const {
    check_theta(theta);
    const double v = expectation(theta, [this, theta](double x) { return -score(theta, x).deriv; });
    if (!(v > 0.0)) {
      throw std::runtime_error("fisher information came out non-positive: " + std::to_string(v));
    }
    return v;
  }

  // Uniform envelope sup_{theta in K, x} |score|; empty when unbounded.
  std::optional<double> lipschitz_bound() const {
    switch (family_) {
      case Family::gaussian_location: return std::nullopt;
      case Family::pearson_iv_location: return (shape_.m + std::abs(shape_.nu)) / shape_.sigma;
      case Family::logistic_location: return 1.0;
      case Family::cauchy_scale: return 1.0 / k_.lo;
    }
    return std::nullopt;
  }

  // E[g(X)] under f(.|theta), by quadrature adapted to the family's tails.
  template <class G>
  double expectation(double theta, G&& g) const {
    check_theta(theta);
    if (family_ == Family::cauchy_scale) {
      // x = theta*v turns the integrand into a standard-Cauchy weight.
      return integrate_real_line([&](double v) {
        return g(theta * v) / (kPi * (1.0 + v * v));
      });
    }
    return integrate_real_line([&](double u) {
      const double x = theta + u;
      return g(x) * std::exp(log_pdf(theta, x));
    });
  }

 private:
  void check_theta(double theta) const {
    if (!(theta >= k_.lo - 1e-12 && theta <= k_.hi + 1e-12)) {
      throw std::domain_error(std::string(family_name(family_)) + ": theta " +
                              std::to_string(theta) + " outside K");
    }
  }

  double draw_one(SeededStream& rs) const {
    switch (family_) {
      case Family::gaussian_location:
        return theta0_ + shape_.sigma * rs.normal();
      case Family::logistic_location: {
        const double u = rs.uniform();
        return theta0_ + std::log(u / (1.0 - u));
      }
      case Family::cauchy_scale:
        return theta0_ * std::tan(kPi * (rs.uniform() - 0.5));
      case Family::pearson_iv_location:
        return theta0_ + shape_.sigma * pearson_tan_draw(rs);
    }
    return 0.0;
  }

  // Draw tan(phi) where phi has density prop. to cos^{2m-2}(phi) e^{nu phi}
  // on (-pi/2, pi/2); equals (X - theta0)/sigma. Exact rejection scheme:
  // m >= 1 proposes phi uniform, m < 1 proposes sin(phi) = 2V - 1 with
  // V ~ Beta(m-1/2, m-1/2) by Johnk's method kept in log space (near m = 1/2
  // the Beta mass hugs the endpoints far below double resolution).
  double pearson_tan_draw(SeededStream& rs) const {
    const double m = shape_.m, nu = shape_.nu;
    const double p = 2.0 * m - 2.0;
    for (int attempt = 0; attempt < 1000000; ++attempt) {
      double phi, tan_phi;
      double log_acc = 0.0;
      if (m >= 1.0) {
        phi = kPi * (rs.uniform() - 0.5);
        tan_phi = std::tan(phi);
        log_acc = p * std::log(std::cos(phi));
      } else {
        const double a = m - 0.5;
        double lx, ly, ls;
        do {
          lx = std::log(rs.uniform()) / a;
          ly = std::log(rs.uniform()) / a;
          ls = detail::logsum(lx, ly);
        } while (ls > 0.0);
        const double lv = lx - ls;      // log V
        const double l1mv = ly - ls;    // log(1 - V)
        const double lmin = std::min(lv, l1mv);
        const double sgn = lv >= l1mv ? 1.0 : -1.0;
        const double em = std::exp(lmin);
        double mag;  // |tan(phi)| = |2V-1| / (2 sqrt(V(1-V)))
        if (em < 1e-300) {
          mag = 0.5 * std::exp(-0.5 * lmin);
          if (mag > 1e300) mag = 1e300;  // beyond double range; P ~ 4e-7 at m near 1/2
        } else {
          mag = (1.0 - 2.0 * em) / (2.0 * std::sqrt(em * (1.0 - em)));
        }
        tan_phi = sgn * mag;
        phi = std::atan(tan_phi);
      }
      if (nu != 0.0) log_acc += nu * phi - std::abs(nu) * kPi / 2.0;
      if (log_acc >= 0.0 || std::log(rs.uniform()) < log_acc) return tan_phi;
    }
    throw std::runtime_error("pearson sampler: acceptance rate pathologically low");
  }

  Family family_;
  ShapeParams shape_;
  double theta0_;
  ParamSet k_;
  double log_norm_ = 0.0;  // gaussian: log sqrt(2 pi sigma^2); pearson: log(sigma * angle norm)
  double fisher0_ = 0.0;
};

}  // namespace mlelab
