#include "tailopt/noise.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "tailopt/errors.hpp"

namespace tailopt {

namespace {

// Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
double gamma_draw(double shape, RngStream& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_draw(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double z = 0.0;
    double v = 0.0;
    do {
      z = rng.normal();
      v = 1.0 + c * z;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// E|X - m|^p for X ~ Pareto(alpha, 1), m = alpha / (alpha - 1). Written in the
// quantile variable u, where X = u^(-1/alpha); the integrand has an integrable
// endpoint singularity at u = 0 and a kink where X = m.
double pareto_central_abs_moment(double alpha, double p) {
  const double m = alpha / (alpha - 1.0);
  const double kink = std::pow(m, -alpha);
  auto integrand = [&](double u) { return std::pow(std::abs(std::pow(u, -1.0 / alpha) - m), p); };
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double tol = 1e-12;
  const double lower = integrator.integrate(integrand, 0.0, kink, tol);
  const double upper = integrator.integrate(integrand, kink, 1.0, tol);
  return lower + upper;
}

}  // namespace

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::shifted_pareto: return "shifted_pareto";
    case NoiseKind::student_t: return "student_t";
  }
  return "unknown";
}

NoiseKind noise_kind_from_string(std::string_view name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "shifted_pareto" || name == "pareto") return NoiseKind::shifted_pareto;
  if (name == "student_t") return NoiseKind::student_t;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

void NoiseModel::validate() const {
  if (!(p > 1.0 && p <= 2.0)) throw ConfigError("noise moment order p must lie in (1, 2]");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sigma must be finite and >= 0");
  switch (kind) {
    case NoiseKind::gaussian:
      if (!(scale >= 0.0) || !std::isfinite(scale)) throw ConfigError("gaussian scale must be >= 0");
      break;
    case NoiseKind::shifted_pareto:
      if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("pareto scale must be > 0");
      if (!(shape > p)) {
        throw ConfigError("pareto tail index must exceed p (got alpha=" + std::to_string(shape) +
                          ", p=" + std::to_string(p) + ")");
      }
      break;
    case NoiseKind::student_t:
      if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("student_t scale must be > 0");
      if (!(shape > p)) throw ConfigError("student_t degrees of freedom must exceed p");
      break;
  }
}

NoiseModel NoiseModel::make(NoiseKind kind, double shape, double scale, double p) {
  NoiseModel model{kind, shape, scale, p, 0.0};
  model.validate();
  model.sigma = certified_sigma(kind, shape, scale, p);
  return model;
}

double NoiseModel::declared_sigma(int dim) const {
  return sigma * std::pow(static_cast<double>(dim), 1.0 / p);
}

double certified_sigma(NoiseKind kind, double shape, double scale, double p) {
  NoiseModel{kind, shape, scale, p, 0.0}.validate();
  if (scale == 0.0) return 0.0;
  double moment = 0.0;  // E|xi|^p at unit scale
  switch (kind) {
    case NoiseKind::gaussian:
      moment = std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
      break;
    case NoiseKind::student_t:
      moment = std::pow(shape, p / 2.0) * std::tgamma((p + 1.0) / 2.0) *
               std::tgamma((shape - p) / 2.0) /
               (std::sqrt(std::numbers::pi) * std::tgamma(shape / 2.0));
      break;
    case NoiseKind::shifted_pareto:
      moment = pareto_central_abs_moment(shape, p);
      break;
  }
  // Quadrature error is far below this margin.
  return scale * std::pow(moment, 1.0 / p) * (1.0 + 1e-9);
}

Vec sample(const NoiseModel& model, int dim, RngStream& rng) {
  if (dim <= 0) throw ConfigError("noise dimension must be positive");
  Vec out = Vec::Zero(dim);
  if (model.is_zero()) return out;
  switch (model.kind) {
    case NoiseKind::gaussian:
      for (int i = 0; i < dim; ++i) out[i] = model.scale * rng.normal();
      break;
    case NoiseKind::shifted_pareto: {
      const double alpha = model.shape;
      const double mean = alpha * model.scale / (alpha - 1.0);
      for (int i = 0; i < dim; ++i) {
        out[i] = model.scale * std::pow(rng.uniform(), -1.0 / alpha) - mean;
      }
      break;
    }
    case NoiseKind::student_t: {
      const double nu = model.shape;
      for (int i = 0; i < dim; ++i) {
        const double z = rng.normal();
        const double chi2 = 2.0 * gamma_draw(nu / 2.0, rng);
        out[i] = model.scale * z / std::sqrt(chi2 / nu);
      }
      break;
    }
  }
  return out;
}

Vec clip(const Vec& v, double tau) {
  if (!(tau > 0.0)) throw ConfigError("clip radius must be positive");
  const double norm = v.norm();
  if (norm == 0.0 || norm <= tau) return v;
  return (tau / norm) * v;
}

double empirical_central_moment(const NoiseModel& model, double p, int dim, long n,
                                RngStream& rng) {
  if (n < 1000) throw ConfigError("empirical moment needs n >= 1000 draws");
  if (!(p > 0.0)) throw ConfigError("moment order must be positive");
  model.validate();
  double sum = 0.0;
  for (long i = 0; i < n; ++i) sum += std::pow(sample(model, dim, rng).norm(), p);
  return sum / static_cast<double>(n);
}

}  // namespace tailopt
