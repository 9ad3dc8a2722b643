#pragma once

#include <string>
#include <string_view>

#include "tailopt/linalg.hpp"
#include "tailopt/rng.hpp"

namespace tailopt {

enum class NoiseKind { gaussian, shifted_pareto, student_t };

std::string_view to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(std::string_view name);

/// Zero-mean additive perturbation law with a declared p-th moment bound.
///
/// `shape` is the Pareto tail index or the Student-t degrees of freedom and is
/// ignored for gaussian. `sigma` bounds the p-th absolute moment of a single
/// coordinate: E|xi_i|^p <= sigma^p. Vector draws are coordinate-wise i.i.d.,
/// so a d-dimensional draw satisfies E||xi||^p <= d * sigma^p, see
/// `declared_sigma`.
struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double shape = 0.0;
  double scale = 0.0;
  double p = 2.0;
  double sigma = 0.0;

  /// Builds a model with sigma set to `certified_sigma`. Throws ConfigError.
  static NoiseModel make(NoiseKind kind, double shape, double scale, double p);
  static NoiseModel none() { return NoiseModel{}; }

  /// Throws ConfigError unless the parameters describe a valid law with a
  /// finite p-th moment.
  void validate() const;
  bool is_zero() const { return scale == 0.0; }

  /// Bound on (E||xi||^p)^(1/p) for a dim-dimensional draw: sigma * dim^(1/p).
  /// Valid because t -> t^(p/2) is subadditive for p <= 2.
  double declared_sigma(int dim) const;
};

/// Per-coordinate (E|xi|^p)^(1/p), computed in closed form (gaussian,
/// student_t) or by adaptive quadrature (shifted_pareto), rounded up slightly.
double certified_sigma(NoiseKind kind, double shape, double scale, double p);

/// Zero-mean draw. For shifted_pareto each coordinate is
/// Pareto(shape, scale) - shape * scale / (shape - 1), with the Pareto variate
/// generated by inverse-CDF: scale * U^(-1/shape).
Vec sample(const NoiseModel& model, int dim, RngStream& rng);

/// min{1, tau / ||v||} * v, and 0 for v = 0. tau = +inf is the identity.
Vec clip(const Vec& v, double tau);

/// Monte-Carlo estimate (1/n) sum ||xi_i||^p over n >= 1000 fresh draws.
double empirical_central_moment(const NoiseModel& model, double p, int dim, long n,
                                RngStream& rng);

}  // namespace tailopt
