#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>

#include "tailopt/linalg.hpp"
#include "tailopt/noise.hpp"
#include "tailopt/rng.hpp"

namespace tailopt {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Bilevel problems:  min_x f(x, y*(x)),  y*(x) = argmin_y g(x, y)
// ---------------------------------------------------------------------------

/// Smoothness and strong-convexity constants of a bilevel instance. Entries
/// are empty when unknown.
struct BilevelConstants {
  std::optional<double> C_f;    // Lipschitz constant of f in y
  std::optional<double> L_f;    // gradient Lipschitz constant of f
  std::optional<double> L_g;    // gradient Lipschitz constant of g
  std::optional<double> rho_g;  // Hessian Lipschitz constant of g
  std::optional<double> mu;     // strong convexity of g(x, .)

  bool complete() const { return C_f && L_f && L_g && rho_g && mu; }
  /// max{C_f, L_f, L_g, rho_g}; throws ConfigError when incomplete.
  double ell() const;
  double kappa() const { return ell() / require_mu(); }

  // Penalty-gap constants: ||y*_lambda - y*|| <= C_f/(lambda mu),
  // |L*_lambda - phi| <= D0/lambda, ||grad L*_lambda - grad phi|| <= D1/lambda,
  // ||grad y* - grad y*_lambda|| <= D2/lambda, all for lambda >= 2 L_f / mu.
  double D0() const;
  double D1() const;
  double D2() const;

 private:
  double require_mu() const;
};

class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;

  virtual std::string kind() const = 0;
  virtual int dim_x() const = 0;
  virtual int dim_y() const = 0;

  virtual double f(const Vec& x, const Vec& y) const = 0;
  virtual double g(const Vec& x, const Vec& y) const = 0;
  virtual BlockGrad grad_f(const Vec& x, const Vec& y) const = 0;
  virtual BlockGrad grad_g(const Vec& x, const Vec& y) const = 0;
  virtual Vec grad_f_x(const Vec& x, const Vec& y) const { return grad_f(x, y).x; }
  virtual Vec grad_f_y(const Vec& x, const Vec& y) const { return grad_f(x, y).y; }
  virtual Vec grad_g_x(const Vec& x, const Vec& y) const { return grad_g(x, y).x; }
  virtual Vec grad_g_y(const Vec& x, const Vec& y) const { return grad_g(x, y).y; }

  /// Second-order information of g and f in the y-block. Instances without it
  /// throw ConfigError from these methods.
  virtual bool has_second_order() const { return false; }
  /// d^2 g / dx dy as a (dim_x x dim_y) matrix.
  virtual Mat hess_xy_g(const Vec& x, const Vec& y) const;
  virtual Mat hess_yy_g(const Vec& x, const Vec& y) const;
  virtual Mat hess_yy_f(const Vec& x, const Vec& y) const;

  /// Lower-level solution. The default runs gradient descent with Armijo
  /// backtracking to ||grad_y g|| <= 1e-10.
  virtual Vec y_star(const Vec& x) const;
  /// argmin_y f(x, y) + lambda g(x, y); same default solver.
  virtual Vec y_star_lambda(const Vec& x, double lambda) const;
  virtual double phi(const Vec& x) const { return f(x, y_star(x)); }

  virtual Json to_json() const = 0;

  const BilevelConstants& constants() const { return constants_; }
  const NoiseModel& noise_f() const { return noise_f_; }
  const NoiseModel& noise_g() const { return noise_g_; }
  void set_noise(NoiseModel noise_f, NoiseModel noise_g);

  // Stochastic block oracles: exact block gradient plus one noise draw of the
  // block's dimension. Each call is one SFO evaluation. Evaluating two points
  // with copies of the same stream state reuses the sample.
  Vec noisy_grad_f_x(const Vec& x, const Vec& y, RngStream& rng) const;
  Vec noisy_grad_f_y(const Vec& x, const Vec& y, RngStream& rng) const;
  Vec noisy_grad_g_x(const Vec& x, const Vec& y, RngStream& rng) const;
  Vec noisy_grad_g_y(const Vec& x, const Vec& y, RngStream& rng) const;

 protected:
  BilevelConstants constants_;
  NoiseModel noise_f_;
  NoiseModel noise_g_;
};

/// grad phi(x) = grad_x f - H_xy g [H_yy g]^{-1} grad_y f at y = y*(x), with
/// the linear system solved by Cholesky. Throws NumericalError (with the
/// condition number) when H_yy g is not safely positive definite.
Vec hypergradient(const BilevelProblem& prob, const Vec& x);

/// grad_x f(x, y) + lambda (grad_x g(x, y) - grad_x g(x, z)); equals
/// grad L*_lambda(x) at y = y*_lambda(x), z = y*(x).
Vec penalty_grad_x(const BilevelProblem& prob, const Vec& x, const Vec& y, const Vec& z,
                   double lambda);

/// L*_lambda(x) = f(x, y_l) + lambda (g(x, y_l) - g(x, y*)), y_l = y*_lambda(x).
double penalty_value(const BilevelProblem& prob, const Vec& x, double lambda);

// ---------------------------------------------------------------------------
// Minimax problems:  min_x max_y f(x, y), f(x, .) strongly concave
// ---------------------------------------------------------------------------

struct MinimaxConstants {
  std::optional<double> ell;  // smoothness of f
  std::optional<double> mu;   // strong concavity of f(x, .)
  double kappa() const;
};

class MinimaxProblem {
 public:
  virtual ~MinimaxProblem() = default;

  virtual std::string kind() const = 0;
  virtual int dim_x() const = 0;
  virtual int dim_y() const = 0;

  virtual double f(const Vec& x, const Vec& y) const = 0;
  virtual BlockGrad grad_f(const Vec& x, const Vec& y) const = 0;
  virtual Vec grad_f_x(const Vec& x, const Vec& y) const { return grad_f(x, y).x; }
  virtual Vec grad_f_y(const Vec& x, const Vec& y) const { return grad_f(x, y).y; }

  /// Inner maximizer. Default: gradient ascent with Armijo backtracking to
  /// ||grad_y f|| <= 1e-10; throws NumericalError if that fails.
  virtual Vec y_star(const Vec& x) const;
  /// Closed-form Phi and grad Phi, if the instance has them.
  virtual std::optional<std::pair<double, Vec>> analytic_phi(const Vec& /*x*/) const {
    return std::nullopt;
  }

  virtual Json to_json() const = 0;

  const MinimaxConstants& constants() const { return constants_; }
  const NoiseModel& noise_f() const { return noise_f_; }
  void set_noise(NoiseModel noise_f);

  Vec noisy_grad_f_x(const Vec& x, const Vec& y, RngStream& rng) const;
  Vec noisy_grad_f_y(const Vec& x, const Vec& y, RngStream& rng) const;

 protected:
  MinimaxConstants constants_;
  NoiseModel noise_f_;
};

enum class PhiRoute { automatic, inner_maximization };

/// (Phi(x), grad Phi(x)) with grad Phi(x) = grad_x f(x, y*(x)). Uses the
/// closed form when available unless `route` forces the inner maximization.
std::pair<double, Vec> phi_and_grad(const MinimaxProblem& prob, const Vec& x,
                                    PhiRoute route = PhiRoute::automatic);

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// g(x, y) = 1/2 ||y - A x||^2,  f(x, y) = 1/2 [x;y]^T Q [x;y] + b^T [x;y].
///
/// f is not globally Lipschitz in y, so C_f is the bound on ||grad_y f|| over
/// the region ||x|| <= x_radius, ||y - A x|| <= 1, which contains every
/// y*_lambda(x) checked in the test suite.
class QuadraticBilevel final : public BilevelProblem {
 public:
  QuadraticBilevel(Mat A, Mat Q, Vec b, double x_radius = 1.0);

  std::string kind() const override { return "quadratic_bilevel"; }
  int dim_x() const override { return static_cast<int>(A_.cols()); }
  int dim_y() const override { return static_cast<int>(A_.rows()); }

  double f(const Vec& x, const Vec& y) const override;
  double g(const Vec& x, const Vec& y) const override;
  BlockGrad grad_f(const Vec& x, const Vec& y) const override;
  BlockGrad grad_g(const Vec& x, const Vec& y) const override;
  Vec grad_f_x(const Vec& x, const Vec& y) const override;
  Vec grad_f_y(const Vec& x, const Vec& y) const override;
  Vec grad_g_x(const Vec& x, const Vec& y) const override;
  Vec grad_g_y(const Vec& x, const Vec& y) const override;

  bool has_second_order() const override { return true; }
  Mat hess_xy_g(const Vec& x, const Vec& y) const override;
  Mat hess_yy_g(const Vec& x, const Vec& y) const override;
  Mat hess_yy_f(const Vec& x, const Vec& y) const override;

  Vec y_star(const Vec& x) const override { return A_ * x; }
  Vec y_star_lambda(const Vec& x, double lambda) const override;

  /// grad phi(x) = P^T (Q P x + b), P = [I; A]; independent of the implicit
  /// formula.
  Vec grad_phi(const Vec& x) const;
  /// grad^2_yy L_lambda = Q_yy + lambda I.
  Mat penalty_hess_yy(double lambda) const;

  const Mat& A() const { return A_; }
  const Mat& Q() const { return Q_; }
  const Vec& b() const { return b_; }
  double x_radius() const { return x_radius_; }

  Json to_json() const override;
  static std::shared_ptr<QuadraticBilevel> from_json(const Json& j);

 private:
  Mat A_;
  Mat Q_;
  Vec b_;
  double x_radius_;
};

/// Random instance: A ~ N(0, 1/d_x), Q = B^T B / n + q_shift I, b ~ N(0, 1).
std::shared_ptr<QuadraticBilevel> make_quadratic_bilevel(std::uint64_t seed, int dim_x,
                                                         int dim_y, double q_shift = 0.5);

/// f(x, y) = m1 [||x||^2 + sin(3 sqrt(||x||^2 + 1))] + x^T K y - m2 ||y||^2.
class TwoPlayerGame final : public MinimaxProblem {
 public:
  TwoPlayerGame(Mat K, double m1, double m2);

  std::string kind() const override { return "two_player_game"; }
  int dim_x() const override { return static_cast<int>(K_.rows()); }
  int dim_y() const override { return static_cast<int>(K_.cols()); }

  double f(const Vec& x, const Vec& y) const override;
  BlockGrad grad_f(const Vec& x, const Vec& y) const override;
  Vec grad_f_x(const Vec& x, const Vec& y) const override;
  Vec grad_f_y(const Vec& x, const Vec& y) const override;

  /// K^T x / (2 m2).
  Vec y_star(const Vec& x) const override;
  /// Phi(x) = m1 [||x||^2 + sin(3 sqrt(||x||^2+1))] + ||K^T x||^2 / (4 m2).
  std::optional<std::pair<double, Vec>> analytic_phi(const Vec& x) const override;

  const Mat& K() const { return K_; }
  double m1() const { return m1_; }
  double m2() const { return m2_; }

  Json to_json() const override;
  static std::shared_ptr<TwoPlayerGame> from_json(const Json& j);

 private:
  Mat K_;
  Mat KKt_over_2m2_;
  double m1_;
  double m2_;
};

/// K = 10 Kt / ||Kt||_2, Kt = (M + M^T)/2, M_ij ~ N(0, 1) drawn from `seed`.
std::shared_ptr<TwoPlayerGame> make_two_player_game(std::uint64_t seed, double m1 = 1.0,
                                                    double m2 = 1.0, int dim = 30);

/// Largest singular value by power iteration on M^T M (tolerance 1e-12 on the
/// Rayleigh quotient, at most 10^4 iterations).
double spectral_norm(const Mat& m);

/// f(x, y) = sum_i [x_i^2 / 2 + 2 cos(x_i)] - (mu/2) ||y - c||^2. The x- and
/// y-problems decouple: y*(x) = c and grad Phi(x) = x - 2 sin(x).
class SeparableGame final : public MinimaxProblem {
 public:
  SeparableGame(Vec center, int dim_x, double mu);

  std::string kind() const override { return "separable_game"; }
  int dim_x() const override { return dim_x_; }
  int dim_y() const override { return static_cast<int>(center_.size()); }

  double f(const Vec& x, const Vec& y) const override;
  BlockGrad grad_f(const Vec& x, const Vec& y) const override;

  Vec y_star(const Vec& /*x*/) const override { return center_; }
  std::optional<std::pair<double, Vec>> analytic_phi(const Vec& x) const override;
  /// The x-part only: grad of sum_i [x_i^2/2 + 2 cos(x_i)].
  Vec grad_x_part(const Vec& x) const;

  Json to_json() const override;
  static std::shared_ptr<SeparableGame> from_json(const Json& j);

 private:
  Vec center_;
  int dim_x_;
  double mu_;
};

/// Learnable feature-wise regularization for logistic regression:
///   g(x, y) = mean_train CE(<a_i, y>, b_i) + y^T diag(exp(x)) y
///   f(x, y) = mean_val CE(<a_i, y>, b_i)
/// Constants are estimated once over the box |x_i| <= x_box and stored.
class LearnableRegLogReg final : public BilevelProblem {
 public:
  LearnableRegLogReg(Mat A_train, Vec b_train, Mat A_val, Vec b_val, double x_box = 3.0);
  /// Restores a serialized instance with its stored constants.
  LearnableRegLogReg(Mat A_train, Vec b_train, Mat A_val, Vec b_val, double x_box,
                     BilevelConstants constants);

  std::string kind() const override { return "learnable_reg"; }
  int dim_x() const override { return static_cast<int>(A_train_.cols()); }
  int dim_y() const override { return static_cast<int>(A_train_.cols()); }

  double f(const Vec& x, const Vec& y) const override;
  double g(const Vec& x, const Vec& y) const override;
  BlockGrad grad_f(const Vec& x, const Vec& y) const override;
  BlockGrad grad_g(const Vec& x, const Vec& y) const override;

  bool has_second_order() const override { return true; }
  Mat hess_xy_g(const Vec& x, const Vec& y) const override;
  Mat hess_yy_g(const Vec& x, const Vec& y) const override;
  Mat hess_yy_f(const Vec& x, const Vec& y) const override;

  /// Damped Newton on g(x, .) to ||grad_y g|| <= 1e-13.
  Vec y_star(const Vec& x) const override;
  Vec y_star_lambda(const Vec& x, double lambda) const override;

  double x_box() const { return x_box_; }
  Json to_json() const override;
  static std::shared_ptr<LearnableRegLogReg> from_json(const Json& j);

 private:
  void estimate_constants();
  Vec newton_solve(const Vec& x, double weight_f, double weight_g) const;

  Mat A_train_;
  Vec b_train_;
  Mat A_val_;
  Vec b_val_;
  double x_box_;
};

/// Synthetic Gaussian features, a planted sparse weight vector, Bernoulli
/// labels, and 10% label flips in the training split.
std::shared_ptr<LearnableRegLogReg> make_learnable_reg(std::uint64_t seed, int dim = 10,
                                                       int n_train = 60, int n_val = 200);

// ---------------------------------------------------------------------------
// Serialization helpers: matrices as {"rows", "cols", "data" (row-major)}.
// ---------------------------------------------------------------------------

Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);

std::shared_ptr<BilevelProblem> bilevel_from_json(const Json& j);
std::shared_ptr<MinimaxProblem> minimax_from_json(const Json& j);

}  // namespace tailopt
