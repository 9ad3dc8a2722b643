#include "tailopt/problems.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "tailopt/errors.hpp"

namespace tailopt {

namespace {

constexpr double kInnerTol = 1e-10;
constexpr long kInnerMaxIter = 1'000'000;

// Gradient descent with Armijo backtracking on a smooth function of y.
template <typename Value, typename Grad>
Vec armijo_descent(Value&& value, Grad&& grad, Vec y, const char* what) {
  double step = 1.0;
  for (long it = 0; it < kInnerMaxIter; ++it) {
    const Vec gy = grad(y);
    const double gnorm2 = gy.squaredNorm();
    if (!std::isfinite(gnorm2)) throw NumericalError(std::string(what) + ": non-finite gradient");
    if (std::sqrt(gnorm2) <= kInnerTol) return y;
    const double v0 = value(y);
    while (true) {
      const Vec trial = y - step * gy;
      if (value(trial) <= v0 - 0.5 * step * gnorm2) {
        y = trial;
        break;
      }
      step *= 0.5;
      if (step < 1e-30) {
        // Roundoff floor: the decrease test can no longer resolve progress.
        if (std::sqrt(gnorm2) <= 1e3 * kInnerTol) return y;
        throw NumericalError(std::string(what) + ": line search stalled");
      }
    }
    step *= 2.0;
  }
  throw NumericalError(std::string(what) + ": no convergence within iteration limit");
}

void check_dim(const Vec& v, int expected, const char* name) {
  if (v.size() != expected) {
    throw ConfigError(std::string(name) + " has dimension " + std::to_string(v.size()) +
                      ", expected " + std::to_string(expected));
  }
}

}  // namespace

// --- constants --------------------------------------------------------------

double BilevelConstants::require_mu() const {
  if (!mu || !(*mu > 0.0)) throw ConfigError("strong convexity constant mu unknown");
  return *mu;
}

double BilevelConstants::ell() const {
  if (!complete()) throw ConfigError("bilevel constants incomplete; ell undefined");
  return std::max({*C_f, *L_f, *L_g, *rho_g});
}

double BilevelConstants::D0() const {
  const double m = require_mu();
  if (!C_f || !L_g) throw ConfigError("D0 needs C_f and L_g");
  return (*C_f + *C_f * *L_g / (2.0 * m)) * *C_f / m;
}

double BilevelConstants::D1() const {
  const double m = require_mu();
  if (!complete()) throw ConfigError("D1 needs C_f, L_f, L_g, rho_g");
  return (*L_f + *rho_g * *L_g / m + *C_f * *L_g * *rho_g / (2.0 * m * m) +
          *C_f * *rho_g / (2.0 * m)) *
         *C_f / m;
}

double BilevelConstants::D2() const {
  const double m = require_mu();
  if (!complete()) throw ConfigError("D2 needs C_f, L_f, L_g, rho_g");
  return (1.0 / m + 2.0 * *L_g / (m * m)) * (*L_f + *C_f * *rho_g / m);
}

double MinimaxConstants::kappa() const {
  if (!ell || !mu || !(*mu > 0.0)) throw ConfigError("minimax constants ell, mu unknown");
  return *ell / *mu;
}

// --- bilevel base -----------------------------------------------------------

Mat BilevelProblem::hess_xy_g(const Vec&, const Vec&) const {
  throw ConfigError(kind() + " exposes no second-order information");
}
Mat BilevelProblem::hess_yy_g(const Vec&, const Vec&) const {
  throw ConfigError(kind() + " exposes no second-order information");
}
Mat BilevelProblem::hess_yy_f(const Vec&, const Vec&) const {
  throw ConfigError(kind() + " exposes no second-order information");
}

Vec BilevelProblem::y_star(const Vec& x) const {
  return armijo_descent([&](const Vec& y) { return g(x, y); },
                        [&](const Vec& y) { return grad_g_y(x, y); }, Vec::Zero(dim_y()),
                        "lower-level solve");
}

Vec BilevelProblem::y_star_lambda(const Vec& x, double lambda) const {
  return armijo_descent([&](const Vec& y) { return f(x, y) + lambda * g(x, y); },
                        [&](const Vec& y) { return Vec(grad_f_y(x, y) + lambda * grad_g_y(x, y)); },
                        y_star(x), "penalty solve");
}

void BilevelProblem::set_noise(NoiseModel noise_f, NoiseModel noise_g) {
  noise_f.validate();
  noise_g.validate();
  noise_f_ = noise_f;
  noise_g_ = noise_g;
}

Vec BilevelProblem::noisy_grad_f_x(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_f_x(x, y) + sample(noise_f_, dim_x(), rng);
}
Vec BilevelProblem::noisy_grad_f_y(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_f_y(x, y) + sample(noise_f_, dim_y(), rng);
}
Vec BilevelProblem::noisy_grad_g_x(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_g_x(x, y) + sample(noise_g_, dim_x(), rng);
}
Vec BilevelProblem::noisy_grad_g_y(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_g_y(x, y) + sample(noise_g_, dim_y(), rng);
}

Vec hypergradient(const BilevelProblem& prob, const Vec& x) {
  check_dim(x, prob.dim_x(), "x");
  if (!prob.has_second_order()) {
    throw ConfigError("hypergradient needs second-order information of g");
  }
  const Vec y = prob.y_star(x);
  const BlockGrad gf = prob.grad_f(x, y);
  const Mat Hyy = prob.hess_yy_g(x, y);
  const Eigen::SelfAdjointEigenSolver<Mat> eig(Hyy, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e14) {
    std::ostringstream msg;
    msg << "lower-level Hessian is not safely positive definite (min eigenvalue " << lo
        << ", condition number " << (lo > 0.0 ? hi / lo : INFINITY) << ")";
    throw NumericalError(msg.str());
  }
  const Eigen::LLT<Mat> llt(Hyy);
  const Vec w = llt.solve(gf.y);
  return gf.x - prob.hess_xy_g(x, y) * w;
}

Vec penalty_grad_x(const BilevelProblem& prob, const Vec& x, const Vec& y, const Vec& z,
                   double lambda) {
  check_dim(x, prob.dim_x(), "x");
  check_dim(y, prob.dim_y(), "y");
  check_dim(z, prob.dim_y(), "z");
  return prob.grad_f_x(x, y) + lambda * (prob.grad_g_x(x, y) - prob.grad_g_x(x, z));
}

double penalty_value(const BilevelProblem& prob, const Vec& x, double lambda) {
  check_dim(x, prob.dim_x(), "x");
  const Vec yl = prob.y_star_lambda(x, lambda);
  const Vec ys = prob.y_star(x);
  return prob.f(x, yl) + lambda * (prob.g(x, yl) - prob.g(x, ys));
}

// --- minimax base -----------------------------------------------------------

Vec MinimaxProblem::y_star(const Vec& x) const {
  return armijo_descent([&](const Vec& y) { return -f(x, y); },
                        [&](const Vec& y) { return Vec(-grad_f_y(x, y)); }, Vec::Zero(dim_y()),
                        "inner maximization");
}

void MinimaxProblem::set_noise(NoiseModel noise_f) {
  noise_f.validate();
  noise_f_ = noise_f;
}

Vec MinimaxProblem::noisy_grad_f_x(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_f_x(x, y) + sample(noise_f_, dim_x(), rng);
}
Vec MinimaxProblem::noisy_grad_f_y(const Vec& x, const Vec& y, RngStream& rng) const {
  return grad_f_y(x, y) + sample(noise_f_, dim_y(), rng);
}

std::pair<double, Vec> phi_and_grad(const MinimaxProblem& prob, const Vec& x, PhiRoute route) {
  check_dim(x, prob.dim_x(), "x");
  if (route == PhiRoute::automatic) {
    if (auto closed = prob.analytic_phi(x)) return *std::move(closed);
  }
  const Vec y = (route == PhiRoute::automatic)
                    ? prob.y_star(x)
                    : prob.MinimaxProblem::y_star(x);
  return {prob.f(x, y), prob.grad_f_x(x, y)};
}

// --- serialization ----------------------------------------------------------

Json matrix_to_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ConfigError("matrix data length does not match declared shape");
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Json vector_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vector_from_json(const Json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
}

std::shared_ptr<BilevelProblem> bilevel_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "quadratic_bilevel") return QuadraticBilevel::from_json(j);
  if (kind == "learnable_reg") return LearnableRegLogReg::from_json(j);
  throw ConfigError("unknown bilevel instance kind '" + kind + "'");
}

std::shared_ptr<MinimaxProblem> minimax_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "two_player_game") return TwoPlayerGame::from_json(j);
  if (kind == "separable_game") return SeparableGame::from_json(j);
  throw ConfigError("unknown minimax instance kind '" + kind + "'");
}

}  // namespace tailopt
