#include <cmath>

#include "tailopt/errors.hpp"
#include "tailopt/problems.hpp"

namespace tailopt {

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  const Mat gram = m.transpose() * m;
  // Deterministic start with weight in every direction.
  Vec v = Vec::Ones(gram.cols()) / std::sqrt(double(gram.cols()));
  double rayleigh = v.dot(gram * v);
  for (int it = 0; it < 10000; ++it) {
    Vec w = gram * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    const double next = v.dot(gram * v);
    if (std::abs(next - rayleigh) <= 1e-12 * next) return std::sqrt(next);
    rayleigh = next;
  }
  throw NumericalError("power iteration did not converge within 10^4 iterations");
}

// --- TwoPlayerGame ------------------------------------------------------------

TwoPlayerGame::TwoPlayerGame(Mat K, double m1, double m2)
    : K_(std::move(K)), m1_(m1), m2_(m2) {
  if (K_.rows() == 0 || K_.cols() == 0) throw ConfigError("coupling matrix must be non-empty");
  if (!(m1_ > 0.0) || !(m2_ > 0.0)) throw ConfigError("m1 and m2 must be positive");
  KKt_over_2m2_ = K_ * K_.transpose() / (2.0 * m2_);
  // |Hessian of sin(3 sqrt(r^2+1))| <= 15, so the xx-block is bounded by 17 m1.
  constants_.ell = std::max(17.0 * m1_, 2.0 * m2_) + spectral_norm(K_);
  constants_.mu = 2.0 * m2_;
}

double TwoPlayerGame::f(const Vec& x, const Vec& y) const {
  const double r2 = x.squaredNorm();
  return m1_ * (r2 + std::sin(3.0 * std::sqrt(r2 + 1.0))) + x.dot(K_ * y) - m2_ * y.squaredNorm();
}

BlockGrad TwoPlayerGame::grad_f(const Vec& x, const Vec& y) const {
  return {grad_f_x(x, y), grad_f_y(x, y)};
}

Vec TwoPlayerGame::grad_f_x(const Vec& x, const Vec& y) const {
  const double s = std::sqrt(x.squaredNorm() + 1.0);
  return m1_ * (2.0 + 3.0 * std::cos(3.0 * s) / s) * x + K_ * y;
}

Vec TwoPlayerGame::grad_f_y(const Vec& x, const Vec& y) const {
  return K_.transpose() * x - 2.0 * m2_ * y;
}

Vec TwoPlayerGame::y_star(const Vec& x) const { return K_.transpose() * x / (2.0 * m2_); }

std::optional<std::pair<double, Vec>> TwoPlayerGame::analytic_phi(const Vec& x) const {
  const double r2 = x.squaredNorm();
  const double s = std::sqrt(r2 + 1.0);
  const double value =
      m1_ * (r2 + std::sin(3.0 * s)) + (K_.transpose() * x).squaredNorm() / (4.0 * m2_);
  Vec grad = m1_ * (2.0 + 3.0 * std::cos(3.0 * s) / s) * x + KKt_over_2m2_ * x;
  return std::make_pair(value, std::move(grad));
}

Json TwoPlayerGame::to_json() const {
  return Json{{"kind", kind()}, {"K", matrix_to_json(K_)}, {"m1", m1_}, {"m2", m2_}};
}

std::shared_ptr<TwoPlayerGame> TwoPlayerGame::from_json(const Json& j) {
  return std::make_shared<TwoPlayerGame>(matrix_from_json(j.at("K")), j.at("m1").get<double>(),
                                         j.at("m2").get<double>());
}

std::shared_ptr<TwoPlayerGame> make_two_player_game(std::uint64_t seed, double m1, double m2,
                                                    int dim) {
  if (dim <= 0) throw ConfigError("game dimension must be positive");
  if (!(m1 > 0.0) || !(m2 > 0.0)) throw ConfigError("m1 and m2 must be positive");
  RngStream rng = RngStream(seed, 0).fork("two_player_game");
  Mat M(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) M(r, c) = rng.normal();
  const Mat sym = 0.5 * (M + M.transpose());
  Mat K = 10.0 * sym / spectral_norm(sym);
  return std::make_shared<TwoPlayerGame>(std::move(K), m1, m2);
}

// --- SeparableGame ------------------------------------------------------------

SeparableGame::SeparableGame(Vec center, int dim_x, double mu)
    : center_(std::move(center)), dim_x_(dim_x), mu_(mu) {
  if (dim_x_ <= 0 || center_.size() == 0) throw ConfigError("separable game needs positive dims");
  if (!(mu_ > 0.0)) throw ConfigError("separable game needs mu > 0");
  constants_.ell = std::max(3.0, mu_);
  constants_.mu = mu_;
}

double SeparableGame::f(const Vec& x, const Vec& y) const {
  return (0.5 * x.array().square() + 2.0 * x.array().cos()).sum() -
         0.5 * mu_ * (y - center_).squaredNorm();
}

BlockGrad SeparableGame::grad_f(const Vec& x, const Vec& y) const {
  return {grad_x_part(x), -mu_ * (y - center_)};
}

Vec SeparableGame::grad_x_part(const Vec& x) const {
  return (x.array() - 2.0 * x.array().sin()).matrix();
}

std::optional<std::pair<double, Vec>> SeparableGame::analytic_phi(const Vec& x) const {
  return std::make_pair((0.5 * x.array().square() + 2.0 * x.array().cos()).sum(), grad_x_part(x));
}

Json SeparableGame::to_json() const {
  return Json{{"kind", kind()}, {"center", vector_to_json(center_)}, {"dim_x", dim_x_}, {"mu", mu_}};
}

std::shared_ptr<SeparableGame> SeparableGame::from_json(const Json& j) {
  return std::make_shared<SeparableGame>(vector_from_json(j.at("center")),
                                         j.at("dim_x").get<int>(), j.at("mu").get<double>());
}

}  // namespace tailopt
