#include <cmath>

#include "tailopt/errors.hpp"
#include "tailopt/problems.hpp"

namespace tailopt {

namespace {

double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

}  // namespace

QuadraticBilevel::QuadraticBilevel(Mat A, Mat Q, Vec b, double x_radius)
    : A_(std::move(A)), Q_(std::move(Q)), b_(std::move(b)), x_radius_(x_radius) {
  const Eigen::Index dx = A_.cols();
  const Eigen::Index dy = A_.rows();
  const Eigen::Index n = dx + dy;
  if (dx == 0 || dy == 0) throw ConfigError("quadratic bilevel needs d_x, d_y > 0");
  if (Q_.rows() != n || Q_.cols() != n) throw ConfigError("Q must be (d_x+d_y) square");
  if (b_.size() != n) throw ConfigError("b must have length d_x+d_y");
  if (!(x_radius_ > 0.0)) throw ConfigError("x_radius must be positive");
  if ((Q_ - Q_.transpose()).norm() > 1e-12 * (1.0 + Q_.norm())) {
    throw ConfigError("Q must be symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat> eig(Q_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * (1.0 + eig.eigenvalues().cwiseAbs().maxCoeff())) {
    throw ConfigError("Q must be positive semidefinite");
  }
  const double a_norm = operator_norm(A_);
  constants_.mu = 1.0;
  constants_.L_g = 1.0 + a_norm * a_norm;
  constants_.rho_g = 0.0;
  constants_.L_f = eig.eigenvalues().maxCoeff();
  constants_.C_f = operator_norm(Q_.bottomLeftCorner(dy, dx)) * x_radius_ +
                   operator_norm(Q_.bottomRightCorner(dy, dy)) * (a_norm * x_radius_ + 1.0) +
                   b_.tail(dy).norm();
}

double QuadraticBilevel::f(const Vec& x, const Vec& y) const {
  Vec w(x.size() + y.size());
  w << x, y;
  return 0.5 * w.dot(Q_ * w) + b_.dot(w);
}

double QuadraticBilevel::g(const Vec& x, const Vec& y) const {
  return 0.5 * (y - A_ * x).squaredNorm();
}

BlockGrad QuadraticBilevel::grad_f(const Vec& x, const Vec& y) const {
  return {grad_f_x(x, y), grad_f_y(x, y)};
}

BlockGrad QuadraticBilevel::grad_g(const Vec& x, const Vec& y) const {
  const Vec r = y - A_ * x;
  return {-A_.transpose() * r, r};
}

Vec QuadraticBilevel::grad_f_x(const Vec& x, const Vec& y) const {
  const Eigen::Index dx = dim_x();
  const Eigen::Index dy = dim_y();
  return Q_.topLeftCorner(dx, dx) * x + Q_.topRightCorner(dx, dy) * y + b_.head(dx);
}

Vec QuadraticBilevel::grad_f_y(const Vec& x, const Vec& y) const {
  const Eigen::Index dx = dim_x();
  const Eigen::Index dy = dim_y();
  return Q_.bottomLeftCorner(dy, dx) * x + Q_.bottomRightCorner(dy, dy) * y + b_.tail(dy);
}

Vec QuadraticBilevel::grad_g_x(const Vec& x, const Vec& y) const {
  return -A_.transpose() * (y - A_ * x);
}

Vec QuadraticBilevel::grad_g_y(const Vec& x, const Vec& y) const { return y - A_ * x; }

Mat QuadraticBilevel::hess_xy_g(const Vec&, const Vec&) const { return -A_.transpose(); }

Mat QuadraticBilevel::hess_yy_g(const Vec&, const Vec&) const {
  return Mat::Identity(dim_y(), dim_y());
}

Mat QuadraticBilevel::hess_yy_f(const Vec&, const Vec&) const {
  return Q_.bottomRightCorner(dim_y(), dim_y());
}

Vec QuadraticBilevel::y_star_lambda(const Vec& x, double lambda) const {
  if (!(lambda > 0.0)) throw ConfigError("penalty lambda must be positive");
  const Eigen::Index dx = dim_x();
  const Eigen::Index dy = dim_y();
  const Vec rhs = lambda * (A_ * x) - Q_.bottomLeftCorner(dy, dx) * x - b_.tail(dy);
  return penalty_hess_yy(lambda).ldlt().solve(rhs);
}

Mat QuadraticBilevel::penalty_hess_yy(double lambda) const {
  const Eigen::Index dy = dim_y();
  return Q_.bottomRightCorner(dy, dy) + lambda * Mat::Identity(dy, dy);
}

Vec QuadraticBilevel::grad_phi(const Vec& x) const {
  const Eigen::Index dx = dim_x();
  Mat P(dx + dim_y(), dx);
  P << Mat::Identity(dx, dx), A_;
  return P.transpose() * (Q_ * (P * x) + b_);
}

Json QuadraticBilevel::to_json() const {
  return Json{{"kind", kind()},
              {"A", matrix_to_json(A_)},
              {"Q", matrix_to_json(Q_)},
              {"b", vector_to_json(b_)},
              {"x_radius", x_radius_}};
}

std::shared_ptr<QuadraticBilevel> QuadraticBilevel::from_json(const Json& j) {
  return std::make_shared<QuadraticBilevel>(matrix_from_json(j.at("A")),
                                            matrix_from_json(j.at("Q")),
                                            vector_from_json(j.at("b")),
                                            j.value("x_radius", 1.0));
}

std::shared_ptr<QuadraticBilevel> make_quadratic_bilevel(std::uint64_t seed, int dim_x,
                                                         int dim_y, double q_shift) {
  if (dim_x <= 0 || dim_y <= 0) throw ConfigError("dimensions must be positive");
  if (!(q_shift >= 0.0)) throw ConfigError("q_shift must be >= 0");
  RngStream rng = RngStream(seed, 0).fork("quadratic_bilevel");
  const int n = dim_x + dim_y;
  Mat A(dim_y, dim_x);
  for (int r = 0; r < dim_y; ++r)
    for (int c = 0; c < dim_x; ++c) A(r, c) = rng.normal() / std::sqrt(double(dim_x));
  Mat B(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) B(r, c) = rng.normal();
  Mat Q = B.transpose() * B / double(n) + q_shift * Mat::Identity(n, n);
  Q = 0.5 * (Q + Q.transpose()).eval();
  Vec b(n);
  for (int i = 0; i < n; ++i) b[i] = rng.normal();
  return std::make_shared<QuadraticBilevel>(std::move(A), std::move(Q), std::move(b));
}

}  // namespace tailopt
