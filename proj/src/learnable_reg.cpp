#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tailopt/errors.hpp"
#include "tailopt/problems.hpp"

namespace tailopt {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double cross_entropy(const Mat& A, const Vec& labels, const Vec& y) {
  const Vec z = A * y;
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - labels[i] * z[i];
  return total / double(z.size());
}

Vec cross_entropy_grad(const Mat& A, const Vec& labels, const Vec& y) {
  const Vec z = A * y;
  Vec r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) r[i] = sigmoid(z[i]) - labels[i];
  return A.transpose() * r / double(z.size());
}

Mat cross_entropy_hess(const Mat& A, const Vec& y) {
  const Vec z = A * y;
  Vec w(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double s = sigmoid(z[i]);
    w[i] = s * (1.0 - s);
  }
  return A.transpose() * w.asDiagonal() * A / double(z.size());
}

}  // namespace

LearnableRegLogReg::LearnableRegLogReg(Mat A_train, Vec b_train, Mat A_val, Vec b_val,
                                       double x_box)
    : A_train_(std::move(A_train)),
      b_train_(std::move(b_train)),
      A_val_(std::move(A_val)),
      b_val_(std::move(b_val)),
      x_box_(x_box) {
  if (A_train_.cols() == 0 || A_train_.cols() != A_val_.cols()) {
    throw ConfigError("train and validation features must share a positive dimension");
  }
  if (A_train_.rows() != b_train_.size() || A_val_.rows() != b_val_.size()) {
    throw ConfigError("label count does not match design rows");
  }
  if (A_train_.rows() == 0 || A_val_.rows() == 0) throw ConfigError("empty data split");
  if (!(x_box_ > 0.0)) throw ConfigError("x_box must be positive");
  estimate_constants();
}

LearnableRegLogReg::LearnableRegLogReg(Mat A_train, Vec b_train, Mat A_val, Vec b_val,
                                       double x_box, BilevelConstants constants)
    : A_train_(std::move(A_train)),
      b_train_(std::move(b_train)),
      A_val_(std::move(A_val)),
      b_val_(std::move(b_val)),
      x_box_(x_box) {
  if (A_train_.cols() == 0 || A_train_.cols() != A_val_.cols() ||
      A_train_.rows() != b_train_.size() || A_val_.rows() != b_val_.size()) {
    throw ConfigError("inconsistent learnable_reg data shapes");
  }
  if (!constants.complete()) throw ConfigError("stored learnable_reg constants are incomplete");
  constants_ = constants;
}

double LearnableRegLogReg::f(const Vec&, const Vec& y) const {
  return cross_entropy(A_val_, b_val_, y);
}

double LearnableRegLogReg::g(const Vec& x, const Vec& y) const {
  return cross_entropy(A_train_, b_train_, y) + (x.array().exp() * y.array().square()).sum();
}

BlockGrad LearnableRegLogReg::grad_f(const Vec& x, const Vec& y) const {
  return {Vec::Zero(x.size()), cross_entropy_grad(A_val_, b_val_, y)};
}

BlockGrad LearnableRegLogReg::grad_g(const Vec& x, const Vec& y) const {
  const Eigen::ArrayXd ex = x.array().exp();
  return {(ex * y.array().square()).matrix(),
          cross_entropy_grad(A_train_, b_train_, y) + (2.0 * ex * y.array()).matrix()};
}

Mat LearnableRegLogReg::hess_xy_g(const Vec& x, const Vec& y) const {
  return (2.0 * x.array().exp() * y.array()).matrix().asDiagonal();
}

Mat LearnableRegLogReg::hess_yy_g(const Vec& x, const Vec& y) const {
  Mat h = cross_entropy_hess(A_train_, y);
  h.diagonal() += (2.0 * x.array().exp()).matrix();
  return h;
}

Mat LearnableRegLogReg::hess_yy_f(const Vec&, const Vec& y) const {
  return cross_entropy_hess(A_val_, y);
}

Vec LearnableRegLogReg::newton_solve(const Vec& x, double weight_f, double weight_g) const {
  auto value = [&](const Vec& y) { return weight_f * f(x, y) + weight_g * g(x, y); };
  auto grad = [&](const Vec& y) {
    return Vec(weight_f * grad_f(x, y).y + weight_g * grad_g(x, y).y);
  };
  auto hess = [&](const Vec& y) {
    Mat h = weight_g * hess_yy_g(x, y);
    if (weight_f != 0.0) h += weight_f * hess_yy_f(x, y);
    return h;
  };
  const double tol = 1e-13 * (weight_f + weight_g);
  Vec y = Vec::Zero(dim_y());
  for (int it = 0; it < 200; ++it) {
    const Vec gy = grad(y);
    if (!gy.allFinite()) throw NumericalError("Newton solve produced non-finite gradient");
    if (gy.norm() <= tol) return y;
    const Vec dir = -hess(y).llt().solve(gy);
    const double slope = gy.dot(dir);
    const double v0 = value(y);
    double t = 1.0;
    // Near the solution the predicted decrease is below the rounding of the
    // value, so the full step is taken without a line search.
    const bool resolvable = -slope > 1e-10 * (1.0 + std::abs(v0));
    while (resolvable && t > 1e-12 && value(y + t * dir) > v0 + 1e-4 * t * slope) t *= 0.5;
    y += t * dir;
    if ((t * dir).norm() <= 1e-16 * (1.0 + y.norm())) break;
  }
  if (grad(y).norm() > 1e-8 * (weight_f + weight_g)) {
    throw NumericalError("Newton solve for the lower level did not converge");
  }
  return y;
}

Vec LearnableRegLogReg::y_star(const Vec& x) const { return newton_solve(x, 0.0, 1.0); }

Vec LearnableRegLogReg::y_star_lambda(const Vec& x, double lambda) const {
  if (!(lambda > 0.0)) throw ConfigError("penalty lambda must be positive");
  return newton_solve(x, 1.0, lambda);
}

void LearnableRegLogReg::estimate_constants() {
  const int d = dim_x();
  const Eigen::Index n_val = A_val_.rows();
  constants_.mu = 2.0 * std::exp(-x_box_);
  const Eigen::SelfAdjointEigenSolver<Mat> eig(A_val_.transpose() * A_val_, Eigen::EigenvaluesOnly);
  constants_.L_f = eig.eigenvalues().maxCoeff() / (4.0 * double(n_val));
  constants_.C_f = A_val_.rowwise().norm().sum() / double(n_val);

  // Joint Hessian of g in (x, y); sampled over the box at lower-level solutions.
  auto joint_hess = [&](const Vec& x, const Vec& y) {
    const Eigen::ArrayXd ex = x.array().exp();
    Mat h = Mat::Zero(2 * d, 2 * d);
    h.topLeftCorner(d, d).diagonal() = (ex * y.array().square()).matrix();
    h.topRightCorner(d, d).diagonal() = (2.0 * ex * y.array()).matrix();
    h.bottomLeftCorner(d, d).diagonal() = (2.0 * ex * y.array()).matrix();
    h.bottomRightCorner(d, d) = hess_yy_g(x, y);
    return h;
  };
  auto op_norm = [](const Mat& m) {
    const Eigen::SelfAdjointEigenSolver<Mat> e(m, Eigen::EigenvaluesOnly);
    return e.eigenvalues().cwiseAbs().maxCoeff();
  };
  RngStream rng = RngStream(0, 0).fork("learnable_reg_constants");
  double l_g = 0.0;
  double rho_g = 0.0;
  constexpr int kSamples = 32;
  constexpr double kDelta = 1e-3;
  for (int s = 0; s < kSamples; ++s) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = x_box_ * (2.0 * rng.uniform() - 1.0);
    const Vec y = y_star(x);
    const Mat h = joint_hess(x, y);
    l_g = std::max(l_g, op_norm(h));
    Vec dir(2 * d);
    for (int i = 0; i < 2 * d; ++i) dir[i] = rng.normal();
    dir *= kDelta / dir.norm();
    const Mat h2 = joint_hess(x + dir.head(d), y + dir.tail(d));
    rho_g = std::max(rho_g, op_norm(h2 - h) / kDelta);
  }
  constants_.L_g = l_g;
  constants_.rho_g = rho_g;
}

Json LearnableRegLogReg::to_json() const {
  return Json{{"kind", kind()},
              {"A_train", matrix_to_json(A_train_)},
              {"b_train", vector_to_json(b_train_)},
              {"A_val", matrix_to_json(A_val_)},
              {"b_val", vector_to_json(b_val_)},
              {"x_box", x_box_},
              {"constants",
               {{"C_f", *constants_.C_f},
                {"L_f", *constants_.L_f},
                {"L_g", *constants_.L_g},
                {"rho_g", *constants_.rho_g},
                {"mu", *constants_.mu}}}};
}

std::shared_ptr<LearnableRegLogReg> LearnableRegLogReg::from_json(const Json& j) {
  Mat A_train = matrix_from_json(j.at("A_train"));
  Vec b_train = vector_from_json(j.at("b_train"));
  Mat A_val = matrix_from_json(j.at("A_val"));
  Vec b_val = vector_from_json(j.at("b_val"));
  const double box = j.value("x_box", 3.0);
  if (j.contains("constants")) {
    const Json& c = j.at("constants");
    BilevelConstants k;
    k.C_f = c.at("C_f").get<double>();
    k.L_f = c.at("L_f").get<double>();
    k.L_g = c.at("L_g").get<double>();
    k.rho_g = c.at("rho_g").get<double>();
    k.mu = c.at("mu").get<double>();
    return std::make_shared<LearnableRegLogReg>(std::move(A_train), std::move(b_train),
                                                std::move(A_val), std::move(b_val), box, k);
  }
  return std::make_shared<LearnableRegLogReg>(std::move(A_train), std::move(b_train),
                                              std::move(A_val), std::move(b_val), box);
}

std::shared_ptr<LearnableRegLogReg> make_learnable_reg(std::uint64_t seed, int dim, int n_train,
                                                       int n_val) {
  if (dim <= 0 || dim > 50) throw ConfigError("learnable_reg dimension must be in [1, 50]");
  if (n_train <= 0 || n_val <= 0) throw ConfigError("learnable_reg splits must be non-empty");
  RngStream rng = RngStream(seed, 0).fork("learnable_reg");

  Vec w = Vec::Zero(dim);
  const int support = std::max(1, dim / 5);
  std::vector<int> idx(dim);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < support; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(dim - i)));
    std::swap(idx[i], idx[j]);
    w[idx[i]] = 3.0 * rng.normal();
  }

  auto draw_split = [&](int n, Mat& A, Vec& labels) {
    A.resize(n, dim);
    labels.resize(n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < dim; ++c) A(r, c) = rng.normal();
      labels[r] = rng.uniform() < sigmoid(A.row(r).dot(w)) ? 1.0 : 0.0;
    }
  };
  Mat A_train, A_val;
  Vec b_train, b_val;
  draw_split(n_train, A_train, b_train);
  draw_split(n_val, A_val, b_val);

  const int flips = static_cast<int>(std::lround(0.1 * n_train));
  std::vector<int> rows(n_train);
  std::iota(rows.begin(), rows.end(), 0);
  for (int i = 0; i < flips; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_train - i)));
    std::swap(rows[i], rows[j]);
    b_train[rows[i]] = 1.0 - b_train[rows[i]];
  }
  return std::make_shared<LearnableRegLogReg>(std::move(A_train), std::move(b_train),
                                              std::move(A_val), std::move(b_val));
}

}  // namespace tailopt
