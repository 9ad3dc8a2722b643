#pragma once

// Independent reference computations used as test oracles. None of these
// call into the library's solvers.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline double fd_step(const Vec& x) { return 1e-6 * (1.0 + x.norm()); }

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& x) {
  const double h = fd_step(x);
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec e = Vec::Zero(x.size());
    e[i] = h;
    g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vec& a, const Vec& ref) {
  return (a - ref).norm() / std::max(ref.norm(), 1e-12);
}

/// Plain Newton iteration with a fixed number of steps on a smooth strongly
/// convex function given its gradient and Hessian.
inline Vec newton(const std::function<Vec(const Vec&)>& grad,
                  const std::function<Mat(const Vec&)>& hess, Vec y, int iters = 60) {
  for (int i = 0; i < iters; ++i) {
    const Vec g = grad(y);
    if (g.norm() < 1e-15) break;
    y -= hess(y).ldlt().solve(g);
  }
  return y;
}

/// Bisection for the root of an increasing function on [lo, hi].
inline double bisect(const std::function<double(double)>& fn, double lo, double hi) {
  for (int i = 0; i < 400 && hi - lo > 1e-15 * std::abs(hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (fn(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Mean and standard error of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  const double var = v.size() > 1 ? s / double(v.size() - 1) : 0.0;
  return {m, std::sqrt(var / double(v.size()))};
}

/// Splits one CSV line on commas (no quoting in this project's files).
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace oracle
