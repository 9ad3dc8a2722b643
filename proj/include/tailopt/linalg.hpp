#pragma once

#include <Eigen/Dense>

namespace tailopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Gradient split into the x- and y-blocks of a two-block objective.
struct BlockGrad {
  Vec x;
  Vec y;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace tailopt
