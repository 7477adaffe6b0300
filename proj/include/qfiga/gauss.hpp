#pragma once

#include <Eigen/Core>

namespace qfiga {

/// Gauss-Legendre rule on [0,1].
struct GaussRule {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;
};

/// n-point rule, exact for polynomials of degree 2n-1.
const GaussRule& gauss_rule(int n);

}  // namespace qfiga
