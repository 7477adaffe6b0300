#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "qfiga/bernstein.hpp"
#include "qfiga/geometry_terms.hpp"

namespace qfiga {

/// Default approximant degrees 3*deg - 3 per direction.
inline Deg3 initial_approx_degrees(const Deg3& spline) {
  return {3 * spline[0] - 3, 3 * spline[1] - 3, 3 * spline[2] - 3};
}

/// Scale factor that balances the two sides of the normal equations; depends
/// on the approximant, spline and numerator degree bookkeeping only.
double weight_sigma(const Deg3& approx, const Deg3& spline, const Deg3& numer);

/// Geometry-independent part of the weighted least-squares system: the L and
/// Q matrices (kept as per-direction factors) and the scale sigma.
struct ReusableApprox {
  Deg3 spline{1, 1, 1};
  Deg3 approx{0, 0, 0};
  Deg3 jac{2, 2, 2};    // degrees of det(Jacobian)
  Deg3 numer{4, 4, 4};  // numerator degrees accepted by the solver
  double sigma = 1.0;
  std::array<Eigen::MatrixXd, 3> lfac;  // (approx_d+1) x (approx_d+jac_d+1)
  std::array<Eigen::MatrixXd, 3> qfac;  // (approx_d+1) x (numer_d+1)

  int g_dim() const { return (approx[0] + 1) * (approx[1] + 1) * (approx[2] + 1); }
  int h_dim() const {
    return (approx[0] + jac[0] + 1) * (approx[1] + jac[1] + 1) *
           (approx[2] + jac[2] + 1);
  }
  int f_dim() const { return (numer[0] + 1) * (numer[1] + 1) * (numer[2] + 1); }

  Eigen::MatrixXd dense_l() const;  // g_dim x h_dim
  Eigen::MatrixXd dense_q() const;  // g_dim x f_dim
};

/// Builds L, Q and sigma for the given approximant and spline degrees.
/// The accepted numerator degrees are max(6*deg-2, approx+jac) per direction,
/// so exact products J*G0 with deg(G0) <= approx always fit.
ReusableApprox build_reusable(Deg3 approx, Deg3 spline);

/// Geometry-dependent matrix: H-space x G-space, linear in the Jacobian
/// coefficients.
Eigen::MatrixXd build_E(const BernsteinTensor& jacobian,
                        const ReusableApprox& sys);

struct Approximant {
  BernsteinTensor g;
  double residual_estimate = 0.0;
};

double integrate_entry(const Approximant& a);

/// Per-element factorization of the square system (L E) G = sigma Q F,
/// shared across every basis-function pair of the element.
class ElementApprox {
 public:
  ElementApprox(const ReusableApprox& sys, const BernsteinTensor& jacobian,
                std::string label = {});

  const ReusableApprox& sys() const { return *sys_; }
  const BernsteinTensor& jacobian() const { return jacobian_; }
  double rcond() const { return rcond_; }
  const std::string& label() const { return label_; }

  /// Square matrix L*E of the element (for diagnostics/tests).
  const Eigen::MatrixXd& system_matrix() const { return a_; }

  Approximant approximate(const BernsteinTensor& numerator) const;

  /// Integral of the approximant for the given numerator, computed through
  /// the adjoint weight vector without materializing G.
  double integrate_numerator(const BernsteinTensor& numerator) const;

  /// Adjoint weights q with integral = sigma * q . numerator_coeffs.
  const Eigen::VectorXd& adjoint_weights() const { return adjoint_; }

 private:
  Eigen::VectorXd solve_system(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_system_transposed(const Eigen::VectorXd& b) const;

  const ReusableApprox* sys_;
  BernsteinTensor jacobian_;
  std::string label_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd row_scale_, col_scale_;  // equilibration of the binomial scaling
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd adjoint_;
  double rcond_ = 1.0;
};

/// One-shot form of the per-pair approximation.
Approximant approximate(const BernsteinTensor& numerator,
                        const BernsteinTensor& jacobian,
                        const ReusableApprox& sys);

enum class RefineStrategy { kPiecewise, kDegreeElevate, kCombined };

struct RefinePlan {
  Deg3 approx_degrees{0, 0, 0};
  int subdivision_levels = 0;
};

/// Maps a strategy onto new approximant degrees and/or a subdivision depth.
RefinePlan refine_approximation(RefineStrategy strategy, Deg3 current_approx,
                                Deg3 degree_increment, int levels);

/// Integral of the least-squares approximant under a refinement plan: the
/// element is split into 2x2x2 Bernstein sub-boxes `levels` times and each
/// piece is approximated at the plan's degrees.
double integrate_with_refinement(const BernsteinTensor& numerator,
                                 const BernsteinTensor& jacobian,
                                 const Deg3& spline, const RefinePlan& plan);

}  // namespace qfiga
