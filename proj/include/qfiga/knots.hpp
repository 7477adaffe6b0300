#pragma once

#include <Eigen/Core>

#include <vector>

namespace qfiga {

/// Clamped (open) knot vector on [0,1].
class KnotVector {
 public:
  KnotVector(int degree, std::vector<double> knots);

  static KnotVector bezier(int degree);
  /// Clamped, uniformly spaced interior knots, `spans` nonzero spans.
  static KnotVector uniform(int degree, int spans);

  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }
  int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }

  struct Span {
    double lo = 0.0;
    double hi = 1.0;
    int first_basis = 0;  // index of the first basis function supported here
  };
  const std::vector<Span>& spans() const { return spans_; }
  int num_spans() const { return static_cast<int>(spans_.size()); }

  /// Index into spans() of the element containing t (t == 1 maps to the last).
  int find_element(double t) const;

  /// Values of the degree+1 basis functions that are nonzero at t.
  void basis(double t, int& first, Eigen::VectorXd& values) const;
  void basis_with_derivative(double t, int& first, Eigen::VectorXd& values,
                             Eigen::VectorXd& derivs) const;

  /// One abscissa per basis function: mean of `degree` consecutive knots.
  std::vector<double> greville() const;

  std::vector<double> interior_knots() const;  // with multiplicity

  /// Midpoints of every nonzero span inserted `levels` times recursively.
  KnotVector bisected(int levels) const;

  bool operator==(const KnotVector& other) const {
    return degree_ == other.degree_ && knots_ == other.knots_;
  }

 private:
  int degree_;
  std::vector<double> knots_;
  std::vector<Span> spans_;
};

/// Control-coefficient transformation for inserting a sequence of knots:
/// refined coefficients = matrix * original coefficients.
/// `refined` (if non-null) receives the refined knot vector.
Eigen::MatrixXd insertion_matrix(const KnotVector& kv,
                                 const std::vector<double>& new_knots,
                                 KnotVector* refined = nullptr);

/// Per-element operators C with N(t)|span = C * (Bernstein basis on the local
/// coordinate of the span); obtained from repeated knot insertion.
std::vector<Eigen::MatrixXd> extraction_operators(const KnotVector& kv);

}  // namespace qfiga
