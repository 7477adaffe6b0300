#pragma once

#include <array>
#include <vector>

#include "qfiga/bernstein.hpp"
#include "qfiga/spline_volume.hpp"

namespace qfiga {

/// Bernstein degrees of det(Jacobian) for spline degrees (l,m,n).
inline Deg3 jacobian_degrees(const Deg3& d) {
  return {3 * d[0] - 1, 3 * d[1] - 1, 3 * d[2] - 1};
}

/// Bernstein degrees of a stiffness-entry numerator.
///
/// Each numerator term is (adjugate row p) . (adjugate row p') times a pair of
/// basis-gradient factors; every term lands exactly on 6*deg - 2 per
/// direction. (The value 6*deg - 4 sometimes quoted for this expansion drops
/// the top two coefficients and does not hold for general control points.)
inline Deg3 numerator_degrees(const Deg3& d) {
  return {6 * d[0] - 2, 6 * d[1] - 2, 6 * d[2] - 2};
}

/// Partial-derivative tensors of the geometry map: partial[dir] holds the
/// three coordinate components of d(map)/d(u_dir).
using PartialTensors = std::array<std::array<BernsteinTensor, 3>, 3>;
PartialTensors geometry_partials(const BezierVolume& b);

/// Adjugate-of-Jacobian entries: entry[p][q] = J * (d u_p / d x_q) as a
/// polynomial. Pointwise, entry^T composed with the Jacobian matrix gives
/// J times the identity.
struct CofactorSet {
  std::array<std::array<BernsteinTensor, 3>, 3> entry;
  const BernsteinTensor& operator()(int p, int q) const { return entry[p][q]; }
};

CofactorSet cofactors(const BezierVolume& b);

/// det(Jacobian) assembled from the cofactor polynomials (product route).
BernsteinTensor jacobian_from_cofactors(const PartialTensors& partials,
                                        const CofactorSet& cof);
BernsteinTensor jacobian_from_cofactors(const BezierVolume& b);

/// Combinatorial weights of the direct Jacobian-coefficient formula, stored as
/// the admissible index decompositions per direction. Depends on degrees only.
class DCoefficientTable {
 public:
  struct Direction {
    // For each total index i: flattened triples (i1,i2,i3) and their
    // binomial weight, already divided by nothing (scale applied globally).
    std::vector<std::vector<std::array<int, 3>>> triples;
    std::vector<std::vector<double>> weights;
  };

  explicit DCoefficientTable(Deg3 spline_degrees);

  const Deg3& spline_degrees() const { return degrees_; }
  const Direction& direction(int d) const { return dirs_[d]; }
  /// lmn / (C(3l-1,i) C(3m-1,j) C(3n-1,k)) normalization for entry (i,j,k).
  double normalization(int i, int j, int k) const;

  /// Total number of stored decomposition weights.
  std::size_t weight_count() const;

 private:
  Deg3 degrees_;
  std::array<Direction, 3> dirs_;
};

inline DCoefficientTable build_d_table(Deg3 degrees) {
  return DCoefficientTable(degrees);
}

/// Jacobian coefficients via the decomposition formula (coefficient route).
struct JacobianExpansion {
  BernsteinTensor tensor;
};
JacobianExpansion jacobian_expansion(const BezierVolume& b,
                                     const DCoefficientTable& table);

/// Geometry-independent gradients of the local Bernstein basis functions,
/// one tensor per (direction, local function).
class GradientTable {
 public:
  explicit GradientTable(Deg3 degrees);

  const Deg3& degrees() const { return degrees_; }
  int num_local() const {
    return (degrees_[0] + 1) * (degrees_[1] + 1) * (degrees_[2] + 1);
  }
  const BernsteinTensor& grad(int dir, int local) const {
    return grad_[dir][local];
  }
  std::array<const BernsteinTensor*, 3> gradient(int local) const {
    return {&grad_[0][local], &grad_[1][local], &grad_[2][local]};
  }

 private:
  Deg3 degrees_;
  std::array<std::vector<BernsteinTensor>, 3> grad_;
};

/// Numerators of J^2 (K K^T): m[p][q] = sum_c cof(p,c) cof(q,c).
struct MetricNumerators {
  std::array<std::array<BernsteinTensor, 3>, 3> m;
};
MetricNumerators metric_numerators(const CofactorSet& cof);

/// Numerator polynomial of the rational stiffness integrand for one pair of
/// local basis functions; divide by det(Jacobian) pointwise to recover it.
BernsteinTensor entry_numerator(const CofactorSet& cof,
                                const std::array<BernsteinTensor, 3>& grad_rst,
                                const std::array<BernsteinTensor, 3>& grad_ijk);

/// Same contraction against precomputed metric numerators.
BernsteinTensor entry_numerator(const MetricNumerators& metric,
                                const std::array<BernsteinTensor, 3>& grad_rst,
                                const std::array<BernsteinTensor, 3>& grad_ijk);

/// Minimum of det(Jacobian) on a sample grid (degeneracy diagnostic).
double min_jacobian_on_grid(const BernsteinTensor& jacobian, int samples = 11);

}  // namespace qfiga
