#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "qfiga/bernstein.hpp"
#include "qfiga/knots.hpp"

namespace qfiga {

using ControlGrid = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Bezier element extracted from a B-spline volume; control points live on the
/// local [0,1]^3 coordinate of its parametric sub-box.
struct BezierVolume {
  Deg3 degrees{1, 1, 1};
  ControlGrid ctrl;  // (l+1)(m+1)(n+1) rows, i-fastest
  int block = 0;
  std::array<int, 3> element{0, 0, 0};
  Eigen::Vector3d box_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d box_hi = Eigen::Vector3d::Ones();

  Eigen::Index flat(int i, int j, int k) const {
    return i + static_cast<Eigen::Index>(degrees[0] + 1) *
                   (j + static_cast<Eigen::Index>(degrees[1] + 1) * k);
  }
  Eigen::Vector3d point(int i, int j, int k) const {
    return ctrl.row(flat(i, j, k));
  }

  Eigen::Vector3d evaluate(double u, double v, double w) const;
  /// Columns are the partial derivatives with respect to the local coordinates.
  Eigen::Matrix3d jacobian(double u, double v, double w) const;
};

/// Trivariate B-spline volume on [0,1]^3.
class BSplineVolume {
 public:
  BSplineVolume(std::array<KnotVector, 3> kv, ControlGrid ctrl);

  const KnotVector& kv(int dir) const { return kv_[dir]; }
  int num_ctrl(int dir) const { return kv_[dir].num_basis(); }
  Eigen::Index num_ctrl_total() const { return ctrl_.rows(); }
  const ControlGrid& control_points() const { return ctrl_; }
  ControlGrid& control_points() { return ctrl_; }

  Eigen::Index flat(int i, int j, int k) const {
    return i + static_cast<Eigen::Index>(num_ctrl(0)) *
                   (j + static_cast<Eigen::Index>(num_ctrl(1)) * k);
  }
  Eigen::Vector3d point(int i, int j, int k) const {
    return ctrl_.row(flat(i, j, k));
  }

  Eigen::Vector3d evaluate(double u, double v, double w) const;
  Eigen::Matrix3d jacobian(double u, double v, double w) const;

  /// Number of tensor-product elements (nonzero span triples).
  Eigen::Index num_elements() const {
    return static_cast<Eigen::Index>(kv_[0].num_spans()) *
           kv_[1].num_spans() * kv_[2].num_spans();
  }

 private:
  std::array<KnotVector, 3> kv_;
  ControlGrid ctrl_;
};

/// Geometry-preserving span bisection, `levels` times in every direction.
BSplineVolume h_refine(const BSplineVolume& v, int levels);

/// One Bezier volume per element; block id is attached by the caller.
std::vector<BezierVolume> extract_bezier(const BSplineVolume& v);

/// Split into two volumes at parameter t along direction dir (exact geometry).
std::array<BSplineVolume, 2> split_volume(const BSplineVolume& v, int dir,
                                          double t);

/// Interpolate an analytic map on the Greville lattice of the given knots.
BSplineVolume interpolate_on_greville(
    const std::array<KnotVector, 3>& kv,
    const std::function<Eigen::Vector3d(double, double, double)>& map);

/// Block face id: 0/1 = u min/max, 2/3 = v min/max, 4/5 = w min/max.
struct FaceRef {
  int block = 0;
  int face = 0;
  friend bool operator==(const FaceRef&, const FaceRef&) = default;
};

/// Orientation code for matching face grids: bit 0 transposes the two
/// tangential axes, bit 1 reverses the first axis of b, bit 2 the second.
struct InterfaceDecl {
  FaceRef a, b;
  int orientation = 0;
};

/// Conforming multi-block volume with a merged global DOF numbering.
class MultiBlockVolume {
 public:
  MultiBlockVolume(std::vector<BSplineVolume> blocks,
                   std::vector<InterfaceDecl> interfaces,
                   double merge_tol = 1e-9);

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const BSplineVolume& block(int b) const { return blocks_[b]; }
  const std::vector<BSplineVolume>& blocks() const { return blocks_; }
  const std::vector<InterfaceDecl>& interfaces() const { return interfaces_; }

  int num_dofs() const { return num_dofs_; }
  int global_dof(int block, Eigen::Index local) const {
    return global_index_[block][local];
  }
  const std::vector<int>& block_dofs(int block) const {
    return global_index_[block];
  }

  /// Faces not covered by any interface declaration.
  std::vector<FaceRef> exterior_faces() const;

  Deg3 degrees() const;

  MultiBlockVolume refined(int levels) const;

 private:
  std::vector<BSplineVolume> blocks_;
  std::vector<InterfaceDecl> interfaces_;
  std::vector<std::vector<int>> global_index_;
  int num_dofs_ = 0;
};

/// Local control indices of a block face, as a (rows=axis1, cols=axis0) grid
/// flattened axis0-fastest, plus the two tangential directions.
struct FaceGrid {
  std::array<int, 2> dirs;   // tangential parameter directions
  std::array<int, 2> size;   // basis counts along dirs
  std::vector<Eigen::Index> local;  // flattened local control indices
};
FaceGrid face_grid(const BSplineVolume& v, int face);

/// Map an index on face-grid a to the matching index on face-grid b.
Eigen::Index map_face_index(const FaceGrid& a, const FaceGrid& b,
                            int orientation, int s, int t);

}  // namespace qfiga
