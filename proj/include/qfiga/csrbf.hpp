#pragma once

#include <Eigen/Core>

#include <vector>

#include "qfiga/spline_volume.hpp"

namespace qfiga {

/// Wendland's C^4 compactly supported kernel (1-r)_+^6 (3 + 18r + 35r^2).
double wendland(double r);

/// Elastic volumetric map f(x) = sum_j d_j phi(|x - v_j| / lambda) + P(x)
/// with an affine part P and the side conditions sum d = 0, sum d v^T = 0.
class ElasticMap {
 public:
  ElasticMap() = default;

  const std::vector<Eigen::Vector3d>& centers() const { return centers_; }
  const std::vector<Eigen::Vector3d>& weights() const { return weights_; }
  const Eigen::Matrix3d& linear() const { return linear_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  double support_radius() const { return lambda_; }

  Eigen::Vector3d operator()(const Eigen::Vector3d& x) const;

  /// Grid-accelerated batch evaluation (cells of size lambda).
  std::vector<Eigen::Vector3d> map_points(const std::vector<Eigen::Vector3d>& pts) const;

  friend ElasticMap fit_elastic_map(const std::vector<Eigen::Vector3d>& sources,
                                    const std::vector<Eigen::Vector3d>& targets,
                                    double lambda);

 private:
  std::vector<Eigen::Vector3d> centers_;
  std::vector<Eigen::Vector3d> weights_;
  Eigen::Matrix3d linear_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
  double lambda_ = 1.0;
};

/// Interpolates targets[i] = f(sources[i]); needs at least 4 non-coplanar
/// sources. Throws std::runtime_error naming offending centers on duplicate
/// or degenerate configurations.
ElasticMap fit_elastic_map(const std::vector<Eigen::Vector3d>& sources,
                           const std::vector<Eigen::Vector3d>& targets,
                           double lambda);

struct FitSample {
  Eigen::Vector3d uvw;
  Eigen::Vector3d xyz;
  bool boundary = false;
};

struct FitOptions {
  double smoothing = 1e-6;       // relative to the normal-matrix trace
  double boundary_weight = 10.0; // relative weight of boundary samples
};

/// Weighted least-squares fit of a B-spline volume to parameterized samples.
BSplineVolume fit_bspline_solid(const std::vector<FitSample>& samples,
                                const std::array<KnotVector, 3>& kv,
                                const FitOptions& options = {});

}  // namespace qfiga
