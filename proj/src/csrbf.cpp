#include "qfiga/csrbf.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace qfiga {

double wendland(double r) {
  if (r < 0.0) throw std::domain_error("wendland: negative radius");
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  const double s2 = s * s;
  const double s6 = s2 * s2 * s2;
  return s6 * (3.0 + 18.0 * r + 35.0 * r * r);
}

Eigen::Vector3d ElasticMap::operator()(const Eigen::Vector3d& x) const {
  Eigen::Vector3d out = linear_ * x + translation_;
  for (std::size_t j = 0; j < centers_.size(); ++j) {
    const double r = (x - centers_[j]).norm() / lambda_;
    if (r < 1.0) out += weights_[j] * wendland(r);
  }
  return out;
}

namespace {

struct CellKey {
  long long x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t h = std::hash<long long>{}(k.x);
    h = h * 1000003u ^ std::hash<long long>{}(k.y);
    h = h * 1000003u ^ std::hash<long long>{}(k.z);
    return h;
  }
};

CellKey cell_of(const Eigen::Vector3d& p, double h) {
  return {static_cast<long long>(std::floor(p[0] / h)),
          static_cast<long long>(std::floor(p[1] / h)),
          static_cast<long long>(std::floor(p[2] / h))};
}

}  // namespace

std::vector<Eigen::Vector3d> ElasticMap::map_points(
    const std::vector<Eigen::Vector3d>& pts) const {
  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  for (std::size_t j = 0; j < centers_.size(); ++j) {
    grid[cell_of(centers_[j], lambda_)].push_back(static_cast<int>(j));
  }
  std::vector<Eigen::Vector3d> out;
  out.reserve(pts.size());
  for (const Eigen::Vector3d& x : pts) {
    Eigen::Vector3d y = linear_ * x + translation_;
    const CellKey c = cell_of(x, lambda_);
    for (long long dz = -1; dz <= 1; ++dz)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dx = -1; dx <= 1; ++dx) {
          const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            const double r = (x - centers_[j]).norm() / lambda_;
            if (r < 1.0) y += weights_[j] * wendland(r);
          }
        }
    out.push_back(y);
  }
  return out;
}

ElasticMap fit_elastic_map(const std::vector<Eigen::Vector3d>& sources,
                           const std::vector<Eigen::Vector3d>& targets,
                           double lambda) {
  const int n = static_cast<int>(sources.size());
  if (targets.size() != sources.size()) {
    throw std::invalid_argument("fit_elastic_map: source/target count mismatch");
  }
  if (n < 4) throw std::runtime_error("fit_elastic_map: needs at least 4 constraints");
  if (!(lambda > 0.0)) throw std::runtime_error("fit_elastic_map: lambda must be positive");
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((sources[i] - sources[j]).norm() < 1e-12) {
        throw std::runtime_error("fit_elastic_map: duplicate centers " +
                                 std::to_string(i) + " and " + std::to_string(j));
      }
    }
  }
  // Coplanarity check through the covariance rank.
  {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : sources) mean += p;
    mean /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : sources) cov += (p - mean) * (p - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.eigenvalues()(0) < 1e-12 * std::max(1.0, es.eigenvalues()(2))) {
      throw std::runtime_error(
          "fit_elastic_map: centers are coplanar, affine part is undetermined");
    }
  }

  // Symmetric saddle-point system [Phi P; P^T 0], solved per coordinate.
  const int dim = n + 4;
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double r = (sources[i] - sources[j]).norm() / lambda;
      if (r < 1.0) trips.emplace_back(i, j, wendland(r));
    }
    trips.emplace_back(i, n + 0, 1.0);
    trips.emplace_back(n + 0, i, 1.0);
    for (int c = 0; c < 3; ++c) {
      trips.emplace_back(i, n + 1 + c, sources[i][c]);
      trips.emplace_back(n + 1 + c, i, sources[i][c]);
    }
  }
  Eigen::SparseMatrix<double> m(dim, dim);
  m.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("fit_elastic_map: singular interpolation system");
  }
  ElasticMap map;
  map.lambda_ = lambda;
  map.centers_ = sources;
  map.weights_.assign(n, Eigen::Vector3d::Zero());
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i) rhs[i] = targets[i][c];
    const Eigen::VectorXd sol = lu.solve(rhs);
    for (int i = 0; i < n; ++i) map.weights_[i][c] = sol[i];
    map.translation_[c] = sol[n];
    for (int d = 0; d < 3; ++d) map.linear_(c, d) = sol[n + 1 + d];
  }
  return map;
}

BSplineVolume fit_bspline_solid(const std::vector<FitSample>& samples,
                                const std::array<KnotVector, 3>& kv,
                                const FitOptions& options) {
  const int nu = kv[0].num_basis(), nv = kv[1].num_basis(), nw = kv[2].num_basis();
  const Eigen::Index dofs = static_cast<Eigen::Index>(nu) * nv * nw;
  if (static_cast<Eigen::Index>(samples.size()) < dofs) {
    throw std::runtime_error("fit_bspline_solid: " + std::to_string(samples.size()) +
                             " samples for " + std::to_string(dofs) + " control points");
  }
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::Matrix<double, Eigen::Dynamic, 3> rhs_pts(samples.size(), 3);
  std::vector<double> weights(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    for (int d = 0; d < 3; ++d) {
      if (!(smp.uvw[d] >= 0.0 && smp.uvw[d] <= 1.0)) {
        throw std::domain_error("fit_bspline_solid: sample parameter outside [0,1]^3");
      }
    }
    const double w = smp.boundary ? options.boundary_weight : 1.0;
    weights[s] = w;
    rhs_pts.row(s) = smp.xyz.transpose();
    int fu, fv, fw;
    Eigen::VectorXd bu, bv, bw;
    kv[0].basis(smp.uvw[0], fu, bu);
    kv[1].basis(smp.uvw[1], fv, bv);
    kv[2].basis(smp.uvw[2], fw, bw);
    for (int k = 0; k < bw.size(); ++k)
      for (int j = 0; j < bv.size(); ++j)
        for (int i = 0; i < bu.size(); ++i) {
          const Eigen::Index col =
              (fu + i) + static_cast<Eigen::Index>(nu) * ((fv + j) + static_cast<Eigen::Index>(nv) * (fw + k));
          trips.emplace_back(static_cast<int>(s), static_cast<int>(col),
                             std::sqrt(w) * bu[i] * bv[j] * bw[k]);
        }
  }
  Eigen::SparseMatrix<double> design(static_cast<Eigen::Index>(samples.size()), dofs);
  design.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseMatrix<double> normal = design.transpose() * design;

  if (options.smoothing > 0.0) {
    // Second-difference penalty on the control net per direction.
    std::vector<Eigen::Triplet<double>> st;
    auto flat = [&](int i, int j, int k) {
      return i + static_cast<Eigen::Index>(nu) * (j + static_cast<Eigen::Index>(nv) * k);
    };
    Eigen::Index row = 0;
    std::vector<Eigen::Triplet<double>> dt;
    for (int k = 0; k < nw; ++k)
      for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
          if (i + 2 < nu) {
            dt.emplace_back(row, flat(i, j, k), 1.0);
            dt.emplace_back(row, flat(i + 1, j, k), -2.0);
            dt.emplace_back(row, flat(i + 2, j, k), 1.0);
            ++row;
          }
          if (j + 2 < nv) {
            dt.emplace_back(row, flat(i, j, k), 1.0);
            dt.emplace_back(row, flat(i, j + 1, k), -2.0);
            dt.emplace_back(row, flat(i, j + 2, k), 1.0);
            ++row;
          }
          if (k + 2 < nw) {
            dt.emplace_back(row, flat(i, j, k), 1.0);
            dt.emplace_back(row, flat(i, j, k + 1), -2.0);
            dt.emplace_back(row, flat(i, j, k + 2), 1.0);
            ++row;
          }
        }
    Eigen::SparseMatrix<double> diff(row, dofs);
    diff.setFromTriplets(dt.begin(), dt.end());
    const Eigen::SparseMatrix<double> reg = diff.transpose() * diff;
    double trace = 0.0;
    for (Eigen::Index i = 0; i < dofs; ++i) trace += normal.coeff(i, i);
    const double mu = options.smoothing * trace / dofs;
    normal += (mu * reg).eval();
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(normal);
  if (solver.info() != Eigen::Success) {
    // Report the deficiency through a dense rank computation.
    const Eigen::MatrixXd dense(normal);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(dense);
    throw std::runtime_error("fit_bspline_solid: rank-deficient system, null space size " +
                             std::to_string(dofs - lu.rank()));
  }
  ControlGrid ctrl(dofs, 3);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dofs);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      // design already carries sqrt(w); fold the other sqrt into the data.
      b += design.row(static_cast<Eigen::Index>(s)).transpose() *
           (std::sqrt(weights[s]) * rhs_pts(static_cast<Eigen::Index>(s), c));
    }
    ctrl.col(c) = solver.solve(b);
  }
  return BSplineVolume(kv, ctrl);
}

}  // namespace qfiga
