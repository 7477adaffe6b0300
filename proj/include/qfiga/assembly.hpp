#pragma once

#include <Eigen/Sparse>

#include <functional>
#include <memory>

#include "qfiga/reuse_cache.hpp"

namespace qfiga {

using ScalarField = std::function<double(const Eigen::Vector3d&)>;

/// laplacian(T) = g in the volume, T = T0 on the selected faces.
struct HeatProblem {
  std::shared_ptr<const MultiBlockVolume> domain;
  ScalarField source;     // g
  ScalarField dirichlet;  // T0
  std::vector<FaceRef> dirichlet_faces;
};

struct AssembleOptions {
  int threads = 1;
  bool warn_degenerate = true;
};

struct GlobalSystem {
  Eigen::SparseMatrix<double> stiffness;
  Eigen::VectorXd load;  // right-hand side ( -int g B J )
  std::vector<int> boundary_dofs;
};

struct ReducedSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
  Eigen::VectorXd boundary_values;  // aligned with GlobalSystem::boundary_dofs
  std::vector<int> interior_dofs;
};

class SolutionField {
 public:
  SolutionField() = default;
  SolutionField(std::shared_ptr<const MultiBlockVolume> domain,
                Eigen::VectorXd values)
      : domain_(std::move(domain)), values_(std::move(values)) {}

  const Eigen::VectorXd& values() const { return values_; }
  const MultiBlockVolume& domain() const { return *domain_; }
  std::shared_ptr<const MultiBlockVolume> domain_ptr() const { return domain_; }

  double evaluate(int block, double u, double v, double w) const;

 private:
  std::shared_ptr<const MultiBlockVolume> domain_;
  Eigen::VectorXd values_;
};

/// Quadrature-free stiffness assembly plus Gauss-quadrature load vector.
GlobalSystem assemble(const HeatProblem& problem, const CacheEntry& cache,
                      const AssembleOptions& options = {});

/// Reference assembly by tensor-product Gauss quadrature of the rational
/// integrand, (p+1)^3 points per element; independent of the
/// extraction/approximation pipeline.
GlobalSystem assemble_reference_gauss(const HeatProblem& problem,
                                      int points_per_direction = 0);

/// Boundary control variables by collocation, then elimination.
ReducedSystem impose_dirichlet(const GlobalSystem& system,
                               const HeatProblem& problem,
                               const CacheEntry& cache);

/// Direct factorization below 20k unknowns, diagonally preconditioned CG at
/// relative tolerance 1e-10 above.
SolutionField solve(const ReducedSystem& reduced, const GlobalSystem& system,
                    const HeatProblem& problem);

SolutionField solve_heat(const HeatProblem& problem, const CacheEntry& cache,
                         const AssembleOptions& options = {});

/// sqrt(int (Th - T)^2 J) / sqrt(int T^2 J) with (p+2)^3 Gauss points per
/// element. A zero exact-norm flips `absolute_norm` and returns the absolute
/// error norm instead.
double l2_relative_error(const SolutionField& solution, const ScalarField& exact,
                         bool* absolute_norm = nullptr);

/// max |a-b| / max |b| over matched sparse entries.
double max_relative_difference(const Eigen::SparseMatrix<double>& a,
                               const Eigen::SparseMatrix<double>& b);

/// Order-independent checksum of the sparse matrix (sorted entries).
std::uint64_t stiffness_checksum(const Eigen::SparseMatrix<double>& m);

}  // namespace qfiga
