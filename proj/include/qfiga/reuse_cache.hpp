#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qfiga/geometry_terms.hpp"
#include "qfiga/polynomial_approx.hpp"
#include "qfiga/spline_volume.hpp"

namespace qfiga {

/// Everything in the cache is a pure function of this key: degrees, knot
/// structure, interface topology, approximant degrees and the boundary
/// layout. Control points never enter.
struct CacheKey {
  Deg3 degrees{3, 3, 3};
  Deg3 approx{6, 6, 6};
  std::vector<std::array<std::vector<double>, 3>> interior_knots;  // per block
  std::vector<InterfaceDecl> interfaces;
  std::vector<FaceRef> dirichlet_faces;

  static CacheKey from(const MultiBlockVolume& domain, Deg3 approx_degrees,
                       const std::vector<FaceRef>& dirichlet_faces);

  std::string hash() const;
};

/// Weight tables of the Bernstein product shapes used by the per-element
/// pipeline, keyed by operand degrees.
class ProductWeightSet {
 public:
  void add(const Deg3& a, const Deg3& b);
  const ProductWeights& get(const Deg3& a, const Deg3& b) const;
  std::size_t count() const { return table_.size(); }
  std::size_t weight_values() const;

 private:
  std::map<std::pair<Deg3, Deg3>, ProductWeights> table_;
};

/// Univariate products of basis-function factors, one matrix per direction
/// and per (derivative-on-left, derivative-on-right) combination. Row (r,i)
/// holds the Bernstein coefficients of factor_r * factor_i.
struct PairProductTables {
  Deg3 degrees{3, 3, 3};
  std::array<std::array<Eigen::MatrixXd, 4>, 3> tables;  // [dir][da + 2*db]

  static PairProductTables build(Deg3 degrees);
};

struct CollocationSite {
  int block = 0;
  Eigen::Vector3d uvw = Eigen::Vector3d::Zero();
};

/// Boundary collocation system at Greville sites; the matrix depends only on
/// the knot structure and the boundary layout, so its factorization is shared
/// across models and boundary data.
class CollocationSystem {
 public:
  CollocationSystem() = default;

  static CollocationSystem build(const MultiBlockVolume& domain,
                                 const std::vector<FaceRef>& dirichlet_faces);

  static CollocationSystem from_parts(std::vector<int> boundary_dofs,
                                      std::vector<CollocationSite> sites, int n,
                                      const std::vector<Eigen::Triplet<double>>& triplets);

  const std::vector<int>& boundary_dofs() const { return boundary_dofs_; }
  const std::vector<CollocationSite>& sites() const { return sites_; }
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

  /// Boundary control variables for data t0 evaluated on the given geometry.
  Eigen::VectorXd solve_boundary_values(
      const MultiBlockVolume& geometry,
      const std::function<double(const Eigen::Vector3d&)>& t0) const;

  int factorization_count() const { return factorizations_; }

  void factorize();  // idempotent; counted

 private:
  std::vector<int> boundary_dofs_;  // sorted global ids
  std::vector<CollocationSite> sites_;  // aligned with boundary_dofs_
  Eigen::SparseMatrix<double> matrix_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
  int factorizations_ = 0;
};

/// CSR sparsity of the global stiffness matrix.
struct SparsityPattern {
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::size_t nnz() const { return cols.size(); }
};

struct CacheItemStats {
  std::string name;
  std::size_t bytes = 0;
  std::size_t nnz = 0;
  double build_seconds = 0.0;
};

struct BlockStructure {
  std::array<std::vector<Eigen::MatrixXd>, 3> extraction;  // per direction
  std::array<std::vector<double>, 3> greville;
};

/// Geometry-independent precomputations for one structure key.
struct CacheEntry {
  CacheKey key;
  DCoefficientTable d_table{{1, 1, 1}};
  GradientTable gradients{{1, 1, 1}};
  ProductWeightSet product_weights;
  PairProductTables pair_tables;
  ReusableApprox approx;
  std::vector<BlockStructure> blocks;
  std::vector<std::vector<int>> dof_map;  // per block: local -> global
  int num_dofs = 0;
  SparsityPattern pattern;
  CollocationSystem collocation;
  std::vector<CacheItemStats> items;

  std::size_t total_bytes() const;
  std::size_t total_nnz() const;
};

struct CacheStats {
  std::vector<CacheItemStats> items;
  std::size_t total_bytes = 0;
  std::size_t total_nnz = 0;
};

/// Deterministic part of the stats report (no timings), one line per item.
std::string format_stats(const CacheStats& stats);
CacheStats stats(const CacheEntry& entry);

/// Content-addressed persistent store of CacheEntry values.
class ReuseCache {
 public:
  /// Empty dir: QFIGA_CACHE_DIR from the environment, else ./qfiga_cache.
  explicit ReuseCache(std::filesystem::path dir = {});

  const std::filesystem::path& directory() const { return dir_; }

  /// Returns the entry for the key, building and persisting it on a miss.
  /// Concurrent calls for one key perform a single build.
  std::shared_ptr<const CacheEntry> get_or_build(
      const CacheKey& key, const MultiBlockVolume& domain);

  /// Number of full builder invocations performed by this cache object.
  int builds_performed() const { return builds_; }
  int disk_loads() const { return loads_; }

  void clear();
  std::vector<std::string> stored_keys() const;

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const CacheEntry>> memory_;
  std::atomic<int> builds_{0};
  std::atomic<int> loads_{0};
};

/// Builds every artifact from scratch (used by the cache on a miss).
CacheEntry build_cache_entry(const CacheKey& key, const MultiBlockVolume& domain);

void save_entry(const CacheEntry& entry, const std::filesystem::path& bin_path,
                const std::filesystem::path& manifest_path);
std::optional<CacheEntry> load_entry(const CacheKey& key,
                                     const std::filesystem::path& bin_path);

}  // namespace qfiga
