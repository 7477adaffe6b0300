#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "qfiga/models.hpp"
#include "qfiga/reuse_cache.hpp"

using namespace qfiga;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("qfiga_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cache keys depend on structure, not control points") {
  const MultiBlockVolume a = make_unit_cube({3, 3, 3}, 2);
  const MultiBlockVolume b = perturb_model(a, 0.05, 42);
  const Deg3 approx = initial_approx_degrees(a.degrees());
  const auto faces = a.exterior_faces();
  CHECK(CacheKey::from(a, approx, faces).hash() == CacheKey::from(b, approx, faces).hash());

  const MultiBlockVolume refined = a.refined(1);
  CHECK(CacheKey::from(refined, approx, faces).hash() !=
        CacheKey::from(a, approx, faces).hash());

  const MultiBlockVolume quad = make_unit_cube({2, 2, 2}, 2);
  CHECK(CacheKey::from(quad, initial_approx_degrees(quad.degrees()), faces).hash() !=
        CacheKey::from(a, approx, faces).hash());

  Deg3 bumped = approx;
  bumped[0] += 1;
  CHECK(CacheKey::from(a, bumped, faces).hash() != CacheKey::from(a, approx, faces).hash());

  CHECK(CacheKey::from(a, approx, {{0, 0}}).hash() !=
        CacheKey::from(a, approx, faces).hash());
}

TEST_CASE("get_or_build hits and misses") {
  const auto dir = temp_dir("hits");
  ReuseCache cache(dir);
  const MultiBlockVolume a = make_unit_cube({3, 3, 3}, 2);
  const MultiBlockVolume b = perturb_model(a, 0.05, 7);
  const Deg3 approx = initial_approx_degrees(a.degrees());
  const auto faces = a.exterior_faces();

  const auto e1 = cache.get_or_build(CacheKey::from(a, approx, faces), a);
  CHECK(cache.builds_performed() == 1);
  // same key, different control points: zero further builder invocations
  const auto e2 = cache.get_or_build(CacheKey::from(b, approx, faces), b);
  CHECK(cache.builds_performed() == 1);
  CHECK(e1.get() == e2.get());
  // different degree: full rebuild
  const MultiBlockVolume quad = make_unit_cube({2, 2, 2}, 2);
  cache.get_or_build(CacheKey::from(quad, initial_approx_degrees(quad.degrees()), quad.exterior_faces()), quad);
  CHECK(cache.builds_performed() == 2);
}

TEST_CASE("cache persists and reloads identically") {
  const auto dir = temp_dir("persist");
  const MultiBlockVolume a = make_unit_cube({3, 3, 3}, 2);
  const Deg3 approx = initial_approx_degrees(a.degrees());
  const CacheKey key = CacheKey::from(a, approx, a.exterior_faces());
  std::shared_ptr<const CacheEntry> built;
  {
    ReuseCache cache(dir);
    built = cache.get_or_build(key, a);
    CHECK(cache.builds_performed() == 1);
    CHECK(std::filesystem::exists(dir / (key.hash() + ".bin")));
    CHECK(std::filesystem::exists(dir / (key.hash() + ".manifest.json")));
  }
  {
    ReuseCache cache(dir);
    const auto loaded = cache.get_or_build(key, a);
    CHECK(cache.builds_performed() == 0);
    CHECK(cache.disk_loads() == 1);
    CHECK(loaded->num_dofs == built->num_dofs);
    CHECK(loaded->pattern.cols == built->pattern.cols);
    CHECK(loaded->pattern.row_ptr == built->pattern.row_ptr);
    CHECK(loaded->dof_map == built->dof_map);
    for (int d = 0; d < 3; ++d) {
      CHECK((loaded->approx.lfac[d] - built->approx.lfac[d]).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((loaded->approx.qfac[d] - built->approx.qfac[d]).lpNorm<Eigen::Infinity>() == 0.0);
    }
    CHECK(loaded->collocation.boundary_dofs() == built->collocation.boundary_dofs());
    const Eigen::SparseMatrix<double> diff =
        loaded->collocation.matrix() - built->collocation.matrix();
    const bool colloc_equal =
        diff.coeffs().size() == 0 || diff.coeffs().cwiseAbs().maxCoeff() == 0.0;
    CHECK(colloc_equal);
  }
  {
    ReuseCache cache(dir);
    cache.clear();
    CHECK(cache.stored_keys().empty());
  }
}

TEST_CASE("stats recount and determinism") {
  const auto dir = temp_dir("stats");
  ReuseCache cache(dir);
  const MultiBlockVolume a = make_unit_cube({3, 3, 3}, 1);
  const CacheKey key =
      CacheKey::from(a, initial_approx_degrees(a.degrees()), a.exterior_faces());
  const auto entry = cache.get_or_build(key, a);
  const CacheStats s = stats(*entry);
  CHECK(!s.items.empty());

  std::size_t nnz_sum = 0, byte_sum = 0;
  for (const auto& item : s.items) {
    nnz_sum += item.nnz;
    byte_sum += item.bytes;
  }
  CHECK(nnz_sum == s.total_nnz);
  CHECK(byte_sum == s.total_bytes);

  // independent recount of a few items
  {
    std::size_t grad_nnz = 0;
    for (int d = 0; d < 3; ++d)
      for (int l = 0; l < entry->gradients.num_local(); ++l)
        for (Eigen::Index i = 0; i < entry->gradients.grad(d, l).size(); ++i)
          if (entry->gradients.grad(d, l).coeffs()[i] != 0.0) ++grad_nnz;
    const auto it = std::find_if(s.items.begin(), s.items.end(),
                                 [](const auto& x) { return x.name == "gradient_tensors"; });
    REQUIRE(it != s.items.end());
    CHECK(it->nnz == grad_nnz);
  }
  {
    const auto it = std::find_if(s.items.begin(), s.items.end(),
                                 [](const auto& x) { return x.name == "sparsity_pattern"; });
    REQUIRE(it != s.items.end());
    CHECK(it->nnz == entry->pattern.cols.size());
  }

  // deterministic formatted report across rebuilds
  const auto dir2 = temp_dir("stats2");
  ReuseCache cache2(dir2);
  const auto entry2 = cache2.get_or_build(key, a);
  CHECK(format_stats(stats(*entry)) == format_stats(stats(*entry2)));
}

TEST_CASE("pair product tables match direct products") {
  const PairProductTables t = PairProductTables::build({3, 2, 3});
  for (int dir = 0; dir < 3; ++dir) {
    const int l = t.degrees[dir];
    for (int combo = 0; combo < 4; ++combo) {
      const int da = combo & 1, db = combo >> 1;
      for (int r = 0; r <= l; ++r)
        for (int i = 0; i <= l; ++i) {
          // pointwise check of the univariate product at a few parameters
          for (double x : {0.12, 0.5, 0.93}) {
            const Eigen::VectorXd bv = bernstein_basis(l, x);
            const Eigen::VectorXd dv = bernstein_basis_derivative(l, x);
            const double f1 = da ? dv[r] : bv[r];
            const double f2 = db ? dv[i] : bv[i];
            const Eigen::VectorXd basis =
                bernstein_basis(2 * l - da - db, x);
            const double val = t.tables[dir][combo].row(r + (l + 1) * i).dot(basis);
            CHECK(val == doctest::Approx(f1 * f2).epsilon(1e-12));
          }
        }
    }
  }
}
