#include <doctest.h>

#include <Eigen/Dense>

#include <random>

#include "qfiga/geometry_terms.hpp"

using namespace qfiga;

namespace {

std::mt19937 rng(911);

double rand01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

BezierVolume identity_element(Deg3 deg) {
  BezierVolume b;
  b.degrees = deg;
  b.ctrl.resize(static_cast<Eigen::Index>(deg[0] + 1) * (deg[1] + 1) * (deg[2] + 1), 3);
  for (int k = 0; k <= deg[2]; ++k)
    for (int j = 0; j <= deg[1]; ++j)
      for (int i = 0; i <= deg[0]; ++i)
        b.ctrl.row(b.flat(i, j, k)) =
            Eigen::RowVector3d(static_cast<double>(i) / deg[0],
                               static_cast<double>(j) / deg[1],
                               static_cast<double>(k) / deg[2]);
  return b;
}

BezierVolume random_element(Deg3 deg, double amp = 0.12) {
  BezierVolume b = identity_element(deg);
  std::uniform_real_distribution<double> d(-amp / deg[0], amp / deg[0]);
  for (Eigen::Index r = 0; r < b.ctrl.rows(); ++r)
    b.ctrl.row(r) += Eigen::RowVector3d(d(rng), d(rng), d(rng));
  return b;
}

}  // namespace

TEST_CASE("d-coefficient table") {
  const DCoefficientTable t = build_d_table({1, 1, 1});
  SUBCASE("all-zero decomposition weight is 1") {
    // Degrees (1,1,1), decomposition (0,0,0) in every direction:
    // weight = C(0,0)C(1,0)C(1,0) per direction, normalization 1*1*1 / C(2,0)^3 = 1.
    CHECK(t.direction(0).triples[0].size() == 1);
    CHECK(t.direction(0).weights[0][0] == 1.0);
    CHECK(t.normalization(0, 0, 0) == 1.0);
  }
  SUBCASE("weights strictly positive") {
    for (int d = 0; d < 3; ++d)
      for (const auto& ws : t.direction(d).weights)
        for (double w : ws) CHECK(w > 0.0);
  }
  SUBCASE("deterministic across builds") {
    const DCoefficientTable t2 = build_d_table({1, 1, 1});
    for (int d = 0; d < 3; ++d) {
      REQUIRE(t2.direction(d).weights.size() == t.direction(d).weights.size());
      for (std::size_t i = 0; i < t.direction(d).weights.size(); ++i)
        CHECK(t2.direction(d).weights[i] == t.direction(d).weights[i]);
    }
  }
}

TEST_CASE("jacobian expansion via decomposition formula") {
  SUBCASE("identity cube: all coefficients 1") {
    for (Deg3 deg : {Deg3{1, 1, 1}, Deg3{2, 2, 2}, Deg3{3, 3, 3}}) {
      const BezierVolume b = identity_element(deg);
      const JacobianExpansion j = jacobian_expansion(b, build_d_table(deg));
      CHECK(j.tensor.degrees() == jacobian_degrees(deg));
      CHECK((j.tensor.coeffs().array() - 1.0).abs().maxCoeff() < 1e-13);
    }
  }
  SUBCASE("affine scaling: constant determinant a*b*c") {
    BezierVolume b = identity_element({2, 2, 2});
    for (Eigen::Index r = 0; r < b.ctrl.rows(); ++r) {
      b.ctrl(r, 0) *= 2.0;
      b.ctrl(r, 1) *= 3.0;
      b.ctrl(r, 2) *= 0.5;
    }
    const JacobianExpansion j = jacobian_expansion(b, build_d_table({2, 2, 2}));
    CHECK((j.tensor.coeffs().array() - 3.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("coefficient route equals product route and pointwise determinants") {
    const DCoefficientTable table = build_d_table({3, 3, 3});
    for (int rep = 0; rep < 5; ++rep) {
      const BezierVolume b = random_element({3, 3, 3});
      const JacobianExpansion jd = jacobian_expansion(b, table);
      const BernsteinTensor jp = jacobian_from_cofactors(b);
      CHECK((jd.tensor.coeffs() - jp.coeffs()).lpNorm<Eigen::Infinity>() < 1e-12);
      for (int pt = 0; pt < 100; ++pt) {
        const double u = rand01(), v = rand01(), w = rand01();
        CHECK(evaluate(jd.tensor, u, v, w) ==
              doctest::Approx(b.jacobian(u, v, w).determinant()).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("cofactors") {
  SUBCASE("identity cube gives the identity cofactor matrix") {
    const CofactorSet cof = cofactors(identity_element({2, 2, 2}));
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        const double expected = p == q ? 1.0 : 0.0;
        CHECK((cof(p, q).coeffs().array() - expected).abs().maxCoeff() < 1e-13);
      }
  }
  SUBCASE("diag(2,3,4) scaling: diagonal cofactors 12, 8, 6") {
    BezierVolume b = identity_element({1, 1, 1});
    for (Eigen::Index r = 0; r < b.ctrl.rows(); ++r) {
      b.ctrl(r, 0) *= 2.0;
      b.ctrl(r, 1) *= 3.0;
      b.ctrl(r, 2) *= 4.0;
    }
    const CofactorSet cof = cofactors(b);
    const double expected[3] = {12.0, 8.0, 6.0};
    for (int p = 0; p < 3; ++p) {
      CHECK((cof(p, p).coeffs().array() - expected[p]).abs().maxCoeff() < 1e-12);
      for (int q = 0; q < 3; ++q)
        if (q != p) CHECK(cof(p, q).coeffs().lpNorm<Eigen::Infinity>() < 1e-13);
    }
  }
  SUBCASE("pointwise cofactor^T * jacobian = det * identity") {
    const BezierVolume b = random_element({3, 3, 3});
    const CofactorSet cof = cofactors(b);
    for (int pt = 0; pt < 100; ++pt) {
      const double u = rand01(), v = rand01(), w = rand01();
      const Eigen::Matrix3d jac = b.jacobian(u, v, w);
      const double det = jac.determinant();
      Eigen::Matrix3d adj;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) adj(p, q) = evaluate(cof(p, q), u, v, w);
      // jac rows are coordinates, adj columns contract them
      const Eigen::Matrix3d prod = adj * jac;
      CHECK((prod - det * Eigen::Matrix3d::Identity()).lpNorm<Eigen::Infinity>() <
            1e-10 * std::max(1.0, std::abs(det)));
    }
  }
}

TEST_CASE("gradient table") {
  const GradientTable g({2, 1, 2});
  for (int local = 0; local < g.num_local(); ++local) {
    const int i = local % 3, j = (local / 3) % 2, k = local / 6;
    for (int pt = 0; pt < 10; ++pt) {
      const double u = rand01(), v = rand01(), w = rand01();
      const double h = 1e-6;
      auto basis_val = [&](double uu, double vv, double ww) {
        return bernstein_basis(2, uu)[i] * bernstein_basis(1, vv)[j] *
               bernstein_basis(2, ww)[k];
      };
      CHECK(evaluate(g.grad(0, local), u, v, w) ==
            doctest::Approx((basis_val(u + h, v, w) - basis_val(u - h, v, w)) / (2 * h))
                .epsilon(1e-5));
      CHECK(evaluate(g.grad(1, local), u, v, w) ==
            doctest::Approx((basis_val(u, v + h, w) - basis_val(u, v - h, w)) / (2 * h))
                .epsilon(1e-5));
    }
  }
}

TEST_CASE("entry numerator") {
  SUBCASE("identity cube, trilinear, pair (000,000) equals |grad B|^2") {
    const BezierVolume b = identity_element({1, 1, 1});
    const GradientTable g({1, 1, 1});
    const CofactorSet cof = cofactors(b);
    const auto grads = g.gradient(0);
    const BernsteinTensor num = entry_numerator(
        cof, {*grads[0], *grads[1], *grads[2]}, {*grads[0], *grads[1], *grads[2]});
    // direct |grad|^2 via products
    BernsteinTensor direct(num.degrees());
    for (int p = 0; p < 3; ++p) {
      const BernsteinTensor sq = product(*grads[p], *grads[p]);
      direct.coeffs() += elevate(sq, num.degrees()).coeffs();
    }
    CHECK((num.coeffs() - direct.coeffs()).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  SUBCASE("random element matches the pointwise rational integrand") {
    const Deg3 deg = {2, 2, 2};
    const BezierVolume b = random_element(deg);
    const GradientTable g(deg);
    const CofactorSet cof = cofactors(b);
    const BernsteinTensor jac = jacobian_from_cofactors(b);
    std::uniform_int_distribution<int> pick(0, g.num_local() - 1);
    for (int rep = 0; rep < 4; ++rep) {
      const int a = pick(rng), c = pick(rng);
      const auto ga = g.gradient(a);
      const auto gc = g.gradient(c);
      const BernsteinTensor num =
          entry_numerator(cof, {*ga[0], *ga[1], *ga[2]}, {*gc[0], *gc[1], *gc[2]});
      CHECK(num.degrees() == numerator_degrees(deg));
      for (int pt = 0; pt < 100; ++pt) {
        const double u = rand01(), v = rand01(), w = rand01();
        const Eigen::Matrix3d jm = b.jacobian(u, v, w);
        const double det = jm.determinant();
        const Eigen::Matrix3d kinv = jm.inverse();  // rows d(u_p)/d(x)
        Eigen::Vector3d grad_a, grad_c;
        for (int p = 0; p < 3; ++p) {
          grad_a[p] = evaluate(*ga[p], u, v, w);
          grad_c[p] = evaluate(*gc[p], u, v, w);
        }
        const Eigen::Vector3d ga_x = kinv.transpose() * grad_a;
        const Eigen::Vector3d gc_x = kinv.transpose() * grad_c;
        const double f_direct = det * ga_x.dot(gc_x);
        const double f_mine = evaluate(num, u, v, w) / det;
        CHECK(f_mine == doctest::Approx(f_direct).epsilon(1e-9));
      }
    }
  }
  SUBCASE("pair symmetry is exact coefficientwise") {
    const Deg3 deg = {2, 2, 2};
    const BezierVolume b = random_element(deg);
    const GradientTable g(deg);
    const MetricNumerators metric = metric_numerators(cofactors(b));
    const auto ga = g.gradient(3);
    const auto gc = g.gradient(17);
    const BernsteinTensor ab =
        entry_numerator(metric, {*ga[0], *ga[1], *ga[2]}, {*gc[0], *gc[1], *gc[2]});
    const BernsteinTensor ba =
        entry_numerator(metric, {*gc[0], *gc[1], *gc[2]}, {*ga[0], *ga[1], *ga[2]});
    CHECK((ab.coeffs() - ba.coeffs()).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("diagonal pairs are pointwise nonnegative where J > 0") {
    const Deg3 deg = {2, 2, 2};
    const BezierVolume b = random_element(deg);
    const GradientTable g(deg);
    const CofactorSet cof = cofactors(b);
    const BernsteinTensor jac = jacobian_from_cofactors(b);
    CHECK(min_jacobian_on_grid(jac) > 0.0);
    const auto ga = g.gradient(5);
    const BernsteinTensor num =
        entry_numerator(cof, {*ga[0], *ga[1], *ga[2]}, {*ga[0], *ga[1], *ga[2]});
    for (int pt = 0; pt < 50; ++pt) {
      const double u = rand01(), v = rand01(), w = rand01();
      CHECK(evaluate(num, u, v, w) / evaluate(jac, u, v, w) >= -1e-12);
    }
  }
}
