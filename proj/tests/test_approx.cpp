#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "qfiga/gauss.hpp"
#include "qfiga/polynomial_approx.hpp"

using namespace qfiga;

namespace {

std::mt19937 rng(321);

double rand01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

BernsteinTensor random_tensor(Deg3 deg, double lo, double hi) {
  BernsteinTensor t(deg);
  std::uniform_real_distribution<double> d(lo, hi);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.coeffs()[i] = d(rng);
  return t;
}

BezierVolume random_element(Deg3 deg, double amp) {
  BezierVolume b;
  b.degrees = deg;
  b.ctrl.resize(static_cast<Eigen::Index>(deg[0] + 1) * (deg[1] + 1) * (deg[2] + 1), 3);
  std::uniform_real_distribution<double> d(-amp / deg[0], amp / deg[0]);
  for (int k = 0; k <= deg[2]; ++k)
    for (int j = 0; j <= deg[1]; ++j)
      for (int i = 0; i <= deg[0]; ++i)
        b.ctrl.row(b.flat(i, j, k)) =
            Eigen::RowVector3d(static_cast<double>(i) / deg[0] + d(rng),
                               static_cast<double>(j) / deg[1] + d(rng),
                               static_cast<double>(k) / deg[2] + d(rng));
  return b;
}

}  // namespace

TEST_CASE("sigma") {
  // With the nominal 6*deg-4 numerator bookkeeping and the default
  // approximant degrees, both factors reduce to 9l-6 and sigma is exactly 1.
  const Deg3 spline = {2, 2, 2};
  const Deg3 approx = initial_approx_degrees(spline);
  CHECK(approx == Deg3{3, 3, 3});
  const Deg3 nominal = {6 * 2 - 4, 6 * 2 - 4, 6 * 2 - 4};
  CHECK(weight_sigma(approx, spline, nominal) == 1.0);
  for (int l = 1; l <= 4; ++l) {
    const Deg3 s = {l, l, l};
    CHECK(weight_sigma(initial_approx_degrees(s), s,
                       {6 * l - 4, 6 * l - 4, 6 * l - 4}) == 1.0);
  }
  // The solver runs with the true numerator degrees; sigma stays positive.
  const ReusableApprox sys = build_reusable(approx, spline);
  CHECK(sys.sigma > 0.0);
}

TEST_CASE("reusable system determinism and simple entries") {
  const ReusableApprox a = build_reusable({3, 3, 3}, {2, 2, 2});
  const ReusableApprox b = build_reusable({3, 3, 3}, {2, 2, 2});
  for (int d = 0; d < 3; ++d) {
    CHECK((a.lfac[d] - b.lfac[d]).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.qfac[d] - b.qfac[d]).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK(a.sigma == b.sigma);
  // L entry at row (0,0,0), column (0,0,0): every binomial is C(.,0) = 1.
  CHECK(a.dense_l()(0, 0) == 1.0);
}

TEST_CASE("build_E basics") {
  const Deg3 spline = {2, 2, 2};
  const ReusableApprox sys = build_reusable({3, 3, 3}, spline);
  SUBCASE("constant jacobian gives pure binomial products, linear in J") {
    const BernsteinTensor j1 = BernsteinTensor::constant(sys.jac, 1.0);
    const Eigen::MatrixXd e1 = build_E(j1, sys);
    BernsteinTensor j3 = j1;
    j3.coeffs() *= 3.0;
    const Eigen::MatrixXd e3 = build_E(j3, sys);
    CHECK((e3 - 3.0 * e1).lpNorm<Eigen::Infinity>() < 1e-12);
    // spot check one entry against the explicit binomial product
    // row (a,b,c)=(1,0,0), col (d,e,f)=(0,0,0): C(j,1)C(a,0)*... * J_100
    CHECK(e1(1, 0) == doctest::Approx(binomial(sys.jac[0], 1)));
  }
  SUBCASE("E*g matches the direct convolution triple sum") {
    const BernsteinTensor j = random_tensor(sys.jac, 0.5, 2.0);
    const Eigen::MatrixXd e = build_E(j, sys);
    const BernsteinTensor g = random_tensor(sys.approx, -1.0, 1.0);
    const Eigen::VectorXd h = e * g.coeffs();
    // oracle: H_abc = sum C(jac,r)C(approx,a-r)... J_rst G_(a-r)
    const Deg3 hdim = {sys.approx[0] + sys.jac[0], sys.approx[1] + sys.jac[1],
                       sys.approx[2] + sys.jac[2]};
    Eigen::Index row = 0;
    for (int c = 0; c <= hdim[2]; ++c)
      for (int b = 0; b <= hdim[1]; ++b)
        for (int a = 0; a <= hdim[0]; ++a) {
          double acc = 0.0;
          for (int t = std::max(0, c - sys.approx[2]); t <= std::min(c, sys.jac[2]); ++t)
            for (int s = std::max(0, b - sys.approx[1]); s <= std::min(b, sys.jac[1]); ++s)
              for (int r = std::max(0, a - sys.approx[0]); r <= std::min(a, sys.jac[0]); ++r)
                acc += binomial(sys.jac[0], r) * binomial(sys.approx[0], a - r) *
                       binomial(sys.jac[1], s) * binomial(sys.approx[1], b - s) *
                       binomial(sys.jac[2], t) * binomial(sys.approx[2], c - t) *
                       j.at(r, s, t) * g.at(a - r, b - s, c - t);
          CHECK(h[row] == doctest::Approx(acc).epsilon(1e-12));
          ++row;
        }
  }
}

TEST_CASE("element system matrix equals dense L*E") {
  const Deg3 spline = {2, 2, 2};
  const ReusableApprox sys = build_reusable({3, 3, 3}, spline);
  const BernsteinTensor j = random_tensor(sys.jac, 0.5, 2.0);
  const ElementApprox ea(sys, j);
  const Eigen::MatrixXd direct = sys.dense_l() * build_E(j, sys);
  CHECK((ea.system_matrix() - direct).lpNorm<Eigen::Infinity>() <
        1e-12 * direct.lpNorm<Eigen::Infinity>());
}

TEST_CASE("approximate") {
  const Deg3 spline = {2, 2, 2};
  const ReusableApprox sys = build_reusable(initial_approx_degrees(spline), spline);
  const BezierVolume elem = random_element(spline, 0.15);
  const BernsteinTensor jac = jacobian_from_cofactors(elem);

  SUBCASE("zero-residual reproduction of J * G0") {
    const BernsteinTensor g0 = random_tensor(sys.approx, -1.0, 1.0);
    const BernsteinTensor num = product(jac, g0);
    const Approximant a = approximate(num, jac, sys);
    CHECK((a.g.coeffs() - g0.coeffs()).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("F == 1 gives G == 1") {
    const Approximant a = approximate(jac, jac, sys);
    CHECK((a.g.coeffs().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("matches a dense quadrature-built weighted least squares oracle") {
    // Random rational F = num/J; oracle minimizes
    // int J (F - G)^2 with 20^3 Gauss points and direct normal equations.
    const BernsteinTensor num = random_tensor(numerator_degrees(spline), -1.0, 1.0);
    const Approximant mine = approximate(num, jac, sys);
    const GaussRule& rule = gauss_rule(20);
    const int gdim = sys.g_dim();
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(gdim, gdim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(gdim);
    for (int kw = 0; kw < 20; ++kw)
      for (int kv = 0; kv < 20; ++kv)
        for (int ku = 0; ku < 20; ++ku) {
          const double u = rule.points[ku], v = rule.points[kv], w = rule.points[kw];
          const double weight = rule.weights[ku] * rule.weights[kv] * rule.weights[kw];
          const double jval = evaluate(jac, u, v, w);
          const double fval = evaluate(num, u, v, w) / jval;
          const Eigen::VectorXd bu = bernstein_basis(sys.approx[0], u);
          const Eigen::VectorXd bv = bernstein_basis(sys.approx[1], v);
          const Eigen::VectorXd bw = bernstein_basis(sys.approx[2], w);
          Eigen::VectorXd phi(gdim);
          Eigen::Index idx = 0;
          for (int c = 0; c <= sys.approx[2]; ++c)
            for (int b = 0; b <= sys.approx[1]; ++b)
              for (int a = 0; a <= sys.approx[0]; ++a) phi[idx++] = bu[a] * bv[b] * bw[c];
          normal.noalias() += (weight * jval) * phi * phi.transpose();
          rhs.noalias() += (weight * jval * fval) * phi;
        }
    const Eigen::VectorXd oracle = normal.ldlt().solve(rhs);
    CHECK((mine.g.coeffs() - oracle).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("integrate_entry") {
  Approximant one{BernsteinTensor::constant({3, 3, 3}, 1.0), 0.0};
  CHECK(integrate_entry(one) == 1.0);
  BernsteinTensor single({3, 3, 3});
  single.at(2, 1, 0) = 1.0;
  Approximant a{single, 0.0};
  CHECK(integrate_entry(a) == doctest::Approx(1.0 / 64.0).epsilon(1e-14));
  const GaussRule& rule = gauss_rule(5);
  double gauss = 0.0;
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i)
        gauss += rule.weights[i] * rule.weights[j] * rule.weights[k] *
                 evaluate(single, rule.points[i], rule.points[j], rule.points[k]);
  CHECK(integrate_entry(a) == doctest::Approx(gauss).epsilon(1e-13));
}

TEST_CASE("integration of smooth rational entries vs high-order quadrature") {
  const Deg3 spline = {2, 2, 2};
  const ReusableApprox sys = build_reusable(initial_approx_degrees(spline), spline);
  const BezierVolume elem = random_element(spline, 0.1);
  const BernsteinTensor jac = jacobian_from_cofactors(elem);
  const BernsteinTensor num = product(jac, random_tensor({2, 2, 2}, 0.2, 1.0));
  // F is a polynomial multiple of J here, but route it through the rational
  // machinery and compare with dense quadrature of F = num / J.
  const ElementApprox ea(sys, jac);
  const double mine = ea.integrate_numerator(num);
  CHECK(mine == doctest::Approx(integrate_entry(ea.approximate(num))).epsilon(1e-12));
  const GaussRule& rule = gauss_rule(10);
  double ref = 0.0;
  for (int k = 0; k < 10; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        const double u = rule.points[i], v = rule.points[j], w = rule.points[k];
        ref += rule.weights[i] * rule.weights[j] * rule.weights[k] *
               evaluate(num, u, v, w) / evaluate(jac, u, v, w);
      }
  CHECK(std::abs(mine - ref) / std::abs(ref) < 1e-5);
}

TEST_CASE("refinement") {
  const Deg3 spline = {2, 2, 2};
  const Deg3 approx = initial_approx_degrees(spline);
  SUBCASE("degree elevation bumps the degrees") {
    const RefinePlan plan =
        refine_approximation(RefineStrategy::kDegreeElevate, approx, {1, 1, 1}, 0);
    CHECK(plan.approx_degrees == Deg3{4, 4, 4});
    CHECK(plan.subdivision_levels == 0);
  }
  SUBCASE("piecewise refinement keeps exact polynomial integrals") {
    const BezierVolume elem = random_element(spline, 0.1);
    const BernsteinTensor jac = jacobian_from_cofactors(elem);
    const BernsteinTensor num = product(jac, random_tensor(approx, -1.0, 1.0));
    const ReusableApprox sys = build_reusable(approx, spline);
    const double flat = ElementApprox(sys, jac).integrate_numerator(num);
    const RefinePlan plan = refine_approximation(RefineStrategy::kPiecewise, approx, {0, 0, 0}, 1);
    const double pieced = integrate_with_refinement(num, jac, spline, plan);
    CHECK(pieced == doctest::Approx(flat).epsilon(1e-12));
  }
  SUBCASE("refinement reduces the error of a genuinely rational integrand") {
    // Rational integrand of an actual curved element (basis pair numerator).
    const BezierVolume elem = random_element(spline, 0.5);
    const BernsteinTensor jac = jacobian_from_cofactors(elem);
    const GradientTable gt(spline);
    const CofactorSet cof = cofactors(elem);
    const auto ga = gt.gradient(4);
    const auto gb = gt.gradient(13);
    const BernsteinTensor num =
        entry_numerator(cof, {*ga[0], *ga[1], *ga[2]}, {*gb[0], *gb[1], *gb[2]});
    const GaussRule& rule = gauss_rule(16);
    double ref = 0.0;
    for (int k = 0; k < 16; ++k)
      for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 16; ++i) {
          const double u = rule.points[i], v = rule.points[j], w = rule.points[k];
          ref += rule.weights[i] * rule.weights[j] * rule.weights[k] *
                 evaluate(num, u, v, w) / evaluate(jac, u, v, w);
        }
    double prev_err = -1.0;
    for (int level = 0; level < 3; ++level) {
      const RefinePlan plan{approx, level};
      const double val = integrate_with_refinement(num, jac, spline, plan);
      const double err = std::abs(val - ref);
      if (prev_err >= 0.0) CHECK(err <= prev_err + 1e-15);
      prev_err = err;
    }
  }
}

TEST_CASE("adjoint integration is linear in the numerator") {
  const Deg3 spline = {2, 2, 2};
  const ReusableApprox sys = build_reusable(initial_approx_degrees(spline), spline);
  const BezierVolume elem = random_element(spline, 0.1);
  const ElementApprox ea(sys, jacobian_from_cofactors(elem));
  const BernsteinTensor f1 = random_tensor(sys.numer, -1.0, 1.0);
  const BernsteinTensor f2 = random_tensor(sys.numer, -1.0, 1.0);
  BernsteinTensor combo(sys.numer);
  combo.coeffs() = 2.0 * f1.coeffs() - 0.5 * f2.coeffs();
  CHECK(ea.integrate_numerator(combo) ==
        doctest::Approx(2.0 * ea.integrate_numerator(f1) -
                        0.5 * ea.integrate_numerator(f2))
            .epsilon(1e-12));
}
