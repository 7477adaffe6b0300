#include "qfiga/polynomial_approx.hpp"

#include <iostream>

namespace qfiga {

double weight_sigma(const Deg3& approx, const Deg3& spline, const Deg3& numer) {
  double s = 1.0;
  for (int d = 0; d < 3; ++d) {
    const int jac = 3 * spline[d] - 1;
    s *= static_cast<double>(2 * approx[d] + jac + 1) /
         static_cast<double>(approx[d] + numer[d] + 1);
  }
  return s;
}

ReusableApprox build_reusable(Deg3 approx, Deg3 spline) {
  for (int d = 0; d < 3; ++d) {
    if (approx[d] < 0) throw std::domain_error("approx degrees must be >= 0");
    if (spline[d] < 1) throw std::domain_error("spline degrees must be >= 1");
  }
  ReusableApprox sys;
  sys.spline = spline;
  sys.approx = approx;
  sys.jac = jacobian_degrees(spline);
  const Deg3 base = numerator_degrees(spline);
  for (int d = 0; d < 3; ++d) {
    sys.numer[d] = std::max(base[d], approx[d] + sys.jac[d]);
  }
  const BinomialTable& bin = BinomialTable::shared();
  for (int d = 0; d < 3; ++d) {
    const int a = approx[d], j = sys.jac[d], f = sys.numer[d];
    if (2 * a + j > bin.max_n() || a + f > bin.max_n()) {
      throw std::runtime_error(
          "build_reusable: degrees exceed the exact binomial table (max n " +
          std::to_string(bin.max_n()) + ")");
    }
    sys.lfac[d].resize(a + 1, a + j + 1);
    for (int i = 0; i <= a; ++i)
      for (int x = 0; x <= a + j; ++x)
        sys.lfac[d](i, x) = 1.0 / bin(2 * a + j, x + i);
    sys.qfac[d].resize(a + 1, f + 1);
    for (int i = 0; i <= a; ++i)
      for (int p = 0; p <= f; ++p)
        sys.qfac[d](i, p) = bin(f, p) / bin(a + f, p + i);
  }
  sys.sigma = weight_sigma(approx, spline, sys.numer);
  return sys;
}

namespace {

// Assemble a dense Kronecker-structured matrix with i-fastest flattening.
Eigen::MatrixXd kron3(const std::array<Eigen::MatrixXd, 3>& f) {
  const Eigen::Index ru = f[0].rows(), rv = f[1].rows(), rw = f[2].rows();
  const Eigen::Index cu = f[0].cols(), cv = f[1].cols(), cw = f[2].cols();
  Eigen::MatrixXd out(ru * rv * rw, cu * cv * cw);
  for (Eigen::Index kw = 0; kw < rw; ++kw)
    for (Eigen::Index kv = 0; kv < rv; ++kv)
      for (Eigen::Index ku = 0; ku < ru; ++ku) {
        const Eigen::Index row = ku + ru * (kv + rv * kw);
        for (Eigen::Index lw = 0; lw < cw; ++lw)
          for (Eigen::Index lv = 0; lv < cv; ++lv)
            for (Eigen::Index lu = 0; lu < cu; ++lu) {
              out(row, lu + cu * (lv + cv * lw)) =
                  f[0](ku, lu) * f[1](kv, lv) * f[2](kw, lw);
            }
      }
  return out;
}

}  // namespace

Eigen::MatrixXd ReusableApprox::dense_l() const { return kron3(lfac); }
Eigen::MatrixXd ReusableApprox::dense_q() const { return kron3(qfac); }

Eigen::MatrixXd build_E(const BernsteinTensor& jacobian,
                        const ReusableApprox& sys) {
  if (jacobian.degrees() != sys.jac) {
    throw std::invalid_argument("build_E: jacobian degrees " +
                                to_string(jacobian.degrees()) + " != " +
                                to_string(sys.jac));
  }
  const BinomialTable& bin = BinomialTable::shared();
  const Deg3& a = sys.approx;
  const Deg3& j = sys.jac;
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(sys.h_dim(), sys.g_dim());
  const int hu = a[0] + j[0] + 1, hv = a[1] + j[1] + 1;
  const int gu = a[0] + 1, gv = a[1] + 1;
  for (int zc = 0; zc <= a[2] + j[2]; ++zc)
    for (int yb = 0; yb <= a[1] + j[1]; ++yb)
      for (int xa = 0; xa <= a[0] + j[0]; ++xa) {
        const Eigen::Index row = xa + hu * (yb + static_cast<Eigen::Index>(hv) * zc);
        for (int fz = std::max(0, zc - j[2]); fz <= std::min(zc, a[2]); ++fz)
          for (int fy = std::max(0, yb - j[1]); fy <= std::min(yb, a[1]); ++fy)
            for (int fx = std::max(0, xa - j[0]); fx <= std::min(xa, a[0]); ++fx) {
              const Eigen::Index col =
                  fx + gu * (fy + static_cast<Eigen::Index>(gv) * fz);
              e(row, col) = bin(j[0], xa - fx) * bin(a[0], fx) *
                            bin(j[1], yb - fy) * bin(a[1], fy) *
                            bin(j[2], zc - fz) * bin(a[2], fz) *
                            jacobian.at(xa - fx, yb - fy, zc - fz);
            }
      }
  return e;
}

ElementApprox::ElementApprox(const ReusableApprox& sys,
                             const BernsteinTensor& jacobian, std::string label)
    : sys_(&sys), jacobian_(jacobian), label_(std::move(label)) {
  if (jacobian.degrees() != sys.jac) {
    throw std::invalid_argument("ElementApprox: jacobian degrees " +
                                to_string(jacobian.degrees()) + " != " +
                                to_string(sys.jac));
  }
  const BinomialTable& bin = BinomialTable::shared();
  const Deg3& a = sys.approx;
  const Deg3& j = sys.jac;
  // A(I,D) = prod_d C(a_d, D_d) * T[D+I] with
  // T[Y] = sum_r J[r] prod_d C(j_d, r_d) / C(2a_d + j_d, r_d + Y_d).
  BernsteinTensor jt = jacobian;
  for (int kz = 0; kz <= j[2]; ++kz)
    for (int ky = 0; ky <= j[1]; ++ky)
      for (int kx = 0; kx <= j[0]; ++kx)
        jt.at(kx, ky, kz) *= bin(j[0], kx) * bin(j[1], ky) * bin(j[2], kz);
  for (int d = 0; d < 3; ++d) {
    Eigen::MatrixXd kern(2 * a[d] + 1, j[d] + 1);
    for (int y = 0; y <= 2 * a[d]; ++y)
      for (int r = 0; r <= j[d]; ++r) kern(y, r) = 1.0 / bin(2 * a[d] + j[d], r + y);
    jt = mode_apply(jt, d, kern);
  }
  const int gu = a[0] + 1, gv = a[1] + 1, gw = a[2] + 1;
  a_.resize(sys.g_dim(), sys.g_dim());
  for (int iw = 0; iw < gw; ++iw)
    for (int iv = 0; iv < gv; ++iv)
      for (int iu = 0; iu < gu; ++iu) {
        const Eigen::Index row = iu + gu * (iv + static_cast<Eigen::Index>(gv) * iw);
        for (int dw = 0; dw < gw; ++dw)
          for (int dv = 0; dv < gv; ++dv)
            for (int du = 0; du < gu; ++du) {
              const Eigen::Index col =
                  du + gu * (dv + static_cast<Eigen::Index>(gv) * dw);
              a_(row, col) = bin(a[0], du) * bin(a[1], dv) * bin(a[2], dw) *
                             jt.at(du + iu, dv + iv, dw + iw);
            }
      }
  // The raw matrix carries binomial factors spanning several orders of
  // magnitude; equilibrate before factoring.
  row_scale_ = a_.cwiseAbs().rowwise().maxCoeff().cwiseMax(1e-300).cwiseInverse();
  Eigen::MatrixXd scaled = row_scale_.asDiagonal() * a_;
  col_scale_ = scaled.cwiseAbs().colwise().maxCoeff().transpose().cwiseMax(1e-300).cwiseInverse();
  scaled = scaled * col_scale_.asDiagonal();
  lu_.compute(scaled);
  rcond_ = lu_.rcond();
  if (!(rcond_ > 1e-12)) {
    std::cerr << "[qfiga] warning: ill-conditioned approximation system"
              << (label_.empty() ? "" : " on element " + label_)
              << " (rcond " << rcond_ << ")\n";
  }
  // Adjoint weights: integral of G = c^T G with c = 1/prod(a_d+1), so
  // q = Q^T A^{-T} c gives integral = sigma * q . F.
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(
      sys.g_dim(), 1.0 / (static_cast<double>(gu) * gv * gw));
  BernsteinTensor zt(sys.approx, solve_system_transposed(c));
  for (int d = 0; d < 3; ++d) {
    zt = mode_apply(zt, d, sys.qfac[d].transpose());
  }
  adjoint_ = zt.coeffs();
}

namespace {

// Residual b - A x (or b - A^T x) accumulated in extended precision, so
// iterative refinement reaches the forward accuracy the contracts require.
Eigen::VectorXd residual_ext(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& b, bool transposed) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    long double acc = b[i];
    if (transposed) {
      for (Eigen::Index j = 0; j < n; ++j)
        acc -= static_cast<long double>(a(j, i)) * x[j];
    } else {
      for (Eigen::Index j = 0; j < n; ++j)
        acc -= static_cast<long double>(a(i, j)) * x[j];
    }
    r[i] = static_cast<double>(acc);
  }
  return r;
}

}  // namespace

Eigen::VectorXd ElementApprox::solve_system(const Eigen::VectorXd& b) const {
  // A = R^{-1} As C^{-1}; refine against the unscaled matrix.
  Eigen::VectorXd x = col_scale_.asDiagonal() *
                      lu_.solve((row_scale_.asDiagonal() * b).eval());
  for (int step = 0; step < 2; ++step) {
    const Eigen::VectorXd res =
        row_scale_.asDiagonal() * residual_ext(a_, x, b, false);
    x += col_scale_.asDiagonal() * lu_.solve(res);
  }
  return x;
}

Eigen::VectorXd ElementApprox::solve_system_transposed(const Eigen::VectorXd& b) const {
  // A^T z = b  <=>  As^T (R^{-1} z) = C b.
  const Eigen::VectorXd b1 = col_scale_.asDiagonal() * b;
  Eigen::VectorXd y = lu_.transpose().solve(b1);
  Eigen::VectorXd z = row_scale_.asDiagonal() * y;
  for (int step = 0; step < 2; ++step) {
    const Eigen::VectorXd res =
        col_scale_.asDiagonal() * residual_ext(a_, z, b, true);
    const Eigen::VectorXd dy = lu_.transpose().solve(res);
    z += row_scale_.asDiagonal() * dy;
  }
  return z;
}

namespace {

BernsteinTensor prepare_numerator(const BernsteinTensor& numerator,
                                  const ReusableApprox& sys) {
  if (numerator.degrees() == sys.numer) return numerator;
  for (int d = 0; d < 3; ++d) {
    if (numerator.degrees()[d] > sys.numer[d]) {
      throw std::invalid_argument("numerator degrees " +
                                  to_string(numerator.degrees()) +
                                  " exceed the system's " + to_string(sys.numer));
    }
  }
  return elevate(numerator, sys.numer);
}

}  // namespace

Approximant ElementApprox::approximate(const BernsteinTensor& numerator) const {
  const ReusableApprox& sys = *sys_;
  const BernsteinTensor f = prepare_numerator(numerator, sys);
  // sigma * Q * F accumulated in extended precision; the system's conditioning
  // amplifies right-hand-side rounding into the solution otherwise.
  const Deg3& ad = sys.approx;
  const Deg3& nd = sys.numer;
  Eigen::VectorXd b(sys.g_dim());
  for (int iw = 0; iw <= ad[2]; ++iw)
    for (int iv = 0; iv <= ad[1]; ++iv)
      for (int iu = 0; iu <= ad[0]; ++iu) {
        long double acc = 0.0L;
        for (int pw = 0; pw <= nd[2]; ++pw) {
          const long double qw = sys.qfac[2](iw, pw);
          for (int pv = 0; pv <= nd[1]; ++pv) {
            const long double qvw = qw * sys.qfac[1](iv, pv);
            for (int pu = 0; pu <= nd[0]; ++pu) {
              acc += qvw * sys.qfac[0](iu, pu) *
                     static_cast<long double>(f.at(pu, pv, pw));
            }
          }
        }
        b[iu + (ad[0] + 1) * (iv + (ad[1] + 1) * iw)] =
            static_cast<double>(acc * sys.sigma);
      }
  const Eigen::VectorXd g = solve_system(b);
  Approximant out{BernsteinTensor(sys.approx, g), 0.0};
  // Sampled relative deviation |F - G| / max|F| on a shifted 7^3 grid.
  double max_f = 0.0, max_dev = 0.0;
  for (int k = 0; k < 7; ++k)
    for (int j = 0; j < 7; ++j)
      for (int i = 0; i < 7; ++i) {
        const double u = (i + 0.5) / 7.0, v = (j + 0.5) / 7.0, w = (k + 0.5) / 7.0;
        const double jac = evaluate(jacobian_, u, v, w);
        if (jac == 0.0) continue;
        const double fv = evaluate(f, u, v, w) / jac;
        const double gv = evaluate(out.g, u, v, w);
        max_f = std::max(max_f, std::abs(fv));
        max_dev = std::max(max_dev, std::abs(fv - gv));
      }
  out.residual_estimate = max_f > 0.0 ? max_dev / max_f : max_dev;
  return out;
}

double ElementApprox::integrate_numerator(const BernsteinTensor& numerator) const {
  const BernsteinTensor f = prepare_numerator(numerator, *sys_);
  return sys_->sigma * adjoint_.dot(f.coeffs());
}

Approximant approximate(const BernsteinTensor& numerator,
                        const BernsteinTensor& jacobian,
                        const ReusableApprox& sys) {
  return ElementApprox(sys, jacobian).approximate(numerator);
}

double integrate_entry(const Approximant& a) { return integrate(a.g); }

RefinePlan refine_approximation(RefineStrategy strategy, Deg3 current_approx,
                                Deg3 degree_increment, int levels) {
  RefinePlan plan;
  plan.approx_degrees = current_approx;
  switch (strategy) {
    case RefineStrategy::kPiecewise:
      plan.subdivision_levels = levels;
      break;
    case RefineStrategy::kDegreeElevate:
      plan.approx_degrees = current_approx + degree_increment;
      break;
    case RefineStrategy::kCombined:
      plan.approx_degrees = current_approx + degree_increment;
      plan.subdivision_levels = levels;
      break;
  }
  return plan;
}

namespace {

double integrate_recursive(const BernsteinTensor& numerator,
                           const BernsteinTensor& jacobian,
                           const ReusableApprox& sys, int levels) {
  if (levels == 0) {
    return ElementApprox(sys, jacobian).integrate_numerator(numerator);
  }
  const std::array<BernsteinTensor, 8> nums = subdivide(numerator);
  const std::array<BernsteinTensor, 8> jacs = subdivide(jacobian);
  double total = 0.0;
  for (int s = 0; s < 8; ++s) {
    total += integrate_recursive(nums[s], jacs[s], sys, levels - 1);
  }
  return total / 8.0;
}

}  // namespace

double integrate_with_refinement(const BernsteinTensor& numerator,
                                 const BernsteinTensor& jacobian,
                                 const Deg3& spline, const RefinePlan& plan) {
  const ReusableApprox sys = build_reusable(plan.approx_degrees, spline);
  return integrate_recursive(numerator, jacobian, sys, plan.subdivision_levels);
}

}  // namespace qfiga
