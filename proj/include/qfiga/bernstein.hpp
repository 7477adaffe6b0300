#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qfiga {

/// Per-direction polynomial degrees of a trivariate tensor.
using Deg3 = std::array<int, 3>;

inline Deg3 operator+(const Deg3& a, const Deg3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline std::string to_string(const Deg3& d) {
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," +
         std::to_string(d[2]) + ")";
}

/// Exact binomial coefficients C(n,k), 0 <= k <= n <= max_n.
///
/// Values are accumulated with the Pascal recurrence in 64-bit integers and
/// stored as doubles. All degree combinations reachable from the solver
/// pipeline stay far below 2^53, so the stored values are exact there.
class BinomialTable {
 public:
  static constexpr int kMaxSupported = 60;

  explicit BinomialTable(int max_n);

  double operator()(int n, int k) const {
    if (n < 0 || k < 0 || k > n || n > max_n_) {
      throw std::domain_error("binomial(" + std::to_string(n) + "," +
                              std::to_string(k) + ") out of range, max_n=" +
                              std::to_string(max_n_));
    }
    return entries_[static_cast<std::size_t>(n) * (n + 1) / 2 + k];
  }

  std::uint64_t exact(int n, int k) const;

  int max_n() const { return max_n_; }

  /// Process-wide table covering every degree the solver can produce.
  static const BinomialTable& shared();

 private:
  int max_n_;
  std::vector<double> entries_;
  std::vector<std::uint64_t> exact_;
};

double binomial(int n, int k);

/// Values of the degree-n Bernstein basis at t (n+1 entries).
Eigen::VectorXd bernstein_basis(int degree, double t);

/// First derivatives of the degree-n Bernstein basis at t.
Eigen::VectorXd bernstein_basis_derivative(int degree, double t);

/// Dense coefficient tensor of a trivariate Bernstein polynomial.
///
/// Coefficients are stored i-fastest: flat index = i + (du+1)*(j + (dv+1)*k).
class BernsteinTensor {
 public:
  BernsteinTensor() : degrees_{0, 0, 0}, coeffs_(Eigen::VectorXd::Zero(1)) {}

  explicit BernsteinTensor(Deg3 degrees)
      : degrees_(degrees),
        coeffs_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(
            (degrees[0] + 1) * (degrees[1] + 1) * (degrees[2] + 1)))) {
    check_degrees(degrees);
  }

  BernsteinTensor(Deg3 degrees, Eigen::VectorXd coeffs)
      : degrees_(degrees), coeffs_(std::move(coeffs)) {
    check_degrees(degrees);
    const Eigen::Index expected =
        (degrees[0] + 1) * (degrees[1] + 1) * (degrees[2] + 1);
    if (coeffs_.size() != expected) {
      throw std::invalid_argument("coefficient count " +
                                  std::to_string(coeffs_.size()) +
                                  " does not match degrees " +
                                  to_string(degrees));
    }
  }

  static BernsteinTensor constant(Deg3 degrees, double value) {
    BernsteinTensor t(degrees);
    t.coeffs_.setConstant(value);
    return t;
  }

  const Deg3& degrees() const { return degrees_; }
  Eigen::Index size() const { return coeffs_.size(); }

  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }

  double at(int i, int j, int k) const { return coeffs_[flat(i, j, k)]; }
  double& at(int i, int j, int k) { return coeffs_[flat(i, j, k)]; }

  Eigen::Index flat(int i, int j, int k) const {
    return i + static_cast<Eigen::Index>(degrees_[0] + 1) *
                   (j + static_cast<Eigen::Index>(degrees_[1] + 1) * k);
  }

 private:
  static void check_degrees(const Deg3& d) {
    if (d[0] < 0 || d[1] < 0 || d[2] < 0) {
      throw std::invalid_argument("negative degree " + to_string(d));
    }
  }

  Deg3 degrees_;
  Eigen::VectorXd coeffs_;
};

/// Value at (u,v,w); each component must lie in [0,1].
double evaluate(const BernsteinTensor& p, double u, double v, double w);

/// Per-direction convolution weights of the Bernstein product rule.
/// wu(i,r) = C(da,r) C(db,i-r) / C(da+db,i), zero outside the valid band.
struct ProductWeights {
  Deg3 deg_a{0, 0, 0};
  Deg3 deg_b{0, 0, 0};
  Eigen::MatrixXd wu, wv, ww;  // (da+db+1) x (da+1) per direction

  static ProductWeights make(const Deg3& deg_a, const Deg3& deg_b);
};

BernsteinTensor product(const BernsteinTensor& p, const BernsteinTensor& q);
BernsteinTensor product(const BernsteinTensor& p, const BernsteinTensor& q,
                        const ProductWeights& weights);

/// Accumulate scale * p*q into out (out must already have the product degrees).
void add_product(BernsteinTensor& out, const BernsteinTensor& p,
                 const BernsteinTensor& q, const ProductWeights& weights,
                 double scale = 1.0);

/// Exact integral over the unit cube.
double integrate(const BernsteinTensor& p);

/// Degree elevation to componentwise larger-or-equal target degrees.
BernsteinTensor elevate(const BernsteinTensor& p, Deg3 target);

/// Partial derivative along direction dir (0,1,2); lowers that degree by one.
BernsteinTensor derivative(const BernsteinTensor& p, int dir);

/// de Casteljau split along one direction at parameter t; returns (left, right)
/// pieces, each reparameterized to [0,1].
std::pair<BernsteinTensor, BernsteinTensor> split(const BernsteinTensor& p,
                                                  int dir, double t);

/// Midpoint split into 2x2x2 sub-boxes, ordered i-fastest by octant.
std::array<BernsteinTensor, 8> subdivide(const BernsteinTensor& p);

/// Contract one tensor mode with a matrix: out[...i'...] = sum_i m(i',i) p[...i...].
BernsteinTensor mode_apply(const BernsteinTensor& p, int dir,
                           const Eigen::MatrixXd& m);

}  // namespace qfiga
