#include "qfiga/bernstein.hpp"

#include <cmath>

namespace qfiga {

BinomialTable::BinomialTable(int max_n) : max_n_(max_n) {
  if (max_n < 0 || max_n > kMaxSupported) {
    throw std::domain_error("BinomialTable max_n=" + std::to_string(max_n) +
                            " outside [0," + std::to_string(kMaxSupported) +
                            "]");
  }
  const std::size_t count = static_cast<std::size_t>(max_n + 1) * (max_n + 2) / 2;
  exact_.assign(count, 0);
  entries_.assign(count, 0.0);
  auto idx = [](int n, int k) {
    return static_cast<std::size_t>(n) * (n + 1) / 2 + k;
  };
  for (int n = 0; n <= max_n; ++n) {
    exact_[idx(n, 0)] = 1;
    exact_[idx(n, n)] = 1;
    for (int k = 1; k < n; ++k) {
      exact_[idx(n, k)] = exact_[idx(n - 1, k - 1)] + exact_[idx(n - 1, k)];
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    entries_[i] = static_cast<double>(exact_[i]);
  }
}

std::uint64_t BinomialTable::exact(int n, int k) const {
  if (n < 0 || k < 0 || k > n || n > max_n_) {
    throw std::domain_error("binomial(" + std::to_string(n) + "," +
                            std::to_string(k) + ") out of range, max_n=" +
                            std::to_string(max_n_));
  }
  return exact_[static_cast<std::size_t>(n) * (n + 1) / 2 + k];
}

const BinomialTable& BinomialTable::shared() {
  static const BinomialTable table(kMaxSupported);
  return table;
}

double binomial(int n, int k) { return BinomialTable::shared()(n, k); }

Eigen::VectorXd bernstein_basis(int degree, double t) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(degree + 1);
  b[0] = 1.0;
  const double s = 1.0 - t;
  for (int j = 1; j <= degree; ++j) {
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = b[r];
      b[r] = saved + s * tmp;
      saved = t * tmp;
    }
    b[j] = saved;
  }
  return b;
}

Eigen::VectorXd bernstein_basis_derivative(int degree, double t) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(degree + 1);
  if (degree == 0) return d;
  const Eigen::VectorXd lower = bernstein_basis(degree - 1, t);
  for (int i = 0; i <= degree; ++i) {
    const double left = (i >= 1) ? lower[i - 1] : 0.0;
    const double right = (i <= degree - 1) ? lower[i] : 0.0;
    d[i] = degree * (left - right);
  }
  return d;
}

double evaluate(const BernsteinTensor& p, double u, double v, double w) {
  const double coords[3] = {u, v, w};
  for (int d = 0; d < 3; ++d) {
    if (!(coords[d] >= 0.0 && coords[d] <= 1.0)) {
      throw std::domain_error("evaluate: parameter " + std::to_string(coords[d]) +
                              " outside [0,1]");
    }
  }
  const Deg3& deg = p.degrees();
  const Eigen::VectorXd bu = bernstein_basis(deg[0], u);
  const Eigen::VectorXd bv = bernstein_basis(deg[1], v);
  const Eigen::VectorXd bw = bernstein_basis(deg[2], w);
  double value = 0.0;
  for (int k = 0; k <= deg[2]; ++k) {
    double slab = 0.0;
    for (int j = 0; j <= deg[1]; ++j) {
      double row = 0.0;
      for (int i = 0; i <= deg[0]; ++i) row += p.at(i, j, k) * bu[i];
      slab += row * bv[j];
    }
    value += slab * bw[k];
  }
  return value;
}

ProductWeights ProductWeights::make(const Deg3& deg_a, const Deg3& deg_b) {
  const BinomialTable& bin = BinomialTable::shared();
  ProductWeights pw;
  pw.deg_a = deg_a;
  pw.deg_b = deg_b;
  Eigen::MatrixXd* mats[3] = {&pw.wu, &pw.wv, &pw.ww};
  for (int d = 0; d < 3; ++d) {
    const int da = deg_a[d], db = deg_b[d];
    Eigen::MatrixXd& m = *mats[d];
    m = Eigen::MatrixXd::Zero(da + db + 1, da + 1);
    for (int i = 0; i <= da + db; ++i) {
      const double denom = bin(da + db, i);
      for (int r = std::max(0, i - db); r <= std::min(i, da); ++r) {
        m(i, r) = bin(da, r) * bin(db, i - r) / denom;
      }
    }
  }
  return pw;
}

void add_product(BernsteinTensor& out, const BernsteinTensor& p,
                 const BernsteinTensor& q, const ProductWeights& weights,
                 double scale) {
  const Deg3& da = p.degrees();
  const Deg3& db = q.degrees();
  if (da != weights.deg_a || db != weights.deg_b) {
    throw std::invalid_argument("add_product: weight table built for " +
                                to_string(weights.deg_a) + "x" +
                                to_string(weights.deg_b) + ", got " +
                                to_string(da) + "x" + to_string(db));
  }
  const Deg3 dc = da + db;
  if (out.degrees() != dc) {
    throw std::invalid_argument("add_product: output degrees " +
                                to_string(out.degrees()) + " != " +
                                to_string(dc));
  }
  for (int k = 0; k <= dc[2]; ++k) {
    const int t_lo = std::max(0, k - db[2]);
    const int t_hi = std::min(k, da[2]);
    for (int j = 0; j <= dc[1]; ++j) {
      const int s_lo = std::max(0, j - db[1]);
      const int s_hi = std::min(j, da[1]);
      for (int i = 0; i <= dc[0]; ++i) {
        const int r_lo = std::max(0, i - db[0]);
        const int r_hi = std::min(i, da[0]);
        double acc = 0.0;
        for (int t = t_lo; t <= t_hi; ++t) {
          const double wt = weights.ww(k, t);
          for (int s = s_lo; s <= s_hi; ++s) {
            const double wst = wt * weights.wv(j, s);
            for (int r = r_lo; r <= r_hi; ++r) {
              acc += wst * weights.wu(i, r) * p.at(r, s, t) *
                     q.at(i - r, j - s, k - t);
            }
          }
        }
        out.at(i, j, k) += scale * acc;
      }
    }
  }
}

BernsteinTensor product(const BernsteinTensor& p, const BernsteinTensor& q,
                        const ProductWeights& weights) {
  BernsteinTensor out(p.degrees() + q.degrees());
  add_product(out, p, q, weights, 1.0);
  return out;
}

BernsteinTensor product(const BernsteinTensor& p, const BernsteinTensor& q) {
  // Canonical operand order makes the accumulation order, and therefore the
  // result, identical under argument swap.
  auto precedes = [](const BernsteinTensor& a, const BernsteinTensor& b) {
    if (a.degrees() != b.degrees()) return a.degrees() < b.degrees();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a.coeffs()[i] != b.coeffs()[i]) return a.coeffs()[i] < b.coeffs()[i];
    }
    return true;
  };
  const BernsteinTensor& first = precedes(p, q) ? p : q;
  const BernsteinTensor& second = precedes(p, q) ? q : p;
  return product(first, second,
                 ProductWeights::make(first.degrees(), second.degrees()));
}

double integrate(const BernsteinTensor& p) {
  const Deg3& d = p.degrees();
  return p.coeffs().sum() /
         (static_cast<double>(d[0] + 1) * (d[1] + 1) * (d[2] + 1));
}

namespace {

// Elevation of one direction by r steps: new_i = sum_j C(d,j) C(r,i-j) / C(d+r,i) c_j.
Eigen::MatrixXd elevation_matrix(int degree, int raise) {
  const BinomialTable& bin = BinomialTable::shared();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(degree + raise + 1, degree + 1);
  for (int i = 0; i <= degree + raise; ++i) {
    const double denom = bin(degree + raise, i);
    for (int j = std::max(0, i - raise); j <= std::min(i, degree); ++j) {
      m(i, j) = bin(degree, j) * bin(raise, i - j) / denom;
    }
  }
  return m;
}

// Apply a per-direction matrix to the coefficient tensor along direction dir.
BernsteinTensor apply_direction(const BernsteinTensor& p, int dir,
                                const Eigen::MatrixXd& m) {
  const Deg3& d = p.degrees();
  Deg3 nd = d;
  nd[dir] = static_cast<int>(m.rows()) - 1;
  BernsteinTensor out(nd);
  const int nu = d[0] + 1, nv = d[1] + 1, nw = d[2] + 1;
  if (dir == 0) {
    for (int k = 0; k < nw; ++k)
      for (int j = 0; j < nv; ++j)
        for (int i2 = 0; i2 < m.rows(); ++i2) {
          double acc = 0.0;
          for (int i = 0; i < nu; ++i) acc += m(i2, i) * p.at(i, j, k);
          out.at(i2, j, k) = acc;
        }
  } else if (dir == 1) {
    for (int k = 0; k < nw; ++k)
      for (int j2 = 0; j2 < m.rows(); ++j2)
        for (int i = 0; i < nu; ++i) {
          double acc = 0.0;
          for (int j = 0; j < nv; ++j) acc += m(j2, j) * p.at(i, j, k);
          out.at(i, j2, k) = acc;
        }
  } else {
    for (int k2 = 0; k2 < m.rows(); ++k2)
      for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
          double acc = 0.0;
          for (int k = 0; k < nw; ++k) acc += m(k2, k) * p.at(i, j, k);
          out.at(i, j, k2) = acc;
        }
  }
  return out;
}

}  // namespace

BernsteinTensor mode_apply(const BernsteinTensor& p, int dir,
                           const Eigen::MatrixXd& m) {
  if (dir < 0 || dir > 2) throw std::domain_error("mode_apply: dir must be 0..2");
  if (m.cols() != p.degrees()[dir] + 1) {
    throw std::invalid_argument("mode_apply: matrix has " +
                                std::to_string(m.cols()) + " columns, mode has " +
                                std::to_string(p.degrees()[dir] + 1));
  }
  return apply_direction(p, dir, m);
}

BernsteinTensor elevate(const BernsteinTensor& p, Deg3 target) {
  const Deg3& d = p.degrees();
  for (int dir = 0; dir < 3; ++dir) {
    if (target[dir] < d[dir]) {
      throw std::domain_error("elevate: target " + to_string(target) +
                              " below current degrees " + to_string(d));
    }
  }
  BernsteinTensor out = p;
  for (int dir = 0; dir < 3; ++dir) {
    const int raise = target[dir] - out.degrees()[dir];
    if (raise == 0) continue;
    out = apply_direction(out, dir, elevation_matrix(out.degrees()[dir], raise));
  }
  return out;
}

BernsteinTensor derivative(const BernsteinTensor& p, int dir) {
  const Deg3& d = p.degrees();
  if (d[dir] == 0) {
    Deg3 nd = d;
    return BernsteinTensor(nd, Eigen::VectorXd::Zero(p.size()));
  }
  const int n = d[dir];
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n + 1);
  for (int i = 0; i < n; ++i) {
    m(i, i) = -n;
    m(i, i + 1) = n;
  }
  return apply_direction(p, dir, m);
}

std::pair<BernsteinTensor, BernsteinTensor> split(const BernsteinTensor& p,
                                                  int dir, double t) {
  const int n = p.degrees()[dir];
  // de Casteljau: left takes the triangle's leading diagonal, right the trailing.
  Eigen::MatrixXd left = Eigen::MatrixXd::Zero(n + 1, n + 1);
  Eigen::MatrixXd right = Eigen::MatrixXd::Zero(n + 1, n + 1);
  std::vector<Eigen::VectorXd> rows;
  rows.emplace_back(Eigen::VectorXd::Zero(n + 1));
  // Build the de Casteljau coefficient pyramid acting on unit coefficients.
  // Row matrices: stage s maps original coeffs to the stage-s points.
  Eigen::MatrixXd stage = Eigen::MatrixXd::Identity(n + 1, n + 1);
  left.row(0) = stage.row(0);
  right.row(n) = stage.row(n);
  for (int s = 1; s <= n; ++s) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(n + 1 - s, n + 1);
    for (int i = 0; i <= n - s; ++i) {
      next.row(i) = (1.0 - t) * stage.row(i) + t * stage.row(i + 1);
    }
    stage = next;
    left.row(s) = stage.row(0);
    right.row(n - s) = stage.row(stage.rows() - 1);
  }
  return {apply_direction(p, dir, left), apply_direction(p, dir, right)};
}

std::array<BernsteinTensor, 8> subdivide(const BernsteinTensor& p) {
  auto [u0, u1] = split(p, 0, 0.5);
  std::array<BernsteinTensor, 8> out{};
  const BernsteinTensor* us[2] = {&u0, &u1};
  for (int i = 0; i < 2; ++i) {
    auto [v0, v1] = split(*us[i], 1, 0.5);
    const BernsteinTensor* vs[2] = {&v0, &v1};
    for (int j = 0; j < 2; ++j) {
      auto [w0, w1] = split(*vs[j], 2, 0.5);
      out[i + 2 * (j + 2 * 0)] = w0;
      out[i + 2 * (j + 2 * 1)] = w1;
    }
  }
  return out;
}

}  // namespace qfiga
