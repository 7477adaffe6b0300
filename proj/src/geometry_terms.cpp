#include "qfiga/geometry_terms.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace qfiga {

PartialTensors geometry_partials(const BezierVolume& b) {
  const Deg3& d = b.degrees;
  PartialTensors out;
  for (int dir = 0; dir < 3; ++dir) {
    Deg3 deg = d;
    deg[dir] -= 1;
    for (int c = 0; c < 3; ++c) out[dir][c] = BernsteinTensor(deg);
  }
  for (int k = 0; k <= d[2]; ++k) {
    for (int j = 0; j <= d[1]; ++j) {
      for (int i = 0; i <= d[0]; ++i) {
        const Eigen::Vector3d p = b.point(i, j, k);
        if (i < d[0]) {
          const Eigen::Vector3d diff = d[0] * (b.point(i + 1, j, k) - p);
          for (int c = 0; c < 3; ++c) out[0][c].at(i, j, k) = diff[c];
        }
        if (j < d[1]) {
          const Eigen::Vector3d diff = d[1] * (b.point(i, j + 1, k) - p);
          for (int c = 0; c < 3; ++c) out[1][c].at(i, j, k) = diff[c];
        }
        if (k < d[2]) {
          const Eigen::Vector3d diff = d[2] * (b.point(i, j, k + 1) - p);
          for (int c = 0; c < 3; ++c) out[2][c].at(i, j, k) = diff[c];
        }
      }
    }
  }
  return out;
}

CofactorSet cofactors(const BezierVolume& b) {
  const PartialTensors partial = geometry_partials(b);
  CofactorSet cof;
  for (int p = 0; p < 3; ++p) {
    const int p1 = (p + 1) % 3, p2 = (p + 2) % 3;
    for (int q = 0; q < 3; ++q) {
      const int q1 = (q + 1) % 3, q2 = (q + 2) % 3;
      // adj[p][q] = d x_{q1}/d u_{p1} * d x_{q2}/d u_{p2}
      //           - d x_{q1}/d u_{p2} * d x_{q2}/d u_{p1}
      // (cyclic index choice absorbs the (-1)^{p+q} sign).
      const ProductWeights w12 =
          ProductWeights::make(partial[p1][q1].degrees(), partial[p2][q2].degrees());
      const ProductWeights w21 =
          ProductWeights::make(partial[p2][q1].degrees(), partial[p1][q2].degrees());
      BernsteinTensor acc(partial[p1][q1].degrees() + partial[p2][q2].degrees());
      add_product(acc, partial[p1][q1], partial[p2][q2], w12, 1.0);
      add_product(acc, partial[p2][q1], partial[p1][q2], w21, -1.0);
      cof.entry[p][q] = std::move(acc);
    }
  }
  return cof;
}

BernsteinTensor jacobian_from_cofactors(const PartialTensors& partials,
                                        const CofactorSet& cof) {
  // Laplace expansion along the first parameter direction.
  BernsteinTensor jac(partials[0][0].degrees() + cof.entry[0][0].degrees());
  for (int q = 0; q < 3; ++q) {
    const ProductWeights w =
        ProductWeights::make(partials[0][q].degrees(), cof.entry[0][q].degrees());
    add_product(jac, partials[0][q], cof.entry[0][q], w, 1.0);
  }
  return jac;
}

BernsteinTensor jacobian_from_cofactors(const BezierVolume& b) {
  return jacobian_from_cofactors(geometry_partials(b), cofactors(b));
}

DCoefficientTable::DCoefficientTable(Deg3 degrees) : degrees_(degrees) {
  for (int d = 0; d < 3; ++d) {
    if (degrees[d] < 1) {
      throw std::domain_error("DCoefficientTable: degrees must be >= 1");
    }
  }
  const BinomialTable& bin = BinomialTable::shared();
  for (int d = 0; d < 3; ++d) {
    const int p = degrees[d];
    Direction& dir = dirs_[d];
    const int total_max = 3 * p - 1;
    dir.triples.resize(total_max + 1);
    dir.weights.resize(total_max + 1);
    // Slot d of the determinant row structure is the derivative slot: it has
    // range [0, p-1]; the other two slots have range [0, p].
    std::array<int, 3> hi = {p, p, p};
    hi[d] = p - 1;
    std::array<int, 3> deg_of_slot = {p, p, p};
    deg_of_slot[d] = p - 1;
    for (int a = 0; a <= hi[0]; ++a) {
      for (int bidx = 0; bidx <= hi[1]; ++bidx) {
        for (int c = 0; c <= hi[2]; ++c) {
          const int total = a + bidx + c;
          dir.triples[total].push_back({a, bidx, c});
          dir.weights[total].push_back(bin(deg_of_slot[0], a) *
                                       bin(deg_of_slot[1], bidx) *
                                       bin(deg_of_slot[2], c));
        }
      }
    }
  }
}

double DCoefficientTable::normalization(int i, int j, int k) const {
  const BinomialTable& bin = BinomialTable::shared();
  const double lmn = static_cast<double>(degrees_[0]) * degrees_[1] * degrees_[2];
  return lmn / (bin(3 * degrees_[0] - 1, i) * bin(3 * degrees_[1] - 1, j) *
                bin(3 * degrees_[2] - 1, k));
}

std::size_t DCoefficientTable::weight_count() const {
  std::size_t n = 0;
  for (const auto& dir : dirs_) {
    for (const auto& w : dir.weights) n += w.size();
  }
  return n;
}

JacobianExpansion jacobian_expansion(const BezierVolume& b,
                                     const DCoefficientTable& table) {
  if (table.spline_degrees() != b.degrees) {
    throw std::invalid_argument("jacobian_expansion: table degrees " +
                                to_string(table.spline_degrees()) +
                                " do not match volume degrees " +
                                to_string(b.degrees));
  }
  const Deg3 jd = jacobian_degrees(b.degrees);
  JacobianExpansion out{BernsteinTensor(jd)};
  const auto& du = table.direction(0);
  const auto& dv = table.direction(1);
  const auto& dw = table.direction(2);
  for (int k = 0; k <= jd[2]; ++k) {
    for (int j = 0; j <= jd[1]; ++j) {
      for (int i = 0; i <= jd[0]; ++i) {
        double acc = 0.0;
        const auto& ti = du.triples[i];
        const auto& wi = du.weights[i];
        const auto& tj = dv.triples[j];
        const auto& wj = dv.weights[j];
        const auto& tk = dw.triples[k];
        const auto& wk = dw.weights[k];
        for (std::size_t a = 0; a < ti.size(); ++a) {
          for (std::size_t bb = 0; bb < tj.size(); ++bb) {
            for (std::size_t c = 0; c < tk.size(); ++c) {
              // Row r of the determinant differences the control net along
              // direction r at the (slot-r) indices of the three totals.
              Eigen::Matrix3d m;
              const std::array<int, 3> iu = ti[a];
              const std::array<int, 3> iv = tj[bb];
              const std::array<int, 3> iw = tk[c];
              for (int row = 0; row < 3; ++row) {
                const int pi = iu[row], pj = iv[row], pk = iw[row];
                Eigen::Vector3d diff;
                if (row == 0)
                  diff = b.point(pi + 1, pj, pk) - b.point(pi, pj, pk);
                else if (row == 1)
                  diff = b.point(pi, pj + 1, pk) - b.point(pi, pj, pk);
                else
                  diff = b.point(pi, pj, pk + 1) - b.point(pi, pj, pk);
                m.row(row) = diff;
              }
              acc += wi[a] * wj[bb] * wk[c] * m.determinant();
            }
          }
        }
        out.tensor.at(i, j, k) = acc * table.normalization(i, j, k);
      }
    }
  }
  return out;
}

GradientTable::GradientTable(Deg3 degrees) : degrees_(degrees) {
  const int n = num_local();
  for (int dir = 0; dir < 3; ++dir) {
    Deg3 gd = degrees;
    gd[dir] -= 1;
    grad_[dir].reserve(n);
    for (int local = 0; local < n; ++local) grad_[dir].emplace_back(gd);
  }
  const int nu = degrees[0] + 1, nv = degrees[1] + 1;
  for (int k = 0; k <= degrees[2]; ++k) {
    for (int j = 0; j <= degrees[1]; ++j) {
      for (int i = 0; i <= degrees[0]; ++i) {
        const int local = i + nu * (j + nv * k);
        // d/du B_i^l = l (B_{i-1}^{l-1} - B_i^{l-1})
        BernsteinTensor& gu = grad_[0][local];
        if (i - 1 >= 0 && i - 1 <= degrees[0] - 1) gu.at(i - 1, j, k) += degrees[0];
        if (i <= degrees[0] - 1) gu.at(i, j, k) -= degrees[0];
        BernsteinTensor& gv = grad_[1][local];
        if (j - 1 >= 0 && j - 1 <= degrees[1] - 1) gv.at(i, j - 1, k) += degrees[1];
        if (j <= degrees[1] - 1) gv.at(i, j, k) -= degrees[1];
        BernsteinTensor& gw = grad_[2][local];
        if (k - 1 >= 0 && k - 1 <= degrees[2] - 1) gw.at(i, j, k - 1) += degrees[2];
        if (k <= degrees[2] - 1) gw.at(i, j, k) -= degrees[2];
      }
    }
  }
}

MetricNumerators metric_numerators(const CofactorSet& cof) {
  MetricNumerators out;
  for (int p = 0; p < 3; ++p) {
    for (int q = p; q < 3; ++q) {
      BernsteinTensor acc(cof.entry[p][0].degrees() + cof.entry[q][0].degrees());
      for (int c = 0; c < 3; ++c) {
        const ProductWeights w =
            ProductWeights::make(cof.entry[p][c].degrees(), cof.entry[q][c].degrees());
        add_product(acc, cof.entry[p][c], cof.entry[q][c], w, 1.0);
      }
      out.m[p][q] = acc;
      if (q != p) out.m[q][p] = std::move(acc);
    }
  }
  return out;
}

BernsteinTensor entry_numerator(const MetricNumerators& metric,
                                const std::array<BernsteinTensor, 3>& grad_rst,
                                const std::array<BernsteinTensor, 3>& grad_ijk) {
  Deg3 spline = grad_rst[0].degrees();
  spline[0] += 1;  // gradient in u lowered the u-degree
  const Deg3 target = numerator_degrees(spline);
  BernsteinTensor out(target);
  for (int p = 0; p < 3; ++p) {
    for (int q = p; q < 3; ++q) {
      // Symmetrized gradient pair keeps the numerator symmetric in (rst, ijk).
      const Deg3 pair_deg = grad_rst[p].degrees() + grad_ijk[q].degrees();
      BernsteinTensor pair(pair_deg);
      const ProductWeights wpq =
          ProductWeights::make(grad_rst[p].degrees(), grad_ijk[q].degrees());
      add_product(pair, grad_rst[p], grad_ijk[q], wpq, 1.0);
      if (q != p) {
        const ProductWeights wqp =
            ProductWeights::make(grad_rst[q].degrees(), grad_ijk[p].degrees());
        if (grad_rst[q].degrees() + grad_ijk[p].degrees() != pair_deg) {
          throw std::logic_error("entry_numerator: mismatched pair degrees");
        }
        add_product(pair, grad_rst[q], grad_ijk[p], wqp, 1.0);
      }
      if (metric.m[p][q].degrees() + pair_deg != target) {
        throw std::logic_error("entry_numerator: term degrees " +
                               to_string(metric.m[p][q].degrees() + pair_deg) +
                               " do not land on the numerator target " +
                               to_string(target));
      }
      const ProductWeights wfin =
          ProductWeights::make(metric.m[p][q].degrees(), pair_deg);
      add_product(out, metric.m[p][q], pair, wfin, 1.0);
    }
  }
  return out;
}

BernsteinTensor entry_numerator(const CofactorSet& cof,
                                const std::array<BernsteinTensor, 3>& grad_rst,
                                const std::array<BernsteinTensor, 3>& grad_ijk) {
  return entry_numerator(metric_numerators(cof), grad_rst, grad_ijk);
}

double min_jacobian_on_grid(const BernsteinTensor& jacobian, int samples) {
  double lo = std::numeric_limits<double>::max();
  for (int k = 0; k < samples; ++k) {
    for (int j = 0; j < samples; ++j) {
      for (int i = 0; i < samples; ++i) {
        const double u = static_cast<double>(i) / (samples - 1);
        const double v = static_cast<double>(j) / (samples - 1);
        const double w = static_cast<double>(k) / (samples - 1);
        lo = std::min(lo, evaluate(jacobian, u, v, w));
      }
    }
  }
  return lo;
}

}  // namespace qfiga
