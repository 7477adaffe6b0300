#include "qfiga/assembly.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cstring>
#include <iostream>
#include <thread>

#include "qfiga/gauss.hpp"

namespace qfiga {

double SolutionField::evaluate(int block, double u, double v, double w) const {
  const BSplineVolume& vol = domain_->block(block);
  int fu, fv, fw;
  Eigen::VectorXd bu, bv, bw;
  vol.kv(0).basis(u, fu, bu);
  vol.kv(1).basis(v, fv, bv);
  vol.kv(2).basis(w, fw, bw);
  double out = 0.0;
  for (int k = 0; k < bw.size(); ++k)
    for (int j = 0; j < bv.size(); ++j)
      for (int i = 0; i < bu.size(); ++i) {
        const int g = domain_->global_dof(block, vol.flat(fu + i, fv + j, fw + k));
        out += bu[i] * bv[j] * bw[k] * values_[g];
      }
  return out;
}

namespace {

// Evaluation matrices for a Bernstein degree at fixed sample points.
Eigen::MatrixXd bernstein_value_matrix(int degree, const Eigen::VectorXd& pts) {
  Eigen::MatrixXd m(pts.size(), degree + 1);
  for (Eigen::Index r = 0; r < pts.size(); ++r) {
    m.row(r) = bernstein_basis(degree, pts[r]).transpose();
  }
  return m;
}

// values[s1,s2,s3] of a coefficient tensor at a tensor grid of sample points.
Eigen::VectorXd tensor_values(const BernsteinTensor& t,
                              const std::array<Eigen::MatrixXd, 3>& vals) {
  BernsteinTensor cur = t;
  for (int d = 0; d < 3; ++d) cur = mode_apply(cur, d, vals[d]);
  return cur.coeffs();
}

struct ElementTask {
  int block;
  std::array<int, 3> element;
};

struct ElementOutput {
  Eigen::MatrixXd k_local;    // local B-spline basis, symmetric
  Eigen::VectorXd load_local;
  double min_jac = 1.0;
};

// Per-assembly fixed context shared by all elements.
struct QfContext {
  const HeatProblem* problem;
  const CacheEntry* cache;
  Deg3 deg;
  Deg3 jac_deg;
  int n_local;  // (l+1)(m+1)(n+1)
  std::array<Eigen::MatrixXd, 3> jac_grid_values;   // degeneracy sample grid
  std::array<Eigen::MatrixXd, 3> load_basis;        // Bernstein values at Gauss pts
  std::array<Eigen::MatrixXd, 3> load_jac_values;   // jac-degree values at Gauss pts
  Eigen::VectorXd gauss_pts, gauss_wts;
  std::array<Eigen::VectorXd, 3> numer_binomials;   // C(numer_d, s)
  // metric fold binomials per (p<=q): [pair_index][dir] -> vector
  std::array<std::array<Eigen::VectorXd, 3>, 6> metric_binomials;
  std::array<std::array<Deg3, 1>, 6> dummy;  // keep layout simple
};

int pair_index(int p, int q) {  // p <= q
  static const int idx[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return idx[p][q];
}

QfContext make_context(const HeatProblem& problem, const CacheEntry& cache) {
  QfContext ctx;
  ctx.problem = &problem;
  ctx.cache = &cache;
  ctx.deg = cache.key.degrees;
  ctx.jac_deg = jacobian_degrees(ctx.deg);
  ctx.n_local = (ctx.deg[0] + 1) * (ctx.deg[1] + 1) * (ctx.deg[2] + 1);
  Eigen::VectorXd grid(11);
  for (int i = 0; i < 11; ++i) grid[i] = i / 10.0;
  const int gauss_n = std::max({ctx.deg[0], ctx.deg[1], ctx.deg[2]}) + 2;
  const GaussRule& rule = gauss_rule(gauss_n);
  ctx.gauss_pts = rule.points;
  ctx.gauss_wts = rule.weights;
  for (int d = 0; d < 3; ++d) {
    ctx.jac_grid_values[d] = bernstein_value_matrix(ctx.jac_deg[d], grid);
    ctx.load_basis[d] = bernstein_value_matrix(ctx.deg[d], rule.points);
    ctx.load_jac_values[d] = bernstein_value_matrix(ctx.jac_deg[d], rule.points);
    const int nd = cache.approx.numer[d];
    ctx.numer_binomials[d].resize(nd + 1);
    for (int s = 0; s <= nd; ++s) ctx.numer_binomials[d][s] = binomial(nd, s);
  }
  std::array<Deg3, 3> pd;
  for (int d = 0; d < 3; ++d) {
    pd[d] = ctx.deg;
    pd[d][d] -= 1;
  }
  for (int p = 0; p < 3; ++p) {
    for (int q = p; q < 3; ++q) {
      const Deg3 met = pd[(p + 1) % 3] + pd[(p + 2) % 3] + pd[(q + 1) % 3] + pd[(q + 2) % 3];
      for (int d = 0; d < 3; ++d) {
        Eigen::VectorXd& w = ctx.metric_binomials[pair_index(p, q)][d];
        w.resize(met[d] + 1);
        for (int a = 0; a <= met[d]; ++a) w[a] = binomial(met[d], a);
      }
    }
  }
  return ctx;
}

BezierVolume extract_element(const QfContext& ctx, const ElementTask& task) {
  const BSplineVolume& vol = ctx.problem->domain->block(task.block);
  const BlockStructure& bs = ctx.cache->blocks[task.block];
  const Deg3& deg = ctx.deg;
  BezierVolume bez;
  bez.degrees = deg;
  bez.block = task.block;
  bez.element = task.element;
  const auto& su = vol.kv(0).spans()[task.element[0]];
  const auto& sv = vol.kv(1).spans()[task.element[1]];
  const auto& sw = vol.kv(2).spans()[task.element[2]];
  bez.box_lo = {su.lo, sv.lo, sw.lo};
  bez.box_hi = {su.hi, sv.hi, sw.hi};
  const Eigen::MatrixXd& cu = bs.extraction[0][task.element[0]];
  const Eigen::MatrixXd& cv = bs.extraction[1][task.element[1]];
  const Eigen::MatrixXd& cw = bs.extraction[2][task.element[2]];
  const int nu = deg[0] + 1, nv = deg[1] + 1, nw = deg[2] + 1;
  // window -> P = (Cu^T x Cv^T x Cw^T) window, one direction at a time
  Eigen::Matrix<double, Eigen::Dynamic, 3> work(nu * nv * nw, 3);
  for (int k = 0; k < nw; ++k)
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < nu; ++i)
        work.row(i + nu * (j + nv * k)) =
            vol.control_points().row(vol.flat(su.first_basis + i, sv.first_basis + j,
                                              sw.first_basis + k));
  Eigen::Matrix<double, Eigen::Dynamic, 3> tmp(nu * nv * nw, 3);
  // direction u
  for (int k = 0; k < nw; ++k)
    for (int j = 0; j < nv; ++j)
      for (int b = 0; b < nu; ++b) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        for (int a = 0; a < nu; ++a) acc += cu(a, b) * work.row(a + nu * (j + nv * k));
        tmp.row(b + nu * (j + nv * k)) = acc;
      }
  // direction v
  for (int k = 0; k < nw; ++k)
    for (int b = 0; b < nv; ++b)
      for (int i = 0; i < nu; ++i) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        for (int a = 0; a < nv; ++a) acc += cv(a, b) * tmp.row(i + nu * (a + nv * k));
        work.row(i + nu * (b + nv * k)) = acc;
      }
  // direction w
  for (int b = 0; b < nw; ++b)
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < nu; ++i) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        for (int a = 0; a < nw; ++a) acc += cw(a, b) * work.row(i + nu * (j + nv * a));
        tmp.row(i + nu * (j + nv * b)) = acc;
      }
  bez.ctrl = tmp;
  return bez;
}

// Stiffness integrand pipeline for one element: cofactors, metric numerators,
// adjoint approximation weights, then the sum-factorized pair contraction.
ElementOutput process_element(const QfContext& ctx, const ElementTask& task,
                              const AssembleOptions& options) {
  const CacheEntry& cache = *ctx.cache;
  const Deg3& deg = ctx.deg;
  ElementOutput out;
  const BezierVolume bez = extract_element(ctx, task);

  const PartialTensors partials = geometry_partials(bez);
  std::array<Deg3, 3> pd;
  for (int d = 0; d < 3; ++d) {
    pd[d] = deg;
    pd[d][d] -= 1;
  }
  CofactorSet cof;
  for (int p = 0; p < 3; ++p) {
    const int p1 = (p + 1) % 3, p2 = (p + 2) % 3;
    for (int q = 0; q < 3; ++q) {
      const int q1 = (q + 1) % 3, q2 = (q + 2) % 3;
      BernsteinTensor acc(pd[p1] + pd[p2]);
      add_product(acc, partials[p1][q1], partials[p2][q2],
                  cache.product_weights.get(pd[p1], pd[p2]), 1.0);
      add_product(acc, partials[p2][q1], partials[p1][q2],
                  cache.product_weights.get(pd[p2], pd[p1]), -1.0);
      cof.entry[p][q] = std::move(acc);
    }
  }
  BernsteinTensor jac(ctx.jac_deg);
  {
    const ProductWeights& w = cache.product_weights.get(pd[0], cof.entry[0][0].degrees());
    for (int q = 0; q < 3; ++q) add_product(jac, partials[0][q], cof.entry[0][q], w, 1.0);
  }

  out.min_jac = tensor_values(jac, ctx.jac_grid_values).minCoeff();
  if (options.warn_degenerate && out.min_jac <= 0.0) {
    std::cerr << "[qfiga] warning: degenerate element (min J = " << out.min_jac
              << ") block " << task.block << " element (" << task.element[0] << ","
              << task.element[1] << "," << task.element[2] << ")\n";
  }

  const ElementApprox approx(cache.approx, jac,
                             std::to_string(task.block) + "/(" +
                                 std::to_string(task.element[0]) + "," +
                                 std::to_string(task.element[1]) + "," +
                                 std::to_string(task.element[2]) + ")");
  // q-tilde: adjoint weights divided by the numerator-degree binomials.
  const Deg3& nd = cache.approx.numer;
  BernsteinTensor qt(nd, approx.adjoint_weights());
  {
    Eigen::Index idx = 0;
    for (int sw = 0; sw <= nd[2]; ++sw)
      for (int sv = 0; sv <= nd[1]; ++sv)
        for (int su = 0; su <= nd[0]; ++su)
          qt.coeffs()[idx++] /= ctx.numer_binomials[0][su] *
                                ctx.numer_binomials[1][sv] *
                                ctx.numer_binomials[2][sw];
  }

  // y tensors per unordered metric pair.
  std::array<BernsteinTensor, 6> y;
  for (int p = 0; p < 3; ++p) {
    for (int q = p; q < 3; ++q) {
      BernsteinTensor metric(cof.entry[p][0].degrees() + cof.entry[q][0].degrees());
      for (int c = 0; c < 3; ++c) {
        add_product(metric, cof.entry[p][c], cof.entry[q][c],
                    cache.product_weights.get(cof.entry[p][0].degrees(),
                                              cof.entry[q][0].degrees()),
                    1.0);
      }
      const Deg3 adeg = metric.degrees();
      Deg3 bdeg;
      for (int d = 0; d < 3; ++d) {
        bdeg[d] = 2 * deg[d] - (p == d ? 1 : 0) - (q == d ? 1 : 0);
        if (adeg[d] + bdeg[d] != nd[d]) {
          throw std::logic_error("assembly: numerator degree bookkeeping failure");
        }
      }
      // fold the metric-degree binomials
      const auto& wa = ctx.metric_binomials[pair_index(p, q)];
      {
        Eigen::Index idx = 0;
        for (int aw = 0; aw <= adeg[2]; ++aw)
          for (int av = 0; av <= adeg[1]; ++av)
            for (int au = 0; au <= adeg[0]; ++au)
              metric.coeffs()[idx++] *= wa[0][au] * wa[1][av] * wa[2][aw];
      }
      // y[B] = C(bdeg,B) * sum_A qt[A+B] m~[A]
      BernsteinTensor yt(bdeg);
      const int bu = bdeg[0] + 1, bv = bdeg[1] + 1, bw = bdeg[2] + 1;
      const int au = adeg[0] + 1, av = adeg[1] + 1, aw = adeg[2] + 1;
      for (int kb = 0; kb < bw; ++kb)
        for (int jb = 0; jb < bv; ++jb)
          for (int ib = 0; ib < bu; ++ib) {
            double acc = 0.0;
            for (int ka = 0; ka < aw; ++ka)
              for (int ja = 0; ja < av; ++ja) {
                const double* mrow = metric.coeffs().data() + au * (ja + av * ka);
                const double* qrow =
                    qt.coeffs().data() + ib +
                    (nd[0] + 1) * ((jb + ja) + (nd[1] + 1) * (kb + ka));
                for (int ia = 0; ia < au; ++ia) acc += mrow[ia] * qrow[ia];
              }
            yt.at(ib, jb, kb) =
                acc * binomial(bdeg[0], ib) * binomial(bdeg[1], jb) * binomial(bdeg[2], kb);
          }
      y[pair_index(p, q)] = std::move(yt);
    }
  }

  // Sum-factorized contraction over all ordered (p, q) pairs.
  const int nu = deg[0] + 1, nv = deg[1] + 1, nw = deg[2] + 1;
  const int pairs_u = nu * nu, pairs_v = nv * nv, pairs_w = nw * nw;
  Eigen::MatrixXd m_bern = Eigen::MatrixXd::Zero(ctx.n_local, ctx.n_local);
  std::vector<double> z1, z2, z3;
  for (int p = 0; p < 3; ++p) {
    for (int q = 0; q < 3; ++q) {
      const BernsteinTensor& yt = y[pair_index(std::min(p, q), std::max(p, q))];
      const Deg3& bdeg = yt.degrees();
      const int bu = bdeg[0] + 1, bv = bdeg[1] + 1, bw = bdeg[2] + 1;
      const Eigen::MatrixXd& tu = cache.pair_tables.tables[0][(p == 0 ? 1 : 0) + 2 * (q == 0 ? 1 : 0)];
      const Eigen::MatrixXd& tv = cache.pair_tables.tables[1][(p == 1 ? 1 : 0) + 2 * (q == 1 ? 1 : 0)];
      const Eigen::MatrixXd& tw = cache.pair_tables.tables[2][(p == 2 ? 1 : 0) + 2 * (q == 2 ? 1 : 0)];
      z1.assign(static_cast<std::size_t>(pairs_u) * bv * bw, 0.0);
      for (int kb = 0; kb < bw; ++kb)
        for (int jb = 0; jb < bv; ++jb) {
          const double* yrow = yt.coeffs().data() + bu * (jb + bv * kb);
          double* zrow = z1.data() + static_cast<std::size_t>(pairs_u) * (jb + bv * kb);
          for (int ri = 0; ri < pairs_u; ++ri) {
            double acc = 0.0;
            for (int b = 0; b < bu; ++b) acc += tu(ri, b) * yrow[b];
            zrow[ri] = acc;
          }
        }
      z2.assign(static_cast<std::size_t>(pairs_u) * pairs_v * bw, 0.0);
      for (int kb = 0; kb < bw; ++kb)
        for (int sj = 0; sj < pairs_v; ++sj)
          for (int ri = 0; ri < pairs_u; ++ri) {
            double acc = 0.0;
            for (int b = 0; b < bv; ++b)
              acc += tv(sj, b) * z1[ri + static_cast<std::size_t>(pairs_u) * (b + bv * kb)];
            z2[ri + static_cast<std::size_t>(pairs_u) * (sj + static_cast<std::size_t>(pairs_v) * kb)] = acc;
          }
      z3.assign(static_cast<std::size_t>(pairs_u) * pairs_v * pairs_w, 0.0);
      for (int tk = 0; tk < pairs_w; ++tk)
        for (int sj = 0; sj < pairs_v; ++sj)
          for (int ri = 0; ri < pairs_u; ++ri) {
            double acc = 0.0;
            for (int b = 0; b < bw; ++b)
              acc += tw(tk, b) *
                     z2[ri + static_cast<std::size_t>(pairs_u) * (sj + static_cast<std::size_t>(pairs_v) * b)];
            z3[ri + static_cast<std::size_t>(pairs_u) * (sj + static_cast<std::size_t>(pairs_v) * tk)] = acc;
          }
      // scatter into the local Bernstein pair matrix
      for (int tw_k = 0; tw_k < nw; ++tw_k)
        for (int tk = 0; tk < nw; ++tk)
          for (int sj = 0; sj < nv; ++sj)
            for (int ij = 0; ij < nv; ++ij)
              for (int ri = 0; ri < nu; ++ri)
                for (int ii = 0; ii < nu; ++ii) {
                  const int row = ri + nu * (sj + nv * tk);
                  const int col = ii + nu * (ij + nv * tw_k);
                  m_bern(row, col) +=
                      z3[(ri + nu * ii) +
                         static_cast<std::size_t>(pairs_u) *
                             ((sj + nv * ij) + static_cast<std::size_t>(pairs_v) * (tk + nw * tw_k))];
                }
    }
  }
  m_bern *= cache.approx.sigma;
  m_bern = (0.5 * (m_bern + m_bern.transpose())).eval();

  // Transform to the local B-spline basis: K = C M C^T with C = Cu x Cv x Cw.
  const BlockStructure& bs = cache.blocks[task.block];
  const Eigen::MatrixXd& cu = bs.extraction[0][task.element[0]];
  const Eigen::MatrixXd& cv = bs.extraction[1][task.element[1]];
  const Eigen::MatrixXd& cw = bs.extraction[2][task.element[2]];
  Eigen::MatrixXd cfull(ctx.n_local, ctx.n_local);
  for (int kc = 0; kc < nw; ++kc)
    for (int jc = 0; jc < nv; ++jc)
      for (int ic = 0; ic < nu; ++ic) {
        const int row = ic + nu * (jc + nv * kc);
        for (int kb = 0; kb < nw; ++kb)
          for (int jb = 0; jb < nv; ++jb)
            for (int ib = 0; ib < nu; ++ib)
              cfull(row, ib + nu * (jb + nv * kb)) = cu(ic, ib) * cv(jc, jb) * cw(kc, kb);
      }
  Eigen::MatrixXd k_local = cfull * m_bern * cfull.transpose();
  out.k_local = 0.5 * (k_local + k_local.transpose());

  // Load vector by Gauss quadrature of -g(x) B J on the element.
  const int ng = static_cast<int>(ctx.gauss_pts.size());
  const Eigen::VectorXd jac_at = tensor_values(jac, ctx.load_jac_values);
  std::array<BernsteinTensor, 3> coord;
  for (int c = 0; c < 3; ++c) {
    BernsteinTensor t(deg);
    t.coeffs() = bez.ctrl.col(c);
    coord[c] = std::move(t);
  }
  std::array<Eigen::VectorXd, 3> coord_at;
  for (int c = 0; c < 3; ++c) coord_at[c] = tensor_values(coord[c], ctx.load_basis);
  Eigen::VectorXd load_bern = Eigen::VectorXd::Zero(ctx.n_local);
  Eigen::Index gp = 0;
  for (int kg = 0; kg < ng; ++kg)
    for (int jg = 0; jg < ng; ++jg)
      for (int ig = 0; ig < ng; ++ig, ++gp) {
        const double weight = ctx.gauss_wts[ig] * ctx.gauss_wts[jg] * ctx.gauss_wts[kg];
        const Eigen::Vector3d x(coord_at[0][gp], coord_at[1][gp], coord_at[2][gp]);
        const double scale = -weight * ctx.problem->source(x) * jac_at[gp];
        for (int kb = 0; kb < nw; ++kb) {
          const double bwv = ctx.load_basis[2](kg, kb);
          for (int jb = 0; jb < nv; ++jb) {
            const double bvw = bwv * ctx.load_basis[1](jg, jb);
            for (int ib = 0; ib < nu; ++ib) {
              load_bern[ib + nu * (jb + nv * kb)] += scale * bvw * ctx.load_basis[0](ig, ib);
            }
          }
        }
      }
  out.load_local = cfull * load_bern;
  return out;
}

std::vector<ElementTask> element_tasks(const MultiBlockVolume& domain) {
  std::vector<ElementTask> tasks;
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    for (int ew = 0; ew < vol.kv(2).num_spans(); ++ew)
      for (int ev = 0; ev < vol.kv(1).num_spans(); ++ev)
        for (int eu = 0; eu < vol.kv(0).num_spans(); ++eu)
          tasks.push_back({b, {eu, ev, ew}});
  }
  return tasks;
}

// Values array aligned with the cached CSR pattern.
struct CsrAccumulator {
  const SparsityPattern* pattern;
  std::vector<double> values;

  explicit CsrAccumulator(const SparsityPattern& p)
      : pattern(&p), values(p.nnz(), 0.0) {}

  void add(int row, int col, double v) {
    const int lo = pattern->row_ptr[row];
    const int hi = pattern->row_ptr[row + 1];
    const auto begin = pattern->cols.begin() + lo;
    const auto end = pattern->cols.begin() + hi;
    const auto it = std::lower_bound(begin, end, col);
    values[static_cast<std::size_t>(lo + (it - begin))] += v;
  }

  Eigen::SparseMatrix<double> finish(int n) const {
    Eigen::SparseMatrix<double> m(n, n);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(values.size());
    for (int r = 0; r < n; ++r) {
      for (int k = pattern->row_ptr[r]; k < pattern->row_ptr[r + 1]; ++k) {
        if (values[static_cast<std::size_t>(k)] != 0.0) {
          trips.emplace_back(r, pattern->cols[static_cast<std::size_t>(k)],
                             values[static_cast<std::size_t>(k)]);
        }
      }
    }
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }
};

std::vector<int> element_global_dofs(const MultiBlockVolume& domain,
                                     const ElementTask& task) {
  const BSplineVolume& vol = domain.block(task.block);
  const Deg3 deg = domain.degrees();
  const int fu = vol.kv(0).spans()[task.element[0]].first_basis;
  const int fv = vol.kv(1).spans()[task.element[1]].first_basis;
  const int fw = vol.kv(2).spans()[task.element[2]].first_basis;
  std::vector<int> dofs;
  dofs.reserve(static_cast<std::size_t>((deg[0] + 1) * (deg[1] + 1) * (deg[2] + 1)));
  for (int k = 0; k <= deg[2]; ++k)
    for (int j = 0; j <= deg[1]; ++j)
      for (int i = 0; i <= deg[0]; ++i)
        dofs.push_back(domain.global_dof(task.block, vol.flat(fu + i, fv + j, fw + k)));
  return dofs;
}

}  // namespace

GlobalSystem assemble(const HeatProblem& problem, const CacheEntry& cache,
                      const AssembleOptions& options) {
  const MultiBlockVolume& domain = *problem.domain;
  {
    const CacheKey expect = CacheKey::from(domain, cache.key.approx, cache.key.dirichlet_faces);
    if (expect.hash() != cache.key.hash()) {
      throw std::invalid_argument("assemble: cache entry does not match the domain structure");
    }
  }
  const QfContext ctx = make_context(problem, cache);
  const std::vector<ElementTask> tasks = element_tasks(domain);

  CsrAccumulator acc(cache.pattern);
  Eigen::VectorXd load = Eigen::VectorXd::Zero(cache.num_dofs);

  const int threads = std::max(1, options.threads);
  const std::size_t batch = 256;
  std::vector<ElementOutput> outputs(std::min(batch, tasks.size()));
  for (std::size_t start = 0; start < tasks.size(); start += batch) {
    const std::size_t count = std::min(batch, tasks.size() - start);
    if (threads == 1) {
      for (std::size_t i = 0; i < count; ++i)
        outputs[i] = process_element(ctx, tasks[start + i], options);
    } else {
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) break;
            outputs[i] = process_element(ctx, tasks[start + i], options);
          }
        });
      }
      for (auto& th : pool) th.join();
    }
    // Deterministic ordered merge.
    for (std::size_t i = 0; i < count; ++i) {
      const std::vector<int> dofs = element_global_dofs(domain, tasks[start + i]);
      const ElementOutput& out = outputs[i];
      const int n = static_cast<int>(dofs.size());
      for (int r = 0; r < n; ++r) {
        load[dofs[r]] += out.load_local[r];
        for (int c = 0; c < n; ++c) acc.add(dofs[r], dofs[c], out.k_local(r, c));
      }
    }
  }

  GlobalSystem sys;
  sys.stiffness = acc.finish(cache.num_dofs);
  sys.load = std::move(load);
  sys.boundary_dofs = cache.collocation.boundary_dofs();
  return sys;
}

GlobalSystem assemble_reference_gauss(const HeatProblem& problem,
                                      int points_per_direction) {
  const MultiBlockVolume& domain = *problem.domain;
  const Deg3 deg = domain.degrees();
  const int ng = points_per_direction > 0
                     ? points_per_direction
                     : std::max({deg[0], deg[1], deg[2]}) + 1;
  const GaussRule& rule = gauss_rule(ng);
  const int n_local = (deg[0] + 1) * (deg[1] + 1) * (deg[2] + 1);

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(domain.num_dofs());
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    for (int ew = 0; ew < vol.kv(2).num_spans(); ++ew) {
      for (int ev = 0; ev < vol.kv(1).num_spans(); ++ev) {
        for (int eu = 0; eu < vol.kv(0).num_spans(); ++eu) {
          const auto& su = vol.kv(0).spans()[eu];
          const auto& sv = vol.kv(1).spans()[ev];
          const auto& sw = vol.kv(2).spans()[ew];
          const double vol_scale =
              (su.hi - su.lo) * (sv.hi - sv.lo) * (sw.hi - sw.lo);
          Eigen::MatrixXd k_local = Eigen::MatrixXd::Zero(n_local, n_local);
          Eigen::VectorXd l_local = Eigen::VectorXd::Zero(n_local);
          std::vector<int> dofs(static_cast<std::size_t>(n_local));
          {
            int idx = 0;
            for (int k = 0; k <= deg[2]; ++k)
              for (int j = 0; j <= deg[1]; ++j)
                for (int i = 0; i <= deg[0]; ++i)
                  dofs[idx++] = domain.global_dof(
                      b, vol.flat(su.first_basis + i, sv.first_basis + j,
                                  sw.first_basis + k));
          }
          for (int kg = 0; kg < ng; ++kg) {
            const double w = sw.lo + (sw.hi - sw.lo) * rule.points[kg];
            for (int jg = 0; jg < ng; ++jg) {
              const double v = sv.lo + (sv.hi - sv.lo) * rule.points[jg];
              for (int ig = 0; ig < ng; ++ig) {
                const double u = su.lo + (su.hi - su.lo) * rule.points[ig];
                const double weight =
                    rule.weights[ig] * rule.weights[jg] * rule.weights[kg] * vol_scale;
                int fu, fv, fw;
                Eigen::VectorXd bu, bv, bw, du, dv, dw;
                vol.kv(0).basis_with_derivative(u, fu, bu, du);
                vol.kv(1).basis_with_derivative(v, fv, bv, dv);
                vol.kv(2).basis_with_derivative(w, fw, bw, dw);
                const Eigen::Matrix3d jac = vol.jacobian(u, v, w);
                const double det = jac.determinant();
                const Eigen::Matrix3d kinv_t = jac.inverse().transpose();
                Eigen::Matrix<double, Eigen::Dynamic, 3> grads(n_local, 3);
                Eigen::VectorXd vals(n_local);
                int idx = 0;
                for (int k = 0; k <= deg[2]; ++k)
                  for (int j = 0; j <= deg[1]; ++j)
                    for (int i = 0; i <= deg[0]; ++i) {
                      const Eigen::Vector3d gparam(du[i] * bv[j] * bw[k],
                                                   bu[i] * dv[j] * bw[k],
                                                   bu[i] * bv[j] * dw[k]);
                      grads.row(idx) = (kinv_t * gparam).transpose();
                      vals[idx] = bu[i] * bv[j] * bw[k];
                      ++idx;
                    }
                k_local.noalias() += (weight * det) * grads * grads.transpose();
                const Eigen::Vector3d x = vol.evaluate(u, v, w);
                l_local.noalias() += (-weight * det * problem.source(x)) * vals;
              }
            }
          }
          for (int r = 0; r < n_local; ++r) {
            load[dofs[r]] += l_local[r];
            for (int c = 0; c < n_local; ++c)
              trips.emplace_back(dofs[r], dofs[c], k_local(r, c));
          }
        }
      }
    }
  }
  GlobalSystem sys;
  sys.stiffness.resize(domain.num_dofs(), domain.num_dofs());
  sys.stiffness.setFromTriplets(trips.begin(), trips.end());
  sys.load = std::move(load);
  const CollocationSystem colloc = CollocationSystem::build(domain, problem.dirichlet_faces);
  sys.boundary_dofs = colloc.boundary_dofs();
  return sys;
}

ReducedSystem impose_dirichlet(const GlobalSystem& system,
                               const HeatProblem& problem,
                               const CacheEntry& cache) {
  const Eigen::VectorXd b_values =
      cache.collocation.solve_boundary_values(*problem.domain, problem.dirichlet);
  const std::vector<int>& bdofs = cache.collocation.boundary_dofs();
  const int n = static_cast<int>(system.stiffness.rows());
  std::vector<int> to_interior(n, -1);
  std::vector<int> interior;
  {
    std::vector<char> is_boundary(n, 0);
    for (int d : bdofs) is_boundary[d] = 1;
    interior.reserve(n - bdofs.size());
    for (int i = 0; i < n; ++i) {
      if (!is_boundary[i]) {
        to_interior[i] = static_cast<int>(interior.size());
        interior.push_back(i);
      }
    }
  }
  std::vector<int> to_boundary(n, -1);
  for (std::size_t i = 0; i < bdofs.size(); ++i) to_boundary[bdofs[i]] = static_cast<int>(i);

  Eigen::VectorXd rhs(interior.size());
  for (std::size_t i = 0; i < interior.size(); ++i) rhs[static_cast<Eigen::Index>(i)] = system.load[interior[i]];

  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < system.stiffness.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(system.stiffness, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (to_interior[r] < 0) continue;
      if (to_interior[c] >= 0) {
        trips.emplace_back(to_interior[r], to_interior[c], it.value());
      } else {
        rhs[to_interior[r]] -= it.value() * b_values[to_boundary[c]];
      }
    }
  }
  ReducedSystem red;
  red.matrix.resize(static_cast<Eigen::Index>(interior.size()),
                    static_cast<Eigen::Index>(interior.size()));
  red.matrix.setFromTriplets(trips.begin(), trips.end());
  red.rhs = std::move(rhs);
  red.boundary_values = b_values;
  red.interior_dofs = std::move(interior);
  return red;
}

SolutionField solve(const ReducedSystem& reduced, const GlobalSystem& system,
                    const HeatProblem& problem) {
  const Eigen::Index n = reduced.matrix.rows();
  Eigen::VectorXd interior;
  if (n < 20000) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(reduced.matrix);
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("direct solve failed: reduced system is not SPD");
    }
    interior = solver.solve(reduced.rhs);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(1e-10);
    cg.setMaxIterations(static_cast<Eigen::Index>(10.0 * std::sqrt(static_cast<double>(n))));
    cg.compute(reduced.matrix);
    interior = cg.solve(reduced.rhs);
    if (cg.info() != Eigen::Success) {
      throw std::runtime_error(
          "conjugate gradient did not reach 1e-10 in " +
          std::to_string(cg.maxIterations()) + " iterations (residual " +
          std::to_string(cg.error()) + ")");
    }
  }
  Eigen::VectorXd full = Eigen::VectorXd::Zero(system.stiffness.rows());
  for (std::size_t i = 0; i < reduced.interior_dofs.size(); ++i) {
    full[reduced.interior_dofs[i]] = interior[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = 0; i < system.boundary_dofs.size(); ++i) {
    full[system.boundary_dofs[i]] = reduced.boundary_values[static_cast<Eigen::Index>(i)];
  }
  return SolutionField(problem.domain, std::move(full));
}

SolutionField solve_heat(const HeatProblem& problem, const CacheEntry& cache,
                         const AssembleOptions& options) {
  const GlobalSystem system = assemble(problem, cache, options);
  const ReducedSystem reduced = impose_dirichlet(system, problem, cache);
  return solve(reduced, system, problem);
}

double l2_relative_error(const SolutionField& solution, const ScalarField& exact,
                         bool* absolute_norm) {
  const MultiBlockVolume& domain = solution.domain();
  const Deg3 deg = domain.degrees();
  const int ng = std::max({deg[0], deg[1], deg[2]}) + 2;
  const GaussRule& rule = gauss_rule(ng);
  double err2 = 0.0, norm2 = 0.0;
  for (int b = 0; b < domain.num_blocks(); ++b) {
    const BSplineVolume& vol = domain.block(b);
    for (const auto& sw : vol.kv(2).spans()) {
      for (const auto& sv : vol.kv(1).spans()) {
        for (const auto& su : vol.kv(0).spans()) {
          const double scale = (su.hi - su.lo) * (sv.hi - sv.lo) * (sw.hi - sw.lo);
          for (int kg = 0; kg < ng; ++kg) {
            const double w = sw.lo + (sw.hi - sw.lo) * rule.points[kg];
            for (int jg = 0; jg < ng; ++jg) {
              const double v = sv.lo + (sv.hi - sv.lo) * rule.points[jg];
              for (int ig = 0; ig < ng; ++ig) {
                const double u = su.lo + (su.hi - su.lo) * rule.points[ig];
                const double weight =
                    rule.weights[ig] * rule.weights[jg] * rule.weights[kg] * scale;
                const double det = vol.jacobian(u, v, w).determinant();
                const double th = solution.evaluate(b, u, v, w);
                const double tx = exact(vol.evaluate(u, v, w));
                err2 += weight * det * (th - tx) * (th - tx);
                norm2 += weight * det * tx * tx;
              }
            }
          }
        }
      }
    }
  }
  if (norm2 <= 1e-300) {
    if (absolute_norm) *absolute_norm = true;
    return std::sqrt(std::abs(err2));
  }
  if (absolute_norm) *absolute_norm = false;
  return std::sqrt(std::abs(err2) / norm2);
}

double max_relative_difference(const Eigen::SparseMatrix<double>& a,
                               const Eigen::SparseMatrix<double>& b) {
  double max_diff = 0.0, max_b = 0.0;
  Eigen::SparseMatrix<double> diff = a - b;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
      max_diff = std::max(max_diff, std::abs(it.value()));
  for (int k = 0; k < b.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(b, k); it; ++it)
      max_b = std::max(max_b, std::abs(it.value()));
  return max_b > 0.0 ? max_diff / max_b : max_diff;
}

std::uint64_t stiffness_checksum(const Eigen::SparseMatrix<double>& m) {
  std::vector<std::tuple<int, int, double>> entries;
  entries.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      entries.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  std::sort(entries.begin(), entries.end(),
            [](const auto& x, const auto& y) {
              return std::tie(std::get<0>(x), std::get<1>(x)) <
                     std::tie(std::get<0>(y), std::get<1>(y));
            });
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [r, c, v] : entries) {
    mix(&r, sizeof r);
    mix(&c, sizeof c);
    mix(&v, sizeof v);
  }
  return h;
}

}  // namespace qfiga
