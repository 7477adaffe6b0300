#include "qfiga/spline_volume.hpp"

#include <Eigen/Dense>

#include <numeric>
#include <stdexcept>
#include <string>

namespace qfiga {

namespace {

// Apply a per-direction matrix to every xyz column of a control grid.
// out_dims may alias in_dims.
ControlGrid grid_mode_apply(const ControlGrid& grid, const std::array<int, 3>& in_dims,
                            int dir, const Eigen::MatrixXd& m,
                            std::array<int, 3>& out_dims) {
  const std::array<int, 3> dims = in_dims;
  out_dims = dims;
  out_dims[dir] = static_cast<int>(m.rows());
  ControlGrid out(static_cast<Eigen::Index>(out_dims[0]) * out_dims[1] * out_dims[2], 3);
  auto in_flat = [&](int i, int j, int k) {
    return i + static_cast<Eigen::Index>(dims[0]) * (j + static_cast<Eigen::Index>(dims[1]) * k);
  };
  auto out_flat = [&](int i, int j, int k) {
    return i + static_cast<Eigen::Index>(out_dims[0]) *
                   (j + static_cast<Eigen::Index>(out_dims[1]) * k);
  };
  for (int k = 0; k < out_dims[2]; ++k) {
    for (int j = 0; j < out_dims[1]; ++j) {
      for (int i = 0; i < out_dims[0]; ++i) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        const int idx = dir == 0 ? i : (dir == 1 ? j : k);
        for (int s = 0; s < m.cols(); ++s) {
          const double w = m(idx, s);
          if (w == 0.0) continue;
          const Eigen::Index src = dir == 0   ? in_flat(s, j, k)
                                   : dir == 1 ? in_flat(i, s, k)
                                              : in_flat(i, j, s);
          acc += w * grid.row(src);
        }
        out.row(out_flat(i, j, k)) = acc;
      }
    }
  }
  return out;
}

}  // namespace

Eigen::Vector3d BezierVolume::evaluate(double u, double v, double w) const {
  const Eigen::VectorXd bu = bernstein_basis(degrees[0], u);
  const Eigen::VectorXd bv = bernstein_basis(degrees[1], v);
  const Eigen::VectorXd bw = bernstein_basis(degrees[2], w);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int k = 0; k <= degrees[2]; ++k)
    for (int j = 0; j <= degrees[1]; ++j)
      for (int i = 0; i <= degrees[0]; ++i)
        out += bu[i] * bv[j] * bw[k] * point(i, j, k);
  return out;
}

Eigen::Matrix3d BezierVolume::jacobian(double u, double v, double w) const {
  const Eigen::VectorXd bu = bernstein_basis(degrees[0], u);
  const Eigen::VectorXd bv = bernstein_basis(degrees[1], v);
  const Eigen::VectorXd bw = bernstein_basis(degrees[2], w);
  const Eigen::VectorXd du = bernstein_basis_derivative(degrees[0], u);
  const Eigen::VectorXd dv = bernstein_basis_derivative(degrees[1], v);
  const Eigen::VectorXd dw = bernstein_basis_derivative(degrees[2], w);
  Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
  for (int k = 0; k <= degrees[2]; ++k)
    for (int j = 0; j <= degrees[1]; ++j)
      for (int i = 0; i <= degrees[0]; ++i) {
        const Eigen::Vector3d p = point(i, j, k);
        jac.col(0) += du[i] * bv[j] * bw[k] * p;
        jac.col(1) += bu[i] * dv[j] * bw[k] * p;
        jac.col(2) += bu[i] * bv[j] * dw[k] * p;
      }
  return jac;
}

BSplineVolume::BSplineVolume(std::array<KnotVector, 3> kv, ControlGrid ctrl)
    : kv_(std::move(kv)), ctrl_(std::move(ctrl)) {
  const Eigen::Index expected = static_cast<Eigen::Index>(kv_[0].num_basis()) *
                                kv_[1].num_basis() * kv_[2].num_basis();
  if (ctrl_.rows() != expected) {
    throw std::invalid_argument(
        "control grid has " + std::to_string(ctrl_.rows()) + " points, basis needs " +
        std::to_string(expected));
  }
}

Eigen::Vector3d BSplineVolume::evaluate(double u, double v, double w) const {
  int fu, fv, fw;
  Eigen::VectorXd bu, bv, bw;
  kv_[0].basis(u, fu, bu);
  kv_[1].basis(v, fv, bv);
  kv_[2].basis(w, fw, bw);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int k = 0; k < bw.size(); ++k)
    for (int j = 0; j < bv.size(); ++j)
      for (int i = 0; i < bu.size(); ++i)
        out += bu[i] * bv[j] * bw[k] * point(fu + i, fv + j, fw + k);
  return out;
}

Eigen::Matrix3d BSplineVolume::jacobian(double u, double v, double w) const {
  int fu, fv, fw;
  Eigen::VectorXd bu, bv, bw, du, dv, dw;
  kv_[0].basis_with_derivative(u, fu, bu, du);
  kv_[1].basis_with_derivative(v, fv, bv, dv);
  kv_[2].basis_with_derivative(w, fw, bw, dw);
  Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
  for (int k = 0; k < bw.size(); ++k)
    for (int j = 0; j < bv.size(); ++j)
      for (int i = 0; i < bu.size(); ++i) {
        const Eigen::Vector3d p = point(fu + i, fv + j, fw + k);
        jac.col(0) += du[i] * bv[j] * bw[k] * p;
        jac.col(1) += bu[i] * dv[j] * bw[k] * p;
        jac.col(2) += bu[i] * bv[j] * dw[k] * p;
      }
  return jac;
}

BSplineVolume h_refine(const BSplineVolume& v, int levels) {
  if (levels < 0) throw std::domain_error("h_refine: levels must be >= 0");
  if (levels == 0) return v;
  std::array<int, 3> dims = {v.num_ctrl(0), v.num_ctrl(1), v.num_ctrl(2)};
  ControlGrid grid = v.control_points();
  std::array<KnotVector, 3> kvs = {v.kv(0), v.kv(1), v.kv(2)};
  for (int dir = 0; dir < 3; ++dir) {
    KnotVector target = kvs[dir].bisected(levels);
    std::vector<double> added;
    {
      // target interior knots minus existing ones (with multiplicity)
      std::vector<double> have = kvs[dir].interior_knots();
      std::vector<double> want = target.interior_knots();
      auto it = have.begin();
      for (double t : want) {
        if (it != have.end() && *it == t) {
          ++it;
        } else {
          added.push_back(t);
        }
      }
    }
    KnotVector refined = kvs[dir];
    const Eigen::MatrixXd a = insertion_matrix(kvs[dir], added, &refined);
    grid = grid_mode_apply(grid, dims, dir, a, dims);
    kvs[dir] = refined;
  }
  return BSplineVolume(kvs, grid);
}

std::vector<BezierVolume> extract_bezier(const BSplineVolume& v) {
  std::array<std::vector<Eigen::MatrixXd>, 3> ops;
  for (int dir = 0; dir < 3; ++dir) ops[dir] = extraction_operators(v.kv(dir));
  const Deg3 deg = {v.kv(0).degree(), v.kv(1).degree(), v.kv(2).degree()};
  std::vector<BezierVolume> out;
  out.reserve(v.num_elements());
  for (int ew = 0; ew < v.kv(2).num_spans(); ++ew) {
    for (int ev = 0; ev < v.kv(1).num_spans(); ++ev) {
      for (int eu = 0; eu < v.kv(0).num_spans(); ++eu) {
        BezierVolume bez;
        bez.degrees = deg;
        bez.element = {eu, ev, ew};
        const auto& su = v.kv(0).spans()[eu];
        const auto& sv = v.kv(1).spans()[ev];
        const auto& sw = v.kv(2).spans()[ew];
        bez.box_lo = {su.lo, sv.lo, sw.lo};
        bez.box_hi = {su.hi, sv.hi, sw.hi};
        // P = (C_u^T (x) C_v^T (x) C_w^T) applied to the control window.
        const Eigen::MatrixXd& cu = ops[0][eu];
        const Eigen::MatrixXd& cv = ops[1][ev];
        const Eigen::MatrixXd& cw = ops[2][ew];
        ControlGrid window(static_cast<Eigen::Index>(deg[0] + 1) * (deg[1] + 1) * (deg[2] + 1), 3);
        for (int k = 0; k <= deg[2]; ++k)
          for (int j = 0; j <= deg[1]; ++j)
            for (int i = 0; i <= deg[0]; ++i)
              window.row(i + (deg[0] + 1) * (j + (deg[1] + 1) * k)) =
                  v.point(su.first_basis + i, sv.first_basis + j, sw.first_basis + k);
        std::array<int, 3> dims = {deg[0] + 1, deg[1] + 1, deg[2] + 1};
        ControlGrid p = grid_mode_apply(window, dims, 0, cu.transpose(), dims);
        p = grid_mode_apply(p, dims, 1, cv.transpose(), dims);
        p = grid_mode_apply(p, dims, 2, cw.transpose(), dims);
        bez.ctrl = std::move(p);
        out.push_back(std::move(bez));
      }
    }
  }
  return out;
}

std::array<BSplineVolume, 2> split_volume(const BSplineVolume& v, int dir,
                                          double t) {
  if (!(t > 0.0 && t < 1.0)) throw std::domain_error("split_volume: t in (0,1)");
  const int p = v.kv(dir).degree();
  int have = 0;
  for (double k : v.kv(dir).interior_knots())
    if (k == t) ++have;
  // Raise the split knot to multiplicity p+1 so the volume separates cleanly.
  // The intermediate knot list is not a valid clamped vector, so track it raw.
  std::vector<double> to_insert(static_cast<std::size_t>(p + 1 - have), t);
  const Eigen::MatrixXd a = insertion_matrix(v.kv(dir), to_insert);
  std::vector<double> knots = v.kv(dir).knots();
  knots.insert(knots.end(), to_insert.begin(), to_insert.end());
  std::sort(knots.begin(), knots.end());

  std::array<int, 3> dims = {v.num_ctrl(0), v.num_ctrl(1), v.num_ctrl(2)};
  std::array<int, 3> ndims{};
  ControlGrid grid = grid_mode_apply(v.control_points(), dims, dir, a, ndims);

  const int total = static_cast<int>(knots.size()) - p - 1;
  const int t_first = static_cast<int>(
      std::lower_bound(knots.begin(), knots.end(), t) - knots.begin());
  const int left_count = t_first;  // (p+1) end knots + interior knots below t

  auto make_side = [&](bool left_side) {
    const int count = left_side ? left_count : total - left_count;
    std::vector<double> side_knots;
    if (left_side) {
      for (int i = 0; i < count + p + 1; ++i)
        side_knots.push_back(std::min(1.0, knots[i] / t));
    } else {
      for (std::size_t i = knots.size() - (count + p + 1); i < knots.size(); ++i)
        side_knots.push_back(std::max(0.0, (knots[i] - t) / (1.0 - t)));
    }
    std::array<KnotVector, 3> kvs = {v.kv(0), v.kv(1), v.kv(2)};
    kvs[dir] = KnotVector(p, side_knots);
    std::array<int, 3> sdims = ndims;
    sdims[dir] = count;
    ControlGrid side(static_cast<Eigen::Index>(sdims[0]) * sdims[1] * sdims[2], 3);
    const int offset = left_side ? 0 : left_count;
    auto nflat = [&](int i, int j, int k) {
      return i + static_cast<Eigen::Index>(ndims[0]) *
                     (j + static_cast<Eigen::Index>(ndims[1]) * k);
    };
    Eigen::Index row = 0;
    for (int k = 0; k < sdims[2]; ++k)
      for (int j = 0; j < sdims[1]; ++j)
        for (int i = 0; i < sdims[0]; ++i) {
          int ii = i, jj = j, kk = k;
          (dir == 0 ? ii : dir == 1 ? jj : kk) += offset;
          side.row(row++) = grid.row(nflat(ii, jj, kk));
        }
    return BSplineVolume(kvs, side);
  };
  return {make_side(true), make_side(false)};
}

BSplineVolume interpolate_on_greville(
    const std::array<KnotVector, 3>& kv,
    const std::function<Eigen::Vector3d(double, double, double)>& map) {
  std::array<std::vector<double>, 3> g = {kv[0].greville(), kv[1].greville(),
                                          kv[2].greville()};
  std::array<int, 3> dims = {kv[0].num_basis(), kv[1].num_basis(),
                             kv[2].num_basis()};
  ControlGrid samples(static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2], 3);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        samples.row(i + static_cast<Eigen::Index>(dims[0]) * (j + static_cast<Eigen::Index>(dims[1]) * k)) =
            map(g[0][i], g[1][j], g[2][k]);
  ControlGrid ctrl = samples;
  for (int dir = 0; dir < 3; ++dir) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dims[dir], dims[dir]);
    for (int r = 0; r < dims[dir]; ++r) {
      int first;
      Eigen::VectorXd vals;
      kv[dir].basis(g[dir][r], first, vals);
      for (int c = 0; c < vals.size(); ++c) a(r, first + c) = vals[c];
    }
    const Eigen::MatrixXd inv = a.partialPivLu().inverse();
    std::array<int, 3> tmp{};
    ctrl = grid_mode_apply(ctrl, dims, dir, inv, tmp);
  }
  return BSplineVolume(kv, ctrl);
}

FaceGrid face_grid(const BSplineVolume& v, int face) {
  if (face < 0 || face > 5) throw std::domain_error("face id must be 0..5");
  const int normal_dir = face / 2;
  const bool max_side = face % 2 == 1;
  FaceGrid fg;
  int d = 0;
  for (int dir = 0; dir < 3; ++dir) {
    if (dir != normal_dir) fg.dirs[d++] = dir;
  }
  fg.size = {v.num_ctrl(fg.dirs[0]), v.num_ctrl(fg.dirs[1])};
  const int normal_index = max_side ? v.num_ctrl(normal_dir) - 1 : 0;
  fg.local.reserve(static_cast<std::size_t>(fg.size[0]) * fg.size[1]);
  for (int t = 0; t < fg.size[1]; ++t) {
    for (int s = 0; s < fg.size[0]; ++s) {
      int idx[3];
      idx[normal_dir] = normal_index;
      idx[fg.dirs[0]] = s;
      idx[fg.dirs[1]] = t;
      fg.local.push_back(v.flat(idx[0], idx[1], idx[2]));
    }
  }
  return fg;
}

Eigen::Index map_face_index(const FaceGrid& a, const FaceGrid& b,
                            int orientation, int s, int t) {
  int x = s, y = t;
  int sx = a.size[0], sy = a.size[1];
  if (orientation & 1) {
    std::swap(x, y);
    std::swap(sx, sy);
  }
  if (sx != b.size[0] || sy != b.size[1]) {
    throw std::invalid_argument("interface face grids are not compatible");
  }
  if (orientation & 2) x = b.size[0] - 1 - x;
  if (orientation & 4) y = b.size[1] - 1 - y;
  return static_cast<Eigen::Index>(y) * b.size[0] + x;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

MultiBlockVolume::MultiBlockVolume(std::vector<BSplineVolume> blocks,
                                   std::vector<InterfaceDecl> interfaces,
                                   double merge_tol)
    : blocks_(std::move(blocks)), interfaces_(std::move(interfaces)) {
  if (blocks_.empty()) throw std::invalid_argument("multi-block volume needs blocks");
  const Deg3 deg = {blocks_[0].kv(0).degree(), blocks_[0].kv(1).degree(),
                    blocks_[0].kv(2).degree()};
  for (const auto& b : blocks_) {
    for (int d = 0; d < 3; ++d) {
      if (b.kv(d).degree() != deg[d]) {
        throw std::invalid_argument("all blocks must share identical degrees");
      }
    }
  }
  std::vector<Eigen::Index> offsets(blocks_.size() + 1, 0);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    offsets[b + 1] = offsets[b] + blocks_[b].num_ctrl_total();
  }
  UnionFind uf(static_cast<int>(offsets.back()));
  for (const InterfaceDecl& itf : interfaces_) {
    if (itf.a.block < 0 || itf.a.block >= num_blocks() || itf.b.block < 0 ||
        itf.b.block >= num_blocks()) {
      throw std::invalid_argument("interface references unknown block");
    }
    const FaceGrid fa = face_grid(blocks_[itf.a.block], itf.a.face);
    const FaceGrid fb = face_grid(blocks_[itf.b.block], itf.b.face);
    for (int t = 0; t < fa.size[1]; ++t) {
      for (int s = 0; s < fa.size[0]; ++s) {
        const Eigen::Index la = fa.local[static_cast<std::size_t>(t) * fa.size[0] + s];
        const Eigen::Index lb = fb.local[map_face_index(fa, fb, itf.orientation, s, t)];
        const Eigen::Vector3d pa = blocks_[itf.a.block].control_points().row(la);
        const Eigen::Vector3d pb = blocks_[itf.b.block].control_points().row(lb);
        if ((pa - pb).norm() > merge_tol) {
          throw std::invalid_argument(
              "interface between block " + std::to_string(itf.a.block) + " face " +
              std::to_string(itf.a.face) + " and block " + std::to_string(itf.b.block) +
              " face " + std::to_string(itf.b.face) +
              " is not conforming: control point mismatch " +
              std::to_string((pa - pb).norm()));
        }
        uf.unite(static_cast<int>(offsets[itf.a.block] + la),
                 static_cast<int>(offsets[itf.b.block] + lb));
      }
    }
  }
  global_index_.resize(blocks_.size());
  std::vector<int> root_to_global(offsets.back(), -1);
  int next = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    global_index_[b].resize(blocks_[b].num_ctrl_total());
    for (Eigen::Index l = 0; l < blocks_[b].num_ctrl_total(); ++l) {
      const int root = uf.find(static_cast<int>(offsets[b] + l));
      if (root_to_global[root] < 0) root_to_global[root] = next++;
      global_index_[b][l] = root_to_global[root];
    }
  }
  num_dofs_ = next;
}

std::vector<FaceRef> MultiBlockVolume::exterior_faces() const {
  std::vector<FaceRef> out;
  for (int b = 0; b < num_blocks(); ++b) {
    for (int f = 0; f < 6; ++f) {
      bool internal = false;
      for (const InterfaceDecl& itf : interfaces_) {
        if ((itf.a.block == b && itf.a.face == f) ||
            (itf.b.block == b && itf.b.face == f)) {
          internal = true;
          break;
        }
      }
      if (!internal) out.push_back({b, f});
    }
  }
  return out;
}

Deg3 MultiBlockVolume::degrees() const {
  return {blocks_[0].kv(0).degree(), blocks_[0].kv(1).degree(),
          blocks_[0].kv(2).degree()};
}

MultiBlockVolume MultiBlockVolume::refined(int levels) const {
  std::vector<BSplineVolume> refined;
  refined.reserve(blocks_.size());
  for (const auto& b : blocks_) refined.push_back(h_refine(b, levels));
  return MultiBlockVolume(std::move(refined), interfaces_);
}

}  // namespace qfiga
