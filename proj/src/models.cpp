#include "qfiga/models.hpp"

#include <cmath>
#include <random>

namespace qfiga {

namespace {

ControlGrid greville_lattice(const std::array<KnotVector, 3>& kv) {
  std::array<std::vector<double>, 3> g = {kv[0].greville(), kv[1].greville(),
                                          kv[2].greville()};
  ControlGrid ctrl(static_cast<Eigen::Index>(g[0].size()) * g[1].size() * g[2].size(), 3);
  Eigen::Index row = 0;
  for (double w : g[2])
    for (double v : g[1])
      for (double u : g[0]) ctrl.row(row++) = Eigen::RowVector3d(u, v, w);
  return ctrl;
}

// Average the control faces of a declared interface so the blocks conform
// exactly (interpolated blocks agree to solver accuracy already).
void enforce_conformity(std::vector<BSplineVolume>& blocks,
                        const std::vector<InterfaceDecl>& interfaces) {
  for (const InterfaceDecl& itf : interfaces) {
    const FaceGrid fa = face_grid(blocks[itf.a.block], itf.a.face);
    const FaceGrid fb = face_grid(blocks[itf.b.block], itf.b.face);
    for (int t = 0; t < fa.size[1]; ++t) {
      for (int s = 0; s < fa.size[0]; ++s) {
        const Eigen::Index la = fa.local[static_cast<std::size_t>(t) * fa.size[0] + s];
        const Eigen::Index lb = fb.local[map_face_index(fa, fb, itf.orientation, s, t)];
        const Eigen::RowVector3d avg =
            0.5 * (blocks[itf.a.block].control_points().row(la) +
                   blocks[itf.b.block].control_points().row(lb));
        blocks[itf.a.block].control_points().row(la) = avg;
        blocks[itf.b.block].control_points().row(lb) = avg;
      }
    }
  }
}

}  // namespace

MultiBlockVolume make_unit_cube(Deg3 degrees, int spans) {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(degrees[0], spans),
                                  KnotVector::uniform(degrees[1], spans),
                                  KnotVector::uniform(degrees[2], spans)};
  return MultiBlockVolume({BSplineVolume(kv, greville_lattice(kv))}, {});
}

MultiBlockVolume make_hollow_sphere_octant(int spans, double inner, double outer) {
  // The spherical octant triangle (vertices on the +x, +y, +z axes) is covered
  // by three quads meeting at the octant center; each quad is a normalized
  // bilinear patch, extruded radially.
  const Eigen::Vector3d ax(1, 0, 0), ay(0, 1, 0), az(0, 0, 1);
  const Eigen::Vector3d mxy = Eigen::Vector3d(1, 1, 0).normalized();
  const Eigen::Vector3d myz = Eigen::Vector3d(0, 1, 1).normalized();
  const Eigen::Vector3d mxz = Eigen::Vector3d(1, 0, 1).normalized();
  const Eigen::Vector3d ctr = Eigen::Vector3d(1, 1, 1).normalized();

  struct Patch {
    Eigen::Vector3d c00, c10, c11, c01;
  };
  const Patch patches[3] = {
      {ax, mxy, ctr, mxz},  // around +x
      {ay, myz, ctr, mxy},  // around +y
      {az, mxz, ctr, myz},  // around +z
  };
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans)};
  std::vector<BSplineVolume> blocks;
  for (const Patch& p : patches) {
    blocks.push_back(interpolate_on_greville(kv, [&](double u, double v, double w) {
      const Eigen::Vector3d dir = ((1 - u) * (1 - v) * p.c00 + u * (1 - v) * p.c10 +
                                   u * v * p.c11 + (1 - u) * v * p.c01)
                                      .normalized();
      return Eigen::Vector3d((inner + (outer - inner) * w) * dir);
    }));
  }
  // Shared edges: A(u=1)=B(v=1) (mxy->ctr), A(v=1)=C(u=1) (mxz->ctr),
  // B(u=1)=C(v=1) (myz->ctr); all with matching edge parameters.
  std::vector<InterfaceDecl> interfaces = {
      {{0, 1}, {1, 3}, 0},
      {{0, 3}, {2, 1}, 0},
      {{1, 1}, {2, 3}, 0},
  };
  enforce_conformity(blocks, interfaces);
  return MultiBlockVolume(std::move(blocks), std::move(interfaces));
}

MultiBlockVolume make_quarter_pipe(int spans) {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans)};
  const double pi = 3.14159265358979323846;
  const BSplineVolume whole =
      interpolate_on_greville(kv, [&](double u, double v, double w) {
        const double rho = 1.0 + u;
        const double theta = 0.5 * pi * v;
        return Eigen::Vector3d(rho * std::cos(theta), rho * std::sin(theta), w);
      });
  const auto sides = split_volume(whole, 1, 0.5);
  return MultiBlockVolume({sides[0], sides[1]}, {{{0, 3}, {1, 2}, 0}});
}

MultiBlockVolume make_block_grid(std::array<int, 3> grid, int spans,
                                 double warp_amplitude) {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans),
                                  KnotVector::uniform(3, spans)};
  auto warp = [&](const Eigen::Vector3d& p) {
    if (warp_amplitude == 0.0) return p;
    const double pi = 3.14159265358979323846;
    return Eigen::Vector3d(
        p[0] + warp_amplitude * std::sin(pi * p[1] / grid[1]) * std::sin(pi * p[2] / grid[2]),
        p[1] + warp_amplitude * std::sin(pi * p[2] / grid[2]) * std::sin(pi * p[0] / grid[0]),
        p[2] + warp_amplitude * std::sin(pi * p[0] / grid[0]) * std::sin(pi * p[1] / grid[1]));
  };
  std::vector<BSplineVolume> blocks;
  auto block_id = [&](int bx, int by, int bz) {
    return bx + grid[0] * (by + grid[1] * bz);
  };
  for (int bz = 0; bz < grid[2]; ++bz)
    for (int by = 0; by < grid[1]; ++by)
      for (int bx = 0; bx < grid[0]; ++bx) {
        blocks.push_back(interpolate_on_greville(kv, [&](double u, double v, double w) {
          return warp(Eigen::Vector3d(bx + u, by + v, bz + w));
        }));
      }
  std::vector<InterfaceDecl> interfaces;
  for (int bz = 0; bz < grid[2]; ++bz)
    for (int by = 0; by < grid[1]; ++by)
      for (int bx = 0; bx < grid[0]; ++bx) {
        if (bx + 1 < grid[0])
          interfaces.push_back({{block_id(bx, by, bz), 1}, {block_id(bx + 1, by, bz), 0}, 0});
        if (by + 1 < grid[1])
          interfaces.push_back({{block_id(bx, by, bz), 3}, {block_id(bx, by + 1, bz), 2}, 0});
        if (bz + 1 < grid[2])
          interfaces.push_back({{block_id(bx, by, bz), 5}, {block_id(bx, by, bz + 1), 4}, 0});
      }
  enforce_conformity(blocks, interfaces);
  return MultiBlockVolume(std::move(blocks), std::move(interfaces));
}

MultiBlockVolume perturb_model(const MultiBlockVolume& model, double amplitude,
                               unsigned seed) {
  // Smooth position-dependent displacement keeps interfaces conforming
  // because shared control points coincide before and after.
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 2.5);
  const double fx = dist(rng), fy = dist(rng), fz = dist(rng);
  const double px = dist(rng), py = dist(rng), pz = dist(rng);
  std::vector<BSplineVolume> blocks;
  for (int b = 0; b < model.num_blocks(); ++b) {
    BSplineVolume vol = model.block(b);
    for (Eigen::Index r = 0; r < vol.num_ctrl_total(); ++r) {
      const Eigen::RowVector3d p = vol.control_points().row(r);
      vol.control_points().row(r) +=
          amplitude * Eigen::RowVector3d(std::sin(fx * p[1] + px) * std::cos(fz * p[2]),
                                         std::sin(fy * p[2] + py) * std::cos(fx * p[0]),
                                         std::sin(fz * p[0] + pz) * std::cos(fy * p[1]));
    }
    blocks.push_back(std::move(vol));
  }
  return MultiBlockVolume(std::move(blocks), model.interfaces());
}

}  // namespace qfiga
