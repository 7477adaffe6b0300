#include <algorithm>
#include <stdexcept>

#include "qfiga/reuse_cache.hpp"

namespace qfiga {

CollocationSystem CollocationSystem::build(
    const MultiBlockVolume& domain, const std::vector<FaceRef>& dirichlet_faces) {
  CollocationSystem sys;
  // Reject interface faces: the boundary selector must be exterior.
  for (const FaceRef& f : dirichlet_faces) {
    if (f.block < 0 || f.block >= domain.num_blocks() || f.face < 0 || f.face > 5) {
      throw std::invalid_argument("dirichlet face out of range");
    }
    for (const InterfaceDecl& itf : domain.interfaces()) {
      if ((itf.a.block == f.block && itf.a.face == f.face) ||
          (itf.b.block == f.block && itf.b.face == f.face)) {
        throw std::invalid_argument("dirichlet face " + std::to_string(f.block) + "/" +
                                    std::to_string(f.face) + " is an interface face");
      }
    }
  }

  // One Greville site per boundary DOF, claimed by the first face that owns it.
  std::map<int, CollocationSite> site_of;
  for (const FaceRef& f : dirichlet_faces) {
    const BSplineVolume& vol = domain.block(f.block);
    const FaceGrid grid = face_grid(vol, f.face);
    const int normal_dir = f.face / 2;
    const double normal_val = f.face % 2 == 1 ? 1.0 : 0.0;
    const std::vector<double> g0 = vol.kv(grid.dirs[0]).greville();
    const std::vector<double> g1 = vol.kv(grid.dirs[1]).greville();
    for (int t = 0; t < grid.size[1]; ++t) {
      for (int s = 0; s < grid.size[0]; ++s) {
        const Eigen::Index local = grid.local[static_cast<std::size_t>(t) * grid.size[0] + s];
        const int dof = domain.global_dof(f.block, local);
        if (site_of.count(dof)) continue;
        CollocationSite site;
        site.block = f.block;
        site.uvw[normal_dir] = normal_val;
        site.uvw[grid.dirs[0]] = g0[static_cast<std::size_t>(s)];
        site.uvw[grid.dirs[1]] = g1[static_cast<std::size_t>(t)];
        site_of.emplace(dof, site);
      }
    }
  }
  sys.boundary_dofs_.reserve(site_of.size());
  sys.sites_.reserve(site_of.size());
  for (const auto& [dof, site] : site_of) {
    sys.boundary_dofs_.push_back(dof);
    sys.sites_.push_back(site);
  }

  std::map<int, int> dof_to_row;
  for (std::size_t i = 0; i < sys.boundary_dofs_.size(); ++i) {
    dof_to_row[sys.boundary_dofs_[i]] = static_cast<int>(i);
  }

  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < sys.sites_.size(); ++i) {
    const CollocationSite& site = sys.sites_[i];
    const BSplineVolume& vol = domain.block(site.block);
    int first[3];
    Eigen::VectorXd vals[3];
    for (int d = 0; d < 3; ++d) vol.kv(d).basis(site.uvw[d], first[d], vals[d]);
    for (int c = 0; c < vals[2].size(); ++c) {
      for (int b = 0; b < vals[1].size(); ++b) {
        for (int a = 0; a < vals[0].size(); ++a) {
          const double value = vals[0][a] * vals[1][b] * vals[2][c];
          if (std::abs(value) < 1e-14) continue;
          const Eigen::Index local =
              vol.flat(first[0] + a, first[1] + b, first[2] + c);
          const int dof = domain.global_dof(site.block, local);
          const auto it = dof_to_row.find(dof);
          if (it == dof_to_row.end()) {
            // A function that is nonzero at a boundary site but is not a
            // boundary DOF cannot happen on clamped knot vectors.
            throw std::logic_error("collocation: interior function active on the boundary");
          }
          trips.emplace_back(static_cast<int>(i), it->second, value);
        }
      }
    }
  }
  const int n = static_cast<int>(sys.boundary_dofs_.size());
  sys.matrix_.resize(n, n);
  sys.matrix_.setFromTriplets(trips.begin(), trips.end());
  return sys;
}

CollocationSystem CollocationSystem::from_parts(
    std::vector<int> boundary_dofs, std::vector<CollocationSite> sites, int n,
    const std::vector<Eigen::Triplet<double>>& triplets) {
  CollocationSystem sys;
  sys.boundary_dofs_ = std::move(boundary_dofs);
  sys.sites_ = std::move(sites);
  sys.matrix_.resize(n, n);
  sys.matrix_.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

void CollocationSystem::factorize() {
  if (lu_) return;
  lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  lu_->compute(matrix_);
  if (lu_->info() != Eigen::Success) {
    throw std::runtime_error("collocation matrix is singular; check the site layout");
  }
  ++factorizations_;
}

Eigen::VectorXd CollocationSystem::solve_boundary_values(
    const MultiBlockVolume& geometry,
    const std::function<double(const Eigen::Vector3d&)>& t0) const {
  if (!lu_) {
    throw std::logic_error("collocation system not factorized");
  }
  Eigen::VectorXd h(static_cast<Eigen::Index>(sites_.size()));
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const CollocationSite& s = sites_[i];
    const Eigen::Vector3d x =
        geometry.block(s.block).evaluate(s.uvw[0], s.uvw[1], s.uvw[2]);
    h[static_cast<Eigen::Index>(i)] = t0(x);
  }
  return lu_->solve(h);
}

}  // namespace qfiga
