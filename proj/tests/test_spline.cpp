#include <doctest.h>

#include <random>

#include "qfiga/spline_volume.hpp"

using namespace qfiga;

namespace {

std::mt19937 rng(555);

double rand01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Identity-lattice control points reproduce the identity map exactly.
BSplineVolume identity_cube(const std::array<KnotVector, 3>& kv) {
  std::array<std::vector<double>, 3> g = {kv[0].greville(), kv[1].greville(),
                                          kv[2].greville()};
  ControlGrid ctrl(static_cast<Eigen::Index>(g[0].size()) * g[1].size() * g[2].size(), 3);
  Eigen::Index row = 0;
  for (double w : g[2])
    for (double v : g[1])
      for (double u : g[0]) ctrl.row(row++) = Eigen::RowVector3d(u, v, w);
  return BSplineVolume(kv, ctrl);
}

BSplineVolume random_volume(const std::array<KnotVector, 3>& kv, double amp = 0.15) {
  BSplineVolume v = identity_cube(kv);
  std::uniform_real_distribution<double> d(-amp, amp);
  for (Eigen::Index r = 0; r < v.control_points().rows(); ++r)
    v.control_points().row(r) += Eigen::RowVector3d(d(rng), d(rng), d(rng));
  return v;
}

}  // namespace

TEST_CASE("knot vector validation") {
  CHECK_THROWS_AS(KnotVector(3, {0, 0, 0, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(KnotVector(2, {0, 0, 0, 0.5, 0.4, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(KnotVector(2, {0, 0, 0.5, 1, 1, 1}), std::invalid_argument);  // unclamped
  CHECK_THROWS_AS(KnotVector(2, {0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1}), std::invalid_argument);
  const KnotVector kv(3, {0, 0, 0, 0, 0.5, 1, 1, 1, 1});
  CHECK(kv.num_basis() == 5);
  CHECK(kv.num_spans() == 2);
}

TEST_CASE("greville abscissae") {
  CHECK(KnotVector::bezier(3).greville() == std::vector<double>{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
  CHECK(KnotVector(1, {0, 0, 0.5, 1, 1}).greville() == std::vector<double>{0.0, 0.5, 1.0});
  const auto g = KnotVector(3, {0, 0, 0, 0, 0.5, 1, 1, 1, 1}).greville();
  const std::vector<double> expected = {0.0, 1.0 / 6.0, 0.5, 5.0 / 6.0, 1.0};
  REQUIRE(g.size() == expected.size());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-15));
}

TEST_CASE("greville interpolation residual") {
  // Collocation at greville sites reproduces functions inside the space.
  const KnotVector kv(3, {0, 0, 0, 0, 0.5, 1, 1, 1, 1});
  const auto g = kv.greville();
  // The linear function t is in every clamped spline space; its control
  // coefficients are exactly the greville abscissae.
  for (double t : {0.0, 0.21, 0.5, 0.77, 1.0}) {
    int first;
    Eigen::VectorXd vals;
    kv.basis(t, first, vals);
    double s = 0.0;
    for (int i = 0; i < vals.size(); ++i) s += vals[i] * g[first + i];
    CHECK(s == doctest::Approx(t).epsilon(1e-14));
  }
}

TEST_CASE("extraction operators") {
  SUBCASE("single element is the identity") {
    const auto ops = extraction_operators(KnotVector::bezier(3));
    REQUIRE(ops.size() == 1);
    CHECK((ops[0] - Eigen::MatrixXd::Identity(4, 4)).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("two elements validated pointwise") {
    const KnotVector kv(3, {0, 0, 0, 0, 0.5, 1, 1, 1, 1});
    const auto ops = extraction_operators(kv);
    REQUIRE(ops.size() == 2);
    for (int e = 0; e < 2; ++e) {
      const auto& span = kv.spans()[e];
      for (int pt = 0; pt < 20; ++pt) {
        const double local = (pt + 0.3) / 20.3;
        const double t = span.lo + local * (span.hi - span.lo);
        int first;
        Eigen::VectorXd vals;
        kv.basis(t, first, vals);
        CHECK(first == span.first_basis);
        const Eigen::VectorXd bern = bernstein_basis(3, local);
        const Eigen::VectorXd recon = ops[e] * bern;
        CHECK((recon - vals).lpNorm<Eigen::Infinity>() < 1e-12);
      }
    }
  }
  SUBCASE("three interior knots give four elements") {
    const KnotVector kv(3, {0, 0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1, 1});
    CHECK(extraction_operators(kv).size() == 4);
  }
}

TEST_CASE("extract_bezier geometry round-trip") {
  SUBCASE("single element: control points unchanged") {
    std::array<KnotVector, 3> kv = {KnotVector::bezier(3), KnotVector::bezier(3),
                                    KnotVector::bezier(3)};
    const BSplineVolume v = random_volume(kv);
    const auto elems = extract_bezier(v);
    REQUIRE(elems.size() == 1);
    CHECK((elems[0].ctrl - v.control_points()).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  SUBCASE("one direction refined thrice gives 4 elements") {
    std::array<KnotVector, 3> kv = {
        KnotVector(3, {0, 0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1, 1}),
        KnotVector::bezier(3), KnotVector::bezier(3)};
    const BSplineVolume v = random_volume(kv);
    CHECK(extract_bezier(v).size() == 4);
  }
  SUBCASE("2x2x2 random cubic volume matches parent at random points") {
    std::array<KnotVector, 3> kv = {KnotVector::uniform(3, 2), KnotVector::uniform(3, 2),
                                    KnotVector::uniform(3, 2)};
    const BSplineVolume v = random_volume(kv);
    const auto elems = extract_bezier(v);
    REQUIRE(elems.size() == 8);
    for (int pt = 0; pt < 200; ++pt) {
      const double u = rand01(), v1 = rand01(), w = rand01();
      // locate element
      const int eu = v.kv(0).find_element(u);
      const int ev = v.kv(1).find_element(v1);
      const int ew = v.kv(2).find_element(w);
      const auto& e = elems[eu + 2 * (ev + 2 * ew)];
      const Eigen::Vector3d lo = e.box_lo, hi = e.box_hi;
      const Eigen::Vector3d local((u - lo[0]) / (hi[0] - lo[0]),
                                  (v1 - lo[1]) / (hi[1] - lo[1]),
                                  (w - lo[2]) / (hi[2] - lo[2]));
      const Eigen::Vector3d a = v.evaluate(u, v1, w);
      const Eigen::Vector3d b = e.evaluate(local[0], local[1], local[2]);
      CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("h_refine preserves geometry") {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, 1), KnotVector::uniform(3, 2),
                                  KnotVector::uniform(3, 1)};
  SUBCASE("levels=0 is the identity") {
    const BSplineVolume v = random_volume(kv);
    const BSplineVolume r = h_refine(v, 0);
    CHECK((r.control_points() - v.control_points()).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("identity map stays the identity map") {
    const BSplineVolume v = identity_cube(kv);
    const BSplineVolume r = h_refine(v, 1);
    for (int pt = 0; pt < 100; ++pt) {
      const double u = rand01(), v1 = rand01(), w = rand01();
      CHECK((r.evaluate(u, v1, w) - Eigen::Vector3d(u, v1, w)).lpNorm<Eigen::Infinity>() < 1e-13);
    }
  }
  SUBCASE("random volume pointwise preserved, basis grows") {
    const BSplineVolume v = random_volume(kv);
    const BSplineVolume r = h_refine(v, 2);
    CHECK(r.num_ctrl(0) > v.num_ctrl(0));
    CHECK(r.num_ctrl(1) > v.num_ctrl(1));
    CHECK(r.num_ctrl(2) > v.num_ctrl(2));
    for (int pt = 0; pt < 100; ++pt) {
      const double u = rand01(), v1 = rand01(), w = rand01();
      CHECK((r.evaluate(u, v1, w) - v.evaluate(u, v1, w)).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("split_volume reproduces geometry on both sides") {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, 2), KnotVector::uniform(3, 2),
                                  KnotVector::uniform(3, 2)};
  const BSplineVolume v = random_volume(kv);
  const auto sides = split_volume(v, 1, 0.5);
  for (int pt = 0; pt < 60; ++pt) {
    const double u = rand01(), t = rand01(), w = rand01();
    CHECK((sides[0].evaluate(u, t, w) - v.evaluate(u, 0.5 * t, w)).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((sides[1].evaluate(u, t, w) - v.evaluate(u, 0.5 + 0.5 * t, w)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("multi-block dof map") {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, 2), KnotVector::uniform(3, 2),
                                  KnotVector::uniform(3, 2)};
  const BSplineVolume whole = random_volume(kv);
  const auto sides = split_volume(whole, 0, 0.5);
  // block 0 face u-max joins block 1 face u-min, axes aligned.
  MultiBlockVolume mb({sides[0], sides[1]}, {{{0, 1}, {1, 0}, 0}});
  const Eigen::Index per_face = static_cast<Eigen::Index>(sides[0].num_ctrl(1)) * sides[0].num_ctrl(2);
  CHECK(mb.num_dofs() == sides[0].num_ctrl_total() + sides[1].num_ctrl_total() - per_face);
  // remapping idempotence: shared face indices agree from both sides
  const FaceGrid fa = face_grid(sides[0], 1);
  const FaceGrid fb = face_grid(sides[1], 0);
  for (int t = 0; t < fa.size[1]; ++t)
    for (int s = 0; s < fa.size[0]; ++s) {
      const Eigen::Index la = fa.local[static_cast<std::size_t>(t) * fa.size[0] + s];
      const Eigen::Index lb = fb.local[map_face_index(fa, fb, 0, s, t)];
      CHECK(mb.global_dof(0, la) == mb.global_dof(1, lb));
    }
  CHECK(mb.exterior_faces().size() == 10);

  // non-conforming interfaces are rejected
  BSplineVolume moved = sides[1];
  moved.control_points().array() += 0.5;
  CHECK_THROWS_AS(MultiBlockVolume({sides[0], moved}, {{{0, 1}, {1, 0}, 0}}),
                  std::invalid_argument);
}

TEST_CASE("interpolate_on_greville reproduces spline maps") {
  std::array<KnotVector, 3> kv = {KnotVector::uniform(3, 2), KnotVector::uniform(3, 1),
                                  KnotVector::uniform(3, 2)};
  const BSplineVolume v = random_volume(kv);
  const BSplineVolume w = interpolate_on_greville(
      kv, [&](double a, double b, double c) { return v.evaluate(a, b, c); });
  CHECK((w.control_points() - v.control_points()).lpNorm<Eigen::Infinity>() < 1e-10);
}
