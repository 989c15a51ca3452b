// Quadrangulation topology, bilinear patch maps, and the C0-matched
// multipatch spline space.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mp/map.hpp>
#include <mp/samples.hpp>

#include <random>

using namespace mp;

namespace {

int boundary_edge_count(const Quadrangulation& q) {
  int n = 0;
  for (const auto& side : q.sides) n += static_cast<int>(side.size());
  return n;
}

}  // namespace

TEST_CASE("single-patch square incidence") {
  const Quadrangulation q = samples::square_1patch();
  CHECK(q.num_patches() == 1);
  CHECK(q.interior_facets.size() == 0);
  CHECK(boundary_edge_count(q) == 4);
}

TEST_CASE("two-patch square incidence") {
  const Quadrangulation q = samples::square_2patch();
  CHECK(q.num_patches() == 2);
  CHECK(q.interior_facets.size() == 1);
  CHECK(boundary_edge_count(q) == 6);
}

TEST_CASE("Euler characteristic of all bundled coverings is 1") {
  for (const Quadrangulation& q :
       {samples::square_1patch(), samples::square_2patch(), samples::square_4patch(),
        samples::rect_6patch_irregular(), samples::square_5patch_frame(0.3),
        samples::hexagon_3patch()}) {
    const int V = static_cast<int>(q.vertices.size());
    const int E = static_cast<int>(q.interior_facets.size()) + boundary_edge_count(q);
    const int F = q.num_patches();
    CHECK(V - E + F == 1);
  }
}

TEST_CASE("bilinear patch map on the unit square is the identity") {
  const Quadrangulation q = samples::square_1patch();
  const Vector2d mu(0.3, 0.7);
  CHECK((q.map_point(0, mu) - mu).norm() < 1e-15);
  CHECK((q.map_jacobian(0, mu) - Matrix2d::Identity()).norm() < 1e-15);
}

TEST_CASE("bilinear patch map of a 2x1 rectangle") {
  RawTopology raw;
  raw.vertices = {{0, 0}, {2, 0}, {2, 1}, {0, 1}};
  raw.patches = {{0, 1, 2, 3}};
  raw.sides = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  const Quadrangulation q = build_topology(raw);
  const Vector2d mu(0.5, 0.5);
  CHECK((q.map_point(0, mu) - Vector2d(1.0, 0.5)).norm() < 1e-15);
  Matrix2d D;
  D << 2, 0, 0, 1;
  CHECK((q.map_jacobian(0, mu) - D).norm() < 1e-15);
}

TEST_CASE("bicubic single-patch space dimensions") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  const MultipatchSpace s = build_uniform_space(topo, 3, 1);
  CHECK(s.dim == 16);
  CHECK(s.boundary_dofs.size() == 12);
  CHECK(s.interior_dofs.size() == 4);
}

TEST_CASE("two-patch bilinear space glues shared facet dofs") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  const MultipatchSpace s = build_uniform_space(topo, 1, 1);
  CHECK(s.dim == 6);
}

TEST_CASE("global basis forms a partition of unity") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_4patch());
  const MultipatchSpace s = build_uniform_space(topo, 2, 2);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.dim);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const int p = k % s.topo->num_patches();
    const ScalarJet j = eval_scalar(s, ones, p, {uni(rng), uni(rng)}, 1);
    CHECK(std::abs(j.v - 1.0) < 1e-12);
    CHECK(j.grad.norm() < 1e-10);
  }
}

TEST_CASE("C0 conformity of random fields across interior facets") {
  auto topo = std::make_shared<Quadrangulation>(samples::rect_6patch_irregular());
  const MultipatchSpace s = build_uniform_space(topo, 3, 2);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXd c(s.dim);
  for (int i = 0; i < c.size(); ++i) c[i] = uni(rng);
  for (const auto& f : s.topo->interior_facets) {
    for (int k = 0; k < 20; ++k) {
      const double t = (k + 0.5) / 20.0;
      const Vector2d mi = edge_mu(f.ei, t);
      const Vector2d mj = edge_mu(f.ej, f.flip ? 1.0 - t : t);
      // Same parametric point seen from both patches.
      CHECK((s.topo->map_point(f.pi, mi) - s.topo->map_point(f.pj, mj)).norm() < 1e-12);
      const double vi = eval_scalar(s, c, f.pi, mi, 0).v;
      const double vj = eval_scalar(s, c, f.pj, mj, 0).v;
      CHECK(std::abs(vi - vj) < 1e-12);
    }
  }
}

TEST_CASE("dirichlet lift reproduces the boundary correspondence") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  const MultipatchSpace s = build_uniform_space(topo, 2, 2);
  const BoundaryCorrespondence F = samples::sheared_boundary(*topo, 0.8);
  const Eigen::MatrixX2d c = dirichlet_lift(s, F);
  const GeometryMap x(std::make_shared<MultipatchSpace>(s), c);
  for (const auto& side : topo->sides)
    for (const auto& be : side)
      for (int k = 0; k <= 50; ++k) {
        const double u = k / 50.0;
        const double t = be.t0 + u * (be.t1 - be.t0);
        const Vector2d got = x.eval(be.patch, edge_mu(be.edge, u), 0).x;
        const Vector2d want = F.sides[be.side].eval(t);
        CHECK((got - want).norm() < 1e-11);
      }
}

TEST_CASE("quadratic side data lifts exactly into a cubic trace space") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  const MultipatchSpace s = build_uniform_space(topo, 3, 1);
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < topo->sides.size(); ++k) {
    const Vector2d a = topo->side_start(k), b = topo->side_end(k);
    F.sides.push_back(samples::interpolate_curve(2, {}, [&](double t) {
      return Vector2d(a + t * (b - a) + 0.1 * t * (1.0 - t) * Vector2d(1.0, -1.0));
    }));
  }
  const Eigen::MatrixX2d c = dirichlet_lift(s, F);
  const GeometryMap x(std::make_shared<MultipatchSpace>(s), c);
  for (const auto& side : topo->sides)
    for (const auto& be : side)
      for (int k = 0; k <= 20; ++k) {
        const double u = k / 20.0;
        const double t = be.t0 + u * (be.t1 - be.t0);
        CHECK((x.eval(be.patch, edge_mu(be.edge, u), 0).x - F.sides[be.side].eval(t)).norm() <
              1e-11);
      }
}

TEST_CASE("incompatible boundary data is rejected") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  const MultipatchSpace s = build_uniform_space(topo, 1, 1);  // bilinear trace space
  BoundaryCorrespondence F;
  for (std::size_t k = 0; k < topo->sides.size(); ++k) {
    const Vector2d a = topo->side_start(k), b = topo->side_end(k);
    // Quadratic bulge not representable by a linear trace.
    F.sides.push_back(samples::interpolate_curve(2, {}, [&](double t) {
      return Vector2d(a + t * (b - a) + 0.3 * t * (1.0 - t) * Vector2d(1.0, 1.0));
    }));
  }
  CHECK_THROWS_AS(dirichlet_lift(s, F), Error);
}

TEST_CASE("nonmanifold connectivity is rejected") {
  RawTopology raw;
  raw.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, -1}, {1, -1}, {2, 0}, {2, 1}};
  // The edge 0-1 is used by three patches.
  raw.patches = {{0, 1, 2, 3}, {4, 5, 1, 0}, {1, 0, 6, 7}};
  raw.sides = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  CHECK_THROWS_AS(build_topology(raw), Error);
}

TEST_CASE("shared vertices and separation distances") {
  const Quadrangulation q = samples::square_4patch({0.6, 0.6});
  const VertexSet vs = shared_vertices(q);
  // Four boundary-side midpoints and the displaced interior vertex.
  CHECK(vs.entries.size() == 5);
  bool found_interior = false;
  for (const auto& e : vs.entries) {
    CHECK(e.d_min > 0.0);
    if ((q.vertices[e.vertex] - Vector2d(0.6, 0.6)).norm() < 1e-14) {
      found_interior = true;
      CHECK(e.patch_corners.size() == 4);
    }
  }
  CHECK(found_interior);
}

TEST_CASE("dyadic space refinement doubles the span counts") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  const MultipatchSpace s = build_uniform_space(topo, 2, 1);
  const MultipatchSpace f = refine_space(s);
  for (int p = 0; p < topo->num_patches(); ++p) {
    CHECK(f.bases[p].kv_u.span_count() == 2 * s.bases[p].kv_u.span_count());
    CHECK(f.bases[p].kv_v.span_count() == 2 * s.bases[p].kv_v.span_count());
  }
  CHECK(f.dim > s.dim);
}
