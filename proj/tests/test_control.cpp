// Controlmaps, diffusivity models, the diffusion/coupled solvers, boundary
// orthogonalisation and boundary layers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mp/control.hpp>
#include <mp/metrics.hpp>
#include <mp/samples.hpp>

#include <cmath>
#include <random>

using namespace mp;

namespace {

SpacePtr uniform_space(const Quadrangulation& q, int degree, int refinements = 0) {
  auto topo = std::make_shared<Quadrangulation>(q);
  MultipatchSpace s = build_uniform_space(topo, degree, 1);
  for (int i = 0; i < refinements; ++i) s = refine_space(s);
  return std::make_shared<MultipatchSpace>(std::move(s));
}

Vector2d tensor_eval(const TensorBasis& tb, const Eigen::MatrixX2d& c, const Vector2d& mu) {
  std::vector<double> bu, bv;
  const int fu = eval_basis(tb.kv_u, mu[0], 0, bu);
  const int fv = eval_basis(tb.kv_v, mu[1], 0, bv);
  Vector2d v = Vector2d::Zero();
  for (std::size_t j = 0; j < bv.size(); ++j)
    for (std::size_t i = 0; i < bu.size(); ++i)
      v += bu[i] * bv[j] * c.row(fu + int(i) + tb.nu() * (fv + int(j))).transpose();
  return v;
}

}  // namespace

TEST_CASE("interface-removal diffusivity from orthogonal tangents") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  // Patch tangents are (0.5, 0) and (0, 1).
  const Diffusivity Dn = diffusivity_interface_removal(topo, nullptr, true);
  const Diffusivity Dp = diffusivity_interface_removal(topo, nullptr, false);
  const Vector2d mu(0.3, 0.6);
  CHECK((eval_diffusivity(Dn, 0, mu) - Matrix2d::Identity()).norm() < 1e-14);
  Matrix2d want;
  want << 0.25, 0, 0, 1;
  CHECK((eval_diffusivity(Dp, 0, mu) - want).norm() < 1e-14);
}

TEST_CASE("interface-removal diffusivity of an affine controlmap") {
  SpacePtr space = uniform_space(samples::square_1patch(), 2);
  auto r = std::make_shared<ControlMap>(identity_controlmap(space));
  Matrix2d A;
  A << 2, 0, 0, 1;
  r->map.coeffs = r->map.coeffs * A.transpose();
  const Diffusivity Dp = diffusivity_interface_removal(space->topo, r, false);
  const Diffusivity Dn = diffusivity_interface_removal(space->topo, r, true);
  Matrix2d want;
  want << 4, 0, 0, 1;
  CHECK((eval_diffusivity(Dp, 0, {0.4, 0.7}) - want).norm() < 1e-12);
  CHECK((eval_diffusivity(Dn, 0, {0.4, 0.7}) - Matrix2d::Identity()).norm() < 1e-12);
}

TEST_CASE("normalised interface removal has trace 2 on a curved controlmap") {
  SpacePtr space = uniform_space(samples::square_1patch(), 2, 1);
  auto r = std::make_shared<ControlMap>(identity_controlmap(space));
  // Smooth interior perturbation keeps the controlmap nondegenerate.
  for (int d : space->interior_dofs) {
    const double x = r->map.coeffs(d, 0), y = r->map.coeffs(d, 1);
    r->map.coeffs(d, 0) += 0.05 * std::sin(3 * x + y);
    r->map.coeffs(d, 1) -= 0.04 * std::cos(2 * x - y);
  }
  const Diffusivity D = diffusivity_interface_removal(space->topo, r, true);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Matrix2d M = eval_diffusivity(D, 0, {uni(rng), uni(rng)});
    CHECK(std::abs(M.trace() - 2.0) < 1e-10);
    CHECK((M - M.transpose()).norm() < 1e-12);
  }
}

TEST_CASE("rank-one frame diffusivity") {
  const Diffusivity D1 =
      diffusivity_rank_one({{1, 0}}, {{0, 1}}, {1.0}, 0.0);
  CHECK((eval_diffusivity(D1, 0, {0.5, 0.5}) - Matrix2d::Identity()).norm() < 1e-14);

  const Diffusivity D3 = diffusivity_rank_one({{1, 0}}, {{0, 1}}, {3.0}, 0.0);
  const Matrix2d M = eval_diffusivity(D3, 0, {0.5, 0.5});
  CHECK(M(0, 0) == doctest::Approx(1.5));
  CHECK(M(1, 1) == doctest::Approx(0.5));
  CHECK(M.trace() == doctest::Approx(2.0));

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uni(0.1, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double a1 = uni(rng) * 6.28, a2 = a1 + 0.5 + uni(rng);
    const Diffusivity D = diffusivity_rank_one({{std::cos(a1), std::sin(a1)}},
                                               {{std::cos(a2), std::sin(a2)}},
                                               {uni(rng) * 3.0}, 0.0);
    const Eigen::SelfAdjointEigenSolver<Matrix2d> es(eval_diffusivity(D, 0, {0.5, 0.5}));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("degenerate rank-one frames are rejected") {
  CHECK_THROWS_AS(
      [] {
        const Diffusivity D =
            diffusivity_rank_one({{1, 0}}, {{1, 0}}, {2.0}, 0.0);
        return eval_diffusivity(D, 0, {0.5, 0.5});
      }(),
      Error);
}

TEST_CASE("boundary-layer diffusivity values") {
  auto topo = std::make_shared<Quadrangulation>(samples::hexagon_3patch());
  const Diffusivity D = diffusivity_boundary_layer(topo, 30.0, 2.0, 0.005);
  // Patch corner (0,0) maps to the origin.
  CHECK((eval_diffusivity(D, 0, {0, 0}) - 0.005 * Matrix2d::Identity()).norm() < 1e-14);
  // Patch 0 corner slot 1 is the hexagon vertex (1, 0).
  const Matrix2d M = eval_diffusivity(D, 0, {1, 0});
  CHECK(M(0, 0) == doctest::Approx(1.0 - std::exp(-30.0) + 0.005).epsilon(1e-12));
  CHECK(M(1, 1) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(std::abs(M(0, 1)) < 1e-14);
  CHECK_THROWS_AS(diffusivity_boundary_layer(topo, 30.0, 2.0, 0.0), Error);
}

TEST_CASE("vertex regularisation blends discontinuous patch limits") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  // Patch 0 carries I, patch 1 carries diag(1.5, 0.5).
  const Diffusivity inner = diffusivity_rank_one({{1, 0}, {1, 0}}, {{0, 1}, {0, 1}},
                                                 {1.0, 3.0}, 0.0);
  const Diffusivity D = regularise_vertex(inner, 9.0, topo);
  REQUIRE(D.blend != nullptr);
  CHECK(D.blend->entries.size() == 2);  // (0.5,0) and (0.5,1)

  // Partition of unity at every vertex centre.
  for (const auto& ej : D.blend->entries) {
    double sum = 0.0;
    for (const auto& ei : D.blend->entries) {
      const double r = (ej.centre - ei.centre).norm() * D.blend->kappa / ei.d_min;
      sum += ei.amplitude * std::exp(-r * r);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  Matrix2d avg;
  avg << 1.25, 0, 0, 0.75;
  // Single-valued blended limit at the shared vertex, from both sides.
  const Matrix2d M0 = eval_diffusivity(D, 0, {1.0, 0.0});  // patch 0 corner at (0.5, 0)
  const Matrix2d M1 = eval_diffusivity(D, 1, {0.0, 0.0});  // patch 1 corner at (0.5, 0)
  CHECK((M0 - M1).norm() < 1e-10);
  CHECK((M0 - avg).norm() < 1e-9);

  // Far from the vertices the inner model is recovered.
  const Matrix2d Mfar = eval_diffusivity(D, 0, {0.5, 0.5});
  CHECK((Mfar - Matrix2d::Identity()).norm() < 1e-8);
}

TEST_CASE("continuous diffusivity is unchanged by vertex regularisation") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_2patch());
  const Diffusivity D = regularise_vertex(diffusivity_identity(), 9.0, topo);
  for (const Vector2d& mu : {Vector2d(1.0, 0.0), Vector2d(0.2, 0.9), Vector2d(0.5, 0.5)})
    CHECK((eval_diffusivity(D, 0, mu) - Matrix2d::Identity()).norm() < 1e-12);
}

TEST_CASE("identity diffusion yields the identity controlmap") {
  SpacePtr space = uniform_space(samples::square_4patch(), 2, 1);
  const Eigen::MatrixX2d id = identity_controlmap(space).map.coeffs;
  const ControlMap s = solve_control_diffusion(space, diffusivity_identity());
  CHECK((s.map.coeffs - id).norm() < 1e-10);
  CHECK(s.identity_boundary);

  // A constant scalar factor drops out of the linear system.
  Diffusivity Dc = diffusivity_rank_one(
      std::vector<Vector2d>(4, {1, 0}), std::vector<Vector2d>(4, {0, 1}),
      std::vector<double>(4, 1.0), 0.0);
  const ControlMap s2 = solve_control_diffusion(space, Dc);
  CHECK((s2.map.coeffs - id).norm() < 1e-10);
}

TEST_CASE("interface removal flattens the covering kink of the 4-patch square") {
  SpacePtr space = uniform_space(samples::square_4patch({0.6, 0.6}), 2, 1);
  const GeometryMap id = identity_controlmap(space).map;
  const double L_id = quality_report(id).interface_jump;
  CHECK(L_id > 0.1);  // the displaced interior vertex creates a genuine kink

  auto ref = std::make_shared<const ControlMap>(identity_controlmap(space));
  const Diffusivity D = diffusivity_interface_removal(space->topo, ref, true);
  const ControlMap s = solve_control_diffusion(space, D);
  const double L_s = quality_report(s.map).interface_jump;
  CHECK(L_s < 0.5 * L_id);
}

TEST_CASE("coupled solve with identity diffusivities returns the reference tuple") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  const ControlMap r = identity_controlmap(space);
  SolveReport rep;
  const auto [x, s] = solve_coupled(r.map, r, diffusivity_identity(),
                                    diffusivity_identity(), {}, &rep);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  CHECK((x.coeffs - r.map.coeffs).norm() < 1e-10);
  CHECK((s.map.coeffs - r.map.coeffs).norm() < 1e-10);
}

TEST_CASE("homogenisation at unit cell size leaves the identity fixed") {
  SpacePtr space = uniform_space(samples::square_1patch(), 2, 1);
  const ControlMap r = identity_controlmap(space);
  // det d_mu x = 1 everywhere, so sigma^k I = I for every k.
  const auto [x, s] =
      solve_coupled(r.map, r, diffusivity_identity(), diffusivity_homogenisation(2.0, false));
  CHECK((x.coeffs - r.map.coeffs).norm() < 1e-9);
  CHECK((s.map.coeffs - r.map.coeffs).norm() < 1e-9);
}

TEST_CASE("constant monitor adaptation leaves the identity fixed") {
  SpacePtr space = uniform_space(samples::square_1patch(), 2, 1);
  const ControlMap r = identity_controlmap(space);
  MonitorField f;
  f.value = [](const Vector2d&) { return 0.0; };  // sigma = 1/nu2 = 100, constant
  const auto [x, s] = solve_coupled(r.map, r, diffusivity_identity(),
                                    diffusivity_adaptation(f, 1.0, 0.01, 1.0));
  CHECK((x.coeffs - r.map.coeffs).norm() < 1e-9);
  CHECK((s.map.coeffs - r.map.coeffs).norm() < 1e-9);
}

TEST_CASE("controlled weak form with the identity controlmap matches the plain solve") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 0);
  const BoundaryCorrespondence F = samples::chevron_boundary(*space->topo, 0.45);
  const GeometryMap x0 = forward_laplace(space, F);
  const GeometryMap plain = solve_weak_form(x0, F);
  const ControlMap id = identity_controlmap(space);
  const GeometryMap ctrl = solve_weak_form_controlled(x0, id, diffusivity_identity());
  CHECK((plain.coeffs - ctrl.coeffs).norm() < 1e-12);
}

TEST_CASE("map recomputation under the identity controlmap is a fixed point") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 0);
  const BoundaryCorrespondence F = samples::chevron_boundary(*space->topo, 0.45);
  const GeometryMap x = solve_weak_form(forward_laplace(space, F), F);
  const GeometryMap xs = reparameterise_map(x, identity_controlmap(space));
  CHECK((xs.coeffs - x.coeffs).norm() < 1e-8);
}

TEST_CASE("boundary orthogonalisation of an orthogonal reference is the identity") {
  SpacePtr space = uniform_space(samples::square_5patch_frame(0.3), 3, 1);
  const GeometryMap id = identity_controlmap(space).map;
  for (OrthVariant v : {OrthVariant::q, OrthVariant::t}) {
    const ControlMap s = boundary_orth_controlmap(id, v);
    CHECK((s.map.coeffs - id.coeffs).norm() < 1e-8);
  }
}

TEST_CASE("t-variant orthogonalisation requires degree >= 3") {
  SpacePtr space = uniform_space(samples::square_5patch_frame(0.3), 2, 1);
  const GeometryMap id = identity_controlmap(space).map;
  CHECK_THROWS_AS(boundary_orth_controlmap(id, OrthVariant::t), Error);
}

TEST_CASE("Coons patch reproduces bilinear and biquadratic data") {
  const Vector2d c0(0, 0), c1(2, 0), c2(2.6, 1.7), c3(0.4, 1.3);
  const auto bilin = [&](const Vector2d& mu) {
    const double u = mu[0], v = mu[1];
    return Vector2d((1 - u) * (1 - v) * c0 + u * (1 - v) * c1 + u * v * c2 +
                    (1 - u) * v * c3);
  };
  TensorBasis tb{make_open_knot_vector(1, {}), make_open_knot_vector(1, {})};
  const std::array<Curve, 4> edges{
      samples::interpolate_curve(1, {}, [&](double t) { return bilin({t, 0}); }),
      samples::interpolate_curve(1, {}, [&](double t) { return bilin({1, t}); }),
      samples::interpolate_curve(1, {}, [&](double t) { return bilin({t, 1}); }),
      samples::interpolate_curve(1, {}, [&](double t) { return bilin({0, t}); })};
  const Eigen::MatrixX2d c = coons_patch(edges, tb);
  for (int i = 0; i <= 7; ++i)
    for (int j = 0; j <= 7; ++j) {
      const Vector2d mu(i / 7.0, j / 7.0);
      CHECK((tensor_eval(tb, c, mu) - bilin(mu)).norm() < 1e-12);
    }

  const auto biq = [](const Vector2d& mu) {
    const double u = mu[0], v = mu[1];
    return Vector2d(u + 0.3 * u * u - 0.2 * v * v + 0.1 * u * v,
                    v + 0.25 * v * v + 0.15 * u * u - 0.2 * u * v);
  };
  TensorBasis tb2{make_open_knot_vector(2, {}), make_open_knot_vector(2, {})};
  const std::array<Curve, 4> edges2{
      samples::interpolate_curve(2, {}, [&](double t) { return biq({t, 0}); }),
      samples::interpolate_curve(2, {}, [&](double t) { return biq({1, t}); }),
      samples::interpolate_curve(2, {}, [&](double t) { return biq({t, 1}); }),
      samples::interpolate_curve(2, {}, [&](double t) { return biq({0, t}); })};
  const Eigen::MatrixX2d cc2 = coons_patch(edges2, tb2);
  for (int k = 0; k <= 50; ++k) {
    const double t = k / 50.0;
    CHECK((tensor_eval(tb2, cc2, {t, 0.0}) - biq({t, 0})).norm() < 1e-12);
    CHECK((tensor_eval(tb2, cc2, {t, 1.0}) - biq({t, 1})).norm() < 1e-12);
    CHECK((tensor_eval(tb2, cc2, {0.0, t}) - biq({0, t})).norm() < 1e-12);
    CHECK((tensor_eval(tb2, cc2, {1.0, t}) - biq({1, t})).norm() < 1e-12);
  }
  for (int i = 0; i <= 5; ++i)
    for (int j = 0; j <= 5; ++j) {
      const Vector2d mu(i / 5.0, j / 5.0);
      CHECK((tensor_eval(tb2, cc2, mu) - biq(mu)).norm() < 1e-11);
    }
}

TEST_CASE("corner-mismatched Coons input is rejected") {
  TensorBasis tb{make_open_knot_vector(1, {}), make_open_knot_vector(1, {})};
  auto line = [](const Vector2d& a, const Vector2d& b) {
    return samples::interpolate_curve(1, {}, [&](double t) { return Vector2d(a + t * (b - a)); });
  };
  const std::array<Curve, 4> edges{line({0, 0}, {1, 0}), line({1, 0}, {1, 1}),
                                   line({0, 1.5}, {1, 1}), line({0, 0}, {0, 1})};
  CHECK_THROWS_AS(coons_patch(edges, tb), Error);
}

TEST_CASE("layer profile slope limits") {
  CHECK(layer_slope(1e-12) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(layer_slope(10.0) == doctest::Approx(10.0 / (std::exp(10.0) - 1.0)).epsilon(1e-12));
  // The small-argument and large-argument branches join continuously.
  for (double d : {1e-5, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0})
    CHECK(layer_slope(d) == doctest::Approx(d / std::expm1(d)).epsilon(1e-10));
}

TEST_CASE("mean boundary speed of the identity map is 1") {
  SpacePtr space = uniform_space(samples::square_1patch(), 2, 1);
  CHECK(mean_boundary_speed(identity_controlmap(space).map) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching layer target produces no layer") {
  SpacePtr space = uniform_space(samples::square_5patch_frame(0.3), 3, 1);
  const GeometryMap id = identity_controlmap(space).map;
  ControlMap s_orth = boundary_orth_controlmap(id, OrthVariant::q);
  // Transverse boundary derivative is the frame inset 0.3 everywhere; asking
  // for exactly that thickness leaves the controlmap (numerically) unchanged.
  const ControlMap s = boundary_layer_orthogonal(id, s_orth, 0.3);
  double dmax = 0.0;
  for (int p = 0; p < space->topo->num_patches(); ++p)
    for (int i = 0; i <= 5; ++i)
      for (int j = 0; j <= 5; ++j) {
        const Vector2d mu(i / 5.0, j / 5.0);
        dmax = std::max(dmax, (s.map.eval(p, mu, 0).x - s_orth.map.eval(p, mu, 0).x).norm());
      }
  CHECK(dmax < 1e-2);
}

TEST_CASE("L2 projection reproduces representable maps") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  const Quadrangulation& topo = *space->topo;
  const auto f = [&](int p, const Vector2d& mu) {
    const Vector2d xi = topo.map_point(p, mu);
    return Vector2d(xi[0] * xi[0] + xi[1], xi[0] - 0.5 * xi[1] * xi[1]);
  };
  const GeometryMap g = l2_project_map(space, f);
  for (int p = 0; p < topo.num_patches(); ++p)
    for (int i = 0; i <= 4; ++i)
      for (int j = 0; j <= 4; ++j) {
        const Vector2d mu(i / 4.0, j / 4.0);
        CHECK((g.eval(p, mu, 0).x - f(p, mu)).norm() < 1e-11);
      }
}
