// Parameterisation schemes and the shared nonlinear drivers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mp/control.hpp>
#include <mp/metrics.hpp>
#include <mp/samples.hpp>
#include <mp/solvers.hpp>

#include <cmath>

using namespace mp;

namespace {

SpacePtr uniform_space(const Quadrangulation& q, int degree, int refinements = 0) {
  auto topo = std::make_shared<Quadrangulation>(q);
  MultipatchSpace s = build_uniform_space(topo, degree, 1);
  for (int i = 0; i < refinements; ++i) s = refine_space(s);
  return std::make_shared<MultipatchSpace>(std::move(s));
}

// Max coefficient distance between a map and the exact affine image A xi + b.
double affine_coeff_error(const GeometryMap& x, const Matrix2d& A, const Vector2d& b) {
  const Quadrangulation& topo = *x.space->topo;
  double err = 0.0;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto gu = x.space->bases[p].kv_u.greville();
    const auto gv = x.space->bases[p].kv_v.greville();
    for (std::size_t iv = 0; iv < gv.size(); ++iv)
      for (std::size_t iu = 0; iu < gu.size(); ++iu) {
        const int d = x.space->dof_map[p][x.space->local_index(p, int(iu), int(iv))];
        const Vector2d want = A * topo.map_point(p, {gu[iu], gv[iv]}) + b;
        err = std::max(err, (x.coeffs.row(d).transpose() - want).norm());
      }
  }
  return err;
}

double sample_error_conformal(const GeometryMap& x) {
  double err = 0.0;
  for (int p = 0; p < x.space->topo->num_patches(); ++p)
    for (int i = 0; i <= 6; ++i)
      for (int j = 0; j <= 6; ++j) {
        const Vector2d mu(i / 6.0, j / 6.0);
        const Vector2d xi = x.space->topo->map_point(p, mu);
        err = std::max(err, (x.eval(p, mu, 0).x - samples::conformal_point(xi)).norm());
      }
  return err;
}

}  // namespace

TEST_CASE("elliptic coefficients at the identity and an affine stretch") {
  const EllipticCoefficients e0 = elliptic_coefficients(Matrix2d::Identity(), 0.0);
  CHECK((e0.A - Matrix2d::Identity()).norm() < 1e-15);
  CHECK(e0.gamma_mu == doctest::Approx(1.0).epsilon(1e-14));

  Matrix2d J;
  J << 2, 0, 0, 1;
  const EllipticCoefficients e = elliptic_coefficients(J, 0.0);
  CHECK(e.A(0, 0) == doctest::Approx(1.0));
  CHECK(e.A(1, 1) == doctest::Approx(4.0));
  CHECK(std::abs(e.A(0, 1)) < 1e-15);
  CHECK(e.gamma_mu == doctest::Approx(5.0 / 17.0).epsilon(1e-14));
  // det A = (det J)^2 and det C = det J.
  CHECK(e.A.determinant() == doctest::Approx(J.determinant() * J.determinant()));
  CHECK(e.C.determinant() == doctest::Approx(J.determinant()));
}

TEST_CASE("regularised determinant barrier") {
  const double eps = 1e-4;
  CHECK(kernels::reg_det(0.0, eps) == doctest::Approx(eps).epsilon(1e-14));
  const double rneg = kernels::reg_det(-10.0, eps);
  CHECK(rneg > 0.0);
  CHECK(rneg < eps);
  // R(x) R(-x) = eps^2.
  for (double x : {-3.0, -0.1, 0.0, 0.2, 5.0})
    CHECK(kernels::reg_det(x, eps) * kernels::reg_det(-x, eps) ==
          doctest::Approx(eps * eps).epsilon(1e-10));
}

TEST_CASE("forward Laplace reproduces identity and affine boundary data") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  const GeometryMap xid = forward_laplace(space, identity_correspondence(*space->topo));
  CHECK(affine_coeff_error(xid, Matrix2d::Identity(), Vector2d::Zero()) < 1e-10);

  Matrix2d A;
  A << 1, 0.8, 0, 1;
  const GeometryMap xa = forward_laplace(space, samples::affine_boundary(*space->topo, A));
  CHECK(affine_coeff_error(xa, A, Vector2d::Zero()) < 1e-10);
  CHECK(negative_jacobian_points(xa, 5) == 0);
}

TEST_CASE("forward Laplace folds over a concave corner") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 2);
  const GeometryMap x =
      forward_laplace(space, samples::chevron_boundary(*space->topo, 0.45));
  CHECK(negative_jacobian_points(x, 7) > 0);
}

TEST_CASE("C0-DG Newton recovers the identity immediately") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  SolveReport rep;
  const GeometryMap x = solve_c0dg(space, identity_correspondence(*space->topo),
                                   Linearisation::newton, {}, &rep);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
  CHECK(affine_coeff_error(x, Matrix2d::Identity(), Vector2d::Zero()) < 1e-10);
}

TEST_CASE("weak form and Winslow recover a sheared square") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  Matrix2d A;
  A << 1, 0.8, 0, 1;
  const BoundaryCorrespondence F = samples::affine_boundary(*space->topo, A);
  SolverConfig cfg;
  for (Scheme s : {Scheme::weakform, Scheme::winslow, Scheme::hessian, Scheme::rotfree}) {
    SolveReport rep;
    const GeometryMap x = solve_scheme(s, Linearisation::newton, space, F, cfg, &rep);
    CHECK(rep.converged);
    CHECK(affine_coeff_error(x, A, Vector2d::Zero()) < 1e-9);
  }
}

TEST_CASE("conformal target is recovered exactly for p = 2, beta = 0") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  auto space = std::make_shared<MultipatchSpace>(build_uniform_space(topo, 2, 1));
  const BoundaryCorrespondence F = samples::conformal_boundary(*space, 0.0);
  SolveReport rep;
  const GeometryMap x = solve_c0dg(space, F, Linearisation::newton, {}, &rep);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
  CHECK(sample_error_conformal(x) < 1e-10);
}

TEST_CASE("graded conformal boundary converges within the Newton budget at p = 3") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  MultipatchSpace coarse = build_uniform_space(topo, 3, 1);
  auto space = std::make_shared<MultipatchSpace>(refine_space(coarse));
  const BoundaryCorrespondence F = samples::conformal_boundary(*space, 0.8);
  SolveReport rep;
  const GeometryMap x = solve_c0dg(space, F, Linearisation::newton, {}, &rep);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 10);
  CHECK(negative_jacobian_points(x, 7) == 0);
}

TEST_CASE("Hessian recovery returns the analytic Hessian of the conformal map") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  auto space = std::make_shared<MultipatchSpace>(build_uniform_space(topo, 2, 2));
  const BoundaryCorrespondence F = samples::conformal_boundary(*space, 0.0);
  SolveReport rep;
  Eigen::MatrixXd H;
  const GeometryMap x =
      solve_hessian_recovery(space, F, Linearisation::newton, {}, &rep, &H);
  CHECK(rep.converged);
  CHECK(sample_error_conformal(x) < 1e-8);
  // Component i, entry (a, b) lives in column i*4 + 2a + b; the conformal
  // Hessians are the constants [[0.2,0],[0,-0.2]] and [[0,0.2],[0.2,0]].
  const double want[2][2][2] = {{{0.2, 0.0}, {0.0, -0.2}}, {{0.0, 0.2}, {0.2, 0.0}}};
  for (const Vector2d& mu : {Vector2d(0.3, 0.4), Vector2d(0.75, 0.2)})
    for (int i = 0; i < 2; ++i)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double v = eval_scalar(*space, H.col(i * 4 + 2 * a + b), 0, mu, 0).v;
          CHECK(std::abs(v - want[i][a][b]) < 1e-6);
        }
}

TEST_CASE("rotation-free recovery of an affine map is curl-free") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  Matrix2d A;
  A << 1, 0.8, 0, 1;
  SolveReport rep;
  const GeometryMap x =
      solve_rotation_free(space, samples::affine_boundary(*space->topo, A), {}, &rep);
  CHECK(rep.converged);
  CHECK(rep.curl_norm < 1e-10);
  CHECK(affine_coeff_error(x, A, Vector2d::Zero()) < 1e-8);
}

TEST_CASE("Winslow energy of the identity is twice the parametric area") {
  SpacePtr space = uniform_space(samples::square_4patch(), 2, 1);
  const GeometryMap id = identity_controlmap(space).map;
  CHECK(winslow_energy(id) == doctest::Approx(2.0).epsilon(1e-12));
  SolveReport rep;
  const GeometryMap x = minimise_winslow(id, {}, &rep);
  CHECK(rep.converged);
  CHECK((x.coeffs - id.coeffs).norm() < 1e-9);
}

TEST_CASE("Winslow energy is +infinity for a folded map") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  GeometryMap x = identity_controlmap(space).map;
  x.coeffs.col(0) *= -1.0;  // orientation-reversing
  CHECK(std::isinf(winslow_energy(x)));
}

TEST_CASE("Newton driver solves a scalar quadratic") {
  NonlinearProblem prob;
  prob.size = 1;
  prob.assemble = [](const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) {
    if (res) (*res)[0] = u[0] * u[0] - 4.0;
    if (jac) jac->emplace_back(0, 0, 2.0 * u[0]);
  };
  Eigen::VectorXd u(1);
  u << 3.0;
  const SolveReport rep = newton_driver(prob, u, {});
  CHECK(rep.converged);
  CHECK(rep.iterations <= 8);
  CHECK(u[0] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("line search rejects the full Newton step when it overshoots") {
  NonlinearProblem prob;
  prob.size = 1;
  prob.assemble = [](const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) {
    if (res) (*res)[0] = std::atan(u[0]);
    if (jac) jac->emplace_back(0, 0, 1.0 / (1.0 + u[0] * u[0]));
  };
  Eigen::VectorXd u(1);
  u << 3.0;
  const SolveReport rep = newton_driver(prob, u, {});
  CHECK(rep.converged);
  CHECK(std::abs(u[0]) < 1e-8);
  bool shrunk = false;
  for (const auto& r : rep.trace) shrunk = shrunk || r.step < 1.0;
  CHECK(shrunk);
}

TEST_CASE("fixed-point iteration also recovers the identity") {
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 1);
  SolveReport rep;
  const GeometryMap x = solve_c0dg(space, identity_correspondence(*space->topo),
                                   Linearisation::fixed_point, {}, &rep);
  CHECK(rep.converged);
  CHECK(affine_coeff_error(x, Matrix2d::Identity(), Vector2d::Zero()) < 1e-8);
}

TEST_CASE("epsilon-continued weak form untangles the concave corner") {
  // Cold start (forward Laplace) suffices on the coarsest space; finer levels
  // are reached by prolongation warm starts (see the refinement-study tests).
  SpacePtr space = uniform_space(samples::square_2patch(), 2, 0);
  const BoundaryCorrespondence F = samples::chevron_boundary(*space->topo, 0.45);
  SolveReport rep;
  const GeometryMap x0 = forward_laplace(space, F);
  GeometryMap x = solve_weak_form(x0, F, {}, &rep);
  CHECK(rep.converged);
  CHECK(negative_jacobian_points(x, 2 * 2 + 3) == 0);
  CHECK(std::isfinite(winslow_energy(x)));

  // One warm-started refinement stays nondegenerate.
  auto fine = std::make_shared<MultipatchSpace>(refine_space(*space));
  GeometryMap warm(fine, prolong_coeffs(*space, *fine, x.coeffs));
  SolveReport rep2;
  const GeometryMap x2 = solve_weak_form(warm, F, {}, &rep2);
  CHECK(rep2.converged);
  CHECK(negative_jacobian_points(x2, 2 * 2 + 3) == 0);
}

TEST_CASE("schemes agree with each other up to the discretisation increment") {
  auto topo = std::make_shared<Quadrangulation>(samples::square_1patch());
  std::vector<SpacePtr> spaces;
  spaces.push_back(std::make_shared<MultipatchSpace>(build_uniform_space(topo, 2, 1)));
  for (int l = 0; l < 2; ++l)
    spaces.push_back(std::make_shared<MultipatchSpace>(refine_space(*spaces.back())));

  const std::vector<Scheme> schemes{Scheme::c0dg, Scheme::hessian, Scheme::weakform};
  std::vector<std::vector<GeometryMap>> sol(schemes.size());
  double max_self = 0.0;
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    for (const SpacePtr& sp : spaces) {
      const BoundaryCorrespondence F = samples::conformal_boundary(*sp, 0.8);
      sol[s].push_back(solve_scheme(schemes[s], Linearisation::newton, sp, F));
    }
    max_self = std::max(max_self, h1_distance(sol[s][1], sol[s][2]));
  }
  for (std::size_t a = 0; a < schemes.size(); ++a)
    for (std::size_t b = a + 1; b < schemes.size(); ++b)
      CHECK(h1_distance(sol[a][2], sol[b][2]) < 5.0 * max_self);
}
