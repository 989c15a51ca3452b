// Quadrature, kernel-based assembly, Dirichlet elimination, sparse solves and
// the dual-number Jacobian machinery.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mp/assembly.hpp>
#include <mp/samples.hpp>

#include <cmath>
#include <random>

using namespace mp;

namespace {

struct ScalarSystem {
  SpacePtr space;
  SystemSpec spec;
  StateLayout layout;

  explicit ScalarSystem(SpacePtr s, bool fix_boundary = false) : space(std::move(s)) {
    FieldDef f;
    f.space = space.get();
    f.ncomp = 1;
    f.ders = kVal | kGrad;
    if (fix_boundary) {
      f.fixed.assign(space->dim, 0);
      for (int d : space->boundary_dofs) f.fixed[d] = 1;
    }
    spec.fields = {f};
    spec.finalize();
    layout = StateLayout::make(spec);
  }
};

// Residual / Jacobian of the Poisson operator  int grad u . grad phi - f phi.
template <int N>
void assemble_poisson(const ScalarSystem& sys, const Eigen::VectorXd& u, int q,
                      const std::function<double(const Vector2d&)>& source,
                      Eigen::VectorXd* res, TripletVec* jac) {
  auto kern = [&sys, &source](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    const double det = ctx.pframe.det;
    const Vec2T<T> g = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, 0));
    T fval(0.0);
    if (source) fval = T(-det * source(sys.space->topo->map_point(ctx.patch, ctx.mu)));
    add_test_frame<T>(ctx.test, ctx.pframe, 0, 0, fval, {T(det) * g.x, T(det) * g.y}, {},
                      false);
  };
  assemble_volume<N>(sys.spec, sys.layout, u, q, kern, res, jac);
  finalize_system(sys.spec, res, jac);
}

// Nonlinear diffusion  int (1 + u^2) grad u . grad phi + u^3 phi.
template <int N>
void assemble_nonlinear(const ScalarSystem& sys, const Eigen::VectorXd& u, int q,
                        Eigen::VectorXd* res, TripletVec* jac) {
  auto kern = [](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    const double det = ctx.pframe.det;
    const T v = ctx.state.val(0, 0);
    const T c = T(det) * (T(1.0) + v * v);
    const Vec2T<T> g = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, 0));
    add_test_frame<T>(ctx.test, ctx.pframe, 0, 0, T(det) * v * v * v, {c * g.x, c * g.y},
                      {}, false);
  };
  assemble_volume<N>(sys.spec, sys.layout, u, q, kern, res, jac);
  finalize_system(sys.spec, res, jac);
}

// Nonlinear gradient-jump facet penalty  int_f [[grad u . n]]^3 [[grad phi . n]].
template <int N>
void assemble_jump(const ScalarSystem& sys, const Eigen::VectorXd& u, int q,
                   Eigen::VectorXd* res, TripletVec* jac) {
  auto kern = [](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state_i.val(0, 0))>;
    const Vec2T<T> gi = grad_in_frame(ctx.frame_i, ctx.state_i.grad_mu(0, 0));
    const Vec2T<T> gj = grad_in_frame(ctx.frame_j, ctx.state_j.grad_mu(0, 0));
    const Vec2T<T> n{T(ctx.normal[0]), T(ctx.normal[1])};
    const T jump = (gi - gj).dot(n);
    const T w = T(ctx.edge_len) * jump * jump * jump;
    add_test_frame<T>(ctx.test_i, ctx.frame_i, 0, 0, T(0.0), {w * n.x, w * n.y}, {}, false);
    add_test_frame<T>(ctx.test_j, ctx.frame_j, 0, 0, T(0.0),
                      {T(-1.0) * w * n.x, T(-1.0) * w * n.y}, {}, false);
  };
  assemble_interior_facets<N>(sys.spec, sys.layout, u, q, kern, res, jac);
  finalize_system(sys.spec, res, jac);
}

Eigen::SparseMatrix<double> to_sparse(const TripletVec& t, int n) {
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

SpacePtr uniform_space(const Quadrangulation& q, int degree, int spans) {
  auto topo = std::make_shared<Quadrangulation>(q);
  return std::make_shared<MultipatchSpace>(build_uniform_space(topo, degree, spans));
}

double l2_error(const MultipatchSpace& s, const Eigen::VectorXd& u,
                const std::function<double(const Vector2d&)>& exact) {
  const Quad1D& g = gauss_legendre(6);
  double acc = 0.0;
  for (int p = 0; p < s.topo->num_patches(); ++p) {
    const auto bu = s.bases[p].kv_u.breakpoints();
    const auto bv = s.bases[p].kv_v.breakpoints();
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu)
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * (bu[eu + 1] - bu[eu]),
                              bv[ev] + g.x[jq] * (bv[ev + 1] - bv[ev]));
            const double w = g.w[iq] * g.w[jq] * (bu[eu + 1] - bu[eu]) *
                             (bv[ev + 1] - bv[ev]) * patch_frame(*s.topo, p, mu).det;
            const double e = eval_scalar(s, u, p, mu, 0).v - exact(s.topo->map_point(p, mu));
            acc += w * e * e;
          }
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("Gauss-Legendre rules integrate polynomials of degree 2n-1 exactly") {
  for (int n = 1; n <= 8; ++n) {
    const Quad1D& g = gauss_legendre(n);
    for (int m = 0; m <= 2 * n - 1; ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.x.size(); ++i) acc += g.w[i] * std::pow(g.x[i], m);
      CHECK(std::abs(acc - 1.0 / (m + 1)) < 1e-14);
    }
  }
}

TEST_CASE("basis integrals sum to the parametric area") {
  for (const auto& [q, area] :
       std::vector<std::pair<Quadrangulation, double>>{{samples::square_2patch(), 1.0},
                                                       {samples::rect_6patch_irregular(), 6.0}}) {
    ScalarSystem sys(uniform_space(q, 2, 2));
    const Eigen::VectorXd m = assemble_field_integral(sys.spec, 0, 0, 4);
    CHECK(m.sum() == doctest::Approx(area).epsilon(1e-12));
  }
}

TEST_CASE("Laplace residual of a constant field vanishes") {
  ScalarSystem sys(uniform_space(samples::square_4patch(), 2, 2));
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(sys.spec.total, 0.7);
  Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
  assemble_poisson<0>(sys, u, 4, nullptr, &res, nullptr);
  CHECK(res.norm() < 1e-13);
}

TEST_CASE("bilinear Laplace stiffness has interior diagonal 8/3") {
  ScalarSystem sys(uniform_space(samples::square_1patch(), 1, 2));
  REQUIRE(sys.space->interior_dofs.size() == 1);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(sys.spec.total);
  Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
  TripletVec jac;
  assemble_poisson<3>(sys, u, 2, nullptr, &res, &jac);
  const auto A = to_sparse(jac, sys.spec.total);
  const int d = sys.space->interior_dofs[0];
  CHECK(A.coeff(d, d) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sparse solve: identity system returns the right-hand side") {
  TripletVec t{{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}};
  Eigen::VectorXd b(3);
  b << 3, -1, 2;
  CHECK((solve_sparse(to_sparse(t, 3), b) - b).norm() < 1e-14);
}

TEST_CASE("sparse solve: small SPD system") {
  TripletVec t{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 2.0}};
  Eigen::VectorXd b(2);
  b << 3, 3;
  const Eigen::VectorXd x = solve_sparse(to_sparse(t, 2), b);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("sparse solve: random SPD 50x50 residual contract") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::MatrixXd M(50, 50);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) M(i, j) = uni(rng);
  const Eigen::MatrixXd S = M.transpose() * M + 50.0 * Eigen::MatrixXd::Identity(50, 50);
  Eigen::VectorXd b(50);
  for (int i = 0; i < 50; ++i) b[i] = uni(rng);
  TripletVec t;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) t.emplace_back(i, j, S(i, j));
  const Eigen::VectorXd x = solve_sparse(to_sparse(t, 50), b);
  CHECK((S * x - b).norm() < 1e-10 * b.norm());
}

TEST_CASE("singular system fails loudly") {
  TripletVec t{{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}};
  Eigen::VectorXd b(2);
  b << 1, 2;
  CHECK_THROWS_AS(solve_sparse(to_sparse(t, 2), b), Error);
}

TEST_CASE("assembled Jacobians match finite differences") {
  ScalarSystem sys(uniform_space(samples::square_2patch(), 2, 2), true);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  Eigen::VectorXd u(sys.spec.total);
  for (int i = 0; i < u.size(); ++i) u[i] = uni(rng);

  SUBCASE("linear operator") {
    Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
    TripletVec jac;
    assemble_poisson<3>(sys, u, 4, nullptr, &res, &jac);
    const auto J = to_sparse(jac, sys.spec.total);
    const auto rfun = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(sys.spec.total);
      assemble_poisson<0>(sys, v, 4, nullptr, &r, nullptr);
      return r;
    };
    CHECK(fd_jacobian_check(rfun, J, sys.spec, u, 1e-6) < 1e-9);
  }

  SUBCASE("nonlinear volume operator") {
    Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
    TripletVec jac;
    assemble_nonlinear<3>(sys, u, 4, &res, &jac);
    const auto J = to_sparse(jac, sys.spec.total);
    const auto rfun = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(sys.spec.total);
      assemble_nonlinear<0>(sys, v, 4, &r, nullptr);
      return r;
    };
    CHECK(fd_jacobian_check(rfun, J, sys.spec, u, 1e-6) < 1e-5);
  }

  SUBCASE("nonlinear facet operator") {
    Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
    TripletVec jac;
    assemble_jump<6>(sys, u, 4, &res, &jac);
    const auto J = to_sparse(jac, sys.spec.total);
    const auto rfun = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(sys.spec.total);
      assemble_jump<0>(sys, v, 4, &r, nullptr);
      return r;
    };
    CHECK(fd_jacobian_check(rfun, J, sys.spec, u, 1e-6) < 1e-4);
  }
}

TEST_CASE("Dirichlet elimination writes identity rows") {
  ScalarSystem sys(uniform_space(samples::square_1patch(), 2, 1), true);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(sys.spec.total, 0.25);
  Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
  TripletVec jac;
  assemble_poisson<3>(sys, u, 3, nullptr, &res, &jac);
  const auto A = to_sparse(jac, sys.spec.total);
  for (int d : sys.space->boundary_dofs) {
    CHECK(res[d] == 0.0);
    CHECK(A.coeff(d, d) == doctest::Approx(1.0));
  }
}

TEST_CASE("manufactured Poisson problem converges at rate p+1 in L2") {
  const auto exact = [](const Vector2d& x) {
    return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]);
  };
  const auto source = [](const Vector2d& x) {
    return 2.0 * M_PI * M_PI * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]);
  };
  const int p = 2;
  std::vector<double> errs;
  for (int spans : {4, 8}) {
    ScalarSystem sys(uniform_space(samples::square_1patch(), p, spans), true);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(sys.spec.total);
    Eigen::VectorXd res = Eigen::VectorXd::Zero(sys.spec.total);
    TripletVec jac;
    assemble_poisson<3>(sys, u, p + 2, source, &res, &jac);
    const Eigen::VectorXd du = solve_sparse(to_sparse(jac, sys.spec.total), res);
    u -= du;
    errs.push_back(l2_error(*sys.space, u, exact));
  }
  const double rate = std::log2(errs[0] / errs[1]);
  CHECK(rate > p + 0.7);
  CHECK(rate < p + 1.3);
}
