#include <cmath>
#include <limits>

#include "scheme_detail.hpp"

namespace mp {

using detail::flatten_coeffs;
using detail::freeze;
using detail::map_field;
using detail::to_sparse;
using detail::unflatten_coeffs;

EllipticCoefficients elliptic_coefficients(const Matrix2d& J, double mu) {
  Mat2T<double> Jm = Mat2T<double>::from(J);
  const auto e = kernels::elliptic(Jm, mu);
  const auto C = kernels::cmat(Jm);
  EllipticCoefficients out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      out.A(i, j) = e.A(i, j);
      out.A_mu(i, j) = e.A_mu(i, j);
      out.C(i, j) = C(i, j);
    }
  out.gamma_mu = e.gamma_mu;
  return out;
}

int max_degree(const MultipatchSpace& space) {
  int p = 0;
  for (const auto& b : space.bases) p = std::max({p, b.kv_u.degree, b.kv_v.degree});
  return p;
}

int negative_jacobian_points(const GeometryMap& x, int quad_order) {
  const Quad1D& g = gauss_legendre(quad_order);
  int count = 0;
  for (int p = 0; p < x.space->topo->num_patches(); ++p) {
    const auto bu = x.space->bases[p].kv_u.breakpoints();
    const auto bv = x.space->bases[p].kv_v.breakpoints();
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu)
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * (bu[eu + 1] - bu[eu]),
                              bv[ev] + g.x[jq] * (bv[ev + 1] - bv[ev]));
            if (x.jacobian_xi(p, mu).determinant() <= 0.0) ++count;
          }
  }
  return count;
}

// --- drivers ----------------------------------------------------------------

namespace {

[[noreturn]] void convergence_failure(const char* what, const SolveReport& rep) {
  std::string msg = std::string(what) + " did not converge in " +
                    std::to_string(rep.iterations) + " iterations (last residual " +
                    std::to_string(rep.final_residual) + "; last updates:";
  const std::size_t n = rep.trace.size();
  for (std::size_t i = n > 5 ? n - 5 : 0; i < n; ++i)
    msg += " " + std::to_string(rep.trace[i].update_norm);
  msg += ")";
  fail(ErrorKind::Convergence, msg);
}

}  // namespace

SolveReport newton_driver(const NonlinearProblem& prob, Eigen::VectorXd& u,
                          const SolverConfig& cfg) {
  SolveReport rep;
  Eigen::VectorXd r(prob.size);
  TripletVec trips;
  for (int it = 0; it < cfg.max_iter; ++it) {
    r.setZero();
    trips.clear();
    prob.assemble(u, &r, &trips);
    const double rnorm = r.norm();
    rep.final_residual = rnorm;
    if (rnorm < cfg.abs_tol) {
      rep.converged = true;
      break;
    }
    const Eigen::VectorXd delta = solve_sparse(to_sparse(prob.size, trips), -r);
    // Backtracking Armijo line search on the squared residual norm.
    double kappa = 1.0;
    Eigen::VectorXd u_try;
    Eigen::VectorXd r_try(prob.size);
    bool accepted = false;
    while (kappa >= cfg.ls_min_step) {
      u_try = u + kappa * delta;
      if (!prob.admissible || prob.admissible(u_try)) {
        // A trial point far outside the admissible region may overflow inside
        // the integrand; treat that like a non-finite residual and shrink.
        double rt = std::numeric_limits<double>::infinity();
        try {
          r_try.setZero();
          prob.assemble(u_try, &r_try, nullptr);
          rt = r_try.norm();
        } catch (const Error&) {
        }
        if (std::isfinite(rt) &&
            rt * rt <= (1.0 - 2.0 * cfg.ls_armijo * kappa) * rnorm * rnorm) {
          accepted = true;
          break;
        }
      }
      kappa *= cfg.ls_shrink;
    }
    if (!accepted) {
      rep.iterations = it + 1;
      if (cfg.throw_on_fail) convergence_failure("Newton line search", rep);
      return rep;
    }
    u = u_try;
    const double upd = kappa * delta.norm();
    rep.trace.push_back({it, rnorm, upd, kappa});
    rep.iterations = it + 1;
    rep.final_residual = r_try.norm();
    if (upd / std::max(u.norm(), 1e-30) < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged && rep.final_residual < cfg.abs_tol) rep.converged = true;
  if (!rep.converged && cfg.throw_on_fail) convergence_failure("Newton iteration", rep);
  return rep;
}

SolveReport fixed_point_driver(const NonlinearProblem& prob, Eigen::VectorXd& u,
                               const SolverConfig& cfg) {
  SolveReport rep;
  Eigen::VectorXd r(prob.size);
  TripletVec trips;
  for (int it = 0; it < cfg.max_iter; ++it) {
    r.setZero();
    trips.clear();
    prob.assemble(u, &r, &trips);
    rep.final_residual = r.norm();
    // The frozen-coefficient residual is affine in the unknown: one solve
    // yields the next iterate exactly.
    const Eigen::VectorXd delta = solve_sparse(to_sparse(prob.size, trips), -r);
    u += delta;
    const double upd = delta.norm();
    rep.trace.push_back({it, rep.final_residual, upd, 1.0});
    rep.iterations = it + 1;
    if (upd / std::max(u.norm(), 1e-30) < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged && cfg.throw_on_fail) convergence_failure("fixed-point iteration", rep);
  return rep;
}

// --- forward Laplace --------------------------------------------------------

GeometryMap forward_laplace(SpacePtr space, const BoundaryCorrespondence& F,
                            const SolverConfig& cfg) {
  SystemSpec spec;
  spec.fields = {map_field(*space)};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u = flatten_coeffs(dirichlet_lift(*space, F));
  const int q = cfg.quad(max_degree(*space));
  auto kern = [](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    for (int i = 0; i < 2; ++i) {
      const Vec2T<T> g = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i));
      add_test_frame<T>(ctx.test, ctx.pframe, 0, i, T(0.0), ctx.pframe.det * g, {}, false);
    }
  };
  Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.total);
  TripletVec trips;
  assemble_volume<4>(spec, layout, u, q, kern, &r, &trips);
  finalize_system(spec, &r, &trips);
  u += solve_sparse(to_sparse(spec.total, trips), -r);
  return {space, unflatten_coeffs(u, space->dim)};
}

// --- regularised weak form --------------------------------------------------

namespace {

struct WeakFormAssembler {
  const SystemSpec* spec;
  const StateLayout* layout;
  int q;
  double eps;

  template <int N>
  void run(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    const double e = eps;
    auto kern = [e](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Mat2T<T> Jxi = detail::state_jac_xi(ctx.state, ctx.pframe);
      const Mat2T<T> C = kernels::cmat(Jxi);
      const Mat2T<T> A = C.transpose() * C;
      const T R = kernels::reg_det(Jxi.det(), e);
      for (int i = 0; i < 2; ++i) {
        const Vec2T<T> row{A(i, 0) / R, A(i, 1) / R};
        add_test_frame<T>(ctx.test, ctx.pframe, 0, i, T(0.0), ctx.pframe.det * row, {},
                          false);
      }
    };
    assemble_volume<N>(*spec, *layout, u, q, kern, res, jac);
    finalize_system(*spec, res, jac);
  }
  void operator()(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    if (jac)
      run<4>(u, res, jac);
    else
      run<0>(u, res, jac);
  }
};

}  // namespace

GeometryMap solve_weak_form(const GeometryMap& initial, const BoundaryCorrespondence& F,
                            const SolverConfig& cfg, SolveReport* report) {
  SpacePtr space = initial.space;
  SystemSpec spec;
  spec.fields = {map_field(*space)};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  // Re-impose the boundary trace exactly; interior dofs from the initial map.
  Eigen::MatrixX2d c = initial.coeffs;
  const Eigen::MatrixX2d lift = dirichlet_lift(*space, F);
  for (int d : space->boundary_dofs) c.row(d) = lift.row(d);
  Eigen::VectorXd u = flatten_coeffs(c);
  const int q = cfg.quad(max_degree(*space));

  WeakFormAssembler wf{&spec, &layout, q, cfg.eps_weak};
  NonlinearProblem prob;
  prob.size = spec.total;
  SolveReport total_rep;
  double eps = cfg.eps_weak;
  while (true) {
    wf.eps = eps;
    prob.assemble = wf;
    SolveReport rep = newton_driver(prob, u, cfg);
    total_rep.iterations += rep.iterations;
    total_rep.final_residual = rep.final_residual;
    total_rep.converged = rep.converged;
    for (auto& t : rep.trace) total_rep.trace.push_back(t);
    if (!cfg.eps_continuation || eps <= cfg.eps_weak_min * 1.0000001 || !rep.converged)
      break;
    eps *= 0.1;
  }
  if (report) *report = total_rep;
  return {space, unflatten_coeffs(u, space->dim)};
}

// --- Winslow minimisation ---------------------------------------------------

double winslow_energy(const GeometryMap& x, int quad_order) {
  const int q = quad_order > 0 ? quad_order : max_degree(*x.space) + 1;
  const Quad1D& g = gauss_legendre(q);
  double energy = 0.0;
  for (int p = 0; p < x.space->topo->num_patches(); ++p) {
    const auto bu = x.space->bases[p].kv_u.breakpoints();
    const auto bv = x.space->bases[p].kv_v.breakpoints();
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu)
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * (bu[eu + 1] - bu[eu]),
                              bv[ev] + g.x[jq] * (bv[ev + 1] - bv[ev]));
            const Matrix2d J = x.jacobian_xi(p, mu);
            const double det = J.determinant();
            if (det <= 0.0) return std::numeric_limits<double>::infinity();
            const double w = g.w[iq] * g.w[jq] * (bu[eu + 1] - bu[eu]) *
                             (bv[ev + 1] - bv[ev]) *
                             patch_frame(*x.space->topo, p, mu).det;
            energy += w * J.squaredNorm() / det;
          }
  }
  return energy;
}

namespace {

struct WinslowAssembler {
  const SystemSpec* spec;
  const StateLayout* layout;
  int q;

  template <int N>
  void run(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    auto kern = [](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Mat2T<T> J = detail::state_jac_xi(ctx.state, ctx.pframe);
      const T det = J.det();
      const T S = J.squaredNorm();
      // cof(J) = d det / d J.
      Mat2T<T> cof;
      cof(0, 0) = J(1, 1);
      cof(0, 1) = -J(1, 0);
      cof(1, 0) = -J(0, 1);
      cof(1, 1) = J(0, 0);
      const T inv_det2 = T(1.0) / (det * det);
      for (int i = 0; i < 2; ++i) {
        Vec2T<T> row;
        row.x = (2.0 * det * J(i, 0) - S * cof(i, 0)) * inv_det2;
        row.y = (2.0 * det * J(i, 1) - S * cof(i, 1)) * inv_det2;
        add_test_frame<T>(ctx.test, ctx.pframe, 0, i, T(0.0), ctx.pframe.det * row, {},
                          false);
      }
    };
    assemble_volume<N>(*spec, *layout, u, q, kern, res, jac);
    finalize_system(*spec, res, jac);
  }
};

}  // namespace

GeometryMap minimise_winslow(const GeometryMap& initial, const SolverConfig& cfg,
                             SolveReport* report) {
  SpacePtr space = initial.space;
  require(negative_jacobian_points(initial, cfg.quad(max_degree(*space))) == 0,
          ErrorKind::Input, "minimise_winslow: initial map is degenerate at quadrature");
  SystemSpec spec;
  spec.fields = {map_field(*space)};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u = flatten_coeffs(initial.coeffs);
  const int q = cfg.quad(max_degree(*space));
  WinslowAssembler wa{&spec, &layout, q};

  auto energy_of = [&](const Eigen::VectorXd& v) {
    return winslow_energy({space, unflatten_coeffs(v, space->dim)}, q);
  };
  SolveReport rep;
  Eigen::VectorXd r(spec.total);
  TripletVec trips;
  double energy = energy_of(u);
  for (int it = 0; it < cfg.max_iter; ++it) {
    r.setZero();
    trips.clear();
    wa.run<4>(u, &r, &trips);
    const double gnorm = r.norm();
    rep.final_residual = gnorm;
    if (gnorm < cfg.abs_tol) {
      rep.converged = true;
      break;
    }
    Eigen::VectorXd delta = solve_sparse(to_sparse(spec.total, trips), -r);
    double slope = r.dot(delta);
    if (slope >= 0.0) {  // Hessian indefinite here: fall back to steepest descent
      delta = -r;
      slope = -gnorm * gnorm;
    }
    double kappa = 1.0;
    bool accepted = false;
    Eigen::VectorXd u_try;
    double e_try = 0.0;
    while (kappa >= cfg.ls_min_step) {
      u_try = u + kappa * delta;
      e_try = energy_of(u_try);
      if (std::isfinite(e_try) && e_try <= energy + cfg.ls_armijo * kappa * slope) {
        accepted = true;
        break;
      }
      kappa *= cfg.ls_shrink;
    }
    if (!accepted) {
      rep.iterations = it + 1;
      if (cfg.throw_on_fail) convergence_failure("Winslow line search", rep);
      if (report) *report = rep;
      return {space, unflatten_coeffs(u, space->dim)};
    }
    const double upd = kappa * delta.norm();
    rep.trace.push_back({it, gnorm, upd, kappa});
    rep.iterations = it + 1;
    u = u_try;
    energy = e_try;
    if (upd / std::max(u.norm(), 1e-30) < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged && cfg.throw_on_fail) convergence_failure("Winslow minimisation", rep);
  if (report) *report = rep;
  return {space, unflatten_coeffs(u, space->dim)};
}

GeometryMap solve_scheme(Scheme scheme, Linearisation lin, SpacePtr space,
                         const BoundaryCorrespondence& F, const SolverConfig& cfg,
                         SolveReport* report) {
  switch (scheme) {
    case Scheme::c0dg:
      return solve_c0dg(space, F, lin, cfg, report);
    case Scheme::hessian:
      return solve_hessian_recovery(space, F, lin, cfg, report);
    case Scheme::rotfree:
      return solve_rotation_free(space, F, cfg, report);
    case Scheme::weakform: {
      SolverConfig pre = cfg;
      pre.throw_on_fail = false;
      GeometryMap init;
      try {
        init = solve_c0dg(space, F, Linearisation::newton, pre);
      } catch (const Error&) {
        init = forward_laplace(space, F, cfg);
      }
      return solve_weak_form(init, F, cfg, report);
    }
    case Scheme::winslow: {
      SolverConfig pre = cfg;
      pre.throw_on_fail = false;
      GeometryMap init;
      try {
        init = solve_c0dg(space, F, Linearisation::newton, pre);
      } catch (const Error&) {
        init = forward_laplace(space, F, cfg);
      }
      init = solve_weak_form(init, F, cfg);
      return minimise_winslow(init, cfg, report);
    }
  }
  fail(ErrorKind::Input, "unknown scheme");
}

}  // namespace mp
