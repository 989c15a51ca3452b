// C0-DG, Hessian-recovery and rotation-free discretisations of the
// nondivergence-form inverse harmonicity equation.
#include <cmath>

#include "scheme_detail.hpp"

namespace mp {

using detail::flatten_coeffs;
using detail::freeze;
using detail::map_field;
using detail::to_sparse;
using detail::unflatten_coeffs;

namespace {

Eigen::VectorXd lifted_initial(const SpacePtr& space, const BoundaryCorrespondence& F,
                               const SolverConfig& cfg, const GeometryMap* initial) {
  Eigen::MatrixX2d c =
      initial ? initial->coeffs : forward_laplace(space, F, cfg).coeffs;
  const Eigen::MatrixX2d lift = dirichlet_lift(*space, F);
  for (int d : space->boundary_dofs) c.row(d) = lift.row(d);
  return flatten_coeffs(c);
}

// --- C0-DG ------------------------------------------------------------------

struct C0DGAssembler {
  const SystemSpec* spec;
  const StateLayout* vol_layout;    // gradients + Hessians
  const StateLayout* facet_layout;  // gradients only
  int q;
  double mu, eta;
  bool newton;

  template <int NV, int NF>
  void run(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    const double m = mu;
    const bool nt = newton;
    auto vol = [m, nt](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Mat2T<T> Jxi = detail::state_jac_xi(ctx.state, ctx.pframe);
      const auto ell = kernels::elliptic(nt ? Jxi : freeze(Jxi), m);
      const Mat2T<T> B = ell.gamma_mu * ell.A_mu;
      for (int i = 0; i < 2; ++i) {
        const Vec2T<T> gc = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i));
        const Mat2T<T> H = hess_in_frame(ctx.pframe, gc, ctx.state.hess_mu(0, i));
        T s = frobenius(B, H);
        if (!nt) s -= m * (ell.gamma_mu * freeze(H).trace());
        Mat2T<T> Ch;  // s * identity: tests against the Laplacian of phi_i
        Ch(0, 0) = ctx.pframe.det * s;
        Ch(1, 1) = ctx.pframe.det * s;
        add_test_frame<T>(ctx.test, ctx.pframe, 0, i, T(0.0), {}, Ch, true);
      }
    };
    const double e = eta;
    auto fct = [m, nt, e](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state_i.val(0, 0))>;
      const double pen = e / ctx.h * ctx.edge_len;
      for (int i = 0; i < 2; ++i) {
        const Vec2T<T> gi = grad_in_frame(ctx.frame_i, ctx.state_i.grad_mu(0, i));
        const Vec2T<T> gj = grad_in_frame(ctx.frame_j, ctx.state_j.grad_mu(0, i));
        Vec2T<T> jump = gi - gj;
        if (!nt) jump = jump - m * freeze(jump);
        const Vec2T<T> coef = pen * jump;
        add_test_frame<T>(ctx.test_i, ctx.frame_i, 0, i, T(0.0), coef, {}, false);
        add_test_frame<T>(ctx.test_j, ctx.frame_j, 0, i, T(0.0), T(-1.0) * coef, {},
                          false);
      }
    };
    assemble_volume<NV>(*spec, *vol_layout, u, q, vol, res, jac);
    assemble_interior_facets<NF>(*spec, *facet_layout, u, q, fct, res, jac);
    finalize_system(*spec, res, jac);
  }
};

}  // namespace

GeometryMap solve_c0dg(SpacePtr space, const BoundaryCorrespondence& F, Linearisation lin,
                       const SolverConfig& cfg, SolveReport* report,
                       const GeometryMap* initial) {
  for (const auto& b : space->bases)
    require(b.kv_u.degree >= 2 && b.kv_v.degree >= 2, ErrorKind::Input,
            "solve_c0dg: requires degree >= 2 (patchwise C2 basis)");
  SystemSpec spec;
  spec.fields = {map_field(*space)};
  spec.fields[0].ders = kGrad | kHess;
  spec.finalize();
  const StateLayout vol_layout = StateLayout::make(spec);
  const StateLayout facet_layout = StateLayout::make(spec, {kGrad});
  Eigen::VectorXd u = lifted_initial(space, F, cfg, initial);
  const bool newton = lin == Linearisation::newton;
  C0DGAssembler as{&spec,
                   &vol_layout,
                   &facet_layout,
                   cfg.quad(max_degree(*space)),
                   newton ? cfg.mu_newton : cfg.mu_fp,
                   cfg.eta_dg,
                   newton};
  NonlinearProblem prob;
  prob.size = spec.total;
  prob.assemble = [&as](const Eigen::VectorXd& v, Eigen::VectorXd* r, TripletVec* j) {
    if (j)
      as.run<10, 8>(v, r, j);
    else
      as.run<0, 0>(v, r, j);
  };
  SolveReport rep = newton ? newton_driver(prob, u, cfg) : fixed_point_driver(prob, u, cfg);
  if (report) *report = rep;
  return {space, unflatten_coeffs(u, space->dim)};
}

// --- Hessian recovery -------------------------------------------------------

namespace {

struct HessianAssembler {
  const SystemSpec* spec;
  const StateLayout* layout;
  int q;
  double mu;
  bool newton;

  template <int N>
  void run(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    const double m = mu;
    const bool nt = newton;
    auto vol = [m, nt](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Mat2T<T> Jxi = detail::state_jac_xi(ctx.state, ctx.pframe);
      const auto ell = kernels::elliptic(nt ? Jxi : freeze(Jxi), m);
      const Mat2T<T> B = ell.gamma_mu * ell.A_mu;
      const double det = ctx.pframe.det;
      for (int i = 0; i < 2; ++i) {
        Mat2T<T> Hi;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) Hi(a, b) = ctx.state.val(1, i * 4 + 2 * a + b);
        // phi_i equation: phi_i (B : H^_i), minus the frozen shift term.
        T s = frobenius(B, Hi);
        if (!nt) s -= m * (ell.gamma_mu * freeze(Hi).trace());
        ctx.test.add(0, i, 0, det * s);
        // Phi_i equations: H^_i : Phi_i + grad x_i . (div Phi_i).
        const Vec2T<T> gxi = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i));
        for (int a = 0; a < 2; ++a) {
          T ga = (a == 0) ? gxi.x : gxi.y;
          if (!nt) ga = ga - m * freeze(ga);
          for (int b = 0; b < 2; ++b) {
            T hv = Hi(a, b);
            if (!nt) hv = hv - m * freeze(hv);
            Vec2T<T> bg;  // (div Phi_i)_a picks d(Phi_i)_{ab} / d xi_b
            (b == 0 ? bg.x : bg.y) = det * ga;
            add_test_frame<T>(ctx.test, ctx.pframe, 1, i * 4 + 2 * a + b, det * hv, bg,
                              {}, false);
          }
        }
      }
    };
    auto bnd = [m, nt](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      for (int i = 0; i < 2; ++i) {
        const Vec2T<T> gxi = grad_in_frame(ctx.frame, ctx.state.grad_mu(0, i));
        for (int a = 0; a < 2; ++a) {
          T ga = (a == 0) ? gxi.x : gxi.y;
          if (!nt) ga = ga - m * freeze(ga);
          for (int b = 0; b < 2; ++b)
            ctx.test.add(1, i * 4 + 2 * a + b, 0,
                         T(-ctx.edge_len * ctx.normal[b]) * ga);
        }
      }
    };
    assemble_volume<N>(*spec, *layout, u, q, vol, res, jac);
    assemble_boundary<N>(*spec, *layout, u, q, bnd, res, jac);
    finalize_system(*spec, res, jac);
  }
};

}  // namespace

GeometryMap solve_hessian_recovery(SpacePtr space, const BoundaryCorrespondence& F,
                                   Linearisation lin, const SolverConfig& cfg,
                                   SolveReport* report, Eigen::MatrixXd* recovered_hessian) {
  SystemSpec spec;
  FieldDef hf;
  hf.space = space.get();
  hf.ncomp = 8;  // (H^_i)_{ab} at component i*4 + 2a + b
  hf.ders = kVal;
  spec.fields = {map_field(*space), hf};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.total);
  u.head(2 * space->dim) = lifted_initial(space, F, cfg, nullptr);
  const bool newton = lin == Linearisation::newton;
  HessianAssembler as{&spec, &layout, cfg.quad(max_degree(*space)),
                      newton ? cfg.mu_newton : cfg.mu_fp, newton};
  NonlinearProblem prob;
  prob.size = spec.total;
  prob.assemble = [&as](const Eigen::VectorXd& v, Eigen::VectorXd* r, TripletVec* j) {
    if (j)
      as.run<12>(v, r, j);
    else
      as.run<0>(v, r, j);
  };
  SolveReport rep = newton ? newton_driver(prob, u, cfg) : fixed_point_driver(prob, u, cfg);
  if (report) *report = rep;
  if (recovered_hessian) {
    recovered_hessian->resize(space->dim, 8);
    for (int d = 0; d < space->dim; ++d)
      for (int c = 0; c < 8; ++c) (*recovered_hessian)(d, c) = u[spec.dof_index(1, d, c)];
  }
  return {space, unflatten_coeffs(u.head(2 * space->dim), space->dim)};
}

// --- rotation-free ----------------------------------------------------------

namespace {

KnotVector remove_every_other(const KnotVector& kv) {
  const auto bp = kv.breakpoints();
  std::vector<double> interior;
  for (std::size_t j = 1; j + 1 < bp.size(); ++j)
    if (j % 2 == 0) interior.push_back(bp[j]);
  require(std::abs(kv.front()) <= kKnotTol && std::abs(kv.back() - 1.0) <= kKnotTol,
          ErrorKind::Input, "subgrid pressure space expects [0,1] knot vectors");
  return make_open_knot_vector(kv.degree, interior);
}

}  // namespace

GeometryMap solve_rotation_free(SpacePtr space, const BoundaryCorrespondence& F,
                                const SolverConfig& cfg, SolveReport* report) {
  auto topo = space->topo;
  // Subgrid pressure space: every other interior knot removed per direction.
  std::vector<TensorBasis> pbases;
  for (const auto& b : space->bases)
    pbases.push_back({remove_every_other(b.kv_u), remove_every_other(b.kv_v)});
  auto pspace = std::make_shared<MultipatchSpace>(build_space(topo, std::move(pbases)));

  SystemSpec spec;
  FieldDef jf;  // (J^_i)_d at component i*2 + d
  jf.space = space.get();
  jf.ncomp = 4;
  jf.ders = kVal | kGrad;
  FieldDef pf;
  pf.space = pspace.get();
  pf.ncomp = 2;
  pf.ders = kVal;
  spec.fields = {jf, pf};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  const int q = cfg.quad(max_degree(*space));

  // Initial J^: L2 projection of the forward-Laplace Jacobian.
  const GeometryMap xlap = forward_laplace(space, F, cfg);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.total + 2);
  {
    SystemSpec jspec;
    FieldDef jo = jf;
    jspec.fields = {jo};
    jspec.finalize();
    const StateLayout jlayout = StateLayout::make(jspec, {kVal});
    auto proj = [&xlap](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Matrix2d Jl = xlap.jacobian_xi(ctx.patch, ctx.mu);
      for (int c = 0; c < 4; ++c)
        ctx.test.add(0, c, 0,
                     ctx.pframe.det * (ctx.state.val(0, c) - T(Jl(c / 2, c % 2))));
    };
    Eigen::VectorXd r = Eigen::VectorXd::Zero(jspec.total);
    TripletVec trips;
    Eigen::VectorXd uj = Eigen::VectorXd::Zero(jspec.total);
    assemble_volume<8>(jspec, jlayout, uj, q, proj, &r, &trips);
    uj += solve_sparse(to_sparse(jspec.total, trips), -r);
    u.head(jspec.total) = uj;
  }

  const Eigen::VectorXd w0 = assemble_field_integral(spec, 1, 0, q);
  const Eigen::VectorXd w1 = assemble_field_integral(spec, 1, 1, q);
  const double m = cfg.mu_fp;
  SolveReport rep;
  double sigma = 0.0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    // Stabilisation constant from the frozen coefficient field (the ratio is
    // invariant under the gamma scaling).
    double eps_h = std::numeric_limits<double>::infinity();
    {
      auto probe = [&eps_h, m](auto& ctx) {
        Mat2T<double> Jh;
        for (int c = 0; c < 4; ++c) Jh(c / 2, c % 2) = value_of(ctx.state.val(0, c));
        const auto ell = kernels::elliptic(Jh, m);
        const double tr = ell.A_mu.trace();
        eps_h = std::min(eps_h, tr * tr / ell.A_mu.squaredNorm() - 1.0);
      };
      Eigen::VectorXd dummy = Eigen::VectorXd::Zero(spec.total);
      assemble_volume<0>(spec, layout, u.head(spec.total), q, probe, &dummy, nullptr);
    }
    eps_h = std::max(eps_h, 0.0);
    const double lambda = (2.0 + std::sqrt(cfg.alpha_rot * eps_h)) / 2.0;
    sigma = std::sqrt(1.0 - lambda / 2.0);

    Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.total);
    TripletVec trips;
    const double sg = sigma;
    auto vol = [m, sg](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      Mat2T<T> Jh;
      for (int c = 0; c < 4; ++c) Jh(c / 2, c % 2) = ctx.state.val(0, c);
      const auto ell = kernels::elliptic(freeze(Jh), m);
      const Mat2T<T> B = ell.gamma_mu * ell.A_mu;
      const double det = ctx.pframe.det;
      for (int i = 0; i < 2; ++i) {
        const Vec2T<T> g0 = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i * 2));
        const Vec2T<T> g1 = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i * 2 + 1));
        // (div Phi_i) B : d_xi J^_i, with the frozen identity-coefficient shift.
        T div_coef = B(0, 0) * g0.x + B(0, 1) * g0.y + B(1, 0) * g1.x + B(1, 1) * g1.y;
        div_coef = div_coef - m * (ell.gamma_mu * (freeze(g0.x) + freeze(g1.y)));
        // (curl Phi_i)(p_i + sigma curl J^_i - mu p^k_i).
        const T curlJ = g0.y - g1.x;
        const T p_i = ctx.state.val(1, i);
        const T curl_coef = p_i + sg * curlJ - m * freeze(p_i);
        add_test_frame<T>(ctx.test, ctx.pframe, 0, i * 2,
                          T(0.0), det * Vec2T<T>{div_coef, curl_coef}, {}, false);
        add_test_frame<T>(ctx.test, ctx.pframe, 0, i * 2 + 1,
                          T(0.0), det * Vec2T<T>{T(0.0) - curl_coef, div_coef}, {}, false);
        // q_i equation: (curl J^_i - mu curl J^k_i).
        ctx.test.add(1, i, 0, det * (curlJ - m * freeze(curlJ)));
      }
    };
    const double eta = cfg.eta_rot;
    auto bnd = [eta, &F](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const auto& curve = F.sides[ctx.side];
      const Vector2d dF =
          curve.eval(ctx.t_side, 1) * (ctx.dt_du / ctx.edge_len);  // d F / d arc length
      const double pen = eta / ctx.h_side * ctx.edge_len;
      for (int i = 0; i < 2; ++i) {
        const T jt = ctx.state.val(0, i * 2) * ctx.tangent[0] +
                     ctx.state.val(0, i * 2 + 1) * ctx.tangent[1];
        const T coefv = pen * (T(dF[i]) - jt);
        ctx.test.add(0, i * 2, 0, ctx.tangent[0] * coefv);
        ctx.test.add(0, i * 2 + 1, 0, ctx.tangent[1] * coefv);
      }
    };
    assemble_volume<14>(spec, layout, u.head(spec.total), q, vol, &r, &trips);
    assemble_boundary<14>(spec, layout, u.head(spec.total), q, bnd, &r, &trips);

    // Symmetric bordering: one zero-average multiplier per pressure component.
    const int ntot = spec.total + 2;
    for (int gi = 0; gi < spec.total; ++gi) {
      if (w0[gi] != 0.0) {
        trips.emplace_back(gi, spec.total, w0[gi]);
        trips.emplace_back(spec.total, gi, w0[gi]);
      }
      if (w1[gi] != 0.0) {
        trips.emplace_back(gi, spec.total + 1, w1[gi]);
        trips.emplace_back(spec.total + 1, gi, w1[gi]);
      }
    }
    Eigen::VectorXd r_aug(ntot);
    r_aug.head(spec.total) = r + u[spec.total] * w0 + u[spec.total + 1] * w1;
    r_aug[spec.total] = w0.dot(u.head(spec.total));
    r_aug[spec.total + 1] = w1.dot(u.head(spec.total));
    const Eigen::VectorXd delta = solve_sparse(to_sparse(ntot, trips), -r_aug);
    u += delta;
    const double upd = delta.norm();
    rep.trace.push_back({it, r_aug.norm(), upd, 1.0});
    rep.iterations = it + 1;
    rep.final_residual = r_aug.norm();
    if (upd / std::max(u.norm(), 1e-30) < cfg.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.converged && cfg.throw_on_fail)
    fail(ErrorKind::Convergence, "rotation-free fixed point did not converge in " +
                                     std::to_string(rep.iterations) + " iterations");

  // Curl diagnostic.
  {
    double acc = 0.0;
    auto curlk = [&acc](auto& ctx) {
      for (int i = 0; i < 2; ++i) {
        const Vec2T<double> g0 = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i * 2));
        const Vec2T<double> g1 =
            grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i * 2 + 1));
        const double c = g0.y - g1.x;
        acc += ctx.wmu * ctx.pframe.det * c * c;
      }
    };
    Eigen::VectorXd dummy = Eigen::VectorXd::Zero(spec.total);
    assemble_volume<0>(spec, layout, u.head(spec.total), q, curlk, &dummy, nullptr);
    rep.curl_norm = std::sqrt(acc);
  }

  // Recover the map from its Jacobian proxy by an H1 projection.
  std::array<Eigen::VectorXd, 4> jcols;  // J^ component coefficient vectors
  for (int c = 0; c < 4; ++c) {
    jcols[c].resize(space->dim);
    for (int k = 0; k < space->dim; ++k) jcols[c][k] = u[spec.dof_index(0, k, c)];
  }
  SystemSpec xspec;
  xspec.fields = {map_field(*space)};
  xspec.finalize();
  const StateLayout xlayout = StateLayout::make(xspec);
  Eigen::VectorXd ux = flatten_coeffs(dirichlet_lift(*space, F));
  auto recover = [&space, &jcols](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    for (int i = 0; i < 2; ++i) {
      const Vec2T<T> g = grad_in_frame(ctx.pframe, ctx.state.grad_mu(0, i));
      const double j0 = eval_scalar(*space, jcols[i * 2], ctx.patch, ctx.mu, 0).v;
      const double j1 = eval_scalar(*space, jcols[i * 2 + 1], ctx.patch, ctx.mu, 0).v;
      const Vec2T<T> diff{g.x - j0, g.y - j1};
      add_test_frame<T>(ctx.test, ctx.pframe, 0, i, T(0.0), ctx.pframe.det * diff, {},
                        false);
    }
  };
  Eigen::VectorXd rx = Eigen::VectorXd::Zero(xspec.total);
  TripletVec tx;
  assemble_volume<4>(xspec, xlayout, ux, q, recover, &rx, &tx);
  finalize_system(xspec, &rx, &tx);
  ux += solve_sparse(to_sparse(xspec.total, tx), -rx);
  if (report) *report = rep;
  return {space, unflatten_coeffs(ux, space->dim)};
}

}  // namespace mp
