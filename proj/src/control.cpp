#include <cstdlib>
#include "mp/control.hpp"

#include <cstdio>
#include <limits>

#include "scheme_detail.hpp"

namespace mp {

using detail::flatten_coeffs;
using detail::map_field;
using detail::to_sparse;
using detail::unflatten_coeffs;

namespace {

// --- coordinate helpers -----------------------------------------------------

// Coordinate source for an operator: a reference controlmap when given, else
// the bilinear patch maps.
struct RefCoords {
  const GeometryMap* map = nullptr;

  Frame2 frame(const Quadrangulation& topo, int p, const Vector2d& mu) const {
    if (!map) return patch_frame(topo, p, mu);
    const MapJet jet = map->eval(p, mu, 2);
    Frame2 f;
    f.J = jet.Jmu;
    f.det = f.J.determinant();
    require(f.det > 1e-14, ErrorKind::Numerical,
            "reference controlmap is degenerate at a quadrature point");
    f.Jinv = f.J.inverse();
    f.T = jet.Hmu;
    f.curved =
        jet.Hmu[0].cwiseAbs().maxCoeff() + jet.Hmu[1].cwiseAbs().maxCoeff() > 1e-13;
    return f;
  }
};

Vector2d coord_point(const Diffusivity& D, int p, const Vector2d& mu) {
  if (D.reference) return D.reference->map.eval(p, mu, 0).x;
  require(D.topo != nullptr, ErrorKind::Input,
          "position-dependent diffusivity has no coordinate source");
  return D.topo->map_point(p, mu);
}

Matrix2d coord_jacobian(const Diffusivity& D, int p, const Vector2d& mu) {
  if (D.reference) return D.reference->map.eval(p, mu, 1).Jmu;
  require(D.topo != nullptr, ErrorKind::Input,
          "position-dependent diffusivity has no coordinate source");
  return D.topo->map_jacobian(p, mu);
}

Vector2d corner_mu(int slot, double inset = 0.0) {
  static const double cs[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  auto off = [inset](double c) { return c == 0.0 ? inset : 1.0 - inset; };
  return {off(cs[slot][0]), off(cs[slot][1])};
}

// Local (a, b) coordinates of a boundary patch with outer edge e: b = 1 on the
// outer edge, a runs along the edge parameter.
std::pair<double, double> ab_of_mu(int e, const Vector2d& mu) {
  switch (e) {
    case 0: return {mu[0], 1.0 - mu[1]};
    case 1: return {mu[1], mu[0]};
    case 2: return {mu[0], mu[1]};
    default: return {mu[1], 1.0 - mu[0]};
  }
}
Vector2d mu_of_ab(int e, double a, double b) {
  switch (e) {
    case 0: return {a, 1.0 - b};
    case 1: return {b, a};
    case 2: return {a, b};
    default: return {1.0 - b, a};
  }
}

double eval_edge_spline(const KnotVector& kv, const Eigen::VectorXd& c, double t,
                        int deriv) {
  std::vector<double> vals;
  const int first = eval_basis(kv, t, deriv, vals);
  double v = 0.0;
  for (std::size_t j = 0; j < vals.size(); ++j) v += vals[j] * c[first + j];
  return v;
}

void check_spd(const Matrix2d& D, int patch) {
  if (!(D.trace() > 0.0) || !(D.determinant() > 0.0) ||
      std::abs(D(0, 1) - D(1, 0)) > 1e-10 * (1.0 + D.cwiseAbs().maxCoeff()))
    fail(ErrorKind::Diffusivity,
         "diffusivity is not symmetric positive definite on patch " +
             std::to_string(patch));
}

Matrix2d outer(const Vector2d& v) { return v * v.transpose(); }

// --- state-dependent diffusivity evaluation ---------------------------------

Vector2d monitor_gradient(const MonitorField& f, const Vector2d& p) {
  if (f.gradient) return f.gradient(p);
  require(static_cast<bool>(f.value), ErrorKind::Input,
          "adaptation monitor needs a value or gradient function");
  const double h = 1e-5;
  return {(f.value(p + Vector2d(h, 0)) - f.value(p - Vector2d(h, 0))) / (2 * h),
          (f.value(p + Vector2d(0, h)) - f.value(p - Vector2d(0, h))) / (2 * h)};
}

Matrix2d monitor_hessian(const MonitorField& f, const Vector2d& p) {
  if (f.hessian) return f.hessian(p);
  const double h = 1e-5;
  Matrix2d H;
  for (int j = 0; j < 2; ++j) {
    Vector2d e = Vector2d::Zero();
    e[j] = h;
    H.col(j) = (monitor_gradient(f, p + e) - monitor_gradient(f, p - e)) / (2 * h);
  }
  return 0.5 * (H + H.transpose());
}

inline double sqrt(double v) { return std::sqrt(v); }
inline double pow(double v, double k) { return std::pow(v, k); }

// First-order propagation of the monitor scalar through the dual state: the
// value and Jacobian of m(x) at the current point are exact, which is all the
// Newton linearisation needs.
template <class T>
T monitor_scalar(const Diffusivity& D, const Vec2T<T>& x) {
  const Vector2d x0(value_of(x.x), value_of(x.y));
  const T dx = x.x - T(x0[0]), dy = x.y - T(x0[1]);
  if (!D.use_gradient) {
    require(static_cast<bool>(D.monitor.value), ErrorKind::Input,
            "adaptation diffusivity needs a monitor value function");
    const Vector2d g = monitor_gradient(D.monitor, x0);
    return T(D.monitor.value(x0)) + g[0] * dx + g[1] * dy;
  }
  const Vector2d g0 = monitor_gradient(D.monitor, x0);
  if (g0.norm() < 1e-12) return T(g0.norm());
  const Matrix2d H = monitor_hessian(D.monitor, x0);
  const T gx = T(g0[0]) + H(0, 0) * dx + H(0, 1) * dy;
  const T gy = T(g0[1]) + H(1, 0) * dx + H(1, 1) * dy;
  return sqrt(gx * gx + gy * gy);
}

template <class T>
Mat2T<T> eval_D(const Diffusivity& D, int patch, const Vector2d& mu, const Vec2T<T>* xval,
                const Mat2T<T>* xjac_mu) {
  using K = Diffusivity::Kind;
  switch (D.kind) {
    case K::identity:
    case K::interface_removal:
    case K::boundary_layer:
    case K::vertex_regularised:
      return Mat2T<T>::from(eval_diffusivity(D, patch, mu));
    case K::homogenisation_sigma:
    case K::homogenisation_omega: {
      require(xjac_mu != nullptr, ErrorKind::Input,
              "homogenisation diffusivity needs the map state");
      const T det = xjac_mu->det();
      if (!(value_of(det) > 0.0))
        fail(ErrorKind::Numerical,
             "non-positive cell Jacobian while evaluating a homogenisation diffusivity");
      const T s = pow(det, D.kind == K::homogenisation_sigma ? D.k : -D.k);
      return s * Mat2T<T>::identity();
    }
    case K::rank_one: {
      require(patch < static_cast<int>(D.v1.size()), ErrorKind::Input,
              "rank-one diffusivity: missing per-patch frame");
      const Matrix2d F = (2.0 / (D.a[patch] + 1.0)) *
                         (D.a[patch] * outer(D.v1[patch]) + outer(D.v2[patch]));
      if (D.k == 0.0) return Mat2T<T>::from(F);
      require(xjac_mu != nullptr, ErrorKind::Input,
              "scaled rank-one diffusivity needs the map state");
      const T det = xjac_mu->det();
      if (!(value_of(det) > 0.0))
        fail(ErrorKind::Numerical,
             "non-positive cell Jacobian while evaluating a rank-one diffusivity");
      return pow(det, D.k) * Mat2T<T>::from(F);
    }
    case K::scalar_monitor: {
      require(xval != nullptr, ErrorKind::Input,
              "adaptation diffusivity needs the map state");
      const T m = monitor_scalar<T>(D, *xval);
      const T sig = T(1.0) / (D.nu1 * pow(m, D.k) + T(D.nu2));
      if (!(value_of(sig) > 0.0))
        fail(ErrorKind::Diffusivity, "adaptation diffusivity is not positive");
      return sig * Mat2T<T>::identity();
    }
  }
  fail(ErrorKind::Input, "unknown diffusivity kind");
}

}  // namespace

bool diffusivity_state_dependent(const Diffusivity& D) {
  using K = Diffusivity::Kind;
  switch (D.kind) {
    case K::scalar_monitor:
    case K::homogenisation_sigma:
    case K::homogenisation_omega:
      return true;
    case K::rank_one:
      return D.k != 0.0;
    default:
      return false;
  }
}

Matrix2d eval_diffusivity(const Diffusivity& D, int patch, const Vector2d& mu) {
  using K = Diffusivity::Kind;
  switch (D.kind) {
    case K::identity:
      return Matrix2d::Identity();
    case K::interface_removal: {
      const Matrix2d J = coord_jacobian(D, patch, mu);
      Vector2d t1 = J.col(0), t2 = J.col(1);
      if (D.normalised) {
        require(t1.norm() > 1e-14 && t2.norm() > 1e-14, ErrorKind::Diffusivity,
                "interface-removal diffusivity: degenerate coordinate tangent");
        t1.normalize();
        t2.normalize();
      }
      const Matrix2d Dm = outer(t1) + outer(t2);
      check_spd(Dm, patch);
      return Dm;
    }
    case K::boundary_layer: {
      const Vector2d c = coord_point(D, patch, mu);
      const double n2 = c.squaredNorm();
      if (n2 < 1e-30) return D.layer_nu * Matrix2d::Identity();
      const Matrix2d Dm = (1.0 - std::exp(-D.layer_mu * n2)) *
                              std::pow(std::sqrt(n2), D.layer_k) * (outer(c) / n2) +
                          D.layer_nu * Matrix2d::Identity();
      return Dm;
    }
    case K::rank_one: {
      require(D.k == 0.0, ErrorKind::Input,
              "scaled rank-one diffusivity depends on the map state");
      require(patch < static_cast<int>(D.v1.size()), ErrorKind::Input,
              "rank-one diffusivity: missing per-patch frame");
      const Matrix2d Dm = (2.0 / (D.a[patch] + 1.0)) *
                          (D.a[patch] * outer(D.v1[patch]) + outer(D.v2[patch]));
      check_spd(Dm, patch);
      return Dm;
    }
    case K::vertex_regularised: {
      require(D.inner && D.blend, ErrorKind::Input,
              "vertex-regularised diffusivity is missing its inner model or blend data");
      const Matrix2d Din = eval_diffusivity(*D.inner, patch, mu);
      const Vector2d p = coord_point(D, patch, mu);
      double gsum = 0.0;
      Matrix2d acc = Matrix2d::Zero();
      for (const auto& en : D.blend->entries) {
        const double r = (p - en.centre).norm() * D.blend->kappa / en.d_min;
        const double g = en.amplitude * std::exp(-r * r);
        gsum += g;
        acc += g * en.D_bar;
      }
      const Matrix2d Dm = (1.0 - gsum) * Din + acc;
      check_spd(Dm, patch);
      return Dm;
    }
    default:
      fail(ErrorKind::Input,
           "diffusivity depends on the map state and has no static evaluation");
  }
}

// --- builders ---------------------------------------------------------------

Diffusivity diffusivity_identity() { return {}; }

Diffusivity diffusivity_interface_removal(std::shared_ptr<const Quadrangulation> topo,
                                          std::shared_ptr<const ControlMap> r,
                                          bool normalised) {
  require(topo != nullptr || r != nullptr, ErrorKind::Input,
          "interface-removal diffusivity needs a coordinate source");
  Diffusivity D;
  D.kind = Diffusivity::Kind::interface_removal;
  D.topo = std::move(topo);
  D.reference = std::move(r);
  D.normalised = normalised;
  return D;
}

Diffusivity diffusivity_homogenisation(double k, bool omega_mode) {
  require(k >= 0.0, ErrorKind::Input, "homogenisation exponent must be nonnegative");
  Diffusivity D;
  D.kind = omega_mode ? Diffusivity::Kind::homogenisation_omega
                      : Diffusivity::Kind::homogenisation_sigma;
  D.k = k;
  return D;
}

Diffusivity diffusivity_rank_one(std::vector<Vector2d> v1, std::vector<Vector2d> v2,
                                 std::vector<double> a, double k) {
  require(v1.size() == v2.size() && v1.size() == a.size(), ErrorKind::Input,
          "rank-one diffusivity: per-patch frame sizes differ");
  for (std::size_t p = 0; p < v1.size(); ++p) {
    require(v1[p].norm() > 1e-14 && v2[p].norm() > 1e-14 && a[p] > 0.0, ErrorKind::Input,
            "rank-one diffusivity: degenerate frame or nonpositive weight");
    v1[p].normalize();
    v2[p].normalize();
  }
  Diffusivity D;
  D.kind = Diffusivity::Kind::rank_one;
  D.v1 = std::move(v1);
  D.v2 = std::move(v2);
  D.a = std::move(a);
  D.k = k;
  return D;
}

Diffusivity diffusivity_adaptation(MonitorField f, double nu1, double nu2, double k,
                                   bool use_gradient) {
  require(nu2 > 0.0, ErrorKind::Input, "adaptation floor nu2 must be positive");
  Diffusivity D;
  D.kind = Diffusivity::Kind::scalar_monitor;
  D.monitor = std::move(f);
  D.nu1 = nu1;
  D.nu2 = nu2;
  D.k = k;
  D.use_gradient = use_gradient;
  return D;
}

Diffusivity diffusivity_boundary_layer(std::shared_ptr<const Quadrangulation> topo,
                                       double mu, double k, double nu,
                                       std::shared_ptr<const ControlMap> r) {
  require(topo != nullptr || r != nullptr, ErrorKind::Input,
          "boundary-layer diffusivity needs a coordinate source");
  require(nu > 0.0, ErrorKind::Input, "boundary-layer floor nu must be positive");
  Diffusivity D;
  D.kind = Diffusivity::Kind::boundary_layer;
  D.topo = std::move(topo);
  D.reference = std::move(r);
  D.layer_mu = mu;
  D.layer_k = k;
  D.layer_nu = nu;
  return D;
}

Diffusivity regularise_vertex(Diffusivity inner, double kappa,
                              std::shared_ptr<const Quadrangulation> topo,
                              std::shared_ptr<const ControlMap> r, bool sum_variant) {
  require(!diffusivity_state_dependent(inner), ErrorKind::Input,
          "vertex regularisation requires a state-independent inner diffusivity");
  require(topo != nullptr, ErrorKind::Input, "vertex regularisation needs the covering");
  require(kappa > 0.0, ErrorKind::Input, "vertex regularisation decay must be positive");
  Diffusivity D;
  D.kind = Diffusivity::Kind::vertex_regularised;
  D.topo = topo;
  D.reference = std::move(r);
  D.inner = std::make_shared<Diffusivity>(std::move(inner));
  D.blend_sum = sum_variant;
  auto blend = std::make_shared<VertexBlend>();
  blend->kappa = kappa;
  const VertexSet vs = shared_vertices(*topo);
  const double inset = 1e-10;
  for (const auto& sv : vs.entries) {
    VertexBlend::Entry en;
    en.d_min = sv.d_min;
    en.centre = coord_point(D, sv.patch_corners.front().first,
                            corner_mu(sv.patch_corners.front().second));
    Matrix2d acc = Matrix2d::Zero();
    for (const auto& [p, slot] : sv.patch_corners)
      acc += eval_diffusivity(*D.inner, p, corner_mu(slot, inset));
    en.D_bar = sum_variant ? acc : Matrix2d(acc / double(sv.patch_corners.size()));
    blend->entries.push_back(en);
  }
  // Partition-of-unity amplitudes: sum_i g_i = 1 at every shared vertex.
  const int n = static_cast<int>(blend->entries.size());
  if (n > 0) {
    Eigen::MatrixXd G(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double rr = (blend->entries[j].centre - blend->entries[i].centre).norm() *
                          kappa / blend->entries[i].d_min;
        G(j, i) = std::exp(-rr * rr);
      }
    const Eigen::VectorXd amp = G.partialPivLu().solve(Eigen::VectorXd::Ones(n));
    for (int i = 0; i < n; ++i) blend->entries[i].amplitude = amp[i];
  }
  D.blend = std::move(blend);
  return D;
}

// --- identity controlmap and projections ------------------------------------

ControlMap identity_controlmap(SpacePtr space) {
  const Quadrangulation& topo = *space->topo;
  Eigen::MatrixX2d c = Eigen::MatrixX2d::Zero(space->dim, 2);
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto gu = space->bases[p].kv_u.greville();
    const auto gv = space->bases[p].kv_v.greville();
    const int nu = space->bases[p].nu();
    for (std::size_t iv = 0; iv < gv.size(); ++iv)
      for (std::size_t iu = 0; iu < gu.size(); ++iu)
        c.row(space->dof_map[p][static_cast<int>(iu + nu * iv)]) =
            topo.map_point(p, {gu[iu], gv[iv]}).transpose();
  }
  ControlMap cm;
  cm.map = {std::move(space), std::move(c)};
  cm.identity_boundary = true;
  return cm;
}

GeometryMap l2_project_map(SpacePtr space,
                           const std::function<Vector2d(int, const Vector2d&)>& f,
                           int quad_order) {
  const Quadrangulation& topo = *space->topo;
  const int q = quad_order > 0 ? quad_order : max_degree(*space) + 3;
  const Quad1D& g = gauss_legendre(q);
  TripletVec trips;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(space->dim, 2);
  std::vector<double> bu, bv;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bku = space->bases[p].kv_u.breakpoints();
    const auto bkv = space->bases[p].kv_v.breakpoints();
    const int nu = space->bases[p].nu();
    const int pu = space->bases[p].kv_u.degree, pv = space->bases[p].kv_v.degree;
    for (std::size_t ev = 0; ev + 1 < bkv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bku.size(); ++eu)
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bku[eu] + g.x[iq] * (bku[eu + 1] - bku[eu]),
                              bkv[ev] + g.x[jq] * (bkv[ev + 1] - bkv[ev]));
            const double w = g.w[iq] * g.w[jq] * (bku[eu + 1] - bku[eu]) *
                             (bkv[ev + 1] - bkv[ev]) *
                             std::abs(patch_frame(topo, p, mu).det);
            const int fu = eval_basis(space->bases[p].kv_u, mu[0], 0, bu);
            const int fv = eval_basis(space->bases[p].kv_v, mu[1], 0, bv);
            const Vector2d val = f(p, mu);
            for (int j = 0; j <= pv; ++j)
              for (int i = 0; i <= pu; ++i) {
                const int gi = space->dof_map[p][(fu + i) + nu * (fv + j)];
                const double Bi = bu[i] * bv[j];
                rhs.row(gi) += (w * Bi) * val.transpose();
                for (int j2 = 0; j2 <= pv; ++j2)
                  for (int i2 = 0; i2 <= pu; ++i2) {
                    const int gj = space->dof_map[p][(fu + i2) + nu * (fv + j2)];
                    trips.emplace_back(gi, gj, w * Bi * bu[i2] * bv[j2]);
                  }
              }
          }
  }
  Eigen::SparseMatrix<double> M(space->dim, space->dim);
  M.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(M);
  require(chol.info() == Eigen::Success, ErrorKind::LinearSolver,
          "L2 projection mass matrix factorisation failed");
  Eigen::MatrixX2d c(space->dim, 2);
  c.col(0) = chol.solve(rhs.col(0));
  c.col(1) = chol.solve(rhs.col(1));
  return {std::move(space), std::move(c)};
}

void project_boundary_trace(
    const MultipatchSpace& space,
    const std::function<Vector2d(const Quadrangulation::BoundaryEdge&, double)>& g,
    Eigen::MatrixX2d& coeffs) {
  const Quadrangulation& topo = *space.topo;
  const int nb = static_cast<int>(space.boundary_dofs.size());
  std::vector<int> bidx(space.dim, -1);
  for (int i = 0; i < nb; ++i) bidx[space.boundary_dofs[i]] = i;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(nb, 2);
  std::vector<double> vals;
  for (const auto& side : topo.sides)
    for (const auto& be : side) {
      const KnotVector& kv = space.edge_kv(be.patch, be.edge);
      const auto dofs = space.edge_global_dofs(be.patch, be.edge);
      const Vector2d tan_mu =
          edge_param_dir(be.edge) == 0 ? Vector2d(1, 0) : Vector2d(0, 1);
      const auto bk = kv.breakpoints();
      const Quad1D& gr = gauss_legendre(kv.degree + 3);
      for (std::size_t es = 0; es + 1 < bk.size(); ++es)
        for (std::size_t iq = 0; iq < gr.x.size(); ++iq) {
          const double u = bk[es] + gr.x[iq] * (bk[es + 1] - bk[es]);
          const Vector2d mu = edge_mu(be.edge, u);
          const double w = gr.w[iq] * (bk[es + 1] - bk[es]) *
                           (topo.map_jacobian(be.patch, mu) * tan_mu).norm();
          const int first = eval_basis(kv, u, 0, vals);
          const Vector2d val = g(be, u);
          for (std::size_t i = 0; i < vals.size(); ++i) {
            const int ri = bidx[dofs[first + i]];
            rhs.row(ri) += (w * vals[i]) * val.transpose();
            for (std::size_t j = 0; j < vals.size(); ++j)
              M(ri, bidx[dofs[first + j]]) += w * vals[i] * vals[j];
          }
        }
    }
  const Eigen::LDLT<Eigen::MatrixXd> chol(M);
  const Eigen::MatrixX2d sol = chol.solve(rhs);
  for (int i = 0; i < nb; ++i) coeffs.row(space.boundary_dofs[i]) = sol.row(i);
}

// --- linear diffusion controlmap --------------------------------------------

ControlMap solve_control_diffusion(SpacePtr space, const Diffusivity& D,
                                   const ControlMap* reference, const SolverConfig& cfg) {
  require(!diffusivity_state_dependent(D), ErrorKind::Input,
          "solve_control_diffusion needs a state-independent diffusivity");
  const Quadrangulation& topo = *space->topo;
  ControlMap ident;
  const ControlMap* ref = reference;
  if (ref == nullptr) {
    ident = identity_controlmap(space);
    ref = &ident;
  }
  require(ref->map.coeffs.rows() == space->dim, ErrorKind::Input,
          "reference controlmap must live in the solve space");
  RefCoords coords{reference ? &reference->map : nullptr};

  SystemSpec spec;
  spec.fields = {map_field(*space)};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u = flatten_coeffs(ref->map.coeffs);
  const int q = cfg.quad(max_degree(*space));
  auto kern = [&](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    const Frame2 fr = coords.frame(topo, ctx.patch, ctx.mu);
    const Mat2T<T> Dm = Mat2T<T>::from(eval_diffusivity(D, ctx.patch, ctx.mu));
    for (int i = 0; i < 2; ++i) {
      const Vec2T<T> gi = grad_in_frame(fr, ctx.state.grad_mu(0, i));
      add_test_frame<T>(ctx.test, fr, 0, i, T(0.0), fr.det * (Dm * gi), {}, false);
    }
  };
  Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.total);
  TripletVec trips;
  assemble_volume<4>(spec, layout, u, q, kern, &r, &trips);
  finalize_system(spec, &r, &trips);
  u += solve_sparse(to_sparse(spec.total, trips), -r);

  ControlMap out;
  out.map = {space, unflatten_coeffs(u, space->dim)};
  out.identity_boundary = ref->identity_boundary;
  out.target = ref->target;

  // Degeneracy diagnostic: det(d s / d r) at the assembly quadrature points.
  int bad = 0;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bku = space->bases[p].kv_u.breakpoints();
    const auto bkv = space->bases[p].kv_v.breakpoints();
    const Quad1D& gr = gauss_legendre(q);
    for (std::size_t ev = 0; ev + 1 < bkv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bku.size(); ++eu)
        for (std::size_t jq = 0; jq < gr.x.size(); ++jq)
          for (std::size_t iq = 0; iq < gr.x.size(); ++iq) {
            const Vector2d mu(bku[eu] + gr.x[iq] * (bku[eu + 1] - bku[eu]),
                              bkv[ev] + gr.x[jq] * (bkv[ev + 1] - bkv[ev]));
            const Frame2 fr = coords.frame(topo, p, mu);
            const Matrix2d Jsr = out.map.eval(p, mu, 1).Jmu * fr.Jinv;
            if (Jsr.determinant() <= 0.0) ++bad;
          }
  }
  if (bad > 0)
    std::fprintf(stderr,
                 "warning: diffusion controlmap is degenerate at %d quadrature points\n",
                 bad);
  return out;
}

// --- controlled weak form / coupled solve -----------------------------------

namespace {

struct CtrlWeakAssembler {
  const SystemSpec* spec = nullptr;
  const StateLayout* layout = nullptr;
  const Quadrangulation* topo = nullptr;
  int q = 0;
  double eps = 1e-4;
  RefCoords coords;
  const GeometryMap* s_fixed = nullptr;  // controlled mode: fixed controlmap
  const Diffusivity* Dx = nullptr;
  const Diffusivity* Ds = nullptr;  // coupled mode: controlmap diffusivity
  bool coupled = false;

  template <int N>
  void run(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) const {
    auto kern = [this](auto& ctx) {
      using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
      const Frame2 fr = coords.frame(*topo, ctx.patch, ctx.mu);
      const Vec2T<T> xv{ctx.state.val(0, 0), ctx.state.val(0, 1)};
      const Mat2T<T> xjmu = ctx.state.jac_mu(0);
      const Mat2T<T> Jxr = jac_in_frame(fr, xjmu);
      Mat2T<T> Jsr;
      if (coupled) {
        Jsr = jac_in_frame(fr, ctx.state.jac_mu(1));
      } else if (s_fixed != nullptr) {
        const MapJet js = s_fixed->eval(ctx.patch, ctx.mu, 1);
        Jsr = Mat2T<T>::from(Matrix2d(js.Jmu * fr.Jinv));
      } else {
        Jsr = Mat2T<T>::identity();
      }
      const Mat2T<T> Cs = kernels::cmat(Jsr);
      const Mat2T<T> Q = kernels::cmat(Jxr) * Jsr.transpose();
      const Mat2T<T> Dm = eval_D<T>(*Dx, ctx.patch, ctx.mu, &xv, &xjmu);
      const T R = kernels::reg_det(Q.det(), eps);
      const Mat2T<T> MC = (T(1.0) / R) * ((Q.transpose() * (Dm * Q)) * Cs);
      for (int k = 0; k < 2; ++k) {
        const Vec2T<T> coeff{MC(k, 0), MC(k, 1)};
        add_test_frame<T>(ctx.test, fr, 0, k, T(0.0), fr.det * coeff, {}, false);
      }
      if (coupled) {
        const Mat2T<T> Dsm = eval_D<T>(*Ds, ctx.patch, ctx.mu, &xv, &xjmu);
        for (int i = 0; i < 2; ++i) {
          const Vec2T<T> gi = grad_in_frame(fr, ctx.state.grad_mu(1, i));
          add_test_frame<T>(ctx.test, fr, 1, i, T(0.0), fr.det * (Dsm * gi), {}, false);
        }
      }
    };
    assemble_volume<N>(*spec, *layout, u, q, kern, res, jac);
    finalize_system(*spec, res, jac);
  }
};

// Residual-only evaluations may land on inadmissible line-search candidates
// (e.g. non-positive cell Jacobians inside a homogenisation model); report
// them as an infinite residual so the driver shrinks the step.
template <int N>
NonlinearProblem make_problem(const CtrlWeakAssembler& wf) {
  NonlinearProblem prob;
  prob.size = wf.spec->total;
  prob.assemble = [&wf](const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac) {
    if (jac != nullptr) {
      wf.template run<N>(u, res, jac);
      return;
    }
    try {
      wf.template run<0>(u, res, nullptr);
    } catch (const Error&) {
      res->setConstant(std::numeric_limits<double>::infinity());
    }
  };
  return prob;
}

template <int N>
SolveReport continuation_solve(CtrlWeakAssembler& wf, Eigen::VectorXd& u,
                               const SolverConfig& cfg) {
  const NonlinearProblem prob = make_problem<N>(wf);
  SolveReport total;
  double eps = cfg.eps_weak;
  while (true) {
    wf.eps = eps;
    SolveReport rep = newton_driver(prob, u, cfg);
    total.iterations += rep.iterations;
    total.final_residual = rep.final_residual;
    total.converged = rep.converged;
    for (auto& t : rep.trace) total.trace.push_back(t);
    if (!cfg.eps_continuation || eps <= cfg.eps_weak_min * 1.0000001 || !rep.converged)
      break;
    eps *= 0.1;
  }
  return total;
}

}  // namespace

GeometryMap solve_weak_form_controlled(const GeometryMap& initial, const ControlMap& s,
                                       const Diffusivity& Dx, const SolverConfig& cfg,
                                       SolveReport* report) {
  SpacePtr space = initial.space;
  require(s.map.coeffs.rows() == space->dim, ErrorKind::Input,
          "controlmap must live in the map space");
  SystemSpec spec;
  FieldDef fx = map_field(*space);
  fx.ders = kVal | kGrad;
  spec.fields = {fx};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u = flatten_coeffs(initial.coeffs);

  CtrlWeakAssembler wf;
  wf.spec = &spec;
  wf.layout = &layout;
  wf.topo = space->topo.get();
  wf.q = cfg.quad(max_degree(*space));
  wf.coords = RefCoords{nullptr};
  wf.s_fixed = &s.map;
  wf.Dx = &Dx;
  const SolveReport rep = continuation_solve<6>(wf, u, cfg);
  if (report) *report = rep;
  return {space, unflatten_coeffs(u, space->dim)};
}

std::pair<GeometryMap, ControlMap> solve_coupled(const GeometryMap& x_ref,
                                                 const ControlMap& r, const Diffusivity& Dx,
                                                 const Diffusivity& Ds,
                                                 const SolverConfig& cfg,
                                                 SolveReport* report) {
  SpacePtr space = x_ref.space;
  require(r.map.coeffs.rows() == space->dim, ErrorKind::Input,
          "reference controlmap must live in the map space");
  SystemSpec spec;
  FieldDef fx = map_field(*space);
  fx.ders = kVal | kGrad;
  spec.fields = {fx, map_field(*space)};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);
  Eigen::VectorXd u(spec.total);
  u.head(2 * space->dim) = flatten_coeffs(x_ref.coeffs);
  u.tail(2 * space->dim) = flatten_coeffs(r.map.coeffs);

  CtrlWeakAssembler wf;
  wf.spec = &spec;
  wf.layout = &layout;
  wf.topo = space->topo.get();
  wf.q = cfg.quad(max_degree(*space));
  wf.coords = RefCoords{&r.map};
  wf.Dx = &Dx;
  wf.Ds = &Ds;
  wf.coupled = true;
  const SolveReport rep = continuation_solve<10>(wf, u, cfg);
  if (report) *report = rep;

  GeometryMap x{space, unflatten_coeffs(u.head(2 * space->dim), space->dim)};
  ControlMap s;
  s.map = {space, unflatten_coeffs(u.tail(2 * space->dim), space->dim)};
  s.identity_boundary = r.identity_boundary;
  s.target = r.target;
  return {std::move(x), std::move(s)};
}

namespace {

// Boundary value of a map at side parameter t (locates the boundary edge
// containing t; edges partition the side, possibly with reversed parameters).
Vector2d eval_side_trace(const GeometryMap& x, int side, double t) {
  const Quadrangulation& topo = *x.space->topo;
  const auto& edges = topo.sides[side];
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& be = edges[i];
    const double lo = std::min(be.t0, be.t1), hi = std::max(be.t0, be.t1);
    if (t < lo - 1e-12 || t > hi + 1e-12) continue;
    double uu = (t - be.t0) / (be.t1 - be.t0);
    uu = std::min(1.0, std::max(0.0, uu));
    return x.eval(be.patch, edge_mu(be.edge, uu), 0).x;
  }
  fail(ErrorKind::Input, "side parameter outside [0, 1]");
}

}  // namespace

GeometryMap reparameterise_map(const GeometryMap& x_ref, const ControlMap& s,
                               const Diffusivity& Dx, const SolverConfig& cfg,
                               SolveReport* report) {
  const MultipatchSpace& space = *x_ref.space;
  const Quadrangulation& topo = *space.topo;
  Eigen::MatrixX2d c0 = x_ref.coeffs;
  if (!s.identity_boundary) {
    // Dirichlet data: trace of x_ref composed with s. The controlmap keeps
    // every side invariant, so the composed point is located by its side
    // parameter.
    project_boundary_trace(
        space,
        [&](const Quadrangulation::BoundaryEdge& be, double u) {
          const Vector2d p = s.map.eval(be.patch, edge_mu(be.edge, u), 0).x;
          const Vector2d s0 = topo.side_start(be.side);
          const Vector2d dir = topo.side_end(be.side) - s0;
          double t = (p - s0).dot(dir) / dir.squaredNorm();
          t = std::min(1.0, std::max(0.0, t));
          return eval_side_trace(x_ref, be.side, t);
        },
        c0);
  }
  const GeometryMap init{x_ref.space, std::move(c0)};
  return solve_weak_form_controlled(init, s, Dx, cfg, report);
}

// --- Coons patches ----------------------------------------------------------

Eigen::MatrixX2d coons_patch(const std::array<Curve, 4>& edges, const TensorBasis& tb) {
  require(edges[0].kv == tb.kv_u && edges[2].kv == tb.kv_u && edges[1].kv == tb.kv_v &&
              edges[3].kv == tb.kv_v,
          ErrorKind::Input, "coons_patch: edge knot vectors do not match the basis");
  const Vector2d c00 = edges[0].points.front(), c10 = edges[0].points.back();
  const Vector2d c01 = edges[2].points.front(), c11 = edges[2].points.back();
  require((edges[3].points.front() - c00).norm() < 1e-10 &&
              (edges[1].points.front() - c10).norm() < 1e-10 &&
              (edges[3].points.back() - c01).norm() < 1e-10 &&
              (edges[1].points.back() - c11).norm() < 1e-10,
          ErrorKind::Input, "coons_patch: edge curves do not meet at the corners");
  const auto gu = tb.kv_u.greville();
  const auto gv = tb.kv_v.greville();
  const int nu = tb.nu(), nv = tb.nv();
  Eigen::MatrixX2d c(nu * nv, 2);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double su = gu[i], sv = gv[j];
      const Vector2d bil = (1 - su) * (1 - sv) * c00 + su * (1 - sv) * c10 +
                           su * sv * c11 + (1 - su) * sv * c01;
      c.row(i + nu * j) = ((1 - sv) * edges[0].points[i] + sv * edges[2].points[i] +
                           (1 - su) * edges[3].points[j] + su * edges[1].points[j] - bil)
                              .transpose();
    }
  return c;
}

// --- boundary orthogonalisation ---------------------------------------------

namespace {

struct BoundaryPatchReparam {
  int patch = -1, edge = -1;
  KnotVector kv;        // outer-edge knot vector (parameter a)
  Eigen::VectorXd q;    // coefficients of the tangential reparameterisation
};

// Preconditions shared by the orthogonalisation and boundary-layer builders:
// every side is covered by exactly one patch edge, and that patch touches the
// boundary only there.
std::vector<Quadrangulation::BoundaryEdge> single_edge_sides(const Quadrangulation& topo,
                                                             const char* who) {
  std::vector<Quadrangulation::BoundaryEdge> out;
  for (const auto& side : topo.sides) {
    require(side.size() == 1, ErrorKind::Input,
            std::string(who) + ": every boundary side must be covered by a single patch");
    const auto& be = side.front();
    require(topo.outer_edge[be.patch] == be.edge, ErrorKind::Input,
            std::string(who) + ": boundary patches must touch the boundary on one edge");
    out.push_back(be);
  }
  return out;
}

// Harmonic tangential coordinate of one boundary patch in the physical
// pullback: Laplace(f) = 0 in x-coordinates, f = a on the three non-outer
// edges, natural (zero Neumann) on the outer edge. The trace slope vanishes
// wherever an interface meets the boundary obliquely, so the problem is
// solved on a dyadically refined copy of the patch basis to resolve that
// corner behaviour. Returns the outer-edge knot vector of the refined basis
// and the trace coefficients, a monotone reparameterisation of [0, 1].
std::pair<KnotVector, Eigen::VectorXd> harmonic_edge_reparam(const GeometryMap& x_ref, int p,
                                                             int e_out) {
  const MultipatchSpace& space = *x_ref.space;
  RawTopology raw;
  raw.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  raw.patches = {{0, 1, 2, 3}};
  raw.sides = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  auto unit = std::make_shared<Quadrangulation>(build_topology(raw));
  // A moderately refined copy of the patch basis: accurate enough for the
  // trace, while not resolving the vanishing corner slope so sharply that the
  // composed controlmap becomes degenerate there.
  MultipatchSpace sub = build_space(unit, {space.bases[p]});
  int spans = 8;
  if (const char* env = std::getenv("MPP_COLLAR_SPANS")) spans = std::atoi(env);
  while (std::min(sub.bases[0].kv_u.span_count(), sub.bases[0].kv_v.span_count()) < spans)
    sub = refine_space(sub);

  SystemSpec spec;
  FieldDef fd;
  fd.space = &sub;
  fd.ncomp = 1;
  fd.ders = kGrad;
  fd.fixed.assign(sub.dim, 0);
  for (int e = 0; e < 4; ++e) {
    if (e == e_out) continue;
    for (int d : sub.edge_global_dofs(0, e)) fd.fixed[d] = 1;
  }
  spec.fields = {fd};
  spec.finalize();
  const StateLayout layout = StateLayout::make(spec);

  // Dirichlet/initial data: the tangential coordinate itself (linear, so the
  // Greville values are exact).
  const int adir = edge_param_dir(e_out);
  const auto gu = sub.bases[0].kv_u.greville();
  const auto gv = sub.bases[0].kv_v.greville();
  const int nu = sub.bases[0].nu();
  Eigen::VectorXd u(sub.dim);
  for (std::size_t iv = 0; iv < gv.size(); ++iv)
    for (std::size_t iu = 0; iu < gu.size(); ++iu)
      u[sub.dof_map[0][static_cast<int>(iu + nu * iv)]] = adir == 0 ? gu[iu] : gv[iv];

  const int q = sub.bases[0].kv_u.degree + sub.bases[0].kv_v.degree + 2;
  auto kern = [&](auto& ctx) {
    using T = std::decay_t<decltype(ctx.state.val(0, 0))>;
    const MapJet jet = x_ref.eval(p, ctx.mu, 1);
    Frame2 fx;
    fx.J = jet.Jmu;
    // Clamp the determinant away from zero: a reference that is marginally
    // degenerate at isolated corner points (e.g. an already-orthogonalised
    // map being re-orthogonalised) still defines a usable collar problem.
    fx.det = std::max(fx.J.determinant(), 1e-6);
    Matrix2d adj;
    adj << fx.J(1, 1), -fx.J(0, 1), -fx.J(1, 0), fx.J(0, 0);
    fx.Jinv = adj / fx.det;
    const Vec2T<T> g = grad_in_frame(fx, ctx.state.grad_mu(0, 0));
    add_test_frame<T>(ctx.test, fx, 0, 0, T(0.0), fx.det * g, {}, false);
  };
  Eigen::VectorXd r = Eigen::VectorXd::Zero(spec.total);
  TripletVec trips;
  assemble_volume<2>(spec, layout, u, q, kern, &r, &trips);
  finalize_system(spec, &r, &trips);
  u += solve_sparse(to_sparse(spec.total, trips), -r);

  const auto edofs = sub.edge_global_dofs(0, e_out);
  Eigen::VectorXd qc(edofs.size());
  for (std::size_t i = 0; i < edofs.size(); ++i) qc[i] = u[edofs[i]];

  // Monotonicity of the induced boundary reparameterisation. The exact trace
  // is monotone, but its slope vanishes at corners where an interface meets
  // the boundary at an oblique angle, so the discrete trace undershoots zero
  // there by a resolution-dependent amount. A dip that is small relative to
  // the peak slope is that corner artifact and is tolerated (the regularised
  // controlled solve absorbs it); anything larger is rejected.
  const KnotVector& kv = sub.edge_kv(0, e_out);
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (int i = 0; i <= 512; ++i) {
    const double s = eval_edge_spline(kv, qc, i / 512.0, 1);
    dmin = std::min(dmin, s);
    dmax = std::max(dmax, s);
  }
  if (!(dmin > -0.05 * dmax)) {
    std::fprintf(stderr,
                 "warning: boundary reparameterisation is non-monotone on patch %d "
                 "(min slope %g); rejecting\n",
                 p, dmin);
    fail(ErrorKind::Numerical, "boundary orthogonalisation produced a non-monotone "
                               "tangential reparameterisation");
  }
  return {kv, qc};
}

}  // namespace

ControlMap boundary_orth_controlmap(const GeometryMap& x_ref, OrthVariant variant,
                                    const SolverConfig& cfg, const ControlMap* reference) {
  (void)cfg;
  const MultipatchSpace& space = *x_ref.space;
  const Quadrangulation& topo = *space.topo;
  const auto bedges = single_edge_sides(topo, "boundary orthogonalisation");
  require(variant == OrthVariant::q || max_degree(space) >= 3, ErrorKind::Input,
          "the blended orthogonalisation variant requires degree >= 3");

  std::map<int, BoundaryPatchReparam> bps;
  for (const auto& be : bedges) {
    BoundaryPatchReparam bp;
    bp.patch = be.patch;
    bp.edge = be.edge;
    std::tie(bp.kv, bp.q) = harmonic_edge_reparam(x_ref, be.patch, be.edge);
    bps.emplace(be.patch, std::move(bp));
  }

  // Neighbour lookup across interior facets.
  std::map<std::pair<int, int>, std::tuple<int, int, bool>> nbr;
  for (const auto& fc : topo.interior_facets) {
    nbr[{fc.pi, fc.ei}] = {fc.pj, fc.ej, fc.flip};
    nbr[{fc.pj, fc.ej}] = {fc.pi, fc.ei, fc.flip};
  }

  // Coordinates being reparameterised: the reference controlmap when given,
  // else the bilinear patch maps.
  auto coord = [&](int p, const Vector2d& mu) -> Vector2d {
    return reference ? reference->map.eval(p, mu, 0).x : topo.map_point(p, mu);
  };
  auto s_boundary = [&](const BoundaryPatchReparam& bp, const Vector2d& mu) {
    const auto [a, b] = ab_of_mu(bp.edge, mu);
    const double qa = eval_edge_spline(bp.kv, bp.q, a, 0);
    const double nu1 = variant == OrthVariant::q
                           ? qa
                           : (1 + 2 * b) * (1 - b) * (1 - b) * a + (3 - 2 * b) * b * b * qa;
    return coord(bp.patch, mu_of_ab(bp.edge, nu1, b));
  };
  auto edge_curve = [&](int p, int e, double t) -> Vector2d {
    const auto it = nbr.find({p, e});
    if (it != nbr.end()) {
      const auto [pj, ej, flip] = it->second;
      const auto bit = bps.find(pj);
      if (bit != bps.end()) return s_boundary(bit->second, edge_mu(ej, flip ? 1 - t : t));
    }
    return topo.map_point(p, edge_mu(e, t));
  };
  auto s_val = [&](int p, const Vector2d& mu) -> Vector2d {
    const auto bit = bps.find(p);
    if (bit != bps.end()) return s_boundary(bit->second, mu);
    if (variant == OrthVariant::t) return topo.map_point(p, mu);
    // Coons fill of the interior patch from its (possibly reparameterised)
    // edge curves.
    const double su = mu[0], sv = mu[1];
    const Vector2d e0 = edge_curve(p, 0, su), e2 = edge_curve(p, 2, su);
    const Vector2d e3 = edge_curve(p, 3, sv), e1 = edge_curve(p, 1, sv);
    const Vector2d p00 = edge_curve(p, 0, 0), p10 = edge_curve(p, 0, 1);
    const Vector2d p01 = edge_curve(p, 2, 0), p11 = edge_curve(p, 2, 1);
    const Vector2d bil = (1 - su) * (1 - sv) * p00 + su * (1 - sv) * p10 + su * sv * p11 +
                         (1 - su) * sv * p01;
    return (1 - sv) * e0 + sv * e2 + (1 - su) * e3 + su * e1 - bil;
  };

  ControlMap out;
  out.map = l2_project_map(x_ref.space, s_val, max_degree(space) + 3);
  out.identity_boundary = false;
  if (variant == OrthVariant::q)
    for (auto& [p, bp] : bps) out.boundary_reparam.emplace(p, std::make_pair(bp.kv, bp.q));
  return out;
}

// --- orthogonal boundary layer ----------------------------------------------

namespace {

// g(d) = d / (e^d - 1), the normalised first-cell slope of the layer profile
// f_d(b) = (1 - e^{-d b}) / (1 - e^{-d}); g -> 1 as d -> 0+.
void layer_slope_ders(double d, double& g, double& g1, double& g2) {
  if (std::abs(d) < 1e-2) {
    const double d2 = d * d;
    g = 1.0 - d / 2 + d2 / 12 - d2 * d2 / 720;
    g1 = -0.5 + d / 6 - d2 * d / 180;
    g2 = 1.0 / 6 - d2 / 60;
    return;
  }
  if (d > 40.0) {
    const double e = std::exp(-d);
    g = d * e;
    g1 = (1.0 - d) * e;
    g2 = (d - 2.0) * e;
    return;
  }
  const double E = std::exp(d), F = std::expm1(d);
  g = d / F;
  g1 = 1.0 / F - d * E / (F * F);
  g2 = -E * (2.0 + d) / (F * F) + 2.0 * d * E * E / (F * F * F);
}

double layer_profile(double d, double b) {
  if (std::abs(d) < 1e-8) return b;
  return std::expm1(-d * b) / std::expm1(-d);
}

}  // namespace

double layer_slope(double d) {
  double g, g1, g2;
  layer_slope_ders(d, g, g1, g2);
  return g;
}

double mean_boundary_speed(const GeometryMap& x) {
  const MultipatchSpace& space = *x.space;
  const Quadrangulation& topo = *space.topo;
  double num = 0.0, den = 0.0;
  for (const auto& side : topo.sides)
    for (const auto& be : side) {
      const KnotVector& kv = space.edge_kv(be.patch, be.edge);
      const Vector2d tan_mu =
          edge_param_dir(be.edge) == 0 ? Vector2d(1, 0) : Vector2d(0, 1);
      const Vector2d n_mu = edge_outward_mu(be.edge);
      const auto bk = kv.breakpoints();
      const Quad1D& gr = gauss_legendre(kv.degree + 2);
      for (std::size_t es = 0; es + 1 < bk.size(); ++es)
        for (std::size_t iq = 0; iq < gr.x.size(); ++iq) {
          const double u = bk[es] + gr.x[iq] * (bk[es + 1] - bk[es]);
          const Vector2d mu = edge_mu(be.edge, u);
          const double w = gr.w[iq] * (bk[es + 1] - bk[es]) *
                           (topo.map_jacobian(be.patch, mu) * tan_mu).norm();
          num += w * (x.eval(be.patch, mu, 1).Jmu * n_mu).norm();
          den += w;
        }
    }
  return num / den;
}

ControlMap boundary_layer_orthogonal(const GeometryMap& x_s, const ControlMap& s_orth,
                                     double k_target, const SolverConfig& cfg) {
  const MultipatchSpace& space = *x_s.space;
  const Quadrangulation& topo = *space.topo;
  require(k_target > 0.0, ErrorKind::Input, "layer thickness target must be positive");
  require(!s_orth.boundary_reparam.empty(), ErrorKind::Input,
          "the orthogonal boundary layer requires a q-variant orthogonalised controlmap");
  const auto bedges = single_edge_sides(topo, "orthogonal boundary layer");
  for (const auto& be : bedges)
    require(s_orth.boundary_reparam.count(be.patch) == 1, ErrorKind::Input,
            "orthogonalised controlmap is missing a boundary reparameterisation");

  // Unknown: the grading d over the boundary trace space.
  const int nb = static_cast<int>(space.boundary_dofs.size());
  std::vector<int> bidx(space.dim, -1);
  for (int i = 0; i < nb; ++i) bidx[space.boundary_dofs[i]] = i;

  struct QP {
    int row_first = 0;           // first boundary-trace row of the active functions
    std::vector<int> rows;       // boundary-trace rows of the active basis functions
    std::vector<double> basis;   // their values
    double w = 0.0;              // arc-length quadrature weight
    double b = 0.0;              // transverse derivative magnitude of x_s
  };
  std::vector<QP> qps;
  for (const auto& be : bedges) {
    const KnotVector& kv = space.edge_kv(be.patch, be.edge);
    const auto dofs = space.edge_global_dofs(be.patch, be.edge);
    const Vector2d tan_mu = edge_param_dir(be.edge) == 0 ? Vector2d(1, 0) : Vector2d(0, 1);
    const Vector2d n_mu = edge_outward_mu(be.edge);
    const auto bk = kv.breakpoints();
    const Quad1D& gr = gauss_legendre(kv.degree + 3);
    std::vector<double> vals;
    for (std::size_t es = 0; es + 1 < bk.size(); ++es)
      for (std::size_t iq = 0; iq < gr.x.size(); ++iq) {
        QP qp;
        const double u = bk[es] + gr.x[iq] * (bk[es + 1] - bk[es]);
        const Vector2d mu = edge_mu(be.edge, u);
        qp.w = gr.w[iq] * (bk[es + 1] - bk[es]) *
               (topo.map_jacobian(be.patch, mu) * tan_mu).norm();
        qp.b = (x_s.eval(be.patch, mu, 1).Jmu * n_mu).norm();
        const int first = eval_basis(kv, u, 0, vals);
        qp.basis = vals;
        for (std::size_t i = 0; i < vals.size(); ++i)
          qp.rows.push_back(bidx[dofs[first + i]]);
        qps.push_back(std::move(qp));
      }
  }

  // Initial grading: constant d0 with bbar * g(d0) = k_target.
  double bbar = 0.0, wsum = 0.0;
  for (const auto& qp : qps) {
    bbar += qp.w * qp.b;
    wsum += qp.w;
  }
  bbar /= wsum;
  double d0 = 1e-3;
  if (k_target < bbar) {
    double lo = 1e-6, hi = 200.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (layer_slope(mid) > k_target / bbar ? lo : hi) = mid;
    }
    d0 = 0.5 * (lo + hi);
  } else {
    std::fprintf(stderr,
                 "warning: layer target %g exceeds the mean boundary thickness %g; "
                 "using a near-identity grading\n",
                 k_target, bbar);
  }
  Eigen::VectorXd dvec = Eigen::VectorXd::Constant(nb, d0);

  // Least-squares fit of b(xi) g(d(xi)) to k_target by Newton iteration with a
  // Gauss-Newton fallback.
  auto cost_of = [&](const Eigen::VectorXd& dv) {
    double c = 0.0;
    for (const auto& qp : qps) {
      double d = 0.0;
      for (std::size_t i = 0; i < qp.rows.size(); ++i) d += qp.basis[i] * dv[qp.rows[i]];
      const double e = qp.b * layer_slope(d) - k_target;
      c += qp.w * e * e;
    }
    return c;
  };
  double cost = cost_of(dvec);
  Eigen::VectorXd grad(nb);
  Eigen::MatrixXd Hf(nb, nb), Hg(nb, nb);
  for (int it = 0; it < cfg.max_iter * 2; ++it) {
    grad.setZero();
    Hf.setZero();
    Hg.setZero();
    for (const auto& qp : qps) {
      double d = 0.0;
      for (std::size_t i = 0; i < qp.rows.size(); ++i) d += qp.basis[i] * dvec[qp.rows[i]];
      double g, g1, g2;
      layer_slope_ders(d, g, g1, g2);
      const double e = qp.b * g - k_target;
      for (std::size_t i = 0; i < qp.rows.size(); ++i) {
        grad[qp.rows[i]] += qp.w * 2.0 * e * qp.b * g1 * qp.basis[i];
        for (std::size_t j = 0; j < qp.rows.size(); ++j) {
          const double bb = qp.basis[i] * qp.basis[j];
          Hg(qp.rows[i], qp.rows[j]) += qp.w * 2.0 * qp.b * qp.b * g1 * g1 * bb;
          Hf(qp.rows[i], qp.rows[j]) +=
              qp.w * 2.0 * (qp.b * qp.b * g1 * g1 + e * qp.b * g2) * bb;
        }
      }
    }
    if (grad.norm() < 1e-12 * std::max(1.0, cost)) break;
    Eigen::VectorXd delta = Hf.ldlt().solve(-grad);
    if (!delta.allFinite() || grad.dot(delta) >= 0.0)
      delta = (Hg + 1e-12 * Eigen::MatrixXd::Identity(nb, nb)).ldlt().solve(-grad);
    double step = 1.0;
    bool accepted = false;
    while (step >= cfg.ls_min_step) {
      const Eigen::VectorXd dtry = dvec + step * delta;
      const double ctry = cost_of(dtry);
      if (std::isfinite(ctry) && ctry <= cost + cfg.ls_armijo * step * grad.dot(delta)) {
        dvec = dtry;
        cost = ctry;
        accepted = true;
        break;
      }
      step *= cfg.ls_shrink;
    }
    if (!accepted) break;
  }

  // Composed controlmap: exponential grading through the boundary patches,
  // the orthogonalised controlmap elsewhere.
  bool clamped = false;
  auto d_of = [&](int p, int e, double a) {
    const KnotVector& kv = space.edge_kv(p, e);
    const auto dofs = space.edge_global_dofs(p, e);
    std::vector<double> vals;
    const int first = eval_basis(kv, a, 0, vals);
    double v = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) v += vals[i] * dvec[bidx[dofs[first + i]]];
    if (v <= 0.0) {
      clamped = true;
      return 1e-3;
    }
    return v;
  };
  auto s_val = [&](int p, const Vector2d& mu) -> Vector2d {
    const auto it = s_orth.boundary_reparam.find(p);
    if (it == s_orth.boundary_reparam.end()) return s_orth.map.eval(p, mu, 0).x;
    const int e = topo.outer_edge[p];
    const auto [a, b] = ab_of_mu(e, mu);
    const double qa = eval_edge_spline(it->second.first, it->second.second, a, 0);
    return topo.map_point(p, mu_of_ab(e, qa, layer_profile(d_of(p, e, a), b)));
  };
  ControlMap out;
  out.map = l2_project_map(x_s.space, s_val, max_degree(space) + 3);
  out.identity_boundary = false;
  out.target = s_orth.target;
  out.boundary_reparam = s_orth.boundary_reparam;
  if (clamped)
    std::fprintf(stderr,
                 "warning: nonpositive layer grading clamped to 1e-3 during evaluation\n");
  return out;
}

}  // namespace mp
