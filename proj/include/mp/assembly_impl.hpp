// Template bodies for the volume / interior-facet / boundary assemblers.
// Included at the end of assembly.hpp; do not include directly.
#pragma once

namespace mp {

namespace detail {

// Per-element scratch: located field data, local dof enumeration and basis
// tables (per field, per local basis function, six derivative slots).
struct ElemWork {
  std::vector<FieldElemData> fe;
  LocalIndex li;
  std::vector<std::vector<std::array<double, 6>>> B;

  void locate(const SystemSpec& spec, int patch, const Vector2d& mid) {
    locate_fields(spec, patch, mid, fe);
    li.build(spec, fe);
    B.resize(spec.fields.size());
    for (std::size_t f = 0; f < spec.fields.size(); ++f)
      B[f].resize(fe[f].gdofs.size());
  }
  void tabulate(const SystemSpec& spec, int patch, const Vector2d& mu) {
    for (std::size_t f = 0; f < spec.fields.size(); ++f) {
      const TensorBasis& tb = spec.fields[f].space->bases[patch];
      eval_basis_all(tb.kv_u, mu[0], 2, fe[f].bu);
      eval_basis_all(tb.kv_v, mu[1], 2, fe[f].bv);
      int k = 0;
      for (int j = 0; j <= fe[f].pv; ++j)
        for (int i = 0; i <= fe[f].pu; ++i, ++k) basis_slots(fe[f], i, j, B[f][k].data());
    }
  }
};

inline std::vector<int> comp_offsets(const SystemSpec& spec) {
  std::vector<int> off(spec.fields.size() + 1, 0);
  for (std::size_t f = 0; f < spec.fields.size(); ++f)
    off[f + 1] = off[f] + spec.fields[f].ncomp;
  return off;
}

// Contract one quadrature point's kernel output against the test basis of one
// side, accumulating the residual and the element-local Jacobian block.
template <class T>
void contract_side(const SystemSpec& spec, const StateLayout& layout, double w,
                   const std::vector<std::array<T, 6>>& coeff, const std::vector<char>& touched,
                   const std::vector<int>& comp_offset, int test_comp_offset,
                   const ElemWork& test_work, int test_row_offset,
                   const std::vector<const ElemWork*>& col_works, int state_stride,
                   const std::vector<char>& fixed, int patch, int elem,
                   Eigen::VectorXd* residual, Eigen::MatrixXd* local) {
  const auto nf = spec.fields.size();
  for (std::size_t f = 0; f < nf; ++f) {
    const int nc = spec.fields[f].ncomp;
    for (int c = 0; c < nc; ++c) {
      const int k = comp_offset[f] + c + test_comp_offset;
      bool any = false;
      for (int s = 0; s < 6; ++s) any = any || touched[6 * k + s];
      if (!any) continue;
      const int nb = static_cast<int>(test_work.fe[f].gdofs.size());
      for (int kb = 0; kb < nb; ++kb) {
        const auto& Bk = test_work.B[f][kb];
        T rto(0.0);
        for (int s = 0; s < 6; ++s)
          if (touched[6 * k + s]) rto += coeff[k][s] * Bk[s];
        const double rv = value_of(rto);
        check_finite(rv, patch, elem, "residual integrand");
        const int rl = test_row_offset + test_work.li.at(f, kb, c, nc);
        const int rg = test_work.li.rows[test_work.li.at(f, kb, c, nc)];
        if (fixed[rg]) continue;
        (*residual)[rg] += w * rv;
        if (!local) continue;
        int col_base = 0;
        for (std::size_t side = 0; side < col_works.size(); ++side) {
          const ElemWork& cw = *col_works[side];
          const int so = static_cast<int>(side) * state_stride;
          for (std::size_t f2 = 0; f2 < nf; ++f2) {
            const int nc2 = spec.fields[f2].ncomp;
            for (int c2 = 0; c2 < nc2; ++c2) {
              double pd[6];
              bool anyp = false;
              for (int d = 0; d < 6; ++d) {
                const int pos = layout.pos[f2][c2][d];
                pd[d] = (pos < 0) ? 0.0 : partial(rto, pos + so);
                anyp = anyp || pd[d] != 0.0;
              }
              if (!anyp) continue;
              const int nb2 = static_cast<int>(cw.fe[f2].gdofs.size());
              for (int k2 = 0; k2 < nb2; ++k2) {
                const auto& B2 = cw.B[f2][k2];
                double contrib = 0.0;
                for (int d = 0; d < 6; ++d) contrib += pd[d] * B2[d];
                if (contrib != 0.0)
                  (*local)(rl, col_base + cw.li.at(f2, k2, c2, nc2)) += w * contrib;
              }
            }
          }
          col_base += cw.li.size;
        }
      }
    }
  }
}

inline void push_local(const Eigen::MatrixXd& local, const std::vector<int>& rows,
                       const std::vector<int>& cols, const std::vector<char>& fixed,
                       TripletVec* jac) {
  for (int r = 0; r < local.rows(); ++r) {
    if (fixed[rows[r]]) continue;
    for (int c = 0; c < local.cols(); ++c) {
      const double v = local(r, c);
      if (v != 0.0 && !fixed[cols[c]]) jac->emplace_back(rows[r], cols[c], v);
    }
  }
}

}  // namespace detail

template <int N, class Kernel>
void assemble_volume(const SystemSpec& spec, const StateLayout& layout,
                     const Eigen::VectorXd& u, int quad_order, Kernel&& kernel,
                     Eigen::VectorXd* residual, TripletVec* jac) {
  using T = typename detail::ScalarOf<N>::type;
  require(N == 0 || N >= layout.total, ErrorKind::Input,
          "assemble_volume: dual width too small for state layout");
  const auto& topo = spec.topo();
  const Quad1D& g = gauss_legendre(quad_order);
  const auto comp_offset = detail::comp_offsets(spec);
  const int ncomps = comp_offset.back();
  const auto fixed = detail::fixed_mask(spec);
  std::vector<std::array<T, 6>> coeff(ncomps);
  std::vector<char> touched(6 * ncomps);
  std::vector<T> state(layout.total);
  detail::ElemWork work;
  Eigen::MatrixXd local;
  int elem_id = 0;
  for (int p = 0; p < topo.num_patches(); ++p) {
    const auto bk = detail::union_breaks(spec, p);
    for (std::size_t ev = 0; ev + 1 < bk[1].size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bk[0].size(); ++eu, ++elem_id) {
        const double a = bk[0][eu], b = bk[0][eu + 1];
        const double c = bk[1][ev], d = bk[1][ev + 1];
        work.locate(spec, p, {0.5 * (a + b), 0.5 * (c + d)});
        if (jac) local = Eigen::MatrixXd::Zero(work.li.size, work.li.size);
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            VolumeCtx<T> ctx;
            ctx.patch = p;
            ctx.elem = elem_id;
            ctx.mu = {a + g.x[iq] * (b - a), c + g.x[jq] * (d - c)};
            ctx.wmu = g.w[iq] * g.w[jq] * (b - a) * (d - c);
            ctx.pframe = patch_frame(topo, p, ctx.mu);
            work.tabulate(spec, p, ctx.mu);
            detail::build_state(spec, layout, u, work.fe, state, 0);
            for (auto& cf : coeff) cf.fill(T(0.0));
            std::fill(touched.begin(), touched.end(), 0);
            ctx.state = {&layout, state.data(), 0};
            ctx.test = {&coeff, &touched, &comp_offset, 0};
            kernel(ctx);
            detail::contract_side<T>(spec, layout, ctx.wmu, coeff, touched, comp_offset, 0,
                                     work, 0, {&work}, 0, fixed, p, elem_id, residual,
                                     jac ? &local : nullptr);
          }
        if (jac) detail::push_local(local, work.li.rows, work.li.rows, fixed, jac);
      }
  }
}

template <int N, class Kernel>
void assemble_interior_facets(const SystemSpec& spec, const StateLayout& layout,
                              const Eigen::VectorXd& u, int quad_order, Kernel&& kernel,
                              Eigen::VectorXd* residual, TripletVec* jac) {
  using T = typename detail::ScalarOf<N>::type;
  require(N == 0 || N >= 2 * layout.total, ErrorKind::Input,
          "assemble_interior_facets: dual width too small for two-sided state");
  const auto& topo = spec.topo();
  const Quad1D& g = gauss_legendre(quad_order);
  const auto comp_offset = detail::comp_offsets(spec);
  const int ncomps = comp_offset.back();
  const auto fixed = detail::fixed_mask(spec);
  std::vector<std::array<T, 6>> coeff(2 * ncomps);
  std::vector<char> touched(12 * ncomps);
  std::vector<T> state(2 * layout.total);
  detail::ElemWork wi, wj;
  Eigen::MatrixXd local;
  for (int fct = 0; fct < static_cast<int>(topo.interior_facets.size()); ++fct) {
    const auto& fc = topo.interior_facets[fct];
    // Union of both sides' edge breakpoints, in side-i edge parameter.
    std::vector<double> breaks;
    for (const auto& fd : spec.fields) {
      for (double t : fd.space->edge_kv(fc.pi, fc.ei).breakpoints()) breaks.push_back(t);
      for (double t : fd.space->edge_kv(fc.pj, fc.ej).breakpoints())
        breaks.push_back(fc.flip ? 1.0 - t : t);
    }
    std::sort(breaks.begin(), breaks.end());
    std::vector<double> bk;
    for (double t : breaks)
      if (bk.empty() || t - bk.back() > kKnotTol) bk.push_back(t);
    const int nspans = static_cast<int>(bk.size()) - 1;
    // Straight facet segment in parametric coordinates.
    const Vector2d A = topo.map_point(fc.pi, edge_mu(fc.ei, 0.0));
    const Vector2d B = topo.map_point(fc.pi, edge_mu(fc.ei, 1.0));
    const double edge_len = (B - A).norm();
    const Vector2d tangent = (B - A) / edge_len;
    Vector2d normal(tangent[1], -tangent[0]);
    {
      const Frame2 f0 = patch_frame(topo, fc.pi, edge_mu(fc.ei, 0.5));
      const Vector2d out_xi = f0.J * edge_outward_mu(fc.ei);
      if (normal.dot(out_xi) < 0) normal = -normal;
    }
    const double h = edge_len / nspans;
    for (int es = 0; es < nspans; ++es) {
      const double t0 = bk[es], t1 = bk[es + 1];
      const double tm = 0.5 * (t0 + t1);
      wi.locate(spec, fc.pi, edge_mu(fc.ei, tm));
      wj.locate(spec, fc.pj, edge_mu(fc.ej, fc.flip ? 1.0 - tm : tm));
      const int L = wi.li.size + wj.li.size;
      if (jac) local = Eigen::MatrixXd::Zero(L, L);
      for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
        InteriorFacetCtx<T> ctx;
        ctx.facet = &fc;
        ctx.facet_id = fct;
        ctx.t = t0 + g.x[iq] * (t1 - t0);
        ctx.wt = g.w[iq] * (t1 - t0);
        const double tj = fc.flip ? 1.0 - ctx.t : ctx.t;
        ctx.mu_i = edge_mu(fc.ei, ctx.t);
        ctx.mu_j = edge_mu(fc.ej, tj);
        ctx.xi = topo.map_point(fc.pi, ctx.mu_i);
        ctx.tangent = tangent;
        ctx.normal = normal;
        ctx.edge_len = edge_len;
        ctx.h = h;
        ctx.frame_i = patch_frame(topo, fc.pi, ctx.mu_i);
        ctx.frame_j = patch_frame(topo, fc.pj, ctx.mu_j);
        wi.tabulate(spec, fc.pi, ctx.mu_i);
        wj.tabulate(spec, fc.pj, ctx.mu_j);
        detail::build_state(spec, layout, u, wi.fe, state, 0);
        detail::build_state(spec, layout, u, wj.fe, state, layout.total);
        for (auto& cf : coeff) cf.fill(T(0.0));
        std::fill(touched.begin(), touched.end(), 0);
        ctx.state_i = {&layout, state.data(), 0};
        ctx.state_j = {&layout, state.data(), layout.total};
        ctx.test_i = {&coeff, &touched, &comp_offset, 0};
        ctx.test_j = {&coeff, &touched, &comp_offset, ncomps};
        kernel(ctx);
        detail::contract_side<T>(spec, layout, ctx.wt, coeff, touched, comp_offset, 0, wi, 0,
                                 {&wi, &wj}, layout.total, fixed, fc.pi, fct, residual,
                                 jac ? &local : nullptr);
        detail::contract_side<T>(spec, layout, ctx.wt, coeff, touched, comp_offset, ncomps, wj,
                                 wi.li.size, {&wi, &wj}, layout.total, fixed, fc.pj, fct,
                                 residual, jac ? &local : nullptr);
      }
      if (jac) {
        std::vector<int> rows = wi.li.rows;
        rows.insert(rows.end(), wj.li.rows.begin(), wj.li.rows.end());
        detail::push_local(local, rows, rows, fixed, jac);
      }
    }
  }
}

template <int N, class Kernel>
void assemble_boundary(const SystemSpec& spec, const StateLayout& layout,
                       const Eigen::VectorXd& u, int quad_order, Kernel&& kernel,
                       Eigen::VectorXd* residual, TripletVec* jac) {
  using T = typename detail::ScalarOf<N>::type;
  require(N == 0 || N >= layout.total, ErrorKind::Input,
          "assemble_boundary: dual width too small for state layout");
  const auto& topo = spec.topo();
  const Quad1D& g = gauss_legendre(quad_order);
  const auto comp_offset = detail::comp_offsets(spec);
  const int ncomps = comp_offset.back();
  const auto fixed = detail::fixed_mask(spec);
  std::vector<std::array<T, 6>> coeff(ncomps);
  std::vector<char> touched(6 * ncomps);
  std::vector<T> state(layout.total);
  detail::ElemWork work;
  Eigen::MatrixXd local;
  for (int s = 0; s < static_cast<int>(topo.sides.size()); ++s) {
    // Average knot-span diameter over the whole side (first field's space).
    double side_len = 0.0;
    int side_spans = 0;
    for (const auto& be : topo.sides[s]) {
      const Vector2d A = topo.map_point(be.patch, edge_mu(be.edge, 0.0));
      const Vector2d B = topo.map_point(be.patch, edge_mu(be.edge, 1.0));
      side_len += (B - A).norm();
      side_spans += spec.fields.front().space->edge_kv(be.patch, be.edge).span_count();
    }
    const double h_side = side_len / side_spans;
    for (const auto& be : topo.sides[s]) {
      const Vector2d A = topo.map_point(be.patch, edge_mu(be.edge, 0.0));
      const Vector2d B = topo.map_point(be.patch, edge_mu(be.edge, 1.0));
      const double edge_len = (B - A).norm();
      const Vector2d tangent = (B - A) / edge_len;
      Vector2d normal(tangent[1], -tangent[0]);
      {
        const Frame2 f0 = patch_frame(topo, be.patch, edge_mu(be.edge, 0.5));
        if (normal.dot(f0.J * edge_outward_mu(be.edge)) < 0) normal = -normal;
      }
      std::vector<double> bk;
      {
        std::vector<double> breaks;
        for (const auto& fd : spec.fields)
          for (double t : fd.space->edge_kv(be.patch, be.edge).breakpoints())
            breaks.push_back(t);
        std::sort(breaks.begin(), breaks.end());
        for (double t : breaks)
          if (bk.empty() || t - bk.back() > kKnotTol) bk.push_back(t);
      }
      for (std::size_t es = 0; es + 1 < bk.size(); ++es) {
        const double u0 = bk[es], u1 = bk[es + 1];
        work.locate(spec, be.patch, edge_mu(be.edge, 0.5 * (u0 + u1)));
        if (jac) local = Eigen::MatrixXd::Zero(work.li.size, work.li.size);
        for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
          BoundaryCtx<T> ctx;
          ctx.side = s;
          ctx.patch = be.patch;
          ctx.edge = be.edge;
          ctx.u = u0 + g.x[iq] * (u1 - u0);
          ctx.wu = g.w[iq] * (u1 - u0);
          ctx.dt_du = be.t1 - be.t0;
          ctx.t_side = be.t0 + ctx.u * ctx.dt_du;
          ctx.mu = edge_mu(be.edge, ctx.u);
          ctx.xi = topo.map_point(be.patch, ctx.mu);
          ctx.tangent = tangent;
          ctx.normal = normal;
          ctx.edge_len = edge_len;
          ctx.h_side = h_side;
          ctx.frame = patch_frame(topo, be.patch, ctx.mu);
          work.tabulate(spec, be.patch, ctx.mu);
          detail::build_state(spec, layout, u, work.fe, state, 0);
          for (auto& cf : coeff) cf.fill(T(0.0));
          std::fill(touched.begin(), touched.end(), 0);
          ctx.state = {&layout, state.data(), 0};
          ctx.test = {&coeff, &touched, &comp_offset, 0};
          kernel(ctx);
          detail::contract_side<T>(spec, layout, ctx.wu, coeff, touched, comp_offset, 0, work,
                                   0, {&work}, 0, fixed, be.patch, static_cast<int>(es),
                                   residual, jac ? &local : nullptr);
        }
        if (jac) detail::push_local(local, work.li.rows, work.li.rows, fixed, jac);
      }
    }
  }
}

}  // namespace mp
