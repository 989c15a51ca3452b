#include "mp/assembly.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mp {

const Quad1D& gauss_legendre(int n) {
  require(n >= 1 && n <= 64, ErrorKind::Input, "gauss_legendre: order out of range");
  static std::map<int, Quad1D> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Quad1D q;
  q.x.resize(n);
  q.w.resize(n);
  for (int i = 0; i < n; ++i) {
    // Newton iteration on the Legendre polynomial P_n over [-1,1].
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    // The seed ordering makes x strictly decreasing; store ascending.
    q.x[n - 1 - i] = 0.5 * (1.0 + x);
    q.w[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return cache.emplace(n, std::move(q)).first->second;
}

void finalize_system(const SystemSpec& spec, Eigen::VectorXd* residual, TripletVec* jac) {
  for (int gi = 0; gi < spec.total; ++gi)
    if (spec.index_fixed(gi)) {
      if (residual) (*residual)[gi] = 0.0;
      if (jac) jac->emplace_back(gi, gi, 1.0);
    }
}

Eigen::VectorXd assemble_field_integral(const SystemSpec& spec, int field, int comp,
                                        int quad_order) {
  const FieldDef& fd = spec.fields[field];
  const auto& topo = spec.topo();
  const Quad1D& g = gauss_legendre(quad_order);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.total);
  for (int p = 0; p < topo.num_patches(); ++p) {
    const TensorBasis& tb = fd.space->bases[p];
    const auto bu = tb.kv_u.breakpoints();
    const auto bv = tb.kv_v.breakpoints();
    std::array<std::array<double, 6>, 3> Bu, Bv;
    for (std::size_t ev = 0; ev + 1 < bv.size(); ++ev)
      for (std::size_t eu = 0; eu + 1 < bu.size(); ++eu)
        for (std::size_t jq = 0; jq < g.x.size(); ++jq)
          for (std::size_t iq = 0; iq < g.x.size(); ++iq) {
            const Vector2d mu(bu[eu] + g.x[iq] * (bu[eu + 1] - bu[eu]),
                              bv[ev] + g.x[jq] * (bv[ev + 1] - bv[ev]));
            const double w = g.w[iq] * g.w[jq] * (bu[eu + 1] - bu[eu]) *
                             (bv[ev + 1] - bv[ev]) *
                             std::abs(patch_frame(topo, p, mu).det);
            const int fu = eval_basis_all(tb.kv_u, mu[0], 0, Bu);
            const int fv = eval_basis_all(tb.kv_v, mu[1], 0, Bv);
            for (int j = 0; j <= tb.kv_v.degree; ++j)
              for (int i = 0; i <= tb.kv_u.degree; ++i) {
                const int gdof =
                    fd.space->dof_map[p][fd.space->local_index(p, fu + i, fv + j)];
                out[spec.dof_index(field, gdof, comp)] += w * Bu[0][i] * Bv[0][j];
              }
          }
  }
  return out;
}

Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b) {
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  require(lu.info() == Eigen::Success, ErrorKind::LinearSolver,
          "sparse LU factorisation failed (singular or structurally deficient system)");
  const Eigen::VectorXd x = lu.solve(b);
  const double rel = (A * x - b).norm() / std::max(b.norm(), 1e-30);
  require(std::isfinite(rel) && rel < 1e-10, ErrorKind::LinearSolver,
          "sparse solve residual contract violated (relative residual " +
              std::to_string(rel) + ")");
  return x;
}

double fd_jacobian_check(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                         const Eigen::SparseMatrix<double>& J, const SystemSpec& spec,
                         const Eigen::VectorXd& u, double h, int samples) {
  std::vector<int> free_idx;
  for (int gi = 0; gi < spec.total; ++gi)
    if (!spec.index_fixed(gi)) free_idx.push_back(gi);
  const int n = static_cast<int>(free_idx.size());
  const int step = std::max(1, n / std::max(1, samples));
  double worst = 0.0;
  Eigen::MatrixXd Jd(J);
  for (int k = 0; k < n; k += step) {
    const int j = free_idx[k];
    Eigen::VectorXd up = u, um = u;
    up[j] += h;
    um[j] -= h;
    const Eigen::VectorXd col_fd = (residual(up) - residual(um)) / (2.0 * h);
    const Eigen::VectorXd col = Jd.col(j);
    const double scale = std::max(1.0, col.lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (col_fd - col).lpNorm<Eigen::Infinity>() / scale);
  }
  return worst;
}

namespace detail {

std::array<std::vector<double>, 2> union_breaks(const SystemSpec& spec, int patch) {
  std::array<std::vector<double>, 2> out;
  for (int dir = 0; dir < 2; ++dir) {
    std::vector<double> all;
    for (const auto& fd : spec.fields) {
      const TensorBasis& tb = fd.space->bases[patch];
      for (double t : (dir == 0 ? tb.kv_u : tb.kv_v).breakpoints()) all.push_back(t);
    }
    std::sort(all.begin(), all.end());
    for (double t : all)
      if (out[dir].empty() || t - out[dir].back() > kKnotTol) out[dir].push_back(t);
  }
  return out;
}

void check_finite(double v, int patch, int elem, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " on patch " << patch << ", element " << elem;
    fail(ErrorKind::Numerical, os.str());
  }
}

void locate_fields(const SystemSpec& spec, int patch, const Vector2d& mid,
                   std::vector<FieldElemData>& fe) {
  fe.resize(spec.fields.size());
  for (std::size_t f = 0; f < spec.fields.size(); ++f) {
    const MultipatchSpace& sp = *spec.fields[f].space;
    const TensorBasis& tb = sp.bases[patch];
    FieldElemData& e = fe[f];
    e.pu = tb.kv_u.degree;
    e.pv = tb.kv_v.degree;
    e.first_u = tb.kv_u.find_span(mid[0]) - e.pu;
    e.first_v = tb.kv_v.find_span(mid[1]) - e.pv;
    e.gdofs.clear();
    for (int j = 0; j <= e.pv; ++j)
      for (int i = 0; i <= e.pu; ++i)
        e.gdofs.push_back(sp.dof_map[patch][sp.local_index(patch, e.first_u + i,
                                                           e.first_v + j)]);
  }
}

std::vector<char> fixed_mask(const SystemSpec& spec) {
  std::vector<char> mask(spec.total, 0);
  for (std::size_t f = 0; f < spec.fields.size(); ++f) {
    const FieldDef& fd = spec.fields[f];
    if (fd.fixed.empty()) continue;
    for (int dof = 0; dof < fd.space->dim; ++dof)
      for (int c = 0; c < fd.ncomp; ++c)
        if (fd.fixed[dof * fd.ncomp + c])
          mask[spec.dof_index(static_cast<int>(f), dof, c)] = 1;
  }
  return mask;
}

}  // namespace detail

}  // namespace mp
