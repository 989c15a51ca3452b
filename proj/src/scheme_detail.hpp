// Internal helpers shared by the scheme translation units.
#pragma once

#include "mp/solvers.hpp"

namespace mp::detail {

// Drop derivative information (freeze a quantity at its current value).
inline double freeze(double x) { return x; }
template <int N>
Dual<N> freeze(const Dual<N>& x) {
  return Dual<N>(x.v);
}
template <class T>
Vec2T<T> freeze(const Vec2T<T>& v) {
  return {freeze(v.x), freeze(v.y)};
}
template <class T>
Mat2T<T> freeze(const Mat2T<T>& m) {
  Mat2T<T> r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = freeze(m(i, j));
  return r;
}

// Interleaved flattening of N x 2 map coefficients (dof-major, component-minor)
// matching FieldDef's dof*ncomp+comp indexing.
inline Eigen::VectorXd flatten_coeffs(const Eigen::MatrixX2d& c) {
  Eigen::VectorXd u(2 * c.rows());
  for (int i = 0; i < c.rows(); ++i) {
    u[2 * i] = c(i, 0);
    u[2 * i + 1] = c(i, 1);
  }
  return u;
}
inline Eigen::MatrixX2d unflatten_coeffs(const Eigen::VectorXd& u, int dim) {
  Eigen::MatrixX2d c(dim, 2);
  for (int i = 0; i < dim; ++i) {
    c(i, 0) = u[2 * i];
    c(i, 1) = u[2 * i + 1];
  }
  return c;
}

// Two-component field over `space` with its boundary dofs Dirichlet-fixed.
inline FieldDef map_field(const MultipatchSpace& space) {
  FieldDef fd;
  fd.space = &space;
  fd.ncomp = 2;
  fd.ders = kGrad;
  fd.fixed.assign(2 * space.dim, 0);
  for (int d : space.boundary_dofs) {
    fd.fixed[2 * d] = 1;
    fd.fixed[2 * d + 1] = 1;
  }
  return fd;
}

inline Eigen::SparseMatrix<double> to_sparse(int n, const TripletVec& t) {
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

// Map Jacobian in parametric coordinates from quadrature-point state:
// field `f` holds the two map components with gradient flags set.
template <class T>
Mat2T<T> state_jac_xi(const PointState<T>& st, const Frame2& fr, int f = 0) {
  return jac_in_frame(fr, st.jac_mu(f));
}

}  // namespace mp::detail
