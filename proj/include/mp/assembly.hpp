// Quadrature, residual/Jacobian assembly for variational operators over one or
// more multipatch spaces, Dirichlet elimination and sparse direct solves.
//
// Operators are written as point-local kernels: at each quadrature point the
// kernel reads the state (values/derivatives of every field, as plain doubles
// or dual numbers) and emits, per test component, coefficients multiplying the
// test function and its mu-derivatives. The assembler contracts those
// coefficients with the basis; with dual numbers the same kernel evaluation
// yields the exact Jacobian.
#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <vector>

#include "mp/dual.hpp"
#include "mp/map.hpp"

namespace mp {

// Gauss-Legendre rule with n points on [0,1]; exact to polynomial degree 2n-1.
struct Quad1D {
  std::vector<double> x, w;
};
const Quad1D& gauss_legendre(int n);

// Derivative blocks a kernel wants in its state, per field.
enum DerFlags : unsigned { kVal = 1, kGrad = 2, kHess = 4 };

struct FieldDef {
  const MultipatchSpace* space = nullptr;
  int ncomp = 1;
  unsigned ders = kVal | kGrad;  // state blocks for volume kernels
  std::vector<char> fixed;       // dof*ncomp+comp -> Dirichlet flag (may be empty)
  int offset = 0;                // filled by SystemSpec::finalize

  bool is_fixed(int dof, int comp) const {
    return !fixed.empty() && fixed[dof * ncomp + comp];
  }
};

struct SystemSpec {
  std::vector<FieldDef> fields;
  int total = 0;

  void finalize() {
    total = 0;
    for (auto& f : fields) {
      f.offset = total;
      total += f.space->dim * f.ncomp;
    }
  }
  int dof_index(int f, int dof, int comp) const {
    return fields[f].offset + dof * fields[f].ncomp + comp;
  }
  bool index_fixed(int gi) const {
    for (const auto& f : fields)
      if (gi < f.offset + f.space->dim * f.ncomp) {
        const int l = gi - f.offset;
        return f.is_fixed(l / f.ncomp, l % f.ncomp);
      }
    return false;
  }
  const Quadrangulation& topo() const { return *fields[0].space->topo; }
};

// Positions of state entries: slot order [val, d/du, d/dv, d2/duu, d2/dudv, d2/dvv].
struct StateLayout {
  std::vector<std::vector<std::array<int, 6>>> pos;  // [field][comp][slot] -> index or -1
  int total = 0;

  static StateLayout make(const SystemSpec& spec, const std::vector<unsigned>& ders) {
    StateLayout l;
    l.pos.resize(spec.fields.size());
    for (std::size_t f = 0; f < spec.fields.size(); ++f) {
      l.pos[f].assign(spec.fields[f].ncomp, {-1, -1, -1, -1, -1, -1});
      for (int c = 0; c < spec.fields[f].ncomp; ++c) {
        if (ders[f] & kVal) l.pos[f][c][0] = l.total++;
        if (ders[f] & kGrad) {
          l.pos[f][c][1] = l.total++;
          l.pos[f][c][2] = l.total++;
        }
        if (ders[f] & kHess) {
          l.pos[f][c][3] = l.total++;
          l.pos[f][c][4] = l.total++;
          l.pos[f][c][5] = l.total++;
        }
      }
    }
    return l;
  }
  static StateLayout make(const SystemSpec& spec) {
    std::vector<unsigned> d;
    for (const auto& f : spec.fields) d.push_back(f.ders);
    return make(spec, d);
  }
};

// ---- kernel-facing contexts ------------------------------------------------

template <class T>
struct PointState {
  const StateLayout* layout = nullptr;
  const T* data = nullptr;
  int side_offset = 0;  // facet kernels: offset of this side's entries

  const T& at(int f, int c, int slot) const {
    return data[layout->pos[f][c][slot] + side_offset];
  }
  T val(int f, int c) const { return at(f, c, 0); }
  Vec2T<T> grad_mu(int f, int c) const { return {at(f, c, 1), at(f, c, 2)}; }
  Mat2T<T> jac_mu(int f) const {  // rows: components 0,1; cols: mu directions
    Mat2T<T> J;
    for (int c = 0; c < 2; ++c) {
      J(c, 0) = at(f, c, 1);
      J(c, 1) = at(f, c, 2);
    }
    return J;
  }
  Mat2T<T> hess_mu(int f, int c) const {
    Mat2T<T> H;
    H(0, 0) = at(f, c, 3);
    H(0, 1) = H(1, 0) = at(f, c, 4);
    H(1, 1) = at(f, c, 5);
    return H;
  }
};

template <class T>
struct TestSink {
  std::vector<std::array<T, 6>>* coeff = nullptr;  // [test comp][slot]
  std::vector<char>* touched = nullptr;
  const std::vector<int>* comp_offset = nullptr;  // per field (last entry = per-side total)
  int side_offset = 0;

  void add(int f, int c, int slot, const T& v) {
    const int k = (*comp_offset)[f] + c + side_offset;
    (*coeff)[k][slot] += v;
    (*touched)[k * 6 + slot] = 1;
  }
};

template <class T>
struct VolumeCtx {
  int patch = 0, elem = 0;
  Vector2d mu;
  double wmu = 0;  // quadrature weight including the element's dmu measure
  Frame2 pframe;   // bilinear patch frame (mu -> xi)
  PointState<T> state;
  TestSink<T> test;
};

template <class T>
struct InteriorFacetCtx {
  const Quadrangulation::InteriorFacet* facet = nullptr;
  int facet_id = 0;
  double t = 0, wt = 0;          // parameter/weight along side i's edge (dt measure)
  Vector2d xi, tangent, normal;  // parametric coordinates; normal points i -> j
  double edge_len = 0;           // parametric length of the facet
  double h = 0;                  // average knot-span diameter on the facet
  Vector2d mu_i, mu_j;
  Frame2 frame_i, frame_j;
  PointState<T> state_i, state_j;
  TestSink<T> test_i, test_j;
};

template <class T>
struct BoundaryCtx {
  int side = 0, patch = 0, edge = 0;
  double u = 0, wu = 0;              // edge parameter in [0,1] and du weight
  double t_side = 0, dt_du = 0;      // parameter along the side curve and its rate
  Vector2d mu, xi, tangent, normal;  // tangent along increasing u; normal outward
  double edge_len = 0;               // parametric length of this patch edge
  double h_side = 0;                 // average knot-span diameter along the whole side
  Frame2 frame;
  PointState<T> state;
  TestSink<T> test;
};

// Transform helper: add a test contribution given as coefficients on the
// function value / gradient / Hessian in a target coordinate frame c(mu),
// converting to mu-derivative slots.
template <class T, class Sink>
void add_test_frame(Sink& sink, const Frame2& fr, int f, int c, const T& a_val,
                    const Vec2T<T>& b_grad, const Mat2T<T>& C_hess, bool with_hess) {
  sink.add(f, c, 0, a_val);
  Vec2T<T> b_acc = b_grad;
  Mat2T<T> M;  // Jinv C Jinv^T, so that C : H_c phi = M : H_mu phi - corrections
  if (with_hess) {
    M = Mat2T<T>::from(fr.Jinv) * C_hess * Mat2T<T>::from(fr.Jinv.transpose());
    sink.add(f, c, 3, M(0, 0));
    sink.add(f, c, 4, M(0, 1) + M(1, 0));
    sink.add(f, c, 5, M(1, 1));
    if (fr.curved) {
      // C : H_c phi contains -sum_k (M : T_k) (grad_c phi)_k.
      for (int k = 0; k < 2; ++k) {
        const T ck = frobenius(M, Mat2T<T>::from(fr.T[k]));
        Vec2T<T> ek{T(k == 0 ? -1.0 : 0.0), T(k == 1 ? -1.0 : 0.0)};
        b_acc = b_acc + ck * ek;
      }
    }
  }
  // b . grad_c phi = b . (Jinv^T grad_mu phi) = (Jinv b) . grad_mu phi.
  const Vec2T<T> bm = Mat2T<T>::from(fr.Jinv) * b_acc;
  sink.add(f, c, 1, bm.x);
  sink.add(f, c, 2, bm.y);
}

// State transforms: derivatives of fields in the frame's coordinates.
template <class T>
Vec2T<T> grad_in_frame(const Frame2& fr, const Vec2T<T>& grad_mu) {
  return Mat2T<T>::from(fr.Jinv.transpose()) * grad_mu;
}
template <class T>
Mat2T<T> jac_in_frame(const Frame2& fr, const Mat2T<T>& jac_mu) {
  return jac_mu * Mat2T<T>::from(fr.Jinv);  // rows comps, cols coords
}
template <class T>
Mat2T<T> hess_in_frame(const Frame2& fr, const Vec2T<T>& grad_c, const Mat2T<T>& hess_mu) {
  Mat2T<T> M = hess_mu;
  if (fr.curved) {
    for (int k = 0; k < 2; ++k) {
      const T gk = (k == 0) ? grad_c.x : grad_c.y;
      M(0, 0) -= gk * T(fr.T[k](0, 0));
      M(0, 1) -= gk * T(fr.T[k](0, 1));
      M(1, 0) -= gk * T(fr.T[k](1, 0));
      M(1, 1) -= gk * T(fr.T[k](1, 1));
    }
  }
  return Mat2T<T>::from(fr.Jinv.transpose()) * M * Mat2T<T>::from(fr.Jinv);
}

using TripletVec = std::vector<Eigen::Triplet<double>>;

// Add identity rows for Dirichlet-fixed dofs and zero their residual entries.
void finalize_system(const SystemSpec& spec, Eigen::VectorXd* residual, TripletVec* jac);

// Vector of integrals  int phi_g dxi  for one field component (other entries
// zero); used for zero-average Lagrange constraints.
Eigen::VectorXd assemble_field_integral(const SystemSpec& spec, int field, int comp,
                                        int quad_order);

// Direct sparse solve (LU); verifies the residual contract ||Ax-b||/||b|| < 1e-10.
Eigen::VectorXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b);

// Max relative discrepancy between assembled Jacobian columns and central
// differences of the residual, over `samples` free columns (deterministic).
double fd_jacobian_check(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                         const Eigen::SparseMatrix<double>& J, const SystemSpec& spec,
                         const Eigen::VectorXd& u, double h, int samples = 25);

namespace detail {

struct FieldElemData {
  int first_u = 0, first_v = 0, pu = 0, pv = 0;
  std::array<std::array<double, 6>, 3> bu, bv;  // filled per quadrature point
  std::vector<int> gdofs;                       // (pu+1)*(pv+1) space dofs
};

// Union of element breakpoints of all fields on one patch, per direction.
std::array<std::vector<double>, 2> union_breaks(const SystemSpec& spec, int patch);

void check_finite(double v, int patch, int elem, const char* what);

template <int N>
struct ScalarOf {
  using type = Dual<N>;
};
template <>
struct ScalarOf<0> {
  using type = double;
};

inline void seed_dir(double&, int) {}
template <int N>
inline void seed_dir(Dual<N>& d, int dir) {
  d.d[dir] = 1.0;
}
inline double partial(const double&, int) { return 0.0; }
template <int N>
inline double partial(const Dual<N>& d, int dir) {
  return d.d[dir];
}

inline void basis_slots(const FieldElemData& e, int i, int j, double B[6]) {
  B[0] = e.bu[0][i] * e.bv[0][j];
  B[1] = e.bu[1][i] * e.bv[0][j];
  B[2] = e.bu[0][i] * e.bv[1][j];
  B[3] = e.bu[2][i] * e.bv[0][j];
  B[4] = e.bu[1][i] * e.bv[1][j];
  B[5] = e.bu[0][i] * e.bv[2][j];
}

void locate_fields(const SystemSpec& spec, int patch, const Vector2d& mid,
                   std::vector<FieldElemData>& fe);

// Local scalar-dof enumeration (field-major, basis-function-major, comp-minor).
struct LocalIndex {
  std::vector<int> field_offset;  // per field
  std::vector<int> rows;          // local -> global system index
  int size = 0;

  void build(const SystemSpec& spec, const std::vector<FieldElemData>& fe) {
    field_offset.assign(spec.fields.size(), 0);
    rows.clear();
    size = 0;
    for (std::size_t f = 0; f < spec.fields.size(); ++f) {
      field_offset[f] = size;
      for (int gdof : fe[f].gdofs)
        for (int c = 0; c < spec.fields[f].ncomp; ++c)
          rows.push_back(spec.dof_index(f, gdof, c));
      size += static_cast<int>(fe[f].gdofs.size()) * spec.fields[f].ncomp;
    }
  }
  int at(int f, int k, int c, int ncomp) const { return field_offset[f] + k * ncomp + c; }
};

template <class T>
void build_state(const SystemSpec& spec, const StateLayout& layout, const Eigen::VectorXd& u,
                 const std::vector<FieldElemData>& fe, std::vector<T>& state, int side_offset) {
  for (std::size_t f = 0; f < spec.fields.size(); ++f)
    for (int c = 0; c < spec.fields[f].ncomp; ++c)
      for (int d = 0; d < 6; ++d) {
        const int pos = layout.pos[f][c][d];
        if (pos < 0) continue;
        double v = 0.0;
        int k = 0;
        double B[6];
        for (int j = 0; j <= fe[f].pv; ++j)
          for (int i = 0; i <= fe[f].pu; ++i, ++k) {
            basis_slots(fe[f], i, j, B);
            v += B[d] * u[spec.dof_index(f, fe[f].gdofs[k], c)];
          }
        state[pos + side_offset] = T(v);
        seed_dir(state[pos + side_offset], pos + side_offset);
      }
}

// Per-system-index Dirichlet flags (rows/cols to eliminate during assembly).
std::vector<char> fixed_mask(const SystemSpec& spec);

}  // namespace detail

}  // namespace mp

#include "mp/assembly_impl.hpp"
