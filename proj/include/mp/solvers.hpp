// Parameterisation schemes: forward-Laplace initial guess, the four
// nondegenerate-form discretisations (C0-DG, Hessian recovery, rotation-free,
// regularised weak form), Winslow minimisation, and the shared fixed-point /
// Newton drivers.
#pragma once

#include <functional>
#include <optional>

#include "mp/assembly.hpp"

namespace mp {

enum class Scheme { c0dg, hessian, rotfree, weakform, winslow };
enum class Linearisation { fixed_point, newton };

struct SolverConfig {
  double mu_fp = 1e-4;      // eigenspectrum shift for fixed-point iterations
  double mu_newton = 1e-5;  // eigenspectrum shift for Newton iterations
  double eps_weak = 1e-4;   // weak-form regularisation parameter
  double eps_weak_min = 1e-8;  // continuation target (factor-10 schedule)
  bool eps_continuation = true;
  double eta_dg = 10.0;    // gradient-jump penalty
  double eta_rot = 1e3;    // weak tangential boundary penalty
  double alpha_rot = 0.9;  // stabilisation constant, in (0,1)
  double rel_tol = 1e-10;  // relative coefficient-update stopping tolerance
  double abs_tol = 1e-10;  // residual-norm stopping tolerance
  int max_iter = 50;
  double ls_shrink = 0.5;
  double ls_armijo = 1e-4;
  double ls_min_step = 1.0 / (1 << 20);
  int quad_order = 0;  // 0 -> degree + 1 per direction
  bool throw_on_fail = true;

  int quad(int degree) const { return quad_order > 0 ? quad_order : degree + 1; }
};

struct IterRecord {
  int iter = 0;
  double residual_norm = 0;
  double update_norm = 0;
  double step = 1.0;  // accepted line-search factor
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double final_residual = 0;
  double curl_norm = 0;  // rotation-free diagnostic
  std::vector<IterRecord> trace;
};

// --- elliptic coefficient kernels (shared by every NDF scheme) --------------

struct EllipticCoefficients {
  Matrix2d A, C, A_mu;
  double gamma_mu = 0;
};
// J(i,j) = d x_i / d xi_j.
EllipticCoefficients elliptic_coefficients(const Matrix2d& J, double mu);

namespace kernels {

// A = C^T C with C the rotated cofactor arrangement of J; det C = det J.
template <class T>
Mat2T<T> cmat(const Mat2T<T>& J) {
  Mat2T<T> C;
  C(0, 0) = J(1, 1);
  C(0, 1) = -J(1, 0);
  C(1, 0) = -J(0, 1);
  C(1, 1) = J(0, 0);
  return C;
}
template <class T>
struct Ell {
  Mat2T<T> A, A_mu;
  T gamma_mu;
};
template <class T>
Ell<T> elliptic(const Mat2T<T>& J, double mu) {
  Ell<T> e;
  const Mat2T<T> C = cmat(J);
  e.A = C.transpose() * C;
  e.A_mu = e.A;
  e.A_mu(0, 0) += mu;
  e.A_mu(1, 1) += mu;
  e.gamma_mu = e.A_mu.trace() / e.A_mu.squaredNorm();
  return e;
}

// Smooth positive regularisation of the Jacobian determinant.
template <class T>
T reg_det(const T& x, double eps) {
  return 0.5 * (x + sqrt(T(4.0 * eps * eps) + x * x));
}
inline double reg_det(double x, double eps) {
  return 0.5 * (x + std::sqrt(4.0 * eps * eps + x * x));
}

}  // namespace kernels

// --- generic nonlinear drivers ----------------------------------------------

struct NonlinearProblem {
  // Assemble residual (always) and Jacobian triplets (when jac != nullptr) at
  // state u; must already include Dirichlet elimination / identity rows.
  std::function<void(const Eigen::VectorXd& u, Eigen::VectorXd* res, TripletVec* jac)> assemble;
  int size = 0;
  // Optional admissibility guard for line-search candidates (e.g. det J > 0).
  std::function<bool(const Eigen::VectorXd&)> admissible;
};

SolveReport newton_driver(const NonlinearProblem& prob, Eigen::VectorXd& u,
                          const SolverConfig& cfg);
// Each iteration solves the affine frozen-coefficient system exactly.
SolveReport fixed_point_driver(const NonlinearProblem& prob, Eigen::VectorXd& u,
                               const SolverConfig& cfg);

// --- schemes ----------------------------------------------------------------

GeometryMap forward_laplace(SpacePtr space, const BoundaryCorrespondence& F,
                            const SolverConfig& cfg = {});

GeometryMap solve_c0dg(SpacePtr space, const BoundaryCorrespondence& F, Linearisation lin,
                       const SolverConfig& cfg = {}, SolveReport* report = nullptr,
                       const GeometryMap* initial = nullptr);

GeometryMap solve_hessian_recovery(SpacePtr space, const BoundaryCorrespondence& F,
                                   Linearisation lin, const SolverConfig& cfg = {},
                                   SolveReport* report = nullptr,
                                   Eigen::MatrixXd* recovered_hessian = nullptr);

// Fixed-point only; returns the recovered map, reports the final curl norm.
GeometryMap solve_rotation_free(SpacePtr space, const BoundaryCorrespondence& F,
                                const SolverConfig& cfg = {}, SolveReport* report = nullptr);

GeometryMap solve_weak_form(const GeometryMap& initial, const BoundaryCorrespondence& F,
                            const SolverConfig& cfg = {}, SolveReport* report = nullptr);

GeometryMap minimise_winslow(const GeometryMap& initial, const SolverConfig& cfg = {},
                             SolveReport* report = nullptr);

// Winslow functional over the parametric domain; +infinity when det J <= 0 at
// a quadrature point.
double winslow_energy(const GeometryMap& x, int quad_order = 0);

// Convenience dispatcher used by the CLI.
GeometryMap solve_scheme(Scheme scheme, Linearisation lin, SpacePtr space,
                         const BoundaryCorrespondence& F, const SolverConfig& cfg = {},
                         SolveReport* report = nullptr);

// Max spline degree over all patches/directions of a space.
int max_degree(const MultipatchSpace& space);

// Count of quadrature points with det(d x / d xi) <= 0 at the given 1D order.
int negative_jacobian_points(const GeometryMap& x, int quad_order);

}  // namespace mp
