#include "mp/map.hpp"

namespace mp {

namespace {
struct TensorEval {
  int first_u, first_v;
  std::array<std::array<double, 6>, 3> bu, bv;
};
TensorEval tensor_eval(const TensorBasis& b, const Vector2d& mu, int nderiv) {
  TensorEval t;
  t.first_u = eval_basis_all(b.kv_u, mu[0], nderiv, t.bu);
  t.first_v = eval_basis_all(b.kv_v, mu[1], nderiv, t.bv);
  return t;
}
}  // namespace

MapJet GeometryMap::eval(int patch, const Vector2d& mu, int nderiv) const {
  const TensorBasis& b = space->bases[patch];
  const auto t = tensor_eval(b, mu, nderiv);
  MapJet jet;
  for (int j = 0; j <= b.kv_v.degree; ++j)
    for (int i = 0; i <= b.kv_u.degree; ++i) {
      const int loc = space->local_index(patch, t.first_u + i, t.first_v + j);
      const Eigen::RowVector2d c = coeffs.row(space->dof_map[patch][loc]);
      jet.x += (t.bu[0][i] * t.bv[0][j]) * c.transpose();
      if (nderiv >= 1) {
        jet.Jmu.col(0) += (t.bu[1][i] * t.bv[0][j]) * c.transpose();
        jet.Jmu.col(1) += (t.bu[0][i] * t.bv[1][j]) * c.transpose();
      }
      if (nderiv >= 2)
        for (int comp = 0; comp < 2; ++comp) {
          jet.Hmu[comp](0, 0) += t.bu[2][i] * t.bv[0][j] * c[comp];
          jet.Hmu[comp](0, 1) += t.bu[1][i] * t.bv[1][j] * c[comp];
          jet.Hmu[comp](1, 0) += t.bu[1][i] * t.bv[1][j] * c[comp];
          jet.Hmu[comp](1, 1) += t.bu[0][i] * t.bv[2][j] * c[comp];
        }
    }
  return jet;
}

Matrix2d GeometryMap::jacobian_xi(int patch, const Vector2d& mu) const {
  const MapJet jet = eval(patch, mu, 1);
  const Frame2 f = patch_frame(*space->topo, patch, mu);
  return jet.Jmu * f.Jinv;  // dx/dxi = dx/dmu * dmu/dxi
}

ScalarJet eval_scalar(const MultipatchSpace& space, const Eigen::VectorXd& coeffs,
                      int patch, const Vector2d& mu, int nderiv) {
  const TensorBasis& b = space.bases[patch];
  const auto t = tensor_eval(b, mu, nderiv);
  ScalarJet jet;
  for (int j = 0; j <= b.kv_v.degree; ++j)
    for (int i = 0; i <= b.kv_u.degree; ++i) {
      const int loc = space.local_index(patch, t.first_u + i, t.first_v + j);
      const double c = coeffs[space.dof_map[patch][loc]];
      jet.v += t.bu[0][i] * t.bv[0][j] * c;
      if (nderiv >= 1) {
        jet.grad[0] += t.bu[1][i] * t.bv[0][j] * c;
        jet.grad[1] += t.bu[0][i] * t.bv[1][j] * c;
      }
    }
  return jet;
}

Eigen::MatrixX2d prolong_coeffs(const MultipatchSpace& coarse, const MultipatchSpace& fine,
                                const Eigen::MatrixX2d& c) {
  require(coarse.topo == fine.topo || coarse.topo->num_patches() == fine.topo->num_patches(),
          ErrorKind::Input, "prolong_coeffs: spaces must share the quadrangulation");
  Eigen::MatrixX2d out = Eigen::MatrixX2d::Zero(fine.dim, 2);
  for (int p = 0; p < coarse.topo->num_patches(); ++p) {
    const auto Pu = prolongation_matrix(coarse.bases[p].kv_u, fine.bases[p].kv_u);
    const auto Pv = prolongation_matrix(coarse.bases[p].kv_v, fine.bases[p].kv_v);
    const int cnu = coarse.bases[p].nu(), cnv = coarse.bases[p].nv();
    for (int comp = 0; comp < 2; ++comp) {
      Eigen::MatrixXd local(cnu, cnv);
      for (int j = 0; j < cnv; ++j)
        for (int i = 0; i < cnu; ++i)
          local(i, j) = c(coarse.dof_map[p][i + cnu * j], comp);
      const Eigen::MatrixXd fine_local = Pu * local * Eigen::MatrixXd(Pv).transpose();
      const int fnu = fine.bases[p].nu();
      for (int j = 0; j < fine.bases[p].nv(); ++j)
        for (int i = 0; i < fnu; ++i)
          out(fine.dof_map[p][i + fnu * j], comp) = fine_local(i, j);
    }
  }
  return out;
}

}  // namespace mp
