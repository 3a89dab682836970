#include "mac/principal.hpp"

#include <algorithm>
#include <set>

namespace mac {

PartitionedHessian::PartitionedHessian(SymMatrix m, BlockPartition p,
                                       std::string lbl)
    : matrix(std::move(m)), partition(p), label(std::move(lbl)) {
  if (partition.n_z < 1 || partition.n_u < 0 || partition.n_d < 0 ||
      partition.dim() != matrix.dim()) {
    throw BadPartition("PartitionedHessian: partition does not match matrix");
  }
}

Eigen::MatrixXd PartitionedHessian::dd_block() const {
  const int nd = partition.n_d;
  return matrix.mat().bottomRightCorner(nd, nd);
}

HessianValidation validate_hessian(const PartitionedHessian& h, double tol) {
  const BlockPartition& p = h.partition;
  const double scale = std::max(1.0, h.matrix.frobenius());
  const double eff = tol * scale;

  HessianValidation v;
  const SymMatrix dd(h.dd_block());
  v.dd_max_eig = max_eigenvalue(dd);
  v.dd_nd = v.dd_max_eig < -eff;

  if (v.dd_nd) {
    const SymMatrix schur = schur_complement(h.matrix, p.n_z + p.n_u);
    v.schur_min_eig = min_eigenvalue(schur);
    v.schur_psd = v.schur_min_eig >= -eff;
    const SymMatrix uu(schur.mat().bottomRightCorner(p.n_u, p.n_u));
    v.uu_min_eig = min_eigenvalue(uu);
    v.schur_uu_pd = v.uu_min_eig > eff;
  }
  return v;
}

Eigen::VectorXd StageTriple::stacked() const {
  Eigen::VectorXd v(z.size() + u.size() + d.size());
  v << z, u, d;
  return v;
}

double stage_cost(const PartitionedHessian& h, const StageTriple& s) {
  if (s.z.size() != h.partition.n_z || s.u.size() != h.partition.n_u ||
      s.d.size() != h.partition.n_d) {
    throw BadPartition("stage_cost: triple does not match partition");
  }
  const Eigen::VectorXd v = s.stacked();
  return v.dot(h.matrix.mat() * v);
}

BlockPartition PrincipalProblem::partition() const {
  if (models.empty()) {
    throw BadPartition("PrincipalProblem: empty model set");
  }
  return models.front().partition;
}

void PrincipalProblem::check() const {
  const BlockPartition p = partition();
  for (const auto& m : models) {
    if (!(m.partition == p)) {
      throw BadPartition("PrincipalProblem: models disagree on partition");
    }
  }
  std::set<std::string> labels;
  for (const auto& m : models) {
    if (!labels.insert(m.label).second) {
      throw BadPartition("PrincipalProblem: duplicate model label " + m.label);
    }
  }
  if (A_hat.rows() != p.n_z || A_hat.cols() != p.n_z ||
      B_hat.rows() != p.n_z || B_hat.cols() != p.n_u ||
      G_hat.rows() != p.n_z || G_hat.cols() != p.n_d ||
      z0.size() != p.n_z) {
    throw BadPartition("PrincipalProblem: dynamics dimensions inconsistent");
  }
}

InfoState InfoState::zero(const PrincipalProblem& problem) {
  InfoState st;
  st.Z = SymMatrix::Zero(problem.partition().dim());
  st.r.assign(problem.models.size(), 0.0);
  return st;
}

InfoState info_update(const InfoState& st, const StageTriple& s,
                      const std::vector<PartitionedHessian>& models) {
  const Eigen::VectorXd v = s.stacked();
  if (v.size() != st.Z.dim()) {
    throw BadPartition("info_update: triple does not match Z");
  }
  InfoState out;
  out.Z = SymMatrix(st.Z.mat() + v * v.transpose());
  out.r.resize(models.size());
  for (size_t i = 0; i < models.size(); ++i) {
    out.r[i] = st.r[i] + stage_cost(models[i], s);
  }
  return out;
}

int argmax_model(const InfoState& st,
                 const std::vector<PartitionedHessian>& models) {
  if (models.empty() || st.r.size() != models.size()) {
    throw BadPartition("argmax_model: model/r size mismatch");
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(models.size()); ++i) {
    if (st.r[i] > st.r[best] ||
        (st.r[i] == st.r[best] && models[i].label < models[best].label)) {
      best = i;
    }
  }
  return best;
}

}  // namespace mac
