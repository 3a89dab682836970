#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mac/symmat.hpp"

namespace mac {

// Block sizes of the (z, u, d) partition, in that order.
struct BlockPartition {
  int n_z = 0;
  int n_u = 0;
  int n_d = 0;

  int dim() const { return n_z + n_u + n_d; }
  bool operator==(const BlockPartition&) const = default;
};

// Symmetric cost Hessian over (z, u, d) together with its partition.
struct PartitionedHessian {
  SymMatrix matrix;
  BlockPartition partition;
  std::string label;

  PartitionedHessian(SymMatrix m, BlockPartition p, std::string lbl);

  Eigen::MatrixXd dd_block() const;
};

// Per-condition outcome of the admissibility check
//   H^{dd} < 0,  H / H^{dd} >= 0,  [H / H^{dd}]^{uu} > 0.
struct HessianValidation {
  bool dd_nd = false;
  bool schur_psd = false;
  bool schur_uu_pd = false;
  // Offending eigenvalue extremum per condition (max for the ND check,
  // min for the PSD/PD checks).
  double dd_max_eig = 0.0;
  double schur_min_eig = 0.0;
  double uu_min_eig = 0.0;

  bool pass() const { return dd_nd && schur_psd && schur_uu_pd; }
};

HessianValidation validate_hessian(const PartitionedHessian& h,
                                   double tol = 1e-8);

// One (z, u, d) sample along a trajectory.
struct StageTriple {
  Eigen::VectorXd z;
  Eigen::VectorXd u;
  Eigen::VectorXd d;

  Eigen::VectorXd stacked() const;
};

double stage_cost(const PartitionedHessian& h, const StageTriple& s);

// Known dynamics, initial state and finite model set of the principal
// problem.
struct PrincipalProblem {
  Eigen::MatrixXd A_hat;
  Eigen::MatrixXd B_hat;
  Eigen::MatrixXd G_hat;
  Eigen::VectorXd z0;
  std::vector<PartitionedHessian> models;

  BlockPartition partition() const;
  // Throws BadPartition on inconsistent dimensions or duplicate labels.
  void check() const;
};

// Accumulated information state: Z_t = sum of (z,u,d) outer products, plus
// the cached values r_t(H_i) = <Z_t, H_i> aligned with the model list.
struct InfoState {
  SymMatrix Z;
  std::vector<double> r;

  static InfoState zero(const PrincipalProblem& problem);
};

InfoState info_update(const InfoState& st, const StageTriple& s,
                      const std::vector<PartitionedHessian>& models);

// Index of the model with maximal r; ties resolved by the lexicographically
// smallest label.
int argmax_model(const InfoState& st,
                 const std::vector<PartitionedHessian>& models);

}  // namespace mac
