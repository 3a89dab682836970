#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mac/principal.hpp"
#include "mac/symmat.hpp"

namespace mac {

struct StateFeedbackModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::string label;
};

struct StateFeedbackSpec {
  std::vector<StateFeedbackModel> models;
  SymMatrix Q;
  SymMatrix R;
  double gamma = 0.0;
  Eigen::VectorXd x0;

  void check() const;  // Q, R positive definite, dims consistent
};

// Substitution z = x, d = x_{t+1}: known dynamics (0, 0, I) and one Hessian
//   H_M = blkdiag(Q, R, 0) - gamma^2 V V^T,  V = [-A^T; -B^T; I]
// per model. Every produced Hessian is validated.
PrincipalProblem state_feedback_reduce(const StateFeedbackSpec& spec);

struct OutputFeedbackModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd G;
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;
  std::string label;
};

struct RiccatiConfig {
  double tol = 1e-12;
  int max_iter = 200000;
  // Iteration start; when absent a one-step image of the recursion is used.
  std::optional<Eigen::MatrixXd> S0;
};

struct OutputFeedbackSpec {
  std::vector<OutputFeedbackModel> models;
  SymMatrix Q;
  SymMatrix R;
  double gamma = 0.0;
  std::vector<Eigen::VectorXd> xhat0;  // per-model observer init; empty = 0
  RiccatiConfig riccati;

  void check() const;
};

// Rank conditions on ([A G], D, [A; sqrt(Q)]) via singular values.
struct AssumptionReport {
  bool ag_full_row_rank = false;
  bool d_full_row_rank = false;
  bool aq_full_col_rank = false;
  double ag_sigma_min = 0.0;
  double d_sigma_min = 0.0;
  double aq_sigma_min = 0.0;

  bool pass() const {
    return ag_full_row_rank && d_full_row_rank && aq_full_col_rank;
  }
};

AssumptionReport check_assumptions(const OutputFeedbackModel& m,
                                   const SymMatrix& Q);

// Stationary H-infinity filter quantities for one model and the induced
// reduced stage-cost Hessian over (xhat, u, y).
struct ObserverParams {
  SymMatrix S;
  SymMatrix X;
  Eigen::MatrixXd L;
  Eigen::MatrixXd A_obs;  // A X^{-1} S
  PartitionedHessian Q_hat;
};

enum class ReduceStatus { Ok, GammaInfeasible, NotConverged };

struct RiccatiOutcome {
  ReduceStatus status = ReduceStatus::NotConverged;
  std::string detail;
  std::optional<ObserverParams> params;
  int iterations = 0;
};

// Fixed point of
//   X = S + gamma^2 C^T (DD^T)^{-1} C - Q
//   S <- (A X^{-1} A^T + gamma^{-2} G G^T)^{-1}
// with the gates S > Q and X invertible along the way. R enters only the
// uu block of the emitted reduced Hessian.
RiccatiOutcome riccati_fixed_point(const OutputFeedbackModel& model,
                                   const SymMatrix& Q, const SymMatrix& R,
                                   double gamma,
                                   const RiccatiConfig& cfg = {});

struct ObserverBankReduction {
  std::vector<ObserverParams> observers;  // aligned with spec.models
  PrincipalProblem problem;
};

struct OutputReduceOutcome {
  ReduceStatus status = ReduceStatus::NotConverged;
  std::string detail;  // includes the failing model label on failure
  std::optional<ObserverBankReduction> reduction;
};

// Stacks the per-model observers into one principal problem with d = y.
OutputReduceOutcome output_feedback_reduce(const OutputFeedbackSpec& spec);

}  // namespace mac
