#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mac/principal.hpp"
#include "mac/symmat.hpp"

namespace mac {

// Known linear dynamics of the principal problem.
struct Dynamics {
  Eigen::MatrixXd A_hat;
  Eigen::MatrixXd B_hat;
  Eigen::MatrixXd G_hat;

  static Dynamics from(const PrincipalProblem& p) {
    return Dynamics{p.A_hat, p.B_hat, p.G_hat};
  }
};

// Feedback gain for the control law u = -K z, tagged with the model it is
// certainty-equivalent for.
struct GainMatrix {
  Eigen::MatrixXd K;
  std::string label;
};

// Quadratic form over (z, d) whose supremum over d is the one-step
// propagated value under u = -K z:
//   [A-BK  G]^T P [A-BK  G] + L^T H L,   L = [I 0; -K 0; 0 I].
SymMatrix g_operator(const SymMatrix& P, const Eigen::MatrixXd& K,
                     const PartitionedHessian& H, const Dynamics& dyn);

struct SupResult {
  SymMatrix P_next;             // M / M^{dd}
  Eigen::MatrixXd d_feedback;   // maximizer d = d_feedback * z
};

// Closed-form sup over d of the quadratic form of M over (z, d). Requires
// M^{dd} negative definite with margin; throws UnboundedSup otherwise.
SupResult sup_over_d(const SymMatrix& M, int n_d, double margin_tol = -1.0);

// sup_over_d(g_operator(...)).P_next; monotone in P.
SymMatrix riccati_step(const SymMatrix& P, const Eigen::MatrixXd& K,
                       const PartitionedHessian& H, const Dynamics& dyn);

enum class GameStatus { Converged, UnboundedSup, DegenerateMin, NotConverged };

struct GameSolution {
  SymMatrix P_star;
  GainMatrix K_star;
  Eigen::MatrixXd d_gain;  // worst-case disturbance feedback d = d_gain * z
  int iterations = 0;
  bool converged = false;
  GameStatus status = GameStatus::NotConverged;
};

struct GameConfig {
  int max_iter = 100000;
  double tol = 1e-10;
  double blowup = 1e12;
  double margin_tol = 1e-9;  // relative gate on the dd / uu block conditions
};

// Value iteration for the per-model linear-quadratic game: minimal PSD fixed
// point of P -> ([A B G]^T P [A B G] + H) with d then u eliminated by Schur
// complements. Starts from P = 0; the iterate sequence is nondecreasing.
GameSolution game_riccati(const PartitionedHessian& H, const Dynamics& dyn,
                          const GameConfig& cfg = {});

// Brute-force min-max over gridded (u, d) game trees for scalar problems
// (n_z = n_u = n_d = 1), with the information state carried exactly.
// Horizon capped at 8. Throws Unsupported outside this class.
double dp_oracle(const PrincipalProblem& problem, int horizon,
                 const std::vector<double>& u_grid,
                 const std::vector<double>& d_grid);

}  // namespace mac
