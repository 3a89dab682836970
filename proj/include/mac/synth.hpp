#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mac/bellman.hpp"
#include "mac/principal.hpp"
#include "mac/reduce.hpp"

namespace mac {

struct LmiVariable {
  std::string name;
  int dim = 0;
  bool require_psd = false;
};

// One inequality of the chained system:
//   [X_tgt 0; 0 0] - T^T X_src T - H_const >= 0   over (z, d),
// where T = [A - B K_k, G] and H_const = L_k^T ((H_i + H_j)/2) L_k.
struct LmiConstraint {
  int tgt = 0;
  int src = 0;
  Eigen::MatrixXd T;
  Eigen::MatrixXd H_const;
  int i = 0, j = 0, k = 0, s = 0;  // 1-based tags; s-th step of the chain
};

struct LmiSystem {
  int nz = 0;
  int nd = 0;
  int n_models = 0;
  int tau = 0;
  std::vector<LmiVariable> vars;
  std::vector<LmiConstraint> cons;

  // Variable index of P_{ij} (1-based i, j; order-insensitive).
  int pair_var(int i, int j) const;
  // Variable index of the stage matrix P^s_{ij,k}, s in 1..tau-1.
  int stage_var(int i, int j, int k, int s) const;

  std::map<std::pair<int, int>, int> pair_index;
  std::map<std::array<int, 4>, int> stage_index;
};

// Builds the periodic Bellman inequality system for fixed gains: ordered
// triples (i, j, k) excluding i != j = k, stage variables shared between
// (i, j, k) and (j, i, k), and the terminal stage target substituted by
// P_{jk}.
LmiSystem assemble(const PrincipalProblem& problem,
                   const std::vector<GainMatrix>& gains, int tau);

struct SynthesisCertificate {
  int tau = 0;
  double gamma = 0.0;
  std::vector<GainMatrix> gains;                      // model order
  std::vector<SymMatrix> P;                           // pairs i<=j, row-major
  std::map<std::array<int, 4>, SymMatrix> P_stage;    // {i,j,k,s}, i<=j
  std::vector<double> margins;                        // per constraint
  bool verified = false;

  int n_models = 0;
  const SymMatrix& pair(int i, int j) const;  // 1-based
};

struct SolveConfig {
  // Strict feasibility target, relative to the problem scale
  // max(1, max_i ||H_i||_F).
  double epsilon = 1e-6;
  int max_iter = 60000;        // projection iterations
  bool rescue = true;          // Newton max-margin stage for boundary cases
  int rescue_outer = 200;
  int rescue_newton = 100;
  double verify_tol = 1e-8;    // absolute margin acceptance threshold
  bool parallel = true;        // OpenMP cone sweeps (serial path for tests)
};

struct InfeasibleReport {
  std::vector<double> residual_history;  // sampled worst cone violation
  double best_margin = 0.0;              // largest margin found (may be < 0)
  std::string detail;
};

struct SolveOutcome {
  bool feasible = false;
  std::optional<SynthesisCertificate> cert;
  InfeasibleReport report;
  int iterations = 0;
};

// Feasibility solve in {P_ij, P^s_{ij,k}} for fixed gains: alternating
// projections (Douglas-Rachford splitting) between the affine image of the
// variable space and the product of shifted PSD cones, with a Newton
// max-margin rescue stage for instances near the feasibility boundary.
// An infeasible outcome is a budget-exhaustion report, not a proof.
SolveOutcome solve_feasibility(const LmiSystem& sys,
                               const PrincipalProblem& problem,
                               const std::vector<GainMatrix>& gains,
                               double gamma, const SolveConfig& cfg = {});

struct ConstraintMargin {
  int i = 0, j = 0, k = 0, s = 0;
  double min_eig = 0.0;
};

struct VerificationReport {
  std::vector<ConstraintMargin> constraints;
  std::vector<double> pair_psd_margins;
  double worst = 0.0;
  bool pass = false;
};

// Independent certificate check: recomputes every constraint from scratch
// through bellman::g_operator (a different expansion than the solver's) and
// reports per-constraint minimum eigenvalues.
VerificationReport verify(const SynthesisCertificate& cert,
                          const PrincipalProblem& problem,
                          double verify_tol);

// Specs a synthesis search can re-reduce per gamma probe.
using SweepTarget = std::variant<StateFeedbackSpec, OutputFeedbackSpec>;

struct SynthOutcome {
  bool feasible = false;
  std::optional<SynthesisCertificate> cert;
  std::string detail;
};

// Full pipeline at a fixed (gamma, tau): reduction, per-model gains from
// game_riccati, assemble, solve, verify.
SynthOutcome synthesize(const SweepTarget& target, double gamma, int tau,
                        const SolveConfig& cfg = {});
SynthOutcome synthesize(const PrincipalProblem& problem, double gamma,
                        int tau, const SolveConfig& cfg = {});

struct GammaProbe {
  double gamma = 0.0;
  bool feasible = false;
  std::string detail;
};

struct GammaSearchResult {
  bool found = false;
  double gamma = 0.0;
  std::optional<SynthesisCertificate> cert;
  std::vector<GammaProbe> probes;
};

// Bisection on gamma with probe = (reduction succeeds) and (solve succeeds).
// Monotone feasibility in gamma is a search heuristic, not a theorem.
GammaSearchResult gamma_bisect(const SweepTarget& target, int tau, double lo,
                               double hi, double resolution,
                               const SolveConfig& cfg = {});

struct PeriodProbe {
  int tau = 0;
  bool feasible = false;
  std::string detail;
};

struct PeriodSearchResult {
  bool found = false;
  int tau = 0;
  std::optional<SynthesisCertificate> cert;
  std::vector<PeriodProbe> probes;
};

// Tries tau = 1, 2, ... up to tau_max, returning the first feasible period.
PeriodSearchResult period_search(const SweepTarget& target, double gamma,
                                 int tau_max, const SolveConfig& cfg = {});

// Theorem bound: max over {P_ij} and {P^s_{ij,k}} of
//   z0^T Z z0 + (r_i + r_j)/2.
double value_bound(const SynthesisCertificate& cert, const Eigen::VectorXd& z0,
                   const std::vector<double>& info_r);

}  // namespace mac
