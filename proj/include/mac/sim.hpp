#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mac/principal.hpp"
#include "mac/reduce.hpp"
#include "mac/synth.hpp"

namespace mac {

enum class NoiseKind { Zero, Gaussian, Impulse, Sinusoid, WorstCase };

struct DisturbanceSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  std::uint64_t seed = 0;
  double amplitude = 1.0;
  double frequency = 0.1;  // radians/step, sinusoid only
};

// Closed-loop setup: true plant + the principal problem the controller
// lives in. For output feedback the observer bank from the reduction is
// required.
struct SimProblem {
  enum class Mode { StateFeedback, OutputFeedback } mode =
      Mode::StateFeedback;
  std::optional<StateFeedbackSpec> sf;
  std::optional<OutputFeedbackSpec> of;
  std::optional<ObserverBankReduction> bank;  // output feedback only
  PrincipalProblem principal;
  int true_model = 0;       // index into the model list
  Eigen::VectorXd x0_true;  // plant initial state

  static SimProblem state_feedback(StateFeedbackSpec spec, int true_model);
  static SimProblem output_feedback(OutputFeedbackSpec spec,
                                    ObserverBankReduction bank,
                                    int true_model,
                                    const Eigen::VectorXd& x0_true);
};

struct PlantState {
  Eigen::VectorXd x;
  int true_model = 0;
  int t = 0;
};

struct ControllerState {
  Eigen::VectorXd z;
  InfoState info;
  int phase = 0;        // step within the period, 0..tau-1
  int active_gain = 0;  // model index selected at the last period boundary
};

struct TraceRow {
  int t = 0;
  Eigen::VectorXd x;     // true plant state
  Eigen::VectorXd u;
  Eigen::VectorXd dory;  // d (state feedback) or y (output feedback)
  Eigen::VectorXd w;
  Eigen::VectorXd v;     // empty for state feedback
  Eigen::VectorXd z;     // controller state (equals x for state feedback)
  std::vector<double> stage_costs;  // per model, sigma_H at this step
  std::vector<double> r;            // r_{t+1} per model (after update)
  double vbar = 0.0;                // Vbar(z_{t+1}, r_{t+1})
  double cumcost = 0.0;             // accrued true-model principal cost
  std::optional<double> empgain;
};

struct RunResult {
  std::vector<TraceRow> rows;
  bool trapped = false;  // |x| exceeded the overflow threshold
  int trap_t = -1;
};

// One closed-loop step: supervisor re-selects at phase 0, applies the
// active certainty-equivalence gain, advances the plant (and observers),
// and folds the step into the information state.
TraceRow step(const SimProblem& problem, const SynthesisCertificate& cert,
              PlantState& plant, ControllerState& ctrl,
              const Eigen::VectorXd& w, const Eigen::VectorXd& v);

RunResult run(const SimProblem& problem, const SynthesisCertificate& cert,
              const DisturbanceSpec& dist, int n_steps);

// Independent seeded runs; OpenMP across seeds when parallel is set. The
// per-seed results are bitwise identical either way.
std::vector<RunResult> run_batch(const SimProblem& problem,
                                 const SynthesisCertificate& cert,
                                 const DisturbanceSpec& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 int n_steps, bool parallel = true);

// gamma_t from the figure-caption formula, recomputed from the raw columns
// of the trace prefix rows[0..upto]. Absent when the denominator is zero.
std::optional<double> empirical_gain(const SimProblem& problem,
                                     const std::vector<TraceRow>& rows,
                                     int upto);

// Vbar(z_t, r_t) for t = 0..N (index 0 is the initial state, index t+1
// corresponds to rows[t]).
std::vector<double> value_trace(const SimProblem& problem,
                                const SynthesisCertificate& cert,
                                const RunResult& result);

// Stability of the delayed-integrator closed loop x+ = [1 i; 0 0] x + [0;1] u,
// u = -K x, through the two scalar inequalities of the discrete-time
// stability lemma. K must be 1x2.
bool jury_check(const Eigen::MatrixXd& K, int i);

// CSV export with a fixed header and 17 significant digits.
void write_trace_csv(const std::string& path, const SimProblem& problem,
                     const RunResult& result);

}  // namespace mac
