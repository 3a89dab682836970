// Timing comparison between the serial reference paths and the OpenMP
// paths: LMI cone-projection sweeps, the Newton margin stage, and batched
// closed-loop runs. Both paths produce bitwise-identical results; the unit
// tests assert that, this tool only measures.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mac/reduce.hpp"
#include "mac/sim.hpp"
#include "mac/synth.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// A synthetic state-feedback family with several models; big enough that
// the per-constraint eigendecompositions dominate.
mac::StateFeedbackSpec synthetic_spec(int n_models, int nx, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  mac::StateFeedbackSpec spec;
  spec.Q = mac::SymMatrix::Identity(nx);
  spec.R = mac::SymMatrix::Identity(1);
  spec.gamma = 30.0;
  spec.x0 = Eigen::VectorXd::Zero(nx);
  for (int m = 0; m < n_models; ++m) {
    Eigen::MatrixXd A = 0.6 * Eigen::MatrixXd::Identity(nx, nx);
    for (int i = 0; i + 1 < nx; ++i) A(i, i + 1) = 0.4;
    A(0, 0) += 0.05 * m;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nx, 1);
    B(nx - 1, 0) = (m % 2 == 0) ? 1.0 : -1.0;
    for (int i = 0; i < nx; ++i) B(i, 0) += 0.05 * g(rng);
    spec.models.push_back({A, B, "m" + std::to_string(m)});
  }
  return spec;
}

void bench_solver(int n_models, int nx, int tau, int iters) {
  const mac::StateFeedbackSpec spec = synthetic_spec(n_models, nx, 7);
  const mac::PrincipalProblem problem = mac::state_feedback_reduce(spec);
  const mac::Dynamics dyn = mac::Dynamics::from(problem);
  std::vector<mac::GainMatrix> gains;
  for (const auto& m : problem.models) {
    const auto gs = mac::game_riccati(m, dyn);
    if (!gs.converged) {
      std::printf("  (skipping: per-model game diverged)\n");
      return;
    }
    gains.push_back(gs.K_star);
  }
  const mac::LmiSystem sys = mac::assemble(problem, gains, tau);

  mac::SolveConfig cfg;
  cfg.max_iter = iters;
  cfg.rescue = false;
  cfg.epsilon = 1e-9;  // keep the solver busy for the full budget

  cfg.parallel = false;
  auto t0 = Clock::now();
  const auto serial =
      mac::solve_feasibility(sys, problem, gains, spec.gamma, cfg);
  const double ts = seconds_since(t0);

  cfg.parallel = true;
  t0 = Clock::now();
  const auto parallel =
      mac::solve_feasibility(sys, problem, gains, spec.gamma, cfg);
  const double tp = seconds_since(t0);

  std::printf(
      "  lmi sweep  N=%d nx=%d tau=%d cons=%zu: serial %.3fs | omp %.3fs | "
      "speedup %.2fx | same result %s\n",
      n_models, nx, tau, sys.cons.size(), ts, tp, ts / tp,
      serial.iterations == parallel.iterations ? "yes" : "NO");
}

void bench_batch_runs(int n_runs, int n_steps) {
  mac::StateFeedbackSpec spec;
  spec.Q = mac::SymMatrix::Identity(2);
  spec.R = mac::SymMatrix::Identity(1);
  spec.gamma = 6.0;
  spec.x0 = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd A(2, 2), Bp(2, 1), Bm(2, 1);
  A << 1, 1, 0, 0;
  Bp << 0, 1;
  Bm << 0, -1;
  spec.models = {{A, Bp, "plus"}, {A, Bm, "minus"}};

  const auto so = mac::synthesize(mac::SweepTarget{spec}, 6.0, 1, {});
  if (!so.feasible) {
    std::printf("  (skipping: synthesis failed)\n");
    return;
  }
  const mac::SimProblem sim = mac::SimProblem::state_feedback(spec, 0);
  std::vector<std::uint64_t> seeds(n_runs);
  for (int i = 0; i < n_runs; ++i) seeds[i] = 1000 + i;
  mac::DisturbanceSpec dist;
  dist.kind = mac::NoiseKind::Gaussian;

  auto t0 = Clock::now();
  const auto rs =
      mac::run_batch(sim, *so.cert, dist, seeds, n_steps, false);
  const double ts = seconds_since(t0);
  t0 = Clock::now();
  const auto rp = mac::run_batch(sim, *so.cert, dist, seeds, n_steps, true);
  const double tp = seconds_since(t0);

  bool same = rs.size() == rp.size();
  for (size_t i = 0; same && i < rs.size(); ++i) {
    same = rs[i].rows.size() == rp[i].rows.size() &&
           (rs[i].rows.empty() ||
            rs[i].rows.back().cumcost == rp[i].rows.back().cumcost);
  }
  std::printf(
      "  batch sim  runs=%d steps=%d: serial %.3fs | omp %.3fs | speedup "
      "%.2fx | same result %s\n",
      n_runs, n_steps, ts, tp, ts / tp, same ? "yes" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP\n");
#endif
  std::printf("LMI feasibility sweeps (fixed iteration budget):\n");
  bench_solver(2, 4, 2, 4000);
  bench_solver(3, 5, 2, 1500);
  bench_solver(4, 6, 2, 600);
  std::printf("Seeded closed-loop batches:\n");
  bench_batch_runs(64, 2000);
  return 0;
}
