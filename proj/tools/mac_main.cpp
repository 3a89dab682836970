#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mac/io.hpp"

namespace {

using Clock = std::chrono::steady_clock;

int exit_input_error(const std::string& msg) {
  std::cerr << "input error: " << msg << "\n";
  return 2;
}

mac::SweepTarget target_of(const mac::ProblemFile& p) {
  if (p.mode == mac::ProblemFile::Mode::StateFeedback) return *p.sf;
  if (p.mode == mac::ProblemFile::Mode::OutputFeedback) return *p.of;
  throw mac::Error("principal-mode files have no reduction to sweep");
}

mac::SolveConfig solve_config(const mac::ProblemFile& p, double epsilon,
                              int max_iter) {
  mac::SolveConfig cfg;
  cfg.epsilon = epsilon > 0 ? epsilon : p.solver.epsilon;
  cfg.max_iter = max_iter > 0 ? max_iter : p.solver.max_iter;
  cfg.verify_tol = p.solver.verify_tol;
  return cfg;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int cmd_validate(const std::string& problem_path,
                 const std::string& manifest_path) {
  const auto t0 = Clock::now();
  mac::ProblemFile p;
  try {
    p = mac::load_problem(problem_path);
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }

  bool all_pass = true;
  std::string detail;
  try {
    if (p.mode == mac::ProblemFile::Mode::StateFeedback) {
      p.sf->check();
      const mac::PrincipalProblem prob = mac::state_feedback_reduce(*p.sf);
      for (const auto& m : prob.models) {
        const auto v = mac::validate_hessian(m);
        std::cout << "model " << m.label << ": "
                  << (v.pass() ? "pass" : "FAIL") << "\n";
        all_pass = all_pass && v.pass();
      }
    } else if (p.mode == mac::ProblemFile::Mode::OutputFeedback) {
      for (const auto& m : p.of->models) {
        const auto rep = mac::check_assumptions(m, p.of->Q);
        std::cout << "model " << m.label << " rank checks: "
                  << (rep.pass() ? "pass" : "FAIL") << "\n";
        all_pass = all_pass && rep.pass();
      }
      if (all_pass) p.of->check();
    } else {
      p.principal->check();
      for (const auto& m : p.principal->models) {
        const auto v = mac::validate_hessian(m);
        std::cout << "model " << m.label << ": "
                  << (v.pass() ? "pass" : "FAIL");
        if (!v.pass()) {
          std::cout << "  (dd max " << v.dd_max_eig << ", schur min "
                    << v.schur_min_eig << ", uu min " << v.uu_min_eig << ")";
        }
        std::cout << "\n";
        all_pass = all_pass && v.pass();
      }
    }
  } catch (const mac::Error& e) {
    std::cout << "FAIL: " << e.what() << "\n";
    all_pass = false;
    detail = e.what();
  }

  mac::RunManifest m;
  m.input_hash = mac::hash_file(problem_path);
  m.command = "validate";
  m.parameters = "problem=" + problem_path;
  m.outcome = all_pass ? "pass" : ("fail " + detail);
  m.wall_time_s =
      std::chrono::duration<double>(Clock::now() - t0).count();
  mac::write_manifest(manifest_path.empty() ? "validate.manifest.json"
                                            : manifest_path, m);
  return all_pass ? 0 : 1;
}

int cmd_synth(const std::string& problem_path, const std::string& out_path,
              double gamma, int tau, double epsilon, int max_iter,
              const std::string& manifest_path) {
  const auto t0 = Clock::now();
  mac::ProblemFile p;
  try {
    p = mac::load_problem(problem_path);
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }
  const double g = gamma > 0 ? gamma : p.gamma;
  const int t = tau > 0 ? tau : p.tau.value_or(1);
  const mac::SolveConfig cfg = solve_config(p, epsilon, max_iter);

  mac::SynthOutcome so;
  try {
    if (p.mode == mac::ProblemFile::Mode::Principal) {
      so = mac::synthesize(*p.principal, g, t, cfg);
    } else {
      so = mac::synthesize(target_of(p), g, t, cfg);
    }
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }

  mac::RunManifest m;
  m.input_hash = mac::hash_file(problem_path);
  m.command = "synth";
  m.parameters = "problem=" + problem_path + " gamma=" + fmt(g) +
                 " tau=" + std::to_string(t) + " epsilon=" +
                 fmt(cfg.epsilon) + " max_iter=" +
                 std::to_string(cfg.max_iter);
  if (so.feasible) {
    mac::save_certificate(out_path, *so.cert);
    const double worst = so.cert->margins.empty()
                             ? 0.0
                             : *std::min_element(so.cert->margins.begin(),
                                                 so.cert->margins.end());
    std::cout << "feasible: certificate written to " << out_path
              << " (worst margin " << worst << ")\n";
    m.outcome = "feasible worst_margin=" + fmt(worst);
    m.output_paths.push_back(out_path);
  } else {
    std::cout << "infeasible within budget: " << so.detail << "\n";
    m.outcome = "infeasible " + so.detail;
  }
  m.wall_time_s =
      std::chrono::duration<double>(Clock::now() - t0).count();
  mac::write_manifest(manifest_path.empty() ? out_path + ".manifest.json"
                                            : manifest_path, m);
  return so.feasible ? 0 : 1;
}

int cmd_simulate(const std::string& problem_path,
                 const std::string& cert_path, const std::string& out_path,
                 int steps, std::int64_t seed,
                 const std::string& manifest_path) {
  const auto t0 = Clock::now();
  mac::ProblemFile p;
  mac::SynthesisCertificate cert;
  try {
    p = mac::load_problem(problem_path);
    cert = mac::load_certificate(cert_path);
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }

  mac::SimProblem sim;
  try {
    if (p.mode == mac::ProblemFile::Mode::StateFeedback) {
      sim = mac::SimProblem::state_feedback(*p.sf, p.sim.true_model);
    } else if (p.mode == mac::ProblemFile::Mode::OutputFeedback) {
      auto ro = mac::output_feedback_reduce(*p.of);
      if (ro.status != mac::ReduceStatus::Ok) {
        std::cerr << "consistency error: reduction failed: " << ro.detail
                  << "\n";
        return 3;
      }
      const int nx = static_cast<int>(p.of->models.front().A.rows());
      Eigen::VectorXd x0 = p.sim.x0_true.value_or(Eigen::VectorXd::Zero(nx));
      sim = mac::SimProblem::output_feedback(*p.of, std::move(*ro.reduction),
                                             p.sim.true_model, x0);
    } else {
      return exit_input_error("simulate requires a reducible problem file");
    }
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }

  // The certificate must verify against this problem before it drives a run.
  const auto rep = mac::verify(cert, sim.principal, p.solver.verify_tol);
  if (!rep.pass) {
    std::cerr << "consistency error: certificate does not verify against "
                 "this problem (worst margin " << rep.worst << ")\n";
    return 3;
  }

  mac::DisturbanceSpec dist;
  dist.kind = p.sim.noise;
  dist.seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : p.sim.seed;
  const int n = steps >= 0 ? steps : p.sim.n_steps;

  const mac::RunResult result = mac::run(sim, cert, dist, n);
  mac::write_trace_csv(out_path, sim, result);

  // Period-boundary dissipation of Vbar along the realized run.
  const std::vector<double> vt = mac::value_trace(sim, cert, result);
  double scale = 1.0;
  for (double v : vt) scale = std::max(scale, std::abs(v));
  bool dissipation_ok = true;
  for (size_t k = cert.tau; k < vt.size(); k += cert.tau) {
    if (vt[k] > vt[k - cert.tau] + 1e-7 * scale) dissipation_ok = false;
  }
  double max_empgain = 0.0;
  for (const auto& row : result.rows) {
    if (row.empgain) max_empgain = std::max(max_empgain, *row.empgain);
  }
  const double final_cumcost =
      result.rows.empty() ? 0.0 : result.rows.back().cumcost;

  std::cout << "steps=" << result.rows.size() << " trapped="
            << (result.trapped ? "yes" : "no") << " final_cumcost="
            << final_cumcost << " max_empgain=" << max_empgain
            << " dissipation=" << (dissipation_ok ? "pass" : "fail") << "\n";

  mac::RunManifest m;
  m.input_hash = mac::hash_file(problem_path);
  m.command = "simulate";
  m.parameters = "problem=" + problem_path + " cert=" + cert_path +
                 " steps=" + std::to_string(n) + " seed=" +
                 std::to_string(dist.seed);
  m.outcome = std::string(result.trapped ? "trapped" : "success") +
              " final_cumcost=" + fmt(final_cumcost) + " max_empgain=" +
              fmt(max_empgain) + " dissipation=" +
              (dissipation_ok ? "pass" : "fail");
  m.output_paths.push_back(out_path);
  m.wall_time_s =
      std::chrono::duration<double>(Clock::now() - t0).count();
  mac::write_manifest(manifest_path.empty() ? out_path + ".manifest.json"
                                            : manifest_path, m);
  return 0;
}

int cmd_sweep(const std::string& problem_path, const std::string& kind,
              double lo, double hi, double resolution, double gamma, int tau,
              int tau_max, const std::string& out_path,
              const std::string& manifest_path) {
  const auto t0 = Clock::now();
  mac::ProblemFile p;
  try {
    p = mac::load_problem(problem_path);
  } catch (const mac::Error& e) {
    return exit_input_error(e.what());
  }
  if (p.mode == mac::ProblemFile::Mode::Principal) {
    return exit_input_error("sweep requires a state/output feedback file");
  }
  mac::SolveConfig cfg = solve_config(p, -1.0, -1);

  std::ofstream table(out_path, std::ios::binary);
  if (!table) return exit_input_error("cannot write " + out_path);

  bool found = false;
  std::string summary;
  if (kind == "gamma") {
    const int t = tau > 0 ? tau : p.tau.value_or(1);
    const auto res =
        mac::gamma_bisect(target_of(p), t, lo, hi, resolution, cfg);
    table << "gamma,feasible,detail\n";
    for (const auto& pr : res.probes) {
      table << fmt(pr.gamma) << "," << (pr.feasible ? 1 : 0) << ",\""
            << pr.detail << "\"\n";
    }
    found = res.found;
    summary = res.found ? ("best gamma=" + fmt(res.gamma)) : "none feasible";
    std::cout << summary << "\n";
  } else if (kind == "tau") {
    const double g = gamma > 0 ? gamma : p.gamma;
    const auto res = mac::period_search(target_of(p), g, tau_max, cfg);
    table << "tau,feasible,detail\n";
    for (const auto& pr : res.probes) {
      table << pr.tau << "," << (pr.feasible ? 1 : 0) << ",\"" << pr.detail
            << "\"\n";
    }
    found = res.found;
    summary =
        res.found ? ("best tau=" + std::to_string(res.tau)) : "none feasible";
    std::cout << summary << "\n";
  } else {
    return exit_input_error("sweep kind must be gamma or tau");
  }

  mac::RunManifest m;
  m.input_hash = mac::hash_file(problem_path);
  m.command = "sweep";
  m.parameters = "problem=" + problem_path + " kind=" + kind;
  m.outcome = summary;
  m.output_paths.push_back(out_path);
  m.wall_time_s =
      std::chrono::duration<double>(Clock::now() - t0).count();
  mac::write_manifest(manifest_path.empty() ? out_path + ".manifest.json"
                                            : manifest_path, m);
  return found ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimax adaptive control synthesis and simulation"};
  app.require_subcommand(1);

  std::string problem, cert, out, manifest, kind;
  double gamma = -1.0, epsilon = -1.0, lo = 1.0, hi = 100.0, resolution = 0.1;
  int tau = -1, max_iter = -1, steps = -1, tau_max = 8;
  std::int64_t seed = -1;

  auto* validate = app.add_subcommand("validate", "check a problem file");
  validate->add_option("--problem", problem)->required();
  validate->add_option("--manifest", manifest);

  auto* synth = app.add_subcommand("synth", "synthesize a certificate");
  synth->add_option("--problem", problem)->required();
  synth->add_option("--out", out)->required();
  synth->add_option("--gamma", gamma);
  synth->add_option("--tau", tau);
  synth->add_option("--epsilon", epsilon);
  synth->add_option("--max-iter", max_iter);
  synth->add_option("--manifest", manifest);

  auto* simulate = app.add_subcommand("simulate", "run the closed loop");
  simulate->add_option("--problem", problem)->required();
  simulate->add_option("--cert", cert)->required();
  simulate->add_option("--out", out)->required();
  simulate->add_option("--steps", steps);
  simulate->add_option("--seed", seed);
  simulate->add_option("--manifest", manifest);

  auto* sweep = app.add_subcommand("sweep", "search over gamma or tau");
  sweep->add_option("--problem", problem)->required();
  sweep->add_option("--kind", kind)->required();
  sweep->add_option("--lo", lo);
  sweep->add_option("--hi", hi);
  sweep->add_option("--resolution", resolution);
  sweep->add_option("--gamma", gamma);
  sweep->add_option("--tau", tau);
  sweep->add_option("--tau-max", tau_max);
  sweep->add_option("--out", out)->required();
  sweep->add_option("--manifest", manifest);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(problem, manifest);
    if (synth->parsed()) {
      return cmd_synth(problem, out, gamma, tau, epsilon, max_iter, manifest);
    }
    if (simulate->parsed()) {
      return cmd_simulate(problem, cert, out, steps, seed, manifest);
    }
    if (sweep->parsed()) {
      return cmd_sweep(problem, kind, lo, hi, resolution, gamma, tau, tau_max,
                       out, manifest);
    }
  } catch (const mac::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
