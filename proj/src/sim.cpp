#include "mac/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mac {

namespace {

constexpr double kTrapThreshold = 1e10;

// Vbar(z, r) = max over pairs of |z|^2_{P_ij} + (r_i + r_j)/2.
double vbar_of(const SynthesisCertificate& cert, const Eigen::VectorXd& z,
               const std::vector<double>& r) {
  double best = -std::numeric_limits<double>::infinity();
  int idx = 0;
  for (int i = 1; i <= cert.n_models; ++i) {
    for (int j = i; j <= cert.n_models; ++j) {
      best = std::max(best, z.dot(cert.P[idx].mat() * z) +
                                0.5 * (r[i - 1] + r[j - 1]));
      ++idx;
    }
  }
  return best;
}

// Active pair (i, j) maximizing Vbar, used by the worst-case disturbance
// generator.
std::pair<int, int> active_pair(const SynthesisCertificate& cert,
                                const Eigen::VectorXd& z,
                                const std::vector<double>& r) {
  double best = -std::numeric_limits<double>::infinity();
  std::pair<int, int> arg{1, 1};
  int idx = 0;
  for (int i = 1; i <= cert.n_models; ++i) {
    for (int j = i; j <= cert.n_models; ++j) {
      const double v =
          z.dot(cert.P[idx].mat() * z) + 0.5 * (r[i - 1] + r[j - 1]);
      if (v > best) {
        best = v;
        arg = {i, j};
      }
      ++idx;
    }
  }
  return arg;
}

class NoiseSource {
 public:
  NoiseSource(const DisturbanceSpec& spec, int n_w, int n_v)
      : spec_(spec), n_w_(n_w), n_v_(n_v), rng_(spec.seed) {}

  // Fills w (and v when n_v > 0) for step t. The worst-case mode is handled
  // by the caller, which has access to the certificate.
  void sample(int t, Eigen::VectorXd* w, Eigen::VectorXd* v) {
    w->setZero(n_w_);
    v->setZero(n_v_);
    switch (spec_.kind) {
      case NoiseKind::Zero:
      case NoiseKind::WorstCase:
        break;
      case NoiseKind::Gaussian: {
        for (int i = 0; i < n_w_; ++i) (*w)(i) = spec_.amplitude * gauss_(rng_);
        for (int i = 0; i < n_v_; ++i) (*v)(i) = spec_.amplitude * gauss_(rng_);
        break;
      }
      case NoiseKind::Impulse: {
        if (t == 0) w->setConstant(spec_.amplitude);
        break;
      }
      case NoiseKind::Sinusoid: {
        const double s = spec_.amplitude * std::sin(spec_.frequency * t);
        w->setConstant(s);
        for (int i = 0; i < n_v_; ++i) (*v)(i) = s;
        break;
      }
    }
  }

 private:
  DisturbanceSpec spec_;
  int n_w_, n_v_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace

SimProblem SimProblem::state_feedback(StateFeedbackSpec spec, int true_model) {
  SimProblem p;
  p.mode = Mode::StateFeedback;
  p.principal = state_feedback_reduce(spec);
  p.x0_true = spec.x0;
  p.sf = std::move(spec);
  p.true_model = true_model;
  return p;
}

SimProblem SimProblem::output_feedback(OutputFeedbackSpec spec,
                                       ObserverBankReduction bank,
                                       int true_model,
                                       const Eigen::VectorXd& x0_true) {
  SimProblem p;
  p.mode = Mode::OutputFeedback;
  p.principal = bank.problem;
  p.bank = std::move(bank);
  p.of = std::move(spec);
  p.true_model = true_model;
  p.x0_true = x0_true;
  return p;
}

TraceRow step(const SimProblem& problem, const SynthesisCertificate& cert,
              PlantState& plant, ControllerState& ctrl,
              const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
  const auto& models = problem.principal.models;
  if (ctrl.phase == 0) {
    ctrl.active_gain = argmax_model(ctrl.info, models);
  }
  const Eigen::MatrixXd& K = cert.gains[ctrl.active_gain].K;
  const Eigen::VectorXd u = -K * ctrl.z;

  TraceRow row;
  row.t = plant.t;
  row.x = plant.x;
  row.u = u;
  row.w = w;

  Eigen::VectorXd d;
  Eigen::VectorXd x_next;
  Eigen::VectorXd z_next;
  if (problem.mode == SimProblem::Mode::StateFeedback) {
    const auto& m = problem.sf->models[plant.true_model];
    x_next = m.A * plant.x + m.B * u + w;
    d = x_next;  // substitution d_t = x_{t+1}
    z_next = d;
  } else {
    const auto& m = problem.of->models[plant.true_model];
    const Eigen::VectorXd y = m.C * plant.x + m.D * v;
    d = y;
    row.v = v;
    x_next = m.A * plant.x + m.B * u + m.G * w;
    // Every observer advances with the shared (u, y).
    const int nx = static_cast<int>(m.A.rows());
    z_next.resize(ctrl.z.size());
    for (size_t ob = 0; ob < problem.bank->observers.size(); ++ob) {
      const auto& o = problem.bank->observers[ob];
      const auto& mdl = problem.of->models[ob];
      z_next.segment(ob * nx, nx) =
          o.A_obs * ctrl.z.segment(ob * nx, nx) + mdl.B * u + o.L * y;
    }
  }
  row.dory = d;

  const StageTriple triple{ctrl.z, u, d};
  row.stage_costs.resize(models.size());
  for (size_t i = 0; i < models.size(); ++i) {
    row.stage_costs[i] = stage_cost(models[i], triple);
  }
  ctrl.info = info_update(ctrl.info, triple, models);
  row.r = ctrl.info.r;
  row.cumcost = ctrl.info.r[plant.true_model];

  plant.x = x_next;
  plant.t += 1;
  ctrl.z = z_next;
  ctrl.phase = (ctrl.phase + 1) % cert.tau;
  row.z = z_next;
  row.vbar = vbar_of(cert, z_next, ctrl.info.r);
  return row;
}

RunResult run(const SimProblem& problem, const SynthesisCertificate& cert,
              const DisturbanceSpec& dist, int n_steps) {
  const auto& models = problem.principal.models;
  const BlockPartition part = problem.principal.partition();

  int n_w = 0, n_v = 0;
  if (problem.mode == SimProblem::Mode::StateFeedback) {
    n_w = static_cast<int>(problem.sf->x0.size());
  } else {
    n_w = static_cast<int>(problem.of->models[problem.true_model].G.cols());
    n_v = static_cast<int>(problem.of->models[problem.true_model].D.cols());
  }

  PlantState plant{problem.x0_true, problem.true_model, 0};
  ControllerState ctrl;
  ctrl.z = problem.principal.z0;
  ctrl.info = InfoState::zero(problem.principal);
  ctrl.phase = 0;
  ctrl.active_gain = argmax_model(ctrl.info, models);

  NoiseSource noise(dist, n_w, n_v);

  // Running sums for the empirical gain columns.
  double num = 0.0;
  double den0 = 0.0;
  if (problem.mode == SimProblem::Mode::OutputFeedback) {
    const Eigen::VectorXd xhat0 =
        problem.principal.z0.segment(problem.true_model * problem.x0_true.size(),
                                     problem.x0_true.size());
    const Eigen::VectorXd e0 = problem.x0_true - xhat0;
    den0 = e0.dot(
        problem.bank->observers[problem.true_model].S.mat() * e0);
  }
  double den_noise = 0.0;
  const double g2 = (problem.mode == SimProblem::Mode::StateFeedback
                         ? problem.sf->gamma
                         : problem.of->gamma) *
                    (problem.mode == SimProblem::Mode::StateFeedback
                         ? problem.sf->gamma
                         : problem.of->gamma);
  const Eigen::MatrixXd& Qw = problem.mode == SimProblem::Mode::StateFeedback
                                  ? problem.sf->Q.mat()
                                  : problem.of->Q.mat();
  const Eigen::MatrixXd& Rw = problem.mode == SimProblem::Mode::StateFeedback
                                  ? problem.sf->R.mat()
                                  : problem.of->R.mat();

  RunResult res;
  res.rows.reserve(n_steps);
  for (int t = 0; t < n_steps; ++t) {
    Eigen::VectorXd w, v;
    noise.sample(t, &w, &v);
    if (dist.kind == NoiseKind::WorstCase) {
      // Adversary plays the closed-form maximizer d = d_fb z of the active
      // quadratic piece, mapped back onto w (and v).
      const int gain_idx = (ctrl.phase == 0)
                               ? argmax_model(ctrl.info, models)
                               : ctrl.active_gain;
      const auto [ai, aj] = active_pair(cert, ctrl.z, ctrl.info.r);
      const PartitionedHessian havg(
          SymMatrix(0.5 * (models[ai - 1].matrix.mat() +
                           models[aj - 1].matrix.mat())),
          part, "avg");
      const Dynamics dyn = Dynamics::from(problem.principal);
      const SymMatrix g =
          g_operator(cert.pair(ai, aj), cert.gains[gain_idx].K, havg, dyn);
      try {
        const SupResult sup = sup_over_d(g, part.n_d);
        const Eigen::VectorXd d_star = sup.d_feedback * ctrl.z;
        if (problem.mode == SimProblem::Mode::StateFeedback) {
          // d = x_{t+1}: realize it through w = d - A x - B u.
          const auto& m = problem.sf->models[plant.true_model];
          const Eigen::VectorXd u = -cert.gains[gain_idx].K * ctrl.z;
          w = d_star - m.A * plant.x - m.B * u;
        } else {
          // d = y: realize through v = D^+ (d - C x).
          const auto& m = problem.of->models[plant.true_model];
          v = m.D.completeOrthogonalDecomposition().solve(d_star -
                                                          m.C * plant.x);
        }
      } catch (const UnboundedSup&) {
        // Keep zero disturbance for this step.
      }
    }

    TraceRow row = step(problem, cert, plant, ctrl, w, v);

    num += row.x.dot(Qw * row.x) + row.u.dot(Rw * row.u);
    den_noise += w.squaredNorm() + v.squaredNorm();
    const double den = den0 + g2 * den_noise;
    if (den > 0.0) {
      row.empgain = num / den;
    }
    res.rows.push_back(std::move(row));

    if (plant.x.cwiseAbs().maxCoeff() > kTrapThreshold) {
      res.trapped = true;
      res.trap_t = plant.t;
      break;
    }
  }
  return res;
}

std::vector<RunResult> run_batch(const SimProblem& problem,
                                 const SynthesisCertificate& cert,
                                 const DisturbanceSpec& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 int n_steps, bool parallel) {
  std::vector<RunResult> out(seeds.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < static_cast<int>(seeds.size()); ++i) {
    DisturbanceSpec d = base;
    d.seed = seeds[i];
    out[i] = run(problem, cert, d, n_steps);
  }
  return out;
}

std::optional<double> empirical_gain(const SimProblem& problem,
                                     const std::vector<TraceRow>& rows,
                                     int upto) {
  if (upto < 0 || upto >= static_cast<int>(rows.size())) return std::nullopt;
  const bool sf = problem.mode == SimProblem::Mode::StateFeedback;
  const Eigen::MatrixXd& Q = sf ? problem.sf->Q.mat() : problem.of->Q.mat();
  const Eigen::MatrixXd& R = sf ? problem.sf->R.mat() : problem.of->R.mat();
  const double gamma = sf ? problem.sf->gamma : problem.of->gamma;

  double num = 0.0, den = 0.0;
  if (!sf) {
    const int nx = static_cast<int>(problem.x0_true.size());
    const Eigen::VectorXd xhat0 =
        problem.principal.z0.segment(problem.true_model * nx, nx);
    const Eigen::VectorXd e0 = problem.x0_true - xhat0;
    den += e0.dot(problem.bank->observers[problem.true_model].S.mat() * e0);
  }
  for (int t = 0; t <= upto; ++t) {
    num += rows[t].x.dot(Q * rows[t].x) + rows[t].u.dot(R * rows[t].u);
    den += gamma * gamma *
           (rows[t].w.squaredNorm() + rows[t].v.squaredNorm());
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::vector<double> value_trace(const SimProblem& problem,
                                const SynthesisCertificate& cert,
                                const RunResult& result) {
  std::vector<double> out;
  out.reserve(result.rows.size() + 1);
  const std::vector<double> r0(problem.principal.models.size(), 0.0);
  out.push_back(vbar_of(cert, problem.principal.z0, r0));
  for (const auto& row : result.rows) {
    out.push_back(row.vbar);
  }
  return out;
}

bool jury_check(const Eigen::MatrixXd& K, int i) {
  if (K.rows() != 1 || K.cols() != 2 || (i != 1 && i != -1)) {
    throw Unsupported("jury_check: requires 1x2 gain and i = +-1");
  }
  const double k1 = K(0, 0);
  const double k2 = K(0, 1);
  const double ik1 = i * k1;
  return ik1 > 0.0 && (ik1 - 1.0 < k2) && (k2 < 1.0 + ik1 / 2.0);
}

void write_trace_csv(const std::string& path, const SimProblem& problem,
                     const RunResult& result) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");

  const bool sf = problem.mode == SimProblem::Mode::StateFeedback;
  const int nx = static_cast<int>(problem.x0_true.size());
  const int nu = problem.principal.partition().n_u;
  const int nd = problem.principal.partition().n_d;

  f << "t";
  for (int i = 1; i <= nx; ++i) f << ",x_" << i;
  for (int i = 1; i <= nu; ++i) f << ",u_" << i;
  for (int i = 1; i <= nd; ++i) f << (sf ? ",d_" : ",y_") << i;
  int nw = 0, nv = 0;
  if (!result.rows.empty()) {
    nw = static_cast<int>(result.rows.front().w.size());
    nv = static_cast<int>(result.rows.front().v.size());
  } else if (sf) {
    nw = nx;
  } else {
    nw = static_cast<int>(problem.of->models[problem.true_model].G.cols());
    nv = static_cast<int>(problem.of->models[problem.true_model].D.cols());
  }
  for (int i = 1; i <= nw; ++i) f << ",w_" << i;
  for (int i = 1; i <= nv; ++i) f << ",v_" << i;
  for (const auto& m : problem.principal.models) f << ",r_" << m.label;
  f << ",vbar,cumcost,empgain\n";

  char buf[40];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    f << ',' << buf;
  };
  for (const auto& row : result.rows) {
    f << row.t;
    for (int i = 0; i < nx; ++i) num(row.x(i));
    for (int i = 0; i < nu; ++i) num(row.u(i));
    for (int i = 0; i < nd; ++i) num(row.dory(i));
    for (int i = 0; i < nw; ++i) num(row.w(i));
    for (int i = 0; i < nv; ++i) num(row.v(i));
    for (double r : row.r) num(r);
    num(row.vbar);
    num(row.cumcost);
    if (row.empgain.has_value()) {
      num(*row.empgain);
    } else {
      f << ',';
    }
    f << '\n';
  }
}

}  // namespace mac
