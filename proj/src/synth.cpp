#include "mac/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mac {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

int svec_dim(int n) { return n * (n + 1) / 2; }

Eigen::VectorXd svec(const Eigen::MatrixXd& s) {
  const int n = static_cast<int>(s.rows());
  Eigen::VectorXd v(svec_dim(n));
  int t = 0;
  for (int i = 0; i < n; ++i) {
    v(t++) = s(i, i);
    for (int j = i + 1; j < n; ++j) v(t++) = s(i, j) * kSqrt2;
  }
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v, int n) {
  Eigen::MatrixXd s(n, n);
  int t = 0;
  for (int i = 0; i < n; ++i) {
    s(i, i) = v(t++);
    for (int j = i + 1; j < n; ++j) {
      s(i, j) = s(j, i) = v(t++) / kSqrt2;
    }
  }
  return s;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Projection of a symmetric matrix onto {X : X >= shift*I}; also reports
// the pre-projection violation shift - lambda_min.
Eigen::MatrixXd clip_eigs(const Eigen::MatrixXd& m, double shift,
                          double* violation) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  *violation = shift - es.eigenvalues()(0);
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(shift).asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

int LmiSystem::pair_var(int i, int j) const {
  auto it = pair_index.find({std::min(i, j), std::max(i, j)});
  if (it == pair_index.end()) {
    throw BadPartition("LmiSystem: unknown pair variable");
  }
  return it->second;
}

int LmiSystem::stage_var(int i, int j, int k, int s) const {
  auto it = stage_index.find({std::min(i, j), std::max(i, j), k, s});
  if (it == stage_index.end()) {
    throw BadPartition("LmiSystem: unknown stage variable");
  }
  return it->second;
}

LmiSystem assemble(const PrincipalProblem& problem,
                   const std::vector<GainMatrix>& gains, int tau) {
  problem.check();
  if (tau < 1) throw BadPartition("assemble: tau must be >= 1");
  const int N = static_cast<int>(problem.models.size());
  if (static_cast<int>(gains.size()) != N) {
    throw IncompleteGains("assemble: one gain per model required");
  }
  for (int m = 0; m < N; ++m) {
    if (gains[m].label != problem.models[m].label) {
      throw IncompleteGains("assemble: gain label mismatch for model " +
                            problem.models[m].label);
    }
  }
  const BlockPartition part = problem.partition();

  LmiSystem sys;
  sys.nz = part.n_z;
  sys.nd = part.n_d;
  sys.n_models = N;
  sys.tau = tau;

  for (int i = 1; i <= N; ++i) {
    for (int j = i; j <= N; ++j) {
      sys.pair_index[{i, j}] = static_cast<int>(sys.vars.size());
      sys.vars.push_back(LmiVariable{
          "P_" + std::to_string(i) + "," + std::to_string(j), part.n_z, true});
    }
  }

  auto stage_of = [&](int i, int j, int k, int s) {
    const std::array<int, 4> key{std::min(i, j), std::max(i, j), k, s};
    auto it = sys.stage_index.find(key);
    if (it != sys.stage_index.end()) return it->second;
    const int idx = static_cast<int>(sys.vars.size());
    sys.stage_index[key] = idx;
    sys.vars.push_back(LmiVariable{
        "Ps_" + std::to_string(key[0]) + "," + std::to_string(key[1]) + "," +
            std::to_string(k) + "," + std::to_string(s),
        part.n_z, false});
    return idx;
  };

  std::set<std::array<int, 5>> seen;
  for (int i = 1; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) {
      for (int k = 1; k <= N; ++k) {
        if (i != j && j == k) continue;  // excluded triples
        const Eigen::MatrixXd Hbar =
            0.5 * (problem.models[i - 1].matrix.mat() +
                   problem.models[j - 1].matrix.mat());
        const Eigen::MatrixXd& K = gains[k - 1].K;
        Eigen::MatrixXd T(part.n_z, part.n_z + part.n_d);
        T << problem.A_hat - problem.B_hat * K, problem.G_hat;
        Eigen::MatrixXd L =
            Eigen::MatrixXd::Zero(part.dim(), part.n_z + part.n_d);
        L.topLeftCorner(part.n_z, part.n_z).setIdentity();
        L.block(part.n_z, 0, part.n_u, part.n_z) = -K;
        L.bottomRightCorner(part.n_d, part.n_d).setIdentity();
        const Eigen::MatrixXd Hc = symmetrize(L.transpose() * Hbar * L);

        for (int s = 0; s < tau; ++s) {
          const int src = (s == 0) ? sys.pair_var(i, j) : stage_of(i, j, k, s);
          const int tgt = (s == tau - 1) ? sys.pair_var(j, k)
                                         : stage_of(i, j, k, s + 1);
          const std::array<int, 5> key{std::min(i, j), std::max(i, j), k, s,
                                       tgt};
          if (!seen.insert(key).second) continue;
          sys.cons.push_back(LmiConstraint{tgt, src, T, Hc, i, j, k, s + 1});
        }
      }
    }
  }
  return sys;
}

namespace detail {

// Vectorized view of the system used by both the projection solver and the
// Newton rescue. Works on the normalized problem (H / sigma).
struct SolverWork {
  int nz = 0, nd = 0, m = 0;
  int vdim = 0, cdim = 0, total = 0;
  double sigma = 1.0;

  // Per slot: list of (variable index, cdim-or-vdim x vdim block).
  struct Slot {
    std::vector<std::pair<int, Eigen::MatrixXd>> blocks;
    Eigen::VectorXd b;
    int dim = 0;       // matrix dimension of this slot
    bool is_psd_var = false;
  };
  std::vector<Slot> slots;
  Eigen::LDLT<Eigen::MatrixXd> gram;

  Eigen::VectorXd slot_value(const Slot& sl, const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = sl.b;
    for (const auto& [vi, A] : sl.blocks) {
      y += A * x.segment(vi * vdim, vdim);
    }
    return y;
  }

  double min_eig_all(const Eigen::VectorXd& x) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& sl : slots) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          smat(slot_value(sl, x), sl.dim), Eigen::EigenvaluesOnly);
      worst = std::min(worst, es.eigenvalues()(0));
    }
    return worst;
  }
};

SolverWork build_work(const LmiSystem& sys) {
  SolverWork w;
  w.nz = sys.nz;
  w.nd = sys.nd;
  w.m = sys.nz + sys.nd;
  w.vdim = svec_dim(w.nz);
  w.cdim = svec_dim(w.m);
  w.total = static_cast<int>(sys.vars.size()) * w.vdim;

  double sigma = 1.0;
  for (const auto& c : sys.cons) {
    sigma = std::max(sigma, c.H_const.norm());
  }
  w.sigma = sigma;

  Eigen::MatrixXd Ez(w.nz, w.m);
  Ez << Eigen::MatrixXd::Identity(w.nz, w.nz),
      Eigen::MatrixXd::Zero(w.nz, w.nd);

  // svec basis of the variable space
  std::vector<Eigen::MatrixXd> basis;
  for (int t = 0; t < w.vdim; ++t) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(w.vdim);
    e(t) = 1.0;
    basis.push_back(smat(e, w.nz));
  }

  for (const auto& c : sys.cons) {
    SolverWork::Slot sl;
    sl.dim = w.m;
    sl.b = svec(-c.H_const / sigma);
    Eigen::MatrixXd A_tgt(w.cdim, w.vdim), A_src(w.cdim, w.vdim);
    for (int t = 0; t < w.vdim; ++t) {
      A_tgt.col(t) = svec(symmetrize(Ez.transpose() * basis[t] * Ez));
      A_src.col(t) =
          svec(symmetrize(-c.T.transpose() * basis[t] * c.T));
    }
    if (c.tgt == c.src) {
      sl.blocks.emplace_back(c.tgt, A_tgt + A_src);
    } else {
      sl.blocks.emplace_back(c.tgt, A_tgt);
      sl.blocks.emplace_back(c.src, A_src);
    }
    w.slots.push_back(std::move(sl));
  }
  for (size_t v = 0; v < sys.vars.size(); ++v) {
    if (!sys.vars[v].require_psd) continue;
    SolverWork::Slot sl;
    sl.dim = w.nz;
    sl.b = Eigen::VectorXd::Zero(w.vdim);
    sl.blocks.emplace_back(static_cast<int>(v),
                           Eigen::MatrixXd::Identity(w.vdim, w.vdim));
    sl.is_psd_var = true;
    w.slots.push_back(std::move(sl));
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(w.total, w.total);
  for (const auto& sl : w.slots) {
    for (const auto& [vi, Ai] : sl.blocks) {
      for (const auto& [vj, Aj] : sl.blocks) {
        gram.block(vi * w.vdim, vj * w.vdim, w.vdim, w.vdim) +=
            Ai.transpose() * Aj;
      }
    }
  }
  gram.diagonal().array() += 1e-13;
  w.gram.compute(gram);
  return w;
}

// x minimizing sum over slots of ||A(x) + b - y||^2; also returns A(x)+b.
Eigen::VectorXd project_affine(const SolverWork& w, const Eigen::VectorXd& y,
                               Eigen::VectorXd* x_out) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(w.total);
  int off = 0;
  for (const auto& sl : w.slots) {
    const int d = svec_dim(sl.dim);
    const Eigen::VectorXd diff = y.segment(off, d) - sl.b;
    for (const auto& [vi, A] : sl.blocks) {
      rhs.segment(vi * w.vdim, w.vdim) += A.transpose() * diff;
    }
    off += d;
  }
  const Eigen::VectorXd x = w.gram.solve(rhs);
  Eigen::VectorXd out(y.size());
  off = 0;
  for (const auto& sl : w.slots) {
    const int d = svec_dim(sl.dim);
    out.segment(off, d) = w.slot_value(sl, x);
    off += d;
  }
  if (x_out) *x_out = x;
  return out;
}

// Product-cone projection; each slot is clipped at its shift. Returns the
// worst violation of the input point. The parallel path writes each slot
// into its own segment, so results are bitwise identical to the serial one.
Eigen::VectorXd project_cones(const SolverWork& w, const Eigen::VectorXd& y,
                              double eps, bool parallel, double* worst_out) {
  const int n_slots = static_cast<int>(w.slots.size());
  std::vector<int> offsets(n_slots + 1, 0);
  for (int i = 0; i < n_slots; ++i) {
    offsets[i + 1] = offsets[i] + svec_dim(w.slots[i].dim);
  }
  Eigen::VectorXd out(y.size());
  std::vector<double> violations(n_slots, 0.0);

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n_slots; ++i) {
    const auto& sl = w.slots[i];
    const double shift = sl.is_psd_var ? 0.0 : eps;
    double viol = 0.0;
    const Eigen::MatrixXd z = clip_eigs(
        smat(y.segment(offsets[i], svec_dim(sl.dim)), sl.dim), shift, &viol);
    out.segment(offsets[i], svec_dim(sl.dim)) = svec(symmetrize(z));
    violations[i] = viol;
  }
  if (worst_out) {
    *worst_out = *std::max_element(violations.begin(), violations.end());
  }
  return out;
}

struct RescueResult {
  double margin = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
};

// Barrier phase-1: maximize t subject to every slot >= t I, by repeated
// analytic-centering Newton steps on sum of log det(slot - t I).
RescueResult newton_max_margin(const SolverWork& w, int outer_iters,
                               int newton_iters, bool parallel) {
  const int n_slots = static_cast<int>(w.slots.size());
  std::vector<int> offsets(n_slots + 1, 0);
  for (int i = 0; i < n_slots; ++i) {
    offsets[i + 1] = offsets[i] + svec_dim(w.slots[i].dim);
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(w.total);
  double t = w.min_eig_all(x) - 1.0;

  std::vector<Eigen::VectorXd> grads(n_slots);
  std::vector<Eigen::MatrixXd> hesses(n_slots);

  for (int outer = 0; outer < outer_iters; ++outer) {
    for (int nit = 0; nit < newton_iters; ++nit) {
      bool lost = false;
#pragma omp parallel for schedule(dynamic) if (parallel)
      for (int ib = 0; ib < n_slots; ++ib) {
        const auto& sl = w.slots[ib];
        const Eigen::MatrixXd M =
            smat(w.slot_value(sl, x), sl.dim) -
            t * Eigen::MatrixXd::Identity(sl.dim, sl.dim);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        if (es.eigenvalues()(0) <= 0.0) {
          lost = true;
          grads[ib].setZero(w.total);
          hesses[ib].setZero(w.total, w.total);
          continue;
        }
        const Eigen::MatrixXd Minv =
            es.eigenvectors() *
            es.eigenvalues().cwiseInverse().asDiagonal() *
            es.eigenvectors().transpose();
        Eigen::VectorXd g = Eigen::VectorXd::Zero(w.total);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(w.total, w.total);
        const Eigen::VectorXd sv_minv = svec(Minv);
        for (const auto& [vi, A] : sl.blocks) {
          g.segment(vi * w.vdim, w.vdim) += A.transpose() * sv_minv;
        }
        // Hessian block: -A_i^T W A_j with W the svec form of X -> Minv X Minv.
        for (const auto& [vi, Ai] : sl.blocks) {
          Eigen::MatrixXd WAi(svec_dim(sl.dim), w.vdim);
          for (int tcol = 0; tcol < w.vdim; ++tcol) {
            const Eigen::MatrixXd Mp = smat(Ai.col(tcol), sl.dim);
            WAi.col(tcol) = svec(symmetrize(Minv * Mp * Minv));
          }
          for (const auto& [vj, Aj] : sl.blocks) {
            h.block(vj * w.vdim, vi * w.vdim, w.vdim, w.vdim) -=
                Aj.transpose() * WAi;
          }
        }
        grads[ib] = std::move(g);
        hesses[ib] = std::move(h);
      }
      if (lost) break;

      Eigen::VectorXd grad = Eigen::VectorXd::Zero(w.total);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(w.total, w.total);
      for (int ib = 0; ib < n_slots; ++ib) {
        grad += grads[ib];
        hess += hesses[ib];
      }
      Eigen::MatrixXd hreg = -hess;
      hreg.diagonal().array() += 1e-11;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(hreg);
      if (ldlt.info() != Eigen::Success) break;
      const Eigen::VectorXd dx = ldlt.solve(grad);
      if (!dx.allFinite()) break;
      const double lambda2 = grad.dot(dx);

      double step = 1.0;
      bool ok = false;
      for (int bt = 0; bt < 70; ++bt) {
        if (w.min_eig_all(x + step * dx) > t) {
          ok = true;
          break;
        }
        step *= 0.5;
      }
      if (ok) x += step * dx;
      if (!ok || lambda2 < 1e-13) break;
    }
    const double me = w.min_eig_all(x);
    const double gap = me - t;
    if (gap < 1e-13 * std::max(1.0, std::abs(t))) break;
    t += 0.85 * gap;
  }
  return RescueResult{w.min_eig_all(x), x};
}

std::vector<SymMatrix> extract_vars(const SolverWork& w, const LmiSystem& sys,
                                    const Eigen::VectorXd& x) {
  std::vector<SymMatrix> out;
  for (size_t v = 0; v < sys.vars.size(); ++v) {
    out.push_back(SymMatrix(
        w.sigma * smat(x.segment(static_cast<int>(v) * w.vdim, w.vdim),
                       w.nz)));
  }
  return out;
}

}  // namespace detail

const SymMatrix& SynthesisCertificate::pair(int i, int j) const {
  const int a = std::min(i, j) - 1;
  const int b = std::max(i, j) - 1;
  // Row-major over i <= j with N = n_models.
  const int idx = a * n_models - a * (a - 1) / 2 + (b - a);
  return P[static_cast<size_t>(idx)];
}

SolveOutcome solve_feasibility(const LmiSystem& sys,
                               const PrincipalProblem& problem,
                               const std::vector<GainMatrix>& gains,
                               double gamma, const SolveConfig& cfg) {
  if (cfg.epsilon <= 0) throw BadPartition("solve_feasibility: epsilon <= 0");
  detail::SolverWork w = detail::build_work(sys);
  const double eps = cfg.epsilon;  // in normalized units

  SolveOutcome out;

  auto make_cert = [&](const Eigen::VectorXd& x) {
    SynthesisCertificate cert;
    cert.tau = sys.tau;
    cert.gamma = gamma;
    cert.gains = gains;
    cert.n_models = sys.n_models;
    const std::vector<SymMatrix> vars = detail::extract_vars(w, sys, x);
    for (int i = 1; i <= sys.n_models; ++i) {
      for (int j = i; j <= sys.n_models; ++j) {
        cert.P.push_back(vars[sys.pair_var(i, j)]);
      }
    }
    for (const auto& [key, idx] : sys.stage_index) {
      cert.P_stage.emplace(key, vars[idx]);
    }
    return cert;
  };

  auto finish = [&](const Eigen::VectorXd& x) -> bool {
    SynthesisCertificate cert = make_cert(x);
    const VerificationReport rep = verify(cert, problem, cfg.verify_tol);
    if (!rep.pass) return false;
    cert.margins.clear();
    for (const auto& cm : rep.constraints) cert.margins.push_back(cm.min_eig);
    cert.verified = true;
    out.feasible = true;
    out.cert = std::move(cert);
    return true;
  };

  // Stage 1: Douglas-Rachford between the affine image and the shifted
  // cone product.
  int total_dim = 0;
  for (const auto& sl : w.slots) total_dim += svec_dim(sl.dim);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(total_dim);
  const int check_every = 25;
  double last_residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x_cur = Eigen::VectorXd::Zero(w.total);
  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    Eigen::VectorXd x_aff;
    const Eigen::VectorXd pa = detail::project_affine(w, z, &x_aff);
    double worst = 0.0;
    const Eigen::VectorXd pk = detail::project_cones(
        w, 2.0 * pa - z, eps, cfg.parallel, &worst);
    z += pk - pa;
    x_cur = x_aff;
    if (it % check_every == 0) {
      double resid = 0.0;
      detail::project_cones(w, pa, eps, cfg.parallel, &resid);
      last_residual = resid;
      auto& hist = out.report.residual_history;
      hist.push_back(resid);
      if (resid < eps / 10.0) {
        if (finish(x_cur)) return out;
        break;  // verification disagreed; fall through to rescue
      }
      // Stalled residual: hand over to the rescue stage instead of burning
      // the whole projection budget.
      const size_t lag = 12;
      if (hist.size() > lag &&
          resid > 0.995 * hist[hist.size() - 1 - lag]) {
        break;
      }
    }
  }

  // Stage 2: Newton max-margin rescue for boundary instances.
  if (cfg.rescue) {
    const detail::RescueResult rr = detail::newton_max_margin(
        w, cfg.rescue_outer, cfg.rescue_newton, cfg.parallel);
    out.report.best_margin = rr.margin * w.sigma;
    if (rr.margin * w.sigma >= -cfg.verify_tol && finish(rr.x)) {
      return out;
    }
  } else {
    out.report.best_margin = -last_residual * w.sigma;
  }

  out.feasible = false;
  out.report.detail =
      "infeasible within budget (" + std::to_string(out.iterations) +
      " projection iterations; best margin " +
      std::to_string(out.report.best_margin) + ")";
  return out;
}

VerificationReport verify(const SynthesisCertificate& cert,
                          const PrincipalProblem& problem,
                          double verify_tol) {
  problem.check();
  const int N = static_cast<int>(problem.models.size());
  const BlockPartition part = problem.partition();
  const Dynamics dyn = Dynamics::from(problem);

  VerificationReport rep;
  rep.worst = std::numeric_limits<double>::infinity();

  auto stage_or_pair = [&](int i, int j, int k, int s) -> const SymMatrix& {
    // s = 0 means P_ij; s in 1..tau-1 the stage matrix; s = tau means P_jk.
    if (s == 0) return cert.pair(i, j);
    if (s == cert.tau) return cert.pair(j, k);
    auto it = cert.P_stage.find(
        {std::min(i, j), std::max(i, j), k, s});
    if (it == cert.P_stage.end()) {
      throw BadPartition("verify: missing stage matrix");
    }
    return it->second;
  };

  std::set<std::array<int, 5>> seen;
  for (int i = 1; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) {
      for (int k = 1; k <= N; ++k) {
        if (i != j && j == k) continue;
        const PartitionedHessian Hbar(
            SymMatrix(0.5 * (problem.models[i - 1].matrix.mat() +
                             problem.models[j - 1].matrix.mat())),
            part, "avg");
        for (int s = 0; s < cert.tau; ++s) {
          // Terminal targets differ between (i,j,k) and (j,i,k); interior
          // chain constraints coincide. Mirror assemble's dedupe keys.
          int tgt_id;
          if (s == cert.tau - 1) {
            tgt_id = -(std::min(j, k) * (N + 1) + std::max(j, k));
          } else {
            tgt_id = s + 1;
          }
          const std::array<int, 5> key{std::min(i, j), std::max(i, j), k, s,
                                       tgt_id};
          if (!seen.insert(key).second) continue;

          const SymMatrix& src = stage_or_pair(i, j, k, s);
          const SymMatrix& tgt = stage_or_pair(i, j, k, s + 1);
          const SymMatrix g = g_operator(src, cert.gains[k - 1].K, Hbar, dyn);
          Eigen::MatrixXd c =
              Eigen::MatrixXd::Zero(part.n_z + part.n_d, part.n_z + part.n_d);
          c.topLeftCorner(part.n_z, part.n_z) = tgt.mat();
          c -= g.mat();
          ConstraintMargin cm;
          cm.i = i;
          cm.j = j;
          cm.k = k;
          cm.s = s + 1;
          cm.min_eig = min_eigenvalue(SymMatrix(c));
          rep.worst = std::min(rep.worst, cm.min_eig);
          rep.constraints.push_back(cm);
        }
      }
    }
  }
  for (const auto& p : cert.P) {
    const double me = min_eigenvalue(p);
    rep.pair_psd_margins.push_back(me);
    rep.worst = std::min(rep.worst, me);
  }
  rep.pass = rep.worst >= -verify_tol;
  return rep;
}

namespace {

struct PipelineParts {
  PrincipalProblem problem;
  std::vector<GainMatrix> gains;
  std::string fail_detail;
  bool ok = false;
};

PipelineParts reduce_and_gains(const SweepTarget& target, double gamma) {
  PipelineParts parts;
  if (std::holds_alternative<StateFeedbackSpec>(target)) {
    StateFeedbackSpec spec = std::get<StateFeedbackSpec>(target);
    spec.gamma = gamma;
    parts.problem = state_feedback_reduce(spec);
  } else {
    OutputFeedbackSpec spec = std::get<OutputFeedbackSpec>(target);
    spec.gamma = gamma;
    OutputReduceOutcome ro = output_feedback_reduce(spec);
    if (ro.status != ReduceStatus::Ok) {
      parts.fail_detail = "reduction failed: " + ro.detail;
      return parts;
    }
    parts.problem = std::move(ro.reduction->problem);
  }
  const Dynamics dyn = Dynamics::from(parts.problem);
  for (const auto& model : parts.problem.models) {
    const GameSolution gs = game_riccati(model, dyn);
    if (!gs.converged) {
      parts.fail_detail = "per-model game diverged for " + model.label;
      return parts;
    }
    parts.gains.push_back(gs.K_star);
  }
  parts.ok = true;
  return parts;
}

}  // namespace

SynthOutcome synthesize(const PrincipalProblem& problem, double gamma,
                        int tau, const SolveConfig& cfg) {
  SynthOutcome out;
  const Dynamics dyn = Dynamics::from(problem);
  std::vector<GainMatrix> gains;
  for (const auto& model : problem.models) {
    const GameSolution gs = game_riccati(model, dyn);
    if (!gs.converged) {
      out.detail = "per-model game diverged for " + model.label;
      return out;
    }
    gains.push_back(gs.K_star);
  }
  const LmiSystem sys = assemble(problem, gains, tau);
  SolveOutcome so = solve_feasibility(sys, problem, gains, gamma, cfg);
  if (!so.feasible) {
    out.detail = so.report.detail;
    return out;
  }
  out.feasible = true;
  out.cert = std::move(so.cert);
  return out;
}

SynthOutcome synthesize(const SweepTarget& target, double gamma, int tau,
                        const SolveConfig& cfg) {
  SynthOutcome out;
  PipelineParts parts = reduce_and_gains(target, gamma);
  if (!parts.ok) {
    out.detail = parts.fail_detail;
    return out;
  }
  const LmiSystem sys = assemble(parts.problem, parts.gains, tau);
  SolveOutcome so =
      solve_feasibility(sys, parts.problem, parts.gains, gamma, cfg);
  if (!so.feasible) {
    out.detail = so.report.detail;
    return out;
  }
  out.feasible = true;
  out.cert = std::move(so.cert);
  return out;
}

GammaSearchResult gamma_bisect(const SweepTarget& target, int tau, double lo,
                               double hi, double resolution,
                               const SolveConfig& cfg) {
  if (!(lo < hi) || resolution <= 0) {
    throw BadPartition("gamma_bisect: need lo < hi and resolution > 0");
  }
  GammaSearchResult res;
  auto probe = [&](double g) {
    SynthOutcome so = synthesize(target, g, tau, cfg);
    res.probes.push_back(GammaProbe{g, so.feasible, so.detail});
    return so;
  };

  SynthOutcome top = probe(hi);
  if (!top.feasible) {
    return res;  // no feasible gamma found in [lo, hi]
  }
  res.found = true;
  res.gamma = hi;
  res.cert = std::move(top.cert);

  double flo = lo, fhi = hi;
  while (fhi - flo > resolution) {
    const double mid = 0.5 * (flo + fhi);
    SynthOutcome so = probe(mid);
    if (so.feasible) {
      fhi = mid;
      res.gamma = mid;
      res.cert = std::move(so.cert);
    } else {
      flo = mid;
    }
  }
  return res;
}

PeriodSearchResult period_search(const SweepTarget& target, double gamma,
                                 int tau_max, const SolveConfig& cfg) {
  if (tau_max < 1) throw BadPartition("period_search: tau_max >= 1 required");
  PeriodSearchResult res;
  for (int tau = 1; tau <= tau_max; ++tau) {
    SynthOutcome so = synthesize(target, gamma, tau, cfg);
    res.probes.push_back(PeriodProbe{tau, so.feasible, so.detail});
    if (so.feasible) {
      res.found = true;
      res.tau = tau;
      res.cert = std::move(so.cert);
      return res;
    }
  }
  return res;
}

double value_bound(const SynthesisCertificate& cert, const Eigen::VectorXd& z0,
                   const std::vector<double>& info_r) {
  if (static_cast<int>(info_r.size()) != cert.n_models) {
    throw BadPartition("value_bound: r vector does not match model count");
  }
  double best = -std::numeric_limits<double>::infinity();
  int idx = 0;
  for (int i = 1; i <= cert.n_models; ++i) {
    for (int j = i; j <= cert.n_models; ++j) {
      const double quad = z0.dot(cert.P[idx].mat() * z0);
      best = std::max(best,
                      quad + 0.5 * (info_r[i - 1] + info_r[j - 1]));
      ++idx;
    }
  }
  for (const auto& [key, mat] : cert.P_stage) {
    const double quad = z0.dot(mat.mat() * z0);
    best = std::max(best,
                    quad + 0.5 * (info_r[key[0] - 1] + info_r[key[1] - 1]));
  }
  return best;
}

}  // namespace mac
