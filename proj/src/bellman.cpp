#include "mac/bellman.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mac {

namespace {

Eigen::MatrixXd stack_selector(const Eigen::MatrixXd& K, int n_z, int n_u,
                               int n_d) {
  // L = [I 0; -K 0; 0 I] mapping (z, d) -> (z, u, d) under u = -K z.
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_z + n_u + n_d, n_z + n_d);
  L.topLeftCorner(n_z, n_z).setIdentity();
  L.block(n_z, 0, n_u, n_z) = -K;
  L.bottomRightCorner(n_d, n_d).setIdentity();
  return L;
}

}  // namespace

SymMatrix g_operator(const SymMatrix& P, const Eigen::MatrixXd& K,
                     const PartitionedHessian& H, const Dynamics& dyn) {
  const BlockPartition& p = H.partition;
  if (P.dim() != p.n_z || K.rows() != p.n_u || K.cols() != p.n_z) {
    throw BadPartition("g_operator: dimension mismatch");
  }
  Eigen::MatrixXd T(p.n_z, p.n_z + p.n_d);
  T << dyn.A_hat - dyn.B_hat * K, dyn.G_hat;
  const Eigen::MatrixXd L = stack_selector(K, p.n_z, p.n_u, p.n_d);
  return SymMatrix(T.transpose() * P.mat() * T +
                   L.transpose() * H.matrix.mat() * L);
}

SupResult sup_over_d(const SymMatrix& M, int n_d, double margin_tol) {
  const int n = M.dim();
  if (n_d < 1 || n_d >= n) {
    throw BadPartition("sup_over_d: bad d-block size");
  }
  if (margin_tol < 0) margin_tol = 1e-9 * std::max(1.0, M.frobenius());
  const int h = n - n_d;
  const SymMatrix dd(M.mat().bottomRightCorner(n_d, n_d));
  if (max_eigenvalue(dd) >= -margin_tol) {
    throw UnboundedSup("sup_over_d: dd block not negative definite");
  }
  const Eigen::MatrixXd Mzd = M.mat().topRightCorner(h, n_d);
  const Eigen::MatrixXd dd_inv = dd.mat().ldlt().solve(
      Eigen::MatrixXd::Identity(n_d, n_d));
  SupResult out;
  out.P_next = SymMatrix(M.mat().topLeftCorner(h, h) -
                         Mzd * dd_inv * Mzd.transpose());
  out.d_feedback = -dd_inv * Mzd.transpose();
  return out;
}

SymMatrix riccati_step(const SymMatrix& P, const Eigen::MatrixXd& K,
                       const PartitionedHessian& H, const Dynamics& dyn) {
  return sup_over_d(g_operator(P, K, H, dyn), H.partition.n_d).P_next;
}

GameSolution game_riccati(const PartitionedHessian& H, const Dynamics& dyn,
                          const GameConfig& cfg) {
  const BlockPartition& p = H.partition;
  Eigen::MatrixXd T(p.n_z, p.dim());
  T << dyn.A_hat, dyn.B_hat, dyn.G_hat;

  GameSolution sol;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p.n_z, p.n_z);

  for (int it = 0; it < cfg.max_iter; ++it) {
    sol.iterations = it + 1;
    const SymMatrix M(T.transpose() * P * T + H.matrix.mat());
    const double m_scale = std::max(1.0, M.frobenius());

    const SymMatrix dd(M.mat().bottomRightCorner(p.n_d, p.n_d));
    if (max_eigenvalue(dd) >= -cfg.margin_tol * m_scale) {
      sol.status = GameStatus::UnboundedSup;
      return sol;
    }
    const int h = p.n_z + p.n_u;
    const Eigen::MatrixXd Mzd = M.mat().topRightCorner(h, p.n_d);
    const Eigen::MatrixXd dd_inv =
        dd.mat().ldlt().solve(Eigen::MatrixXd::Identity(p.n_d, p.n_d));
    const SymMatrix N(M.mat().topLeftCorner(h, h) -
                      Mzd * dd_inv * Mzd.transpose());

    const SymMatrix uu(N.mat().bottomRightCorner(p.n_u, p.n_u));
    if (min_eigenvalue(uu) <= cfg.margin_tol * std::max(1.0, N.frobenius())) {
      sol.status = GameStatus::DegenerateMin;
      return sol;
    }
    const Eigen::MatrixXd Nzu = N.mat().topRightCorner(p.n_z, p.n_u);
    const Eigen::MatrixXd uu_inv =
        uu.mat().ldlt().solve(Eigen::MatrixXd::Identity(p.n_u, p.n_u));
    const Eigen::MatrixXd P_next_raw =
        N.mat().topLeftCorner(p.n_z, p.n_z) - Nzu * uu_inv * Nzu.transpose();
    const SymMatrix P_next(P_next_raw);

    if (P_next.frobenius() > cfg.blowup) {
      sol.status = GameStatus::NotConverged;
      return sol;
    }
    const double incr = (P_next.mat() - P).norm();
    if (incr <= cfg.tol * std::max(1.0, P.norm())) {
      sol.P_star = P_next;
      // u-minimizer of the d-eliminated form: u = -(N^{uu})^{-1} N^{uz} z.
      sol.K_star = GainMatrix{uu_inv * Nzu.transpose(), H.label};
      // d-maximizer with u = -K z substituted.
      const Eigen::MatrixXd Mdz =
          M.mat().bottomLeftCorner(p.n_d, p.n_z);
      const Eigen::MatrixXd Mdu =
          M.mat().block(p.n_z + p.n_u, p.n_z, p.n_d, p.n_u);
      sol.d_gain = -dd_inv * (Mdz - Mdu * sol.K_star.K);
      sol.converged = true;
      sol.status = GameStatus::Converged;
      return sol;
    }
    P = P_next.mat();
  }
  sol.status = GameStatus::NotConverged;
  return sol;
}

namespace {

struct DpContext {
  double a, b, g;  // scalar dynamics
  std::vector<const PartitionedHessian*> models;
  const std::vector<double>* u_grid;
  const std::vector<double>* d_grid;
};

double dp_value(const DpContext& ctx, double z, const std::vector<double>& r,
                int depth) {
  if (depth == 0) {
    return *std::max_element(r.begin(), r.end());
  }
  double best_u = std::numeric_limits<double>::infinity();
  std::vector<double> r_next(r.size());
  for (double u : *ctx.u_grid) {
    double worst_d = -std::numeric_limits<double>::infinity();
    for (double d : *ctx.d_grid) {
      for (size_t m = 0; m < r.size(); ++m) {
        const Eigen::MatrixXd& Hm = ctx.models[m]->matrix.mat();
        const double cost = Hm(0, 0) * z * z + Hm(1, 1) * u * u +
                            Hm(2, 2) * d * d + 2.0 * Hm(0, 1) * z * u +
                            2.0 * Hm(0, 2) * z * d + 2.0 * Hm(1, 2) * u * d;
        r_next[m] = r[m] + cost;
      }
      const double z_next = ctx.a * z + ctx.b * u + ctx.g * d;
      worst_d = std::max(worst_d, dp_value(ctx, z_next, r_next, depth - 1));
    }
    best_u = std::min(best_u, worst_d);
  }
  return best_u;
}

}  // namespace

double dp_oracle(const PrincipalProblem& problem, int horizon,
                 const std::vector<double>& u_grid,
                 const std::vector<double>& d_grid) {
  const BlockPartition p = problem.partition();
  if (p.n_z != 1 || p.n_u != 1 || p.n_d != 1) {
    throw Unsupported("dp_oracle supports scalar (z, u, d) problems only");
  }
  if (horizon < 0 || horizon > 8) {
    throw Unsupported("dp_oracle horizon must be in [0, 8]");
  }
  if (u_grid.empty() || d_grid.empty()) {
    throw Unsupported("dp_oracle requires nonempty grids");
  }
  DpContext ctx;
  ctx.a = problem.A_hat(0, 0);
  ctx.b = problem.B_hat(0, 0);
  ctx.g = problem.G_hat(0, 0);
  for (const auto& m : problem.models) ctx.models.push_back(&m);
  ctx.u_grid = &u_grid;
  ctx.d_grid = &d_grid;

  const double z0 = problem.z0(0);
  const std::vector<double> r0(problem.models.size(), 0.0);
  if (horizon == 0) {
    return 0.0;
  }

  // First level unrolled so the subtree evaluations can run in parallel.
  // min/max reductions are order-independent, so the result is bitwise
  // deterministic regardless of thread count.
  const int nu = static_cast<int>(u_grid.size());
  const int nd = static_cast<int>(d_grid.size());
  std::vector<double> worst_per_u(nu,
                                  -std::numeric_limits<double>::infinity());
#pragma omp parallel for collapse(2) schedule(dynamic)
  for (int ui = 0; ui < nu; ++ui) {
    for (int di = 0; di < nd; ++di) {
      const double u = u_grid[ui];
      const double d = d_grid[di];
      std::vector<double> r_next(r0.size());
      for (size_t m = 0; m < r0.size(); ++m) {
        const Eigen::MatrixXd& Hm = ctx.models[m]->matrix.mat();
        r_next[m] = Hm(0, 0) * z0 * z0 + Hm(1, 1) * u * u + Hm(2, 2) * d * d +
                    2.0 * Hm(0, 1) * z0 * u + 2.0 * Hm(0, 2) * z0 * d +
                    2.0 * Hm(1, 2) * u * d;
      }
      const double z_next = ctx.a * z0 + ctx.b * u + ctx.g * d;
      const double v = dp_value(ctx, z_next, r_next, horizon - 1);
#pragma omp critical
      worst_per_u[ui] = std::max(worst_per_u[ui], v);
    }
  }
  return *std::min_element(worst_per_u.begin(), worst_per_u.end());
}

}  // namespace mac
