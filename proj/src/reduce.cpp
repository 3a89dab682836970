#include "mac/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mac {

namespace {

void require_unique_labels(const std::vector<std::string>& labels) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw BadPartition("duplicate model label " + l);
    }
  }
}

double sigma_min(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().minCoeff();
}

double sigma_max(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().maxCoeff();
}

}  // namespace

void StateFeedbackSpec::check() const {
  if (models.empty()) throw BadPartition("state feedback: no models");
  const int nx = static_cast<int>(models.front().A.rows());
  const int nu = static_cast<int>(models.front().B.cols());
  for (const auto& m : models) {
    if (m.A.rows() != nx || m.A.cols() != nx || m.B.rows() != nx ||
        m.B.cols() != nu) {
      throw BadPartition("state feedback: model dims inconsistent");
    }
  }
  std::vector<std::string> labels;
  for (const auto& m : models) labels.push_back(m.label);
  require_unique_labels(labels);
  if (Q.dim() != nx || R.dim() != nu || x0.size() != nx || gamma <= 0.0) {
    throw BadPartition("state feedback: Q/R/x0/gamma inconsistent");
  }
  if (definiteness(Q, default_tol(Q)) != Definiteness::PD ||
      definiteness(R, default_tol(R)) != Definiteness::PD) {
    throw BadPartition("state feedback: Q and R must be positive definite");
  }
}

PrincipalProblem state_feedback_reduce(const StateFeedbackSpec& spec) {
  spec.check();
  const int nx = static_cast<int>(spec.x0.size());
  const int nu = spec.R.dim();
  const BlockPartition part{nx, nu, nx};

  PrincipalProblem p;
  p.A_hat = Eigen::MatrixXd::Zero(nx, nx);
  p.B_hat = Eigen::MatrixXd::Zero(nx, nu);
  p.G_hat = Eigen::MatrixXd::Identity(nx, nx);
  p.z0 = spec.x0;

  const double g2 = spec.gamma * spec.gamma;
  for (const auto& m : spec.models) {
    Eigen::MatrixXd V(part.dim(), nx);
    V << -m.A.transpose(), -m.B.transpose(), Eigen::MatrixXd::Identity(nx, nx);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(part.dim(), part.dim());
    H.topLeftCorner(nx, nx) = spec.Q.mat();
    H.block(nx, nx, nu, nu) = spec.R.mat();
    H -= g2 * V * V.transpose();
    PartitionedHessian ph(SymMatrix(H), part, m.label);
    if (!validate_hessian(ph).pass()) {
      throw ReductionInvalid("state_feedback_reduce: H_M failed validation "
                             "for model " + m.label);
    }
    p.models.push_back(std::move(ph));
  }
  p.check();
  return p;
}

void OutputFeedbackSpec::check() const {
  if (models.empty()) throw BadPartition("output feedback: no models");
  const auto& f = models.front();
  const int nx = static_cast<int>(f.A.rows());
  const int nu = static_cast<int>(f.B.cols());
  const int ny = static_cast<int>(f.C.rows());
  for (const auto& m : models) {
    if (m.A.rows() != nx || m.A.cols() != nx || m.B.rows() != nx ||
        m.B.cols() != nu || m.G.rows() != nx || m.C.rows() != ny ||
        m.C.cols() != nx || m.D.rows() != ny) {
      throw BadPartition("output feedback: model dims inconsistent");
    }
  }
  std::vector<std::string> labels;
  for (const auto& m : models) labels.push_back(m.label);
  require_unique_labels(labels);
  if (Q.dim() != nx || R.dim() != nu || gamma <= 0.0) {
    throw BadPartition("output feedback: Q/R/gamma inconsistent");
  }
  if (definiteness(Q, default_tol(Q)) != Definiteness::PD ||
      definiteness(R, default_tol(R)) != Definiteness::PD) {
    throw BadPartition("output feedback: Q and R must be positive definite");
  }
  for (const auto& m : models) {
    if (!check_assumptions(m, Q).pass()) {
      throw BadPartition("output feedback: rank assumptions fail for model " +
                         m.label);
    }
  }
}

AssumptionReport check_assumptions(const OutputFeedbackModel& m,
                                   const SymMatrix& Q) {
  AssumptionReport rep;
  const int nx = static_cast<int>(m.A.rows());

  Eigen::MatrixXd ag(nx, m.A.cols() + m.G.cols());
  ag << m.A, m.G;
  const double ag_thresh = 1e-8 * std::max(1.0, sigma_max(ag));
  // Row rank of [A G]: smallest singular value of the (wide) matrix.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_ag(ag);
  rep.ag_sigma_min = svd_ag.singularValues()(std::min<int>(nx, ag.cols()) - 1);
  rep.ag_full_row_rank = rep.ag_sigma_min > ag_thresh;

  const double d_thresh = 1e-8 * std::max(1.0, sigma_max(m.D));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd_d(m.D);
  const int ny = static_cast<int>(m.D.rows());
  rep.d_sigma_min =
      svd_d.singularValues()(std::min<int>(ny, m.D.cols()) - 1);
  rep.d_full_row_rank = (m.D.cols() >= ny) && rep.d_sigma_min > d_thresh;

  // [A; sqrt(Q)] tall, full column rank. With Q positive definite this is
  // automatic; checked anyway as the validation surface.
  const EigenDecomposition qe = eig_sym(Q);
  const Eigen::MatrixXd sqQ = qe.vectors *
                              qe.values.cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                              qe.vectors.transpose();
  Eigen::MatrixXd aq(2 * nx, nx);
  aq << m.A, sqQ;
  rep.aq_sigma_min = sigma_min(aq);
  rep.aq_full_col_rank = rep.aq_sigma_min > 1e-8 * std::max(1.0, sigma_max(aq));
  return rep;
}

RiccatiOutcome riccati_fixed_point(const OutputFeedbackModel& model,
                                   const SymMatrix& Q, const SymMatrix& R,
                                   double gamma, const RiccatiConfig& cfg) {
  RiccatiOutcome out;
  const int nx = static_cast<int>(model.A.rows());
  const int ny = static_cast<int>(model.C.rows());
  const double g2 = gamma * gamma;

  const Eigen::MatrixXd DDt = model.D * model.D.transpose();
  const Eigen::LDLT<Eigen::MatrixXd> DDt_ldlt(DDt);
  const Eigen::MatrixXd DDt_inv =
      DDt_ldlt.solve(Eigen::MatrixXd::Identity(ny, ny));
  const Eigen::MatrixXd CtDC =
      g2 * model.C.transpose() * DDt_inv * model.C;
  const Eigen::MatrixXd GGt_over_g2 =
      (1.0 / g2) * model.G * model.G.transpose();

  Eigen::MatrixXd S;
  if (cfg.S0.has_value()) {
    S = *cfg.S0;
  } else {
    // One-step image of the recursion from X -> infinity. Falls back to a
    // large multiple of the identity when G G^T is singular.
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(GGt_over_g2);
    if (lu.isInvertible()) {
      S = lu.inverse();
    } else {
      S = 1e6 * std::max(1.0, Q.frobenius()) *
          Eigen::MatrixXd::Identity(nx, nx);
    }
  }

  const double q_scale = std::max(1.0, Q.frobenius());
  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    if (min_eigenvalue(SymMatrix(S - Q.mat())) <= 1e-12 * q_scale) {
      out.status = ReduceStatus::GammaInfeasible;
      out.detail = "S not > Q at iterate " + std::to_string(it);
      return out;
    }
    const Eigen::MatrixXd X = S + CtDC - Q.mat();
    const Eigen::FullPivLU<Eigen::MatrixXd> luX(X);
    if (!luX.isInvertible()) {
      out.status = ReduceStatus::GammaInfeasible;
      out.detail = "X singular at iterate " + std::to_string(it);
      return out;
    }
    const Eigen::MatrixXd Xinv = luX.inverse();
    const Eigen::MatrixXd S_next_inv =
        model.A * Xinv * model.A.transpose() + GGt_over_g2;
    const Eigen::FullPivLU<Eigen::MatrixXd> luS(S_next_inv);
    if (!luS.isInvertible()) {
      out.status = ReduceStatus::GammaInfeasible;
      out.detail = "S update singular at iterate " + std::to_string(it);
      return out;
    }
    Eigen::MatrixXd S_next = luS.inverse();
    S_next = 0.5 * (S_next + S_next.transpose());

    if ((S_next - S).norm() <= cfg.tol * std::max(1.0, S.norm())) {
      S = S_next;
      const Eigen::MatrixXd Xs = S + CtDC - Q.mat();
      const Eigen::MatrixXd Xs_inv =
          Eigen::FullPivLU<Eigen::MatrixXd>(Xs).inverse();
      const Eigen::MatrixXd L = g2 * model.A * Xs_inv *
                                model.C.transpose() * DDt_inv;
      const Eigen::MatrixXd A_obs = model.A * Xs_inv * S;

      if (min_eigenvalue(SymMatrix(S - Q.mat())) <= 0.0) {
        out.status = ReduceStatus::GammaInfeasible;
        out.detail = "fixed point does not satisfy S > Q";
        return out;
      }
      const double rho =
          Eigen::EigenSolver<Eigen::MatrixXd>(A_obs).eigenvalues()
              .cwiseAbs().maxCoeff();
      if (rho >= 1.0 - 1e-9) {
        out.status = ReduceStatus::GammaInfeasible;
        out.detail = "observer matrix not Schur stable (rho = " +
                     std::to_string(rho) + ")";
        return out;
      }

      // Reduced stage-cost Hessian over (xhat, u, y).
      const int nu = static_cast<int>(model.B.cols());
      const Eigen::MatrixXd SmQ_inv =
          Eigen::FullPivLU<Eigen::MatrixXd>(S - Q.mat()).inverse();
      const Eigen::MatrixXd Qyy_inner =
          DDt / g2 + model.C * SmQ_inv * model.C.transpose();
      const Eigen::MatrixXd Qyy =
          -Eigen::FullPivLU<Eigen::MatrixXd>(Qyy_inner).inverse();
      const Eigen::MatrixXd Qxx = S * Xs_inv * S - S;
      const Eigen::MatrixXd Qxy =
          g2 * S * Xs_inv * model.C.transpose() * DDt_inv;

      Eigen::MatrixXd Hq = Eigen::MatrixXd::Zero(nx + nu + ny, nx + nu + ny);
      Hq.topLeftCorner(nx, nx) = Qxx;
      Hq.block(nx, nx, nu, nu) = R.mat();
      Hq.topRightCorner(nx, ny) = Qxy;
      Hq.bottomLeftCorner(ny, nx) = Qxy.transpose();
      Hq.bottomRightCorner(ny, ny) = Qyy;

      out.status = ReduceStatus::Ok;
      out.params = ObserverParams{
          SymMatrix(S), SymMatrix(Xs), L, A_obs,
          PartitionedHessian(SymMatrix(Hq), BlockPartition{nx, nu, ny},
                             model.label)};
      return out;
    }
    S = S_next;
  }
  out.status = ReduceStatus::NotConverged;
  out.detail = "no fixed point within iteration budget";
  return out;
}

OutputReduceOutcome output_feedback_reduce(const OutputFeedbackSpec& spec) {
  spec.check();
  OutputReduceOutcome out;

  std::vector<ObserverParams> observers;
  for (const auto& m : spec.models) {
    RiccatiOutcome ro = riccati_fixed_point(m, spec.Q, spec.R, spec.gamma,
                                            spec.riccati);
    if (ro.status != ReduceStatus::Ok) {
      out.status = ro.status;
      out.detail = "model " + m.label + ": " + ro.detail;
      return out;
    }
    observers.push_back(std::move(*ro.params));
  }

  const int n_models = static_cast<int>(spec.models.size());
  const int nx = static_cast<int>(spec.models.front().A.rows());
  const int nu = spec.R.dim();
  const int ny = static_cast<int>(spec.models.front().C.rows());
  const int nz = n_models * nx;
  const BlockPartition part{nz, nu, ny};

  PrincipalProblem p;
  p.A_hat = Eigen::MatrixXd::Zero(nz, nz);
  p.B_hat = Eigen::MatrixXd::Zero(nz, nu);
  p.G_hat = Eigen::MatrixXd::Zero(nz, ny);
  p.z0 = Eigen::VectorXd::Zero(nz);
  for (int m = 0; m < n_models; ++m) {
    p.A_hat.block(m * nx, m * nx, nx, nx) = observers[m].A_obs;
    p.B_hat.block(m * nx, 0, nx, nu) = spec.models[m].B;
    p.G_hat.block(m * nx, 0, nx, ny) = observers[m].L;
    if (!spec.xhat0.empty()) {
      p.z0.segment(m * nx, nx) = spec.xhat0[m];
    }
  }

  for (int m = 0; m < n_models; ++m) {
    const Eigen::MatrixXd& Hq = observers[m].Q_hat.matrix.mat();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(part.dim(), part.dim());
    H.block(m * nx, m * nx, nx, nx) = Hq.topLeftCorner(nx, nx);
    H.block(m * nx, nz + nu, nx, ny) = Hq.topRightCorner(nx, ny);
    H.block(nz + nu, m * nx, ny, nx) = Hq.bottomLeftCorner(ny, nx);
    H.block(nz, nz, nu, nu) = spec.R.mat();
    H.bottomRightCorner(ny, ny) = Hq.bottomRightCorner(ny, ny);
    PartitionedHessian ph(SymMatrix(H), part, spec.models[m].label);
    if (!validate_hessian(ph).pass()) {
      out.status = ReduceStatus::GammaInfeasible;
      out.detail = "stacked Hessian failed validation for model " +
                   spec.models[m].label;
      return out;
    }
    p.models.push_back(std::move(ph));
  }
  p.check();

  out.status = ReduceStatus::Ok;
  out.reduction = ObserverBankReduction{std::move(observers), std::move(p)};
  return out;
}

}  // namespace mac
