#include "mac/symmat.hpp"

#include <algorithm>
#include <cmath>

namespace mac {

SymMatrix::SymMatrix(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw BadPartition("SymMatrix requires a square matrix of dim >= 1");
  }
  if (!a.allFinite()) {
    throw NumericalFailure("SymMatrix entries must be finite");
  }
  m_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::Zero(int dim) {
  return SymMatrix(Eigen::MatrixXd::Zero(dim, dim));
}

SymMatrix SymMatrix::Identity(int dim) {
  return SymMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

double default_tol(const SymMatrix& a) {
  return 1e-8 * std::max(1.0, a.frobenius());
}

EigenDecomposition eig_sym(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.mat());
  if (es.info() != Eigen::Success) {
    throw NumericalFailure("eig_sym: eigendecomposition did not converge");
  }
  return EigenDecomposition{es.eigenvalues(), es.eigenvectors()};
}

double min_eigenvalue(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.mat(),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalFailure("min_eigenvalue: eigendecomposition failed");
  }
  return es.eigenvalues()(0);
}

double max_eigenvalue(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.mat(),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericalFailure("max_eigenvalue: eigendecomposition failed");
  }
  return es.eigenvalues()(a.dim() - 1);
}

Definiteness definiteness(const SymMatrix& a, double tol) {
  const EigenDecomposition ed = eig_sym(a);
  const double lo = ed.values(0);
  const double hi = ed.values(a.dim() - 1);
  if (lo > tol) return Definiteness::PD;
  if (hi < -tol) return Definiteness::ND;
  if (lo >= -tol) return Definiteness::PSD;
  if (hi <= tol) return Definiteness::NSD;
  return Definiteness::INDEF;
}

SymMatrix schur_complement(const SymMatrix& a, int head_dim, double tol) {
  const int n = a.dim();
  if (head_dim < 0 || head_dim >= n) {
    throw BadPartition("schur_complement: head_dim out of range");
  }
  const int k = n - head_dim;
  const SymMatrix tail(a.mat().bottomRightCorner(k, k));
  if (tol < 0) tol = default_tol(a);
  const EigenDecomposition ed = eig_sym(tail);
  if (ed.values.cwiseAbs().minCoeff() <= tol) {
    throw SingularBlock("schur_complement: eliminated block is singular");
  }
  // Invert through the eigendecomposition so the singularity test and the
  // inverse share one factorization.
  const Eigen::MatrixXd tail_inv =
      ed.vectors * ed.values.cwiseInverse().asDiagonal() *
      ed.vectors.transpose();
  const Eigen::MatrixXd a11 = a.mat().topLeftCorner(head_dim, head_dim);
  const Eigen::MatrixXd a12 = a.mat().topRightCorner(head_dim, k);
  return SymMatrix(a11 - a12 * tail_inv * a12.transpose());
}

SymMatrix project_psd(const SymMatrix& a) {
  const EigenDecomposition ed = eig_sym(a);
  const Eigen::VectorXd clipped = ed.values.cwiseMax(0.0);
  return SymMatrix(ed.vectors * clipped.asDiagonal() * ed.vectors.transpose());
}

}  // namespace mac
