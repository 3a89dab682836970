#pragma once

#include <Eigen/Dense>

#include "mac/errors.hpp"

namespace mac {

// Dense symmetric matrix with symmetry enforced on construction. The stored
// matrix is (A + A^T)/2, which makes entries(i,j) == entries(j,i) bitwise.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::MatrixXd& a);

  static SymMatrix Zero(int dim);
  static SymMatrix Identity(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  double frobenius() const { return m_.norm(); }

  SymMatrix top_left(int k) const { return SymMatrix(m_.topLeftCorner(k, k)); }

 private:
  Eigen::MatrixXd m_;
};

struct EigenDecomposition {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, A = V diag(values) V^T
};

enum class Definiteness { PD, PSD, ND, NSD, INDEF };

// Scale-aware default tolerance used throughout: 1e-8 * max(1, ||A||_F).
double default_tol(const SymMatrix& a);

EigenDecomposition eig_sym(const SymMatrix& a);

double min_eigenvalue(const SymMatrix& a);
double max_eigenvalue(const SymMatrix& a);

Definiteness definiteness(const SymMatrix& a, double tol);

// Schur complement A / A22 eliminating the trailing block of size
// dim - head_dim: returns A11 - A12 A22^{-1} A21. The eliminated block must
// be invertible: min |eigenvalue| must exceed tol (default scale-aware).
SymMatrix schur_complement(const SymMatrix& a, int head_dim, double tol = -1.0);

// Eigenvalue-clipped nearest PSD matrix in Frobenius norm.
SymMatrix project_psd(const SymMatrix& a);

}  // namespace mac
