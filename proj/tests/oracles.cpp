#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracles {

std::vector<double> charpoly_eigs(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  // Faddeev-LeVerrier: M_1 = A, c_1 = -tr(M_1),
  // M_{k+1} = A (M_k + c_k I), c_{k+1} = -tr(M_{k+1})/(k+1).
  std::vector<double> c(n + 1, 0.0);
  c[0] = 1.0;
  Eigen::MatrixXd Mk = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k <= n; ++k) {
    Mk = a * (Mk + c[k - 1] * Eigen::MatrixXd::Identity(n, n));
    c[k] = -Mk.trace() / k;
  }
  // Companion matrix of p(x) = x^n + c1 x^{n-1} + ... + cn.
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) comp(i, n - 1) = -c[n - i];
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp);
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(es.eigenvalues()(i).real());
  std::sort(out.begin(), out.end());
  return out;
}

double lu_det(const Eigen::MatrixXd& a) {
  return Eigen::PartialPivLU<Eigen::MatrixXd>(a).determinant();
}

double scalar_game_step(double P, double a, double b, double g, double q,
                        double r, double gamma) {
  // M over (z, u, d) = [a b g]' P [a b g] + diag(q, r, -gamma^2)
  const double mzz = a * a * P + q;
  const double mzu = a * b * P;
  const double mzd = a * g * P;
  const double muu = b * b * P + r;
  const double mud = b * g * P;
  const double mdd = g * g * P - gamma * gamma;
  // eliminate d (requires mdd < 0), then u
  const double nzz = mzz - mzd * mzd / mdd;
  const double nzu = mzu - mzd * mud / mdd;
  const double nuu = muu - mud * mud / mdd;
  return nzz - nzu * nzu / nuu;
}

double scalar_game_bisect(double a, double b, double g, double q, double r,
                          double gamma, double hi, double abs_tol) {
  auto phi = [&](double P) {
    return scalar_game_step(P, a, b, g, q, r, gamma) - P;
  };
  double lo = 0.0;
  // phi(0) = q >= 0; find hi with phi(hi) < 0 (grow if needed).
  double h = hi;
  for (int grow = 0; grow < 60 && phi(h) >= 0.0; ++grow) h *= 2.0;
  for (int it = 0; it < 200 && h - lo > abs_tol; ++it) {
    const double mid = 0.5 * (lo + h);
    if (phi(mid) >= 0.0) {
      lo = mid;
    } else {
      h = mid;
    }
  }
  return 0.5 * (lo + h);
}

Eigen::MatrixXd lqr_iterate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            int iters) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(A.rows(), A.cols());
  for (int k = 0; k < iters; ++k) {
    const Eigen::MatrixXd BtPB = B.transpose() * P * B + R;
    const Eigen::MatrixXd K = BtPB.ldlt().solve(B.transpose() * P * A);
    P = Q + A.transpose() * P * A -
        A.transpose() * P * B * K;
    P = 0.5 * (P + P.transpose()).eval();
  }
  return P;
}

double sampled_sup_over_d(const Eigen::MatrixXd& M, const Eigen::VectorXd& z,
                          double radius, int n_samples, std::mt19937_64& rng) {
  const int nz = static_cast<int>(z.size());
  const int nd = static_cast<int>(M.rows()) - nz;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd v(nz + nd);
  v.head(nz) = z;
  for (int s = 0; s < n_samples; ++s) {
    Eigen::VectorXd d(nd);
    for (int i = 0; i < nd; ++i) d(i) = gauss(rng);
    const double scale = radius * std::pow(unif(rng), 1.0 / nd) /
                         std::max(1e-300, d.norm());
    v.tail(nd) = scale * d;
    best = std::max(best, v.dot(M * v));
  }
  return best;
}

Eigen::MatrixXd random_sym(int n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  }
  return 0.5 * (a + a.transpose());
}

Eigen::MatrixXd random_psd(int n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::MatrixXd f(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) f(i, j) = gauss(rng);
  }
  return f * f.transpose();
}

double spectral_radius(const Eigen::MatrixXd& a) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(a).eigenvalues().cwiseAbs()
      .maxCoeff();
}

}  // namespace oracles
