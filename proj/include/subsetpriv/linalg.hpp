#pragma once

#include <Eigen/Dense>

namespace subsetpriv {

inline constexpr double kPinvCutoff = 1e-10;

/// Moore-Penrose inverse of a symmetric matrix; eigenvalues below
/// cutoff * max|eigenvalue| are treated as zero.
inline Eigen::MatrixXd symmetric_pinv(const Eigen::MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double scale = values.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::abs(values[i]) > cutoff * scale) inv[i] = 1.0 / values[i];
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

/// Ratio of the smallest to the largest eigenvalue of a symmetric PSD matrix
/// (0 for the zero matrix).
inline double relative_min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return 0.0;
  return eig.eigenvalues().minCoeff() / top;
}

struct SpdSolve {
  Eigen::MatrixXd solution;
  bool used_pinv = false;
};

/// Solves m x = rhs for symmetric m: Cholesky when m is numerically
/// positive definite, pseudo-inverse otherwise.
inline SpdSolve solve_spd(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs,
                          double cutoff = kPinvCutoff) {
  if (relative_min_eigenvalue(m) > cutoff) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return {llt.solve(rhs), false};
  }
  return {symmetric_pinv(m, cutoff) * rhs, true};
}

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, bool* used_pinv = nullptr) {
  SpdSolve s = solve_spd(m, Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  if (used_pinv != nullptr) *used_pinv = s.used_pinv;
  // Symmetrize away round-off.
  return 0.5 * (s.solution + s.solution.transpose());
}

}  // namespace subsetpriv
