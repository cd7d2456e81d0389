#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "iod/errors.hpp"

namespace iod {

/// Largest admissible condition number of the (equilibrated) normal matrix.
inline constexpr double kMaxNormalCondition = 1e12;

struct LeastSquaresSolution {
  Eigen::VectorXd solution;
  /// (A^T W A)^{-1}
  Eigen::MatrixXd covariance;
  /// Condition number of the column-equilibrated normal matrix.
  double condition = 0.0;
  /// ||A^T W (b - A y)|| / ||A^T W b||
  double normal_residual = 0.0;
};

/// Minimizes ||bw - Aw y||^2 for an already whitened system.
///
/// The columns of A in this problem mix meters, m/s and c-scaled units, so
/// they are scaled to unit norm before the SVD and the solution is unscaled
/// afterwards. Never forms an explicit inverse of A^T A.
inline LeastSquaresSolution solve_whitened(const Eigen::MatrixXd& aw, const Eigen::VectorXd& bw,
                                           double max_condition = kMaxNormalCondition) {
  const Eigen::Index n = aw.cols();
  if (aw.rows() < n) {
    throw EstimationError("least squares: " + std::to_string(aw.rows()) + " equations for " +
                          std::to_string(n) + " unknowns");
  }
  if (!aw.allFinite() || !bw.allFinite()) {
    throw EstimationError("least squares: non-finite system entries");
  }
  Eigen::VectorXd scale = aw.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(scale[k] > 0.0)) {
      throw EstimationError("least squares: column " + std::to_string(k) + " is identically zero");
    }
  }
  const Eigen::MatrixXd equilibrated = aw * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(equilibrated, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double ratio = sv[n - 1] > 0.0 ? sv[0] / sv[n - 1] : INFINITY;
  LeastSquaresSolution out;
  out.condition = ratio * ratio;
  if (!(out.condition <= max_condition)) {
    throw EstimationError("least squares: normal matrix ill-conditioned (cond = " +
                          std::to_string(out.condition) + ")");
  }
  out.solution = svd.solve(bw).cwiseQuotient(scale);
  const Eigen::MatrixXd vs =
      scale.cwiseInverse().asDiagonal() * svd.matrixV() * sv.cwiseInverse().asDiagonal();
  out.covariance = vs * vs.transpose();

  const Eigen::VectorXd gradient = aw.transpose() * (bw - aw * out.solution);
  const double reference = (aw.transpose() * bw).norm();
  out.normal_residual = reference > 0.0 ? gradient.norm() / reference : gradient.norm();
  return out;
}

/// y = (A^T W A)^{-1} A^T W b with W symmetric positive definite.
inline LeastSquaresSolution wls_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                      const Eigen::MatrixXd& w,
                                      double max_condition = kMaxNormalCondition) {
  Eigen::LLT<Eigen::MatrixXd> chol(w);
  if (chol.info() != Eigen::Success) {
    throw EstimationError("least squares: weight matrix is not positive definite");
  }
  // W = L L^T, so (b - Ay)^T W (b - Ay) = ||L^T (b - Ay)||^2
  const Eigen::MatrixXd lt = chol.matrixU();
  return solve_whitened(lt * a, lt * b, max_condition);
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace iod
