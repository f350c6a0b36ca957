#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace obsforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when a caller breaks a documented precondition (dimensions, ranges, missing fields).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure cannot produce a meaningful result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace linalg {

inline Matrix sym(const Matrix& m) { return m + m.transpose(); }

inline Matrix symmetric_part(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Largest eigenvalue of the symmetric part of a square matrix.
inline double lambda_max(const Matrix& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline double lambda_min(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  // For wide or tall matrices the Gram matrix of the smaller side is cheapest.
  const Matrix gram = m.rows() <= m.cols() ? Matrix(m * m.transpose()) : Matrix(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues()(es.eigenvalues().size() - 1)));
}

/// Largest real part among the eigenvalues of a square matrix (spectral abscissa).
inline double spectral_abscissa(const Matrix& m) {
  if (m.size() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace linalg
}  // namespace obsforge
