#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance binary. Everything here is
// written independently of the library code it is used to check.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "obsforge/obsforge.hpp"

namespace support {

using obsforge::Index;
using obsforge::Matrix;
using obsforge::Vector;

/// Triple-loop product.
inline Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

/// Detectability from the observability decomposition: the unobservable subspace is the null
/// space of the observability matrix; the pair is detectable iff A restricted to it is Hurwitz.
inline bool detectable_by_decomposition(const Matrix& A, const Matrix& C, double tol = 1e-8) {
  const Index n = A.rows();
  Matrix O(C.rows() * n, n);
  Matrix blk = C;
  for (Index k = 0; k < n; ++k) {
    O.middleRows(k * C.rows(), C.rows()) = blk;
    blk = blk * A;
  }
  Eigen::JacobiSVD<Matrix> svd(O, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double thr = tol * std::max(1.0, s.size() ? s(0) : 0.0);
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i) rank += s(i) > thr;
  if (rank == n) return true;
  const Matrix V = svd.matrixV().rightCols(n - rank);  // orthonormal basis of the unobservable subspace
  const Matrix Auo = V.transpose() * A * V;
  Eigen::EigenSolver<Matrix> es(Auo, false);
  for (Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i).real() >= 0.0) return false;
  return true;
}

struct PlantedPair {
  Matrix A, C;
  bool detectable;
};

/// Random pair in Kalman form A = T [[A11, 0], [A21, A22]] T^-1, C = [C1, 0] T^-1 with the
/// unobservable block A22 given real eigenvalues kept at least 0.2 away from the imaginary axis.
inline PlantedPair planted_pair(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(1, 5);
  const Index n = nd(rng);
  std::uniform_int_distribution<int> ud(0, static_cast<int>(n));
  const Index nu = ud(rng);  // unobservable dimension
  const Index no = n - nu;
  std::uniform_int_distribution<int> yd(1, 2);
  const Index ny = yd(rng);
  std::uniform_real_distribution<double> mag(0.2, 2.0);
  std::bernoulli_distribution coin(0.5);

  Matrix Ak = Matrix::Zero(n, n);
  Ak.topLeftCorner(no, no) = random_matrix(no, no, rng);
  Ak.bottomLeftCorner(nu, no) = random_matrix(nu, no, rng);
  bool unstable = false;
  Matrix D = Matrix::Zero(nu, nu);
  for (Index i = 0; i < nu; ++i) {
    const bool up = coin(rng);
    unstable = unstable || up;
    D(i, i) = (up ? 1.0 : -1.0) * mag(rng);
  }
  if (nu > 0) {
    Matrix S = random_matrix(nu, nu, rng) + 3.0 * Matrix::Identity(nu, nu);
    Ak.bottomRightCorner(nu, nu) = S * D * S.inverse();
  }
  Matrix Ck = Matrix::Zero(ny, n);
  Ck.leftCols(no) = random_matrix(ny, no, rng);
  const Matrix T = random_matrix(n, n, rng) + 3.0 * Matrix::Identity(n, n);
  const Matrix Ti = T.inverse();
  return {T * Ak * Ti, Ck * Ti, !unstable};
}

/// x1' = x2 - x1^3, x2' = -x1 - 0.5 x2, y = x1: A = [[0, 1], [-1, -0.5]], G = [1; 0], H = C = [1 0].
/// C G = 1, so L = G gives N G = 0, and M = [[-j1, 0], [-1 - j2, -0.5]] is Hurwitz for j1 > 0.
inline obsforge::NonlinearSystem cubic_oscillator() {
  Matrix A(2, 2);
  A << 0, 1, -1, -0.5;
  Matrix G(2, 1);
  G << 1, 0;
  Matrix H(1, 2);
  H << 1, 0;
  Vector lo(2), hi(2);
  lo << -2, -2;
  hi << 2, 2;
  return obsforge::NonlinearSystem(A, G, H, Matrix(H), obsforge::polynomial_nonlinearity({0, 0, 0, -1}, 1),
                                   obsforge::StateDomain::box(lo, hi));
}

/// A = -I, y = x_1, f enters x_2 which is also H's output. The disturbance-to-error gain into
/// x_2 is 1/(s + 1) for every observer, so the Lipschitz criterion is feasible iff ell < 1.
inline obsforge::NonlinearSystem hidden_channel(double box = 1.0) {
  Matrix A = -Matrix::Identity(2, 2);
  Matrix G(2, 1);
  G << 0, 1;
  Matrix H(1, 2);
  H << 0, 1;
  Matrix C(1, 2);
  C << 1, 0;
  Vector lo = Vector::Constant(2, -box), hi = Vector::Constant(2, box);
  return obsforge::NonlinearSystem(A, G, H, C, obsforge::linear_nonlinearity(Matrix::Identity(1, 1)),
                                   obsforge::StateDomain::box(lo, hi));
}

/// Linear plant x' = A x, y = x_1 with no nonlinearity.
inline obsforge::NonlinearSystem linear_plant() {
  Matrix A(2, 2);
  A << 0, 1, -2, -3;
  Matrix C(1, 2);
  C << 1, 0;
  Vector lo = Vector::Constant(2, -10), hi = Vector::Constant(2, 10);
  return obsforge::NonlinearSystem(A, Matrix::Zero(2, 1), Matrix(C), C, obsforge::zero_nonlinearity(1, 1),
                                   obsforge::StateDomain::box(lo, hi));
}

/// Gains with the given J and L = 0, K = 0, no certificate.
inline obsforge::ObserverGains plain_gains(const obsforge::NonlinearSystem& sys, const Matrix& J,
                                           const Matrix* L = nullptr) {
  obsforge::ObserverGains g;
  g.J = J;
  g.L = L ? *L : Matrix::Zero(sys.nx(), sys.ny());
  g.K = Matrix::Zero(sys.nh(), sys.ny());
  std::tie(g.M, g.N) = obsforge::observer_matrices(sys.A(), sys.C(), g.J, g.L);
  return g;
}

/// An undetectable system: A has an unstable mode invisible to C, with a nonlinearity attached.
inline obsforge::NonlinearSystem undetectable_system(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> up(0.1, 2.0);
  Matrix A(3, 3);
  // Kalman form: x_3 is unobservable and unstable.
  A << -1, 0.5, 0, 0, -2, 0, random_matrix(1, 1, rng)(0, 0), random_matrix(1, 1, rng)(0, 0), up(rng);
  Matrix C(1, 3);
  C << random_matrix(1, 1, rng)(0, 0) + 2.0, 1, 0;
  Matrix G = random_matrix(3, 1, rng);
  Matrix H = random_matrix(1, 3, rng);
  const Matrix T = random_matrix(3, 3, rng) + 3.0 * Matrix::Identity(3, 3);
  const Matrix Ti = T.inverse();
  Vector lo = Vector::Constant(3, -1), hi = Vector::Constant(3, 1);
  return obsforge::NonlinearSystem(T * A * Ti, T * G, H * Ti, C * Ti,
                                   obsforge::polynomial_nonlinearity({0, 1, 0, -0.3}, 1),
                                   obsforge::StateDomain::box(lo, hi));
}

/// Random LMI problem with a planted feasible point: the constants are chosen so that every
/// constraint holds with margin at the planted assignment.
inline obsforge::lmi::LmiProblem planted_problem(std::mt19937_64& rng, obsforge::lmi::Assignment* planted = nullptr) {
  using namespace obsforge::lmi;
  std::uniform_int_distribution<int> dim(1, 4);
  LmiProblem p;
  const Index n1 = dim(rng), n2 = dim(rng), n3 = dim(rng);
  p.add_variable({"X", n1, n1, Structure::symmetric, true});
  p.add_variable({"Y", n2, n3, Structure::rectangular, false});
  p.add_variable({"d", n3, n3, Structure::diagonal, false});
  Assignment a;
  {
    Matrix B = random_matrix(n1, n1, rng);
    a["X"] = B * B.transpose() + Matrix::Identity(n1, n1);
    a["Y"] = random_matrix(n2, n3, rng);
    a["d"] = random_matrix(n3, 1, rng).asDiagonal();
  }
  std::uniform_int_distribution<int> sz(1, 5);
  for (int k = 0; k < 3; ++k) {
    const Index s = sz(rng);
    AffineMatrixExpr e{Matrix::Zero(s, s), {}};
    e.add(random_matrix(s, n1, rng), "X", random_matrix(n1, s, rng), true);
    e.add(random_matrix(s, n2, rng), "Y", random_matrix(n3, s, rng), true);
    e.add(random_matrix(s, n3, rng), "d", random_matrix(n3, s, rng), true);
    const Matrix at = evaluate(e, a);
    Matrix R = random_matrix(s, s, rng);
    const Matrix target = -(R * R.transpose() + 0.5 * Matrix::Identity(s, s));
    e.constant = target - at;
    e.constant = 0.5 * (e.constant + e.constant.transpose()).eval();
    p.add_constraint("planted" + std::to_string(k), std::move(e), Sense::NSD, k == 0);
  }
  if (planted) *planted = a;
  return p;
}

}  // namespace support
