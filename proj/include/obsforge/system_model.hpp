#pragma once

#include <algorithm>
#include <complex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/nonlinearity.hpp"

namespace obsforge {

/// The set X the state lives in. Suprema in the parameter estimators are taken over it.
class StateDomain {
 public:
  enum class Kind { box, simplex };

  static StateDomain box(Vector lower, Vector upper, std::string description = "box") {
    require(lower.size() == upper.size(), "box domain: bound lengths differ");
    require((lower.array() <= upper.array()).all(), "box domain: lower must not exceed upper");
    StateDomain d;
    d.kind_ = Kind::box;
    d.lower_ = std::move(lower);
    d.upper_ = std::move(upper);
    d.description_ = std::move(description);
    return d;
  }

  /// Product of per-node triangles {a >= 0, b >= 0, a + b <= 1}; state layout [a_1..a_n, b_1..b_n].
  static StateDomain simplex(Index nodes, std::string description = "per-node simplex") {
    require(nodes >= 1, "simplex domain: need at least one node");
    StateDomain d;
    d.kind_ = Kind::simplex;
    d.nodes_ = nodes;
    d.description_ = std::move(description);
    return d;
  }

  Kind kind() const { return kind_; }
  Index dim() const { return kind_ == Kind::box ? lower_.size() : 2 * nodes_; }
  Index nodes() const { return nodes_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::string& description() const { return description_; }

  bool contains(const Vector& x, double tol = 0.0) const {
    if (x.size() != dim()) return false;
    if (kind_ == Kind::box)
      return ((x - lower_).array() >= -tol).all() && ((upper_ - x).array() >= -tol).all();
    return simplex_violation(x) <= tol;
  }

  /// Largest amount by which x leaves the per-node simplex (0 when inside).
  double simplex_violation(const Vector& x) const {
    require(kind_ == Kind::simplex, "simplex_violation on a box domain");
    double worst = 0.0;
    for (Index i = 0; i < nodes_; ++i) {
      const double a = x(i), b = x(nodes_ + i);
      worst = std::max({worst, -a, -b, a + b - 1.0});
    }
    return worst;
  }

  template <class Rng>
  Vector sample(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x(dim());
    if (kind_ == Kind::box) {
      for (Index i = 0; i < x.size(); ++i) x(i) = lower_(i) + (upper_(i) - lower_(i)) * unit(rng);
      return x;
    }
    for (Index i = 0; i < nodes_; ++i) {
      double a = unit(rng), b = unit(rng);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      x(i) = a;
      x(nodes_ + i) = b;
    }
    return x;
  }

  /// Nearest-ish feasible point; exact for boxes, per-node clip-and-rescale for simplices.
  Vector project(Vector x) const {
    require(x.size() == dim(), "project: dimension mismatch");
    if (kind_ == Kind::box) return x.cwiseMax(lower_).cwiseMin(upper_);
    for (Index i = 0; i < nodes_; ++i) {
      double a = std::max(0.0, x(i)), b = std::max(0.0, x(nodes_ + i));
      if (a + b > 1.0) {
        const double excess = 0.5 * (a + b - 1.0);
        a -= excess;
        b -= excess;
        if (a < 0.0) { b += a; a = 0.0; }
        if (b < 0.0) { a += b; b = 0.0; }
      }
      x(i) = a;
      x(nodes_ + i) = b;
    }
    return x;
  }

  json to_json() const {
    if (kind_ == Kind::box)
      return json{{"kind", "box"},
                  {"lower", vector_to_json(lower_)},
                  {"upper", vector_to_json(upper_)},
                  {"description", description_}};
    return json{{"kind", "simplex"}, {"nodes", nodes_}, {"description", description_}};
  }

  static StateDomain from_json(const json& j) {
    require(j.is_object() && j.contains("kind"), "domain: missing 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    const std::string description = j.value("description", kind);
    if (kind == "box")
      return box(vector_from_json(j.at("lower"), "domain.lower"),
                 vector_from_json(j.at("upper"), "domain.upper"), description);
    if (kind == "simplex") return simplex(j.at("nodes").get<Index>(), description);
    throw ContractViolation("domain: unknown kind '" + kind + "'");
  }

 private:
  StateDomain() = default;

  Kind kind_ = Kind::box;
  Vector lower_;
  Vector upper_;
  Index nodes_ = 0;
  std::string description_;
};

/// x' = A x + G f(H x), y = C x, x in the domain.
class NonlinearSystem {
 public:
  NonlinearSystem(Matrix A, Matrix G, Matrix H, Matrix C, Nonlinearity f, StateDomain domain)
      : A_(std::move(A)),
        G_(std::move(G)),
        H_(std::move(H)),
        C_(std::move(C)),
        f_(std::move(f)),
        domain_(std::move(domain)) {
    const Index nx = A_.rows();
    require(A_.cols() == nx, "system: A must be square, got " + shape_str(A_));
    require(G_.rows() == nx, "system: G must have n_x rows, got " + shape_str(G_));
    require(H_.cols() == nx, "system: H must have n_x columns, got " + shape_str(H_));
    require(C_.cols() == nx, "system: C must have n_x columns, got " + shape_str(C_));
    require(f_.input_dim() == H_.rows(), "system: f input dimension must equal rows of H");
    require(f_.output_dim() == G_.cols(), "system: f output dimension must equal columns of G");
    require(domain_.dim() == nx, "system: domain dimension must equal n_x");
  }

  const Matrix& A() const { return A_; }
  const Matrix& G() const { return G_; }
  const Matrix& H() const { return H_; }
  const Matrix& C() const { return C_; }
  const Nonlinearity& f() const { return f_; }
  const StateDomain& domain() const { return domain_; }

  Index nx() const { return A_.rows(); }
  Index nf() const { return G_.cols(); }
  Index nh() const { return H_.rows(); }
  Index ny() const { return C_.rows(); }

  Vector vector_field(const Vector& x) const {
    require(x.size() == nx(), "vector_field: state has wrong length");
    Vector dx = A_ * x;
    if (nf() > 0) dx.noalias() += G_ * f_(H_ * x);
    return dx;
  }

  Vector output(const Vector& x) const { return C_ * x; }

 private:
  Matrix A_, G_, H_, C_;
  Nonlinearity f_;
  StateDomain domain_;
};

struct DetectabilityReport {
  bool detectable = true;
  std::vector<std::complex<double>> offending_eigenvalues;
  std::vector<double> min_singular_values;  ///< one per tested eigenvalue
  std::vector<std::complex<double>> tested_eigenvalues;
};

/// PBH rank test over the closed right half plane (Re s >= -tol). A tested eigenvalue s is
/// offending when sigma_min([sI - A; C]) < tol * (1 + ||A||).
inline DetectabilityReport pbh_detectability(const Matrix& A, const Matrix& C, double tol = 1e-9) {
  require(A.rows() == A.cols(), "pbh_detectability: A must be square, got " + shape_str(A));
  require(C.cols() == A.rows(), "pbh_detectability: C must have n columns, got " + shape_str(C));
  require(tol > 0.0, "pbh_detectability: tol must be positive");
  using Complex = std::complex<double>;
  using CMatrix = Eigen::MatrixXcd;

  DetectabilityReport report;
  const Index n = A.rows();
  if (n == 0) return report;
  const double threshold = tol * (1.0 + linalg::spectral_norm(A));
  Eigen::EigenSolver<Matrix> es(A, false);
  for (Index k = 0; k < n; ++k) {
    const Complex s = es.eigenvalues()(k);
    if (s.real() < -tol) continue;
    CMatrix stacked(n + C.rows(), n);
    stacked.topRows(n) = -A.cast<Complex>();
    stacked.topRows(n).diagonal().array() += s;
    stacked.bottomRows(C.rows()) = C.cast<Complex>();
    Eigen::JacobiSVD<CMatrix> svd(stacked);
    const double smin = svd.singularValues()(n - 1);
    report.tested_eigenvalues.push_back(s);
    report.min_singular_values.push_back(smin);
    if (smin < threshold) report.offending_eigenvalues.push_back(s);
  }
  report.detectable = report.offending_eigenvalues.empty();
  return report;
}

enum class ShiftMode { augment, absorb };

/// Rewrites x' = Ax + Gf(Hx) as x' = (A+Delta)x + Gbar fbar(x) with Hbar = I. The vector field
/// is unchanged. Throws when (A+Delta, C) fails the PBH test.
inline NonlinearSystem shift_stabilize(const NonlinearSystem& sys, const Matrix& Delta,
                                       ShiftMode mode, double pbh_tol = 1e-9) {
  const Index nx = sys.nx();
  require(Delta.rows() == nx && Delta.cols() == nx,
          "shift_stabilize: Delta must be n_x x n_x, got " + shape_str(Delta));
  const Matrix shifted = sys.A() + Delta;
  require(pbh_detectability(shifted, sys.C(), pbh_tol).detectable,
          "shift_stabilize: (A + Delta, C) is not detectable");
  const Matrix I = Matrix::Identity(nx, nx);
  if (mode == ShiftMode::augment) {
    Matrix Gbar(nx, sys.nf() + nx);
    Gbar << sys.G(), -Delta;
    Nonlinearity fbar = make_nonlinearity(
        "shift_augment", json{{"inner", sys.f().to_json()}, {"H", matrix_to_json(sys.H())}});
    return NonlinearSystem(shifted, Gbar, I, sys.C(), std::move(fbar), sys.domain());
  }
  Nonlinearity fbar = make_nonlinearity("shift_absorb", json{{"inner", sys.f().to_json()},
                                                             {"G", matrix_to_json(sys.G())},
                                                             {"H", matrix_to_json(sys.H())},
                                                             {"Delta", matrix_to_json(Delta)}});
  return NonlinearSystem(shifted, I, I, sys.C(), std::move(fbar), sys.domain());
}

/// M = A - L C A - J C and N = I - L C.
inline std::pair<Matrix, Matrix> observer_matrices(const Matrix& A, const Matrix& C, const Matrix& J,
                                                   const Matrix& L) {
  const Index nx = A.rows();
  require(A.cols() == nx && C.cols() == nx, "observer_matrices: A/C dimension mismatch");
  require(J.rows() == nx && J.cols() == C.rows(),
          "observer_matrices: J must be n_x x n_y, got " + shape_str(J));
  require(L.rows() == nx && L.cols() == C.rows(),
          "observer_matrices: L must be n_x x n_y, got " + shape_str(L));
  Matrix M = A - L * (C * A) - J * C;
  Matrix N = Matrix::Identity(nx, nx) - L * C;
  return {std::move(M), std::move(N)};
}

inline json system_to_json(const NonlinearSystem& sys, const std::string& description = "") {
  json j{{"A", matrix_to_json(sys.A())}, {"G", matrix_to_json(sys.G())},
         {"H", matrix_to_json(sys.H())}, {"C", matrix_to_json(sys.C())},
         {"f", sys.f().to_json()},       {"domain", sys.domain().to_json()}};
  if (!description.empty()) j["description"] = description;
  return j;
}

/// Reads the system file schema. G may be given as n_x empty rows when n_f = 0.
inline NonlinearSystem system_from_json(const json& j) {
  for (const char* key : {"A", "G", "H", "C", "f", "domain"})
    require(j.contains(key), std::string("system file: missing key '") + key + "'");
  Matrix A = matrix_from_json(j.at("A"), "A");
  Matrix G = matrix_from_json(j.at("G"), "G");
  Matrix H = matrix_from_json(j.at("H"), "H");
  Matrix C = matrix_from_json(j.at("C"), "C");
  Nonlinearity f = nonlinearity_from_json(j.at("f"));
  if (G.size() == 0 && G.rows() == 0 && f.output_dim() == 0) G = Matrix(A.rows(), 0);
  if (H.size() == 0 && H.rows() == 0 && f.input_dim() == 0) H = Matrix(0, A.rows());
  return NonlinearSystem(std::move(A), std::move(G), std::move(H), std::move(C), std::move(f),
                         StateDomain::from_json(j.at("domain")));
}

}  // namespace obsforge
