#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/lmi.hpp"
#include "obsforge/sdp_solver.hpp"
#include "obsforge/system_model.hpp"

namespace obsforge {

/// Observer design criterion. Lipschitz and QuadraticBound use the two-LMI slack form,
/// ParamFree the Schur-embedded block with multiplier Lambda-tilde.
struct Criterion {
  enum class Kind { Lipschitz, QuadraticBound, ParamFree };
  enum class Mode { Asymptotic, ExpFixedAlpha, ExpVariableAlpha };

  Kind kind = Kind::ParamFree;
  double ell = 0.0;
  std::optional<double> alpha;  // Lipschitz exponential variant, or ExpFixedAlpha
  Matrix Qb;
  double rho = 1.0;
  Mode mode = Mode::Asymptotic;

  static Criterion lipschitz(double ell, std::optional<double> alpha = std::nullopt) {
    Criterion c;
    c.kind = Kind::Lipschitz;
    c.ell = ell;
    c.alpha = alpha;
    return c;
  }
  static Criterion quadratic_bound(Matrix Qb) {
    Criterion c;
    c.kind = Kind::QuadraticBound;
    c.Qb = std::move(Qb);
    return c;
  }
  static Criterion paramfree(double rho, Mode mode = Mode::Asymptotic,
                             std::optional<double> alpha = std::nullopt) {
    Criterion c;
    c.kind = Kind::ParamFree;
    c.rho = rho;
    c.mode = mode;
    c.alpha = alpha;
    return c;
  }

  void validate() const {
    switch (kind) {
      case Kind::Lipschitz:
        require(std::isfinite(ell) && ell >= 0.0, "criterion: ell must be finite and >= 0");
        if (alpha) require(*alpha > 0.0, "criterion: alpha must be positive");
        break;
      case Kind::QuadraticBound:
        require(Qb.rows() == Qb.cols() && Qb.rows() > 0, "criterion: Qb must be square");
        break;
      case Kind::ParamFree:
        require(std::isfinite(rho) && rho > 0.0, "criterion: rho must be positive (rho = 0 has no LMI form)");
        if (mode == Mode::ExpFixedAlpha) require(alpha && *alpha > 0.0, "criterion: ExpFixedAlpha needs alpha > 0");
        break;
    }
  }
};

inline const char* to_string(Criterion::Kind k) {
  switch (k) {
    case Criterion::Kind::Lipschitz: return "lipschitz";
    case Criterion::Kind::QuadraticBound: return "quadratic_bound";
    case Criterion::Kind::ParamFree: return "paramfree";
  }
  return "?";
}

inline const char* to_string(Criterion::Mode m) {
  switch (m) {
    case Criterion::Mode::Asymptotic: return "asymptotic";
    case Criterion::Mode::ExpFixedAlpha: return "exp_fixed_alpha";
    case Criterion::Mode::ExpVariableAlpha: return "exp_variable_alpha";
  }
  return "?";
}

inline json criterion_to_json(const Criterion& c) {
  json j{{"kind", to_string(c.kind)}};
  switch (c.kind) {
    case Criterion::Kind::Lipschitz: j["ell"] = c.ell; break;
    case Criterion::Kind::QuadraticBound: j["Qb"] = matrix_to_json(c.Qb); break;
    case Criterion::Kind::ParamFree:
      j["rho"] = c.rho;
      j["mode"] = to_string(c.mode);
      break;
  }
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  return j;
}

inline Criterion criterion_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  std::optional<double> alpha;
  if (j.contains("alpha") && !j.at("alpha").is_null()) alpha = j.at("alpha").get<double>();
  if (kind == "lipschitz") return Criterion::lipschitz(j.at("ell").get<double>(), alpha);
  if (kind == "quadratic_bound") return Criterion::quadratic_bound(matrix_from_json(j.at("Qb"), "Qb"));
  if (kind == "paramfree") {
    const std::string m = j.value("mode", std::string("asymptotic"));
    Criterion::Mode mode = m == "exp_fixed_alpha"      ? Criterion::Mode::ExpFixedAlpha
                           : m == "exp_variable_alpha" ? Criterion::Mode::ExpVariableAlpha
                                                       : Criterion::Mode::Asymptotic;
    return Criterion::paramfree(j.at("rho").get<double>(), mode, alpha);
  }
  throw ContractViolation("unknown criterion kind '" + kind + "'");
}

/// Lyapunov certificate. Unused matrices are left empty (Q and Lambda_tilde for the slack
/// forms, T for ParamFree).
struct Certificate {
  Matrix P;
  Matrix Q;
  Matrix Lambda_tilde;
  Matrix T;
  double rho = 0.0;
  std::optional<double> alpha;
  Criterion criterion;
  std::vector<double> residual_report;
};

struct ObserverGains {
  Matrix J, K, L, M, N;
  std::optional<Certificate> certificate;
};

// ---------------------------------------------------------------------------
// Problem builders.

namespace detail {

/// Rows [offset, offset + k) of an identity of size s, as an s x k selector.
inline Matrix selector(Index s, Index offset, Index k) {
  Matrix E = Matrix::Zero(s, k);
  for (Index i = 0; i < k; ++i) E(offset + i, i) = 1.0;
  return E;
}

inline void declare_gain_variables(lmi::LmiProblem& p, const NonlinearSystem& sys) {
  using lmi::Structure;
  p.add_variable({"P", sys.nx(), sys.nx(), Structure::symmetric, true});
  p.add_variable({"R", sys.nx(), sys.ny(), Structure::rectangular, false});
  p.add_variable({"S", sys.nx(), sys.ny(), Structure::rectangular, false});
  p.add_variable({"K", sys.nh(), sys.ny(), Structure::rectangular, false});
}

/// Adds sym(P A - R C A - S C) into the (x, x) block and (P - R C) G into (x, f).
inline void add_observer_terms(lmi::AffineMatrixExpr& e, const NonlinearSystem& sys, const Matrix& Ex,
                               const Matrix& Ef) {
  const Matrix CA = sys.C() * sys.A();
  e.add(Ex, "P", sys.A() * Ex.transpose(), true);
  e.add(-Ex, "R", CA * Ex.transpose(), true);
  e.add(-Ex, "S", sys.C() * Ex.transpose(), true);
  if (sys.nf() > 0) {
    e.add(Ex, "P", sys.G() * Ef.transpose(), true);
    e.add(-Ex, "R", sys.C() * sys.G() * Ef.transpose(), true);
  }
}

/// Two-LMI slack form shared by the Lipschitz and quadratic-boundedness criteria.
/// q_inv is the (n_h x n_h) inverse weight; an empty q_inv means the weight is zero.
inline lmi::LmiProblem build_slack_form(const NonlinearSystem& sys, const std::optional<Matrix>& q_inv,
                                        std::optional<double> alpha) {
  using namespace lmi;
  const Index nx = sys.nx(), nf = sys.nf(), nh = sys.nh();
  LmiProblem p;
  declare_gain_variables(p, sys);
  p.add_variable({"T", nx, nx, Structure::symmetric, false});

  const Index s1 = nx + nf;
  const Matrix Ex = selector(s1, 0, nx), Ef = selector(s1, nx, nf);
  AffineMatrixExpr ari{Matrix::Zero(s1, s1), {}};
  ari.constant.bottomRightCorner(nf, nf) = -Matrix::Identity(nf, nf);
  add_observer_terms(ari, sys, Ex, Ef);
  ari.add(Ex, "T", Ex.transpose());
  if (alpha) ari.add(*alpha * Ex, "P", Ex.transpose(), true);
  p.add_constraint("ari", std::move(ari), Sense::NSD, true);

  if (!q_inv) {
    AffineMatrixExpr t{Matrix::Zero(nx, nx), {}};
    t.add(-Matrix::Identity(nx, nx), "T", Matrix::Identity(nx, nx));
    p.add_constraint("slack", std::move(t), Sense::NSD, false);
    return p;
  }
  const Index s2 = nx + nh;
  const Matrix Tx = selector(s2, 0, nx), Th = selector(s2, nx, nh);
  AffineMatrixExpr slack{Matrix::Zero(s2, s2), {}};
  slack.constant.bottomRightCorner(nh, nh) = -*q_inv;
  slack.constant.topRightCorner(nx, nh) = sys.H().transpose();
  slack.constant.bottomLeftCorner(nh, nx) = sys.H();
  slack.add(-Tx, "T", Tx.transpose());
  slack.add(-Th, "K", sys.C() * Tx.transpose(), true);
  p.add_constraint("slack", std::move(slack), Sense::NSD, false);
  return p;
}

}  // namespace detail

/// Parameterization-free criterion: P > 0, Q-condition per mode, [[Phi, Gamma^T], [Gamma, -Lt]] <= 0,
/// eps_L I <= Lt <= (1/rho) I.
inline lmi::LmiProblem build_paramfree(const NonlinearSystem& sys, double rho,
                                       Criterion::Mode mode = Criterion::Mode::Asymptotic,
                                       std::optional<double> alpha = std::nullopt,
                                       double lambda_floor = 1e-9) {
  using namespace lmi;
  Criterion::paramfree(rho, mode, alpha).validate();
  const Index nx = sys.nx(), nf = sys.nf(), nh = sys.nh();
  const Index ng = nh + nf;
  const Matrix Ix = Matrix::Identity(nx, nx);

  LmiProblem p;
  obsforge::detail::declare_gain_variables(p, sys);
  p.add_variable({"Q", nx, nx, Structure::symmetric, true});
  p.add_variable({"Lt", ng, ng, Structure::symmetric, false});

  switch (mode) {
    case Criterion::Mode::Asymptotic: break;
    case Criterion::Mode::ExpFixedAlpha: {
      AffineMatrixExpr e{Matrix::Zero(nx, nx), {}};
      e.add(Ix, "Q", Ix).add(-*alpha * Ix, "P", Ix);
      p.add_constraint("Q >= alpha P", std::move(e), Sense::PSD, false);
      break;
    }
    case Criterion::Mode::ExpVariableAlpha: {
      p.add_variable({"alpha", nx, nx, Structure::scalar, false});
      AffineMatrixExpr q{Matrix::Zero(nx, nx), {}};
      q.add(Ix, "Q", Ix).add(-Ix, "alpha", Ix);
      p.add_constraint("Q >= alpha I", std::move(q), Sense::PSD, false);
      AffineMatrixExpr pb{-Ix, {}};
      pb.add(Ix, "P", Ix);
      p.add_constraint("P <= I", std::move(pb), Sense::NSD, false);
      AffineMatrixExpr a{-1e-6 * Ix, {}};
      a.add(Ix, "alpha", Ix);
      p.add_constraint("alpha >= 1e-6", std::move(a), Sense::PSD, false);
      break;
    }
  }

  // Block order: xi (nx), f-tilde (nf), then the Gamma rows (nh + nf).
  const Index s = nx + nf + ng;
  const Matrix Ex = obsforge::detail::selector(s, 0, nx), Ef = obsforge::detail::selector(s, nx, nf);
  const Matrix Eh = obsforge::detail::selector(s, nx + nf, nh), Eg = obsforge::detail::selector(s, nx + nf + nh, nf);
  const Matrix El = obsforge::detail::selector(s, nx + nf, ng);
  AffineMatrixExpr big{Matrix::Zero(s, s), {}};
  big.constant.block(nx, nx, nf, nf) = -rho * Matrix::Identity(nf, nf);
  big.constant += linalg::sym(Eh * sys.H() * Ex.transpose()) + linalg::sym(Eg * Ef.transpose());
  obsforge::detail::add_observer_terms(big, sys, Ex, Ef);
  big.add(Ex, "Q", Ex.transpose());
  big.add(-Eh, "K", sys.C() * Ex.transpose(), true);
  big.add(-El, "Lt", El.transpose());
  p.add_constraint("paramfree", std::move(big), Sense::NSD, false);

  const Matrix Ig = Matrix::Identity(ng, ng);
  AffineMatrixExpr upper{-(1.0 / rho) * Ig, {}};
  upper.add(Ig, "Lt", Ig);
  p.add_constraint("Lt <= I/rho", std::move(upper), Sense::NSD, false);
  AffineMatrixExpr lower{-lambda_floor * Ig, {}};
  lower.add(Ig, "Lt", Ig);
  p.add_constraint("Lt >= floor", std::move(lower), Sense::PSD, false);
  return p;
}

/// Lipschitz criterion with weight ell^2 I; alpha adds the exponential-rate term sym(alpha P).
inline lmi::LmiProblem build_lipschitz(const NonlinearSystem& sys, double ell,
                                       std::optional<double> alpha = std::nullopt) {
  Criterion::lipschitz(ell, alpha).validate();
  if (ell == 0.0) return detail::build_slack_form(sys, std::nullopt, alpha);
  const Index nh = sys.nh();
  return detail::build_slack_form(sys, Matrix(Matrix::Identity(nh, nh) / (ell * ell)), alpha);
}

/// Quadratic-boundedness criterion; Qb must be symmetric positive definite with condition
/// number at most 1e12.
inline lmi::LmiProblem build_quadratic_bound(const NonlinearSystem& sys, const Matrix& Qb) {
  Criterion::quadratic_bound(Qb).validate();
  require(Qb.rows() == sys.nh(), "build_quadratic_bound: Qb must be n_h x n_h, got " + shape_str(Qb));
  require((Qb - Qb.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + Qb.cwiseAbs().maxCoeff()),
          "build_quadratic_bound: Qb must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetric_part(Qb));
  const double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
  require(lmin > 0.0 && lmax <= 1e12 * lmin, "build_quadratic_bound: Qb is singular or too ill-conditioned to invert");
  Matrix q_inv = Qb.isDiagonal(0.0) ? Matrix(Qb.diagonal().cwiseInverse().asDiagonal())
                                    : Matrix(es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                                             es.eigenvectors().transpose());
  return detail::build_slack_form(sys, linalg::symmetric_part(q_inv), std::nullopt);
}

inline lmi::LmiProblem build_problem(const NonlinearSystem& sys, const Criterion& c) {
  switch (c.kind) {
    case Criterion::Kind::Lipschitz: return build_lipschitz(sys, c.ell, c.alpha);
    case Criterion::Kind::QuadraticBound: return build_quadratic_bound(sys, c.Qb);
    case Criterion::Kind::ParamFree: return build_paramfree(sys, c.rho, c.mode, c.alpha);
  }
  throw ContractViolation("build_problem: unknown criterion");
}

// ---------------------------------------------------------------------------
// Gain recovery and verification.

/// L = P^{-1} R, J = P^{-1} S, K as solved.
inline ObserverGains extract_gains(const NonlinearSystem& sys, const lmi::LmiSolution& solution,
                                   const Criterion& criterion) {
  require(solution.status == lmi::Status::Feasible, "extract_gains: solution is not Feasible");
  auto get = [&](const char* id) -> const Matrix& {
    auto it = solution.assignment.find(id);
    if (it == solution.assignment.end()) throw ContractViolation(std::string("extract_gains: assignment lacks '") + id + "'");
    return it->second;
  };
  const Matrix& P = get("P");
  Eigen::LLT<Matrix> chol(P);
  if (chol.info() != Eigen::Success) throw NumericalError("extract_gains: P is not positive definite");

  ObserverGains g;
  g.L = chol.solve(get("R"));
  g.J = chol.solve(get("S"));
  g.K = get("K");
  std::tie(g.M, g.N) = observer_matrices(sys.A(), sys.C(), g.J, g.L);

  Certificate cert;
  cert.P = P;
  cert.criterion = criterion;
  cert.residual_report = solution.residuals;
  cert.alpha = criterion.alpha;
  if (criterion.kind == Criterion::Kind::ParamFree) {
    cert.Q = get("Q");
    cert.Lambda_tilde = get("Lt");
    cert.rho = criterion.rho;
    if (criterion.mode == Criterion::Mode::ExpVariableAlpha) cert.alpha = get("alpha")(0, 0);
  } else {
    cert.T = get("T");
  }
  g.certificate = std::move(cert);
  return g;
}

struct VerificationCheck {
  std::string name;
  double value = 0.0;  ///< signed quantity compared against the threshold
  double threshold = 0.0;
  bool passed = false;
};

struct VerificationReport {
  bool passed = false;
  double max_real_eig_M = 0.0;
  std::vector<VerificationCheck> checks;

  const VerificationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

/// Solves M^T X + X M = -I through the Kronecker form.
inline Matrix lyapunov_solve(const Matrix& M) {
  const Index n = M.rows();
  const Matrix I = Matrix::Identity(n, n);
  // vec(M^T X) = (I kron M^T) vec X and vec(X M) = (M^T kron I) vec X, column-major.
  Matrix K = Matrix::Zero(n * n, n * n);
  for (Index b = 0; b < n; ++b) K.block(b * n, b * n, n, n) += M.transpose();
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) K.block(b * n, a * n, n, n) += M(a, b) * I;
  const Vector rhs = -Eigen::Map<const Vector>(I.data(), n * n);
  const Vector x = K.partialPivLu().solve(rhs);
  return linalg::symmetric_part(Eigen::Map<const Matrix>(x.data(), n, n));
}

inline bool is_linear_plant(const NonlinearSystem& sys) {
  return sys.nf() == 0 || sys.G().cwiseAbs().maxCoeff() == 0.0 || sys.f().name() == "zero";
}

}  // namespace detail

/// Recomputes the certificate conditions from the gains alone (R = P L and S = P J are never
/// read back from the solver). Tolerance is tol * scale with scale = 1 + norms of the parts.
inline VerificationReport verify_certificate(const NonlinearSystem& sys, const ObserverGains& gains,
                                             double tol = 1e-8) {
  require(gains.certificate.has_value(), "verify_certificate: gains carry no certificate");
  const Certificate& cert = *gains.certificate;
  const Index nx = sys.nx(), nf = sys.nf(), nh = sys.nh();
  require(cert.P.rows() == nx && cert.P.cols() == nx, "verify_certificate: P has wrong shape");
  require(gains.L.rows() == nx && gains.J.rows() == nx && gains.K.rows() == nh,
          "verify_certificate: gain shapes do not match the system");

  // value <= kStrict means value < 0
  constexpr double kStrict = -std::numeric_limits<double>::min();
  VerificationReport rep;
  auto check = [&](std::string name, double value, double threshold) {
    rep.checks.push_back({std::move(name), value, threshold, value <= threshold});
  };

  const auto [M, N] = observer_matrices(sys.A(), sys.C(), gains.J, gains.L);
  const Matrix& P = cert.P;
  const Matrix HK = sys.H() - gains.K * sys.C();
  const Matrix PNG = P * N * sys.G();
  const double pscale = 1.0 + linalg::spectral_norm(P);
  check("P > 0", -linalg::lambda_min(P), kStrict);

  const Criterion& cr = cert.criterion;
  if (cr.kind == Criterion::Kind::ParamFree) {
    require(cert.Q.rows() == nx && cert.Lambda_tilde.rows() == nh + nf,
            "verify_certificate: ParamFree certificate needs Q and Lambda_tilde");
    check("Q > 0", -linalg::lambda_min(cert.Q), kStrict);
    Eigen::LLT<Matrix> lt(cert.Lambda_tilde);
    if (lt.info() != Eigen::Success) {
      check("Lambda_tilde invertible", 1.0, 0.0);
    } else {
      const Index ng = nh + nf;
      const Matrix Lambda = linalg::symmetric_part(lt.solve(Matrix::Identity(ng, ng)));
      Matrix Phi = Matrix::Zero(nx + nf, nx + nf);
      Phi.topLeftCorner(nx, nx) = linalg::sym(P * M) + cert.Q;
      Phi.topRightCorner(nx, nf) = PNG;
      Phi.bottomLeftCorner(nf, nx) = PNG.transpose();
      Phi.bottomRightCorner(nf, nf) = -cert.rho * Matrix::Identity(nf, nf);
      Matrix Gamma = Matrix::Zero(ng, nx + nf);
      Gamma.topLeftCorner(nh, nx) = HK;
      Gamma.bottomRightCorner(nf, nf) = Matrix::Identity(nf, nf);
      const Matrix GLG = Gamma.transpose() * Lambda * Gamma;
      const double scale = 1.0 + linalg::spectral_norm(Phi) + linalg::spectral_norm(GLG);
      check("Phi + Gamma^T Lambda Gamma <= 0", linalg::lambda_max(Phi + GLG), tol * scale);
      check("Lambda >= rho I", -linalg::lambda_min(Lambda - cert.rho * Matrix::Identity(ng, ng)), tol);
    }
    if (cr.mode == Criterion::Mode::ExpFixedAlpha || cr.mode == Criterion::Mode::ExpVariableAlpha) {
      require(cert.alpha.has_value(), "verify_certificate: exponential mode needs alpha");
      const double a = *cert.alpha;
      if (cr.mode == Criterion::Mode::ExpFixedAlpha) {
        check("Q >= alpha P", -linalg::lambda_min(cert.Q - a * P), tol * (1.0 + a * pscale));
      } else {
        check("Q >= alpha I", -linalg::lambda_min(cert.Q - a * Matrix::Identity(nx, nx)), tol * (1.0 + a));
        check("P <= I", linalg::lambda_max(P - Matrix::Identity(nx, nx)), tol);
        check("alpha > 0", -a, kStrict);
      }
    }
  } else {
    // Riccati inequality M^T P + P M + P N G G^T N^T P + (H - KC)^T W (H - KC) (+ 2 alpha P) < 0.
    Matrix W;
    if (cr.kind == Criterion::Kind::Lipschitz)
      W = cr.ell * cr.ell * Matrix::Identity(nh, nh);
    else
      W = cr.Qb;
    Matrix ari = linalg::sym(P * M) + PNG * PNG.transpose() + HK.transpose() * W * HK;
    if (cr.alpha) ari += 2.0 * *cr.alpha * P;
    const double scale = 1.0 + linalg::spectral_norm(linalg::sym(P * M)) + linalg::spectral_norm(PNG * PNG.transpose()) +
                         linalg::spectral_norm(HK.transpose() * W * HK);
    check("Riccati inequality < 0", linalg::lambda_max(ari), tol * scale);
  }

  rep.max_real_eig_M = linalg::spectral_abscissa(M);
  check("M Hurwitz", rep.max_real_eig_M, kStrict);

  if (detail::is_linear_plant(sys) && rep.max_real_eig_M < 0.0) {
    const Matrix X = detail::lyapunov_solve(M);
    check("Lyapunov solution > 0", -linalg::lambda_min(X), kStrict);
  }

  rep.passed = true;
  for (const auto& c : rep.checks) rep.passed = rep.passed && c.passed;
  return rep;
}

// ---------------------------------------------------------------------------
// Pipeline helpers.

struct SynthesisResult {
  Criterion criterion;
  lmi::LmiSolution solution;
  std::optional<ObserverGains> gains;
  std::optional<VerificationReport> report;

  bool verified() const { return report && report->passed; }
};

inline SynthesisResult synthesize(const NonlinearSystem& sys, const Criterion& criterion,
                                  const lmi::SolverOptions& options = {}) {
  SynthesisResult r;
  r.criterion = criterion;
  r.solution = lmi::solve_feasibility(build_problem(sys, criterion), options);
  if (r.solution.status == lmi::Status::Feasible) {
    r.gains = extract_gains(sys, r.solution, criterion);
    r.report = verify_certificate(sys, *r.gains);
  }
  return r;
}

/// ParamFree synthesis over a list of rho values (log-spaced default).
inline std::vector<SynthesisResult> rho_sweep(const NonlinearSystem& sys,
                                              Criterion::Mode mode = Criterion::Mode::Asymptotic,
                                              std::vector<double> rhos = {0.1, 1.0, 10.0},
                                              std::optional<double> alpha = std::nullopt,
                                              const lmi::SolverOptions& options = {}) {
  std::vector<SynthesisResult> out;
  for (double rho : rhos) out.push_back(synthesize(sys, Criterion::paramfree(rho, mode, alpha), options));
  return out;
}

// ---------------------------------------------------------------------------
// Gains file.

inline json report_to_json(const VerificationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back(json{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"passed", c.passed}});
  return json{{"passed", r.passed}, {"max_real_eig_M", r.max_real_eig_M}, {"checks", checks}};
}

inline json gains_to_json(const ObserverGains& g, const VerificationReport* report = nullptr) {
  json j{{"J", matrix_to_json(g.J)}, {"K", matrix_to_json(g.K)}, {"L", matrix_to_json(g.L)},
         {"M", matrix_to_json(g.M)}, {"N", matrix_to_json(g.N)}};
  if (g.certificate) {
    const auto& c = *g.certificate;
    json cj{{"P", matrix_to_json(c.P)}, {"rho", c.rho}, {"criterion", criterion_to_json(c.criterion)},
            {"residuals", c.residual_report}};
    cj["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
    if (c.Q.size()) cj["Q"] = matrix_to_json(c.Q);
    if (c.Lambda_tilde.size()) cj["Lambda_tilde"] = matrix_to_json(c.Lambda_tilde);
    if (c.T.size()) cj["T"] = matrix_to_json(c.T);
    j["certificate"] = cj;
  }
  if (report) j["verification"] = report_to_json(*report);
  return j;
}

inline ObserverGains gains_from_json(const json& j) {
  ObserverGains g;
  g.J = matrix_from_json(j.at("J"), "J");
  g.K = matrix_from_json(j.at("K"), "K");
  g.L = matrix_from_json(j.at("L"), "L");
  if (j.contains("M")) g.M = matrix_from_json(j.at("M"), "M");
  if (j.contains("N")) g.N = matrix_from_json(j.at("N"), "N");
  if (j.contains("certificate")) {
    const auto& cj = j.at("certificate");
    Certificate c;
    c.P = matrix_from_json(cj.at("P"), "P");
    c.rho = cj.value("rho", 0.0);
    c.criterion = criterion_from_json(cj.at("criterion"));
    if (cj.contains("alpha") && !cj.at("alpha").is_null()) c.alpha = cj.at("alpha").get<double>();
    if (cj.contains("Q")) c.Q = matrix_from_json(cj.at("Q"), "Q");
    if (cj.contains("Lambda_tilde")) c.Lambda_tilde = matrix_from_json(cj.at("Lambda_tilde"), "Lambda_tilde");
    if (cj.contains("T")) c.T = matrix_from_json(cj.at("T"), "T");
    if (cj.contains("residuals")) c.residual_report = cj.at("residuals").get<std::vector<double>>();
    g.certificate = std::move(c);
  }
  return g;
}

}  // namespace obsforge
