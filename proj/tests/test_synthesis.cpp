#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace obsforge;
using support::random_matrix;

namespace {

NonlinearSystem scalar_plant() {
  Matrix one = Matrix::Identity(1, 1);
  Vector lo = Vector::Constant(1, -1), hi = Vector::Constant(1, 1);
  return NonlinearSystem(-one, one, one, one, linear_nonlinearity(one), StateDomain::box(lo, hi));
}

// x1' = x2, x2' = 0.5 x1 with the 0.5 x1 routed through f; y = x1.
NonlinearSystem double_integrator() {
  Matrix A(2, 2);
  A << 0, 1, 0, 0;
  Matrix G(2, 1);
  G << 0, 1;
  Matrix H(1, 2);
  H << 1, 0;
  Matrix F(1, 1);
  F << 0.5;
  Vector lo = Vector::Constant(2, -1), hi = Vector::Constant(2, 1);
  return NonlinearSystem(A, G, H, Matrix(H), linear_nonlinearity(F), StateDomain::box(lo, hi));
}

lmi::Assignment random_assignment(const lmi::LmiProblem& p, std::mt19937_64& rng) {
  lmi::Assignment a;
  for (const auto& v : p.variables) a[v.id] = v.from_parameters(random_matrix(v.parameter_count(), 1, rng));
  return a;
}

double max_eig(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().maxCoeff();
}

}  // namespace

TEST(Criterion, Validation) {
  EXPECT_THROW(Criterion::paramfree(0.0).validate(), ContractViolation);
  EXPECT_THROW(Criterion::lipschitz(-1.0).validate(), ContractViolation);
  EXPECT_THROW(Criterion::paramfree(1.0, Criterion::Mode::ExpFixedAlpha).validate(), ContractViolation);
  EXPECT_NO_THROW(Criterion::quadratic_bound(Matrix::Identity(2, 2)).validate());
}

TEST(Criterion, JsonRoundTrip) {
  const auto c = Criterion::paramfree(2.5, Criterion::Mode::ExpFixedAlpha, 0.3);
  const auto d = criterion_from_json(criterion_to_json(c));
  EXPECT_EQ(d.kind, c.kind);
  EXPECT_EQ(d.mode, c.mode);
  EXPECT_DOUBLE_EQ(d.rho, 2.5);
  ASSERT_TRUE(d.alpha);
  EXPECT_DOUBLE_EQ(*d.alpha, 0.3);
}

TEST(ParamFree, ScalarPlantVerified) {
  const auto sys = scalar_plant();
  const auto r = synthesize(sys, Criterion::paramfree(1.0));
  ASSERT_EQ(r.solution.status, lmi::Status::Feasible) << r.solution.stats.message;
  ASSERT_TRUE(r.report);
  EXPECT_TRUE(r.report->passed);
  EXPECT_LT(r.report->max_real_eig_M, 0.0);
}

TEST(ParamFree, ExponentialModes) {
  const auto sys = support::cubic_oscillator();
  const auto fixed = synthesize(sys, Criterion::paramfree(1.0, Criterion::Mode::ExpFixedAlpha, 0.2));
  ASSERT_TRUE(fixed.verified());
  const auto& cf = *fixed.gains->certificate;
  EXPECT_GE(linalg::lambda_min(cf.Q - 0.2 * cf.P), -1e-8);

  const auto var = synthesize(sys, Criterion::paramfree(1.0, Criterion::Mode::ExpVariableAlpha));
  ASSERT_TRUE(var.verified());
  const auto& cv = *var.gains->certificate;
  ASSERT_TRUE(cv.alpha);
  EXPECT_GE(*cv.alpha, 1e-6 * (1 - 1e-6));
  EXPECT_LE(linalg::lambda_max(cv.P), 1.0 + 1e-8);
  EXPECT_GE(linalg::lambda_min(cv.Q) - *cv.alpha, -1e-8);
  EXPECT_NE(var.report->find("alpha > 0"), nullptr);
}

TEST(Synthesis, UndetectableNeverFeasible) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 8; ++k) {
    const auto sys = support::undetectable_system(rng);
    ASSERT_FALSE(pbh_detectability(sys.A(), sys.C()).detectable);
    // The unobservable eigenvalue survives every gain choice.
    Eigen::EigenSolver<Matrix> es(sys.A(), false);
    double unstable = -1e300;
    for (Index i = 0; i < 3; ++i) unstable = std::max(unstable, es.eigenvalues()(i).real());
    for (int t = 0; t < 50; ++t) {
      const Matrix J = random_matrix(3, 1, rng, 5.0), L = random_matrix(3, 1, rng, 5.0);
      const auto [M, N] = observer_matrices(sys.A(), sys.C(), J, L);
      EXPECT_GE(linalg::spectral_abscissa(M), unstable - 1e-8);
    }
    EXPECT_NE(synthesize(sys, Criterion::paramfree(1.0)).solution.status, lmi::Status::Feasible);
    EXPECT_NE(synthesize(sys, Criterion::lipschitz(0.1)).solution.status, lmi::Status::Feasible);
  }
}

TEST(Lipschitz, LinearPlantWithZeroEll) {
  const auto sys = support::linear_plant();
  const auto r = synthesize(sys, Criterion::lipschitz(0.0));
  ASSERT_TRUE(r.verified());
  const auto* lyap = r.report->find("Lyapunov solution > 0");
  ASSERT_NE(lyap, nullptr);
  EXPECT_TRUE(lyap->passed);
  // 2x2 Routh-Hurwitz: trace < 0 and det > 0.
  const Matrix& M = r.gains->M;
  EXPECT_LT(M.trace(), 0.0);
  EXPECT_GT(M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0), 0.0);
}

TEST(Lipschitz, DoubleIntegratorRiccati) {
  const auto sys = double_integrator();
  const auto r = synthesize(sys, Criterion::lipschitz(0.5));
  ASSERT_TRUE(r.verified()) << r.solution.stats.message;
  const auto& g = *r.gains;
  const Matrix& P = g.certificate->P;
  const Matrix N = Matrix::Identity(2, 2) - support::naive_mul(g.L, sys.C());
  const Matrix M = support::naive_mul(N, sys.A()) - support::naive_mul(g.J, sys.C());
  const Matrix PNG = support::naive_mul(P, support::naive_mul(N, sys.G()));
  const Matrix HK = sys.H() - support::naive_mul(g.K, sys.C());
  const Matrix PM = support::naive_mul(P, M);
  const Matrix ari = PM + PM.transpose() + support::naive_mul(PNG, PNG.transpose()) +
                     0.25 * support::naive_mul(HK.transpose(), HK);
  EXPECT_LT(max_eig(ari), 0.0);
}

TEST(QuadraticBound, MatchesLipschitzWithScaledIdentity) {
  Matrix W(2, 2);
  W << 0, 1, 0.5, 0;
  Vector beta(2), delta(2);
  beta << 0.4, 0.7;
  delta << 0.3, 0.6;
  const auto sys = sir::build_system(sir::SirNetwork{2, W, beta, delta, {}});
  std::mt19937_64 rng(8);
  for (double ell : {0.3, 1.0, 4.0}) {
    const auto pl = build_lipschitz(sys, ell);
    const auto pq = build_quadratic_bound(sys, ell * ell * Matrix::Identity(4, 4));
    for (int k = 0; k < 5; ++k) {
      const auto a = random_assignment(pl, rng);
      const auto rl = lmi::residuals(pl, a), rq = lmi::residuals(pq, a);
      ASSERT_EQ(rl.size(), rq.size());
      for (std::size_t i = 0; i < rl.size(); ++i) EXPECT_NEAR(rl[i], rq[i], 1e-14 * (1 + std::abs(rl[i])));
    }
  }
}

TEST(QuadraticBound, RejectsBadWeights) {
  const auto sys = support::hidden_channel();
  EXPECT_THROW(build_quadratic_bound(sys, Matrix::Zero(1, 1)), ContractViolation);
  EXPECT_THROW(build_quadratic_bound(sys, Matrix::Identity(2, 2)), ContractViolation);
  EXPECT_THROW(build_quadratic_bound(double_integrator(), Matrix::Identity(1, 1) * -1.0), ContractViolation);
}

TEST(QuadraticBound, HugeEntryNotFeasible) {
  const auto sys = support::hidden_channel();
  const auto r = synthesize(sys, Criterion::quadratic_bound(Matrix::Constant(1, 1, 1e8)));
  EXPECT_NE(r.solution.status, lmi::Status::Feasible);
}

TEST(Lipschitz, FeasibilityMonotoneInEll) {
  // Feasible exactly for ell < 1 on this plant.
  const auto sys = support::hidden_channel();
  bool seen_infeasible = false;
  for (double ell : {0.5, 0.9, 1.1, 2.0, 10.0}) {
    const auto r = synthesize(sys, Criterion::lipschitz(ell));
    const bool feasible = r.solution.status == lmi::Status::Feasible;
    EXPECT_EQ(feasible, ell < 1.0) << "ell = " << ell;
    if (seen_infeasible) EXPECT_FALSE(feasible) << "ell = " << ell;
    seen_infeasible = seen_infeasible || !feasible;
    if (feasible) EXPECT_TRUE(r.verified());
  }
}

TEST(ExtractGains, HandExamples) {
  const auto sys = double_integrator();
  lmi::LmiSolution s;
  s.status = lmi::Status::Feasible;
  Matrix R(2, 1), S(2, 1);
  R << 2, 0;
  S << 4, -2;
  s.assignment = {{"P", Matrix::Identity(2, 2)}, {"R", R}, {"S", S}, {"K", Matrix::Zero(1, 1)},
                  {"T", Matrix::Identity(1, 1)}};
  auto g = extract_gains(sys, s, Criterion::lipschitz(0.5));
  EXPECT_TRUE(g.L.isApprox(R));
  EXPECT_TRUE(g.J.isApprox(S));

  s.assignment["P"] = 2.0 * Matrix::Identity(2, 2);
  g = extract_gains(sys, s, Criterion::lipschitz(0.5));
  Matrix want(2, 1);
  want << 1, 0;
  EXPECT_LT((g.L - want).norm(), 1e-15);
  EXPECT_LT((g.J - S / 2.0).norm(), 1e-15);

  s.assignment["P"] = -Matrix::Identity(2, 2);
  EXPECT_THROW(extract_gains(sys, s, Criterion::lipschitz(0.5)), NumericalError);
  s.status = lmi::Status::Inconclusive;
  EXPECT_THROW(extract_gains(sys, s, Criterion::lipschitz(0.5)), ContractViolation);
}

TEST(ExtractGains, ReconstructsSolverVariables) {
  const auto sys = support::cubic_oscillator();
  const auto r = synthesize(sys, Criterion::paramfree(1.0));
  ASSERT_TRUE(r.verified());
  const Matrix& P = r.solution.assignment.at("P");
  const Matrix& Rv = r.solution.assignment.at("R");
  const Matrix& Sv = r.solution.assignment.at("S");
  EXPECT_LE((support::naive_mul(P, r.gains->L) - Rv).norm(), 1e-10 * (1 + P.norm() * r.gains->L.norm()));
  EXPECT_LE((support::naive_mul(P, r.gains->J) - Sv).norm(), 1e-10 * (1 + P.norm() * r.gains->J.norm()));
}

TEST(Verify, CorruptedGainFails) {
  const auto sys = support::cubic_oscillator();
  const auto r = synthesize(sys, Criterion::paramfree(1.0));
  ASSERT_TRUE(r.verified());
  auto bad = *r.gains;
  bad.L.array() += 10.0;
  EXPECT_FALSE(verify_certificate(sys, bad).passed);
  auto no_cert = *r.gains;
  no_cert.certificate.reset();
  EXPECT_THROW(verify_certificate(sys, no_cert), ContractViolation);
}

TEST(Verify, UnverifiedGainsFromJson) {
  const auto sys = double_integrator();
  const auto r = synthesize(sys, Criterion::lipschitz(0.5));
  ASSERT_TRUE(r.verified());
  const auto back = gains_from_json(gains_to_json(*r.gains, &*r.report));
  EXPECT_TRUE(back.L.isApprox(r.gains->L, 1e-15));
  EXPECT_TRUE(verify_certificate(sys, back).passed);
}

TEST(Sir, ParamFreeRhoOneRoundTrip) {
  sir::GeneratorParams gp;
  gp.seed = 3;
  const auto net = sir::random_network(gp);
  const auto sys = sir::build_system(net);
  const auto crit = Criterion::paramfree(1.0);
  const auto problem = build_problem(sys, crit);
  const auto sol = lmi::solve_feasibility(problem, {});
  ASSERT_EQ(sol.status, lmi::Status::Feasible) << sol.stats.message;
  const auto res = lmi::residuals(problem, sol.assignment);
  ASSERT_EQ(res.size(), sol.residuals.size());
  for (std::size_t i = 0; i < res.size(); ++i) EXPECT_NEAR(res[i], sol.residuals[i], 1e-12 * (1 + std::abs(res[i])));
  const auto g = extract_gains(sys, sol, crit);
  const auto rep = verify_certificate(sys, g);
  EXPECT_TRUE(rep.passed);
  EXPECT_TRUE(verify_certificate(sys, gains_from_json(gains_to_json(g))).passed);
}
