#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "obsforge/cli.hpp"
#include "support.hpp"

using namespace obsforge;
namespace fs = std::filesystem;

namespace {

// M = A - J C = [[-4, 1], [0, -3]] on the linear plant.
ObserverGains linear_gains(const NonlinearSystem& sys) {
  Matrix J(2, 1);
  J << 4, -2;
  return support::plain_gains(sys, J);
}

Matrix expm(const Matrix& A) { return A.exp(); }

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("obsforge_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

const ObserverGains& cubic_paramfree() {
  static const ObserverGains g = [] {
    const auto r = synthesize(support::cubic_oscillator(), Criterion::paramfree(1.0));
    if (!r.verified()) throw std::runtime_error("cubic oscillator synthesis did not verify");
    return *r.gains;
  }();
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// simulation

TEST(Simulate, LinearErrorMatchesMatrixExponential) {
  const auto sys = support::linear_plant();
  const auto g = linear_gains(sys);
  Vector x0(2);
  x0 << 1.0, -0.5;
  const auto tr = simulate(sys, g, x0, 10.0, 0.01);
  const Vector xi0 = -x0;  // xhat(0) = 0
  for (Index k = 0; k < tr.size(); k += 50) {
    const double truth = (expm(g.M * tr.times(k)) * xi0).norm();
    EXPECT_NEAR(tr.err_norm(k), truth, 1e-5 * (1e-6 + truth)) << "t = " << tr.times(k);
  }
  const auto m = error_metrics(tr, std::make_pair(2.0, 10.0));
  ASSERT_TRUE(m.rate);
  EXPECT_NEAR(*m.rate, -linalg::spectral_abscissa(g.M), 0.1 * 3.0);
}

TEST(Simulate, Rk4FourthOrder) {
  const auto sys = support::linear_plant();
  const auto g = linear_gains(sys);
  Vector x0(2);
  x0 << 1.0, 0.3;
  const Vector truth = expm(sys.A() * 2.0) * x0;
  auto terminal_error = [&](double dt) {
    const auto tr = simulate(sys, g, x0, 2.0, dt);
    return (tr.x.row(tr.size() - 1).transpose() - truth).norm();
  };
  const double ratio = terminal_error(0.2) / terminal_error(0.1);
  EXPECT_GE(ratio, 8.0);
  EXPECT_LE(ratio, 32.0);
}

TEST(Simulate, ExactInitialEstimateStaysExact) {
  const auto sys = support::cubic_oscillator();
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const Vector x0 = sys.domain().sample(rng);
    SimulationOptions o;
    o.xhat0 = x0;
    const auto tr = simulate(sys, cubic_paramfree(), x0, 20.0, 0.01, {}, o);
    EXPECT_LE(tr.err_norm.maxCoeff(), 1e-9);
  }
}

TEST(Simulate, Invariants) {
  const auto sys = support::cubic_oscillator();
  const auto& g = cubic_paramfree();
  Vector x0(2);
  x0 << 1.5, -1.0;
  const auto tr = simulate(sys, g, x0, 5.0, 0.01, NoiseSpec::isotropic(0.01, 1, 3));
  ASSERT_EQ(tr.size(), 501);
  EXPECT_DOUBLE_EQ(tr.times(500), 5.0);
  for (Index k = 0; k < tr.size(); ++k) {
    const Vector xhat = tr.z.row(k).transpose() + g.L * tr.y.row(k).transpose();
    EXPECT_LT((xhat - tr.xhat.row(k).transpose()).norm(), 1e-12);
    EXPECT_NEAR(tr.err_norm(k), (tr.xhat.row(k) - tr.x.row(k)).norm(), 1e-12);
    EXPECT_LT((tr.y.row(k) - tr.x.row(k) * sys.C().transpose() - tr.v.row(k)).norm(), 1e-12);
  }
  EXPECT_NEAR(tr.xhat.row(0).norm(), 0.0, 1e-12);
}

TEST(Simulate, NoiseReproducible) {
  const auto sys = support::cubic_oscillator();
  Vector x0(2);
  x0 << 0.5, 0.5;
  const auto a = simulate(sys, cubic_paramfree(), x0, 3.0, 0.01, NoiseSpec::isotropic(0.001, 1, 11));
  const auto b = simulate(sys, cubic_paramfree(), x0, 3.0, 0.01, NoiseSpec::isotropic(0.001, 1, 11));
  const auto c = simulate(sys, cubic_paramfree(), x0, 3.0, 0.01, NoiseSpec::isotropic(0.001, 1, 12));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.xhat, b.xhat);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.v, c.v);
  // Sample variance of the held noise.
  const auto d = simulate(sys, cubic_paramfree(), x0, 100.0, 0.01, NoiseSpec::isotropic(0.001, 1, 5));
  const double var = d.v.col(0).squaredNorm() / static_cast<double>(d.size());
  EXPECT_NEAR(var, 0.001, 0.0001);
}

TEST(Simulate, LyapunovDecreaseAndExponentialBound) {
  const auto sys = support::cubic_oscillator();
  std::mt19937_64 rng(9);
  const auto& ga = cubic_paramfree();
  const auto exp_r = synthesize(sys, Criterion::paramfree(1.0, Criterion::Mode::ExpFixedAlpha, 0.2));
  ASSERT_TRUE(exp_r.verified());
  for (int k = 0; k < 5; ++k) {
    const Vector x0 = sys.domain().sample(rng);
    const auto tr = simulate(sys, ga, x0, 20.0, 0.01);
    const Vector V = lyapunov_series(tr, ga.certificate->P);
    for (Index i = 1; i < V.size(); ++i) ASSERT_LE(V(i), V(i - 1) + 1e-6) << "t = " << tr.times(i);

    const auto te = simulate(sys, *exp_r.gains, x0, 20.0, 0.01);
    const Vector W = lyapunov_series(te, exp_r.gains->certificate->P);
    for (Index i = 0; i < W.size(); ++i) ASSERT_LE(W(i), W(0) * std::exp(-0.9 * 0.2 * te.times(i)) + 1e-8);
  }
}

TEST(Simulate, HorizonZeroAndPartialStep) {
  const auto sys = support::linear_plant();
  Vector x0(2);
  x0 << 1, 1;
  const auto z = simulate(sys, linear_gains(sys), x0, 0.0, 0.01);
  EXPECT_EQ(z.size(), 1);
  const auto p = simulate(sys, linear_gains(sys), x0, 0.105, 0.01);
  EXPECT_EQ(p.size(), 12);
  EXPECT_DOUBLE_EQ(p.times(11), 0.105);
}

TEST(Simulate, DivergenceReportsTime) {
  const auto sys = support::linear_plant();
  Matrix J(2, 1);
  J << -100, 0;
  Vector x0(2);
  x0 << 1, 1;
  try {
    simulate(sys, support::plain_gains(sys, J), x0, 10.0, 0.01);
    FAIL() << "expected divergence";
  } catch (const SimulationDiverged& e) {
    EXPECT_GT(e.time, 1.0);
    EXPECT_LT(e.time, 10.0);
  }
}

TEST(Simulate, PreconditionsAndDiagnostics) {
  const auto sys = support::linear_plant();
  const auto g = linear_gains(sys);
  Vector x0(2);
  x0 << 10, 10;
  EXPECT_THROW(simulate(sys, g, x0, 1.0, 0.0), ContractViolation);
  EXPECT_THROW(simulate(sys, g, Vector::Zero(3), 1.0, 0.01), ContractViolation);
  EXPECT_THROW(simulate(sys, g, Vector::Constant(2, 11.0), 1.0, 0.01), ContractViolation);
  const auto tr = simulate(sys, g, x0, 1.0, 0.01);
  EXPECT_GT(tr.max_domain_violation, 1e-6);
  EXPECT_FALSE(tr.diagnostics.empty());
}

TEST(Simulate, StableSubsteps) {
  ObserverGains g;
  g.M = Matrix::Identity(2, 2) * -1000.0;
  EXPECT_EQ(stable_substeps(g, 0.01), 4);
  g.M = Matrix::Identity(2, 2) * -1.0;
  EXPECT_EQ(stable_substeps(g, 0.01), 1);
}

TEST(ErrorMetrics, ZeroSeries) {
  const Vector t = Vector::LinSpaced(101, 0.0, 1.0);
  const auto m = error_metrics(t, Vector::Zero(101));
  EXPECT_EQ(m.initial, 0.0);
  EXPECT_EQ(m.final_value, 0.0);
  EXPECT_EQ(m.peak, 0.0);
  EXPECT_EQ(m.final_quarter_mean, 0.0);
  EXPECT_FALSE(m.rate);
  EXPECT_TRUE(m.to_json()["rate"].is_null());
}

TEST(ErrorMetrics, Exponential) {
  const Vector t = Vector::LinSpaced(1001, 0.0, 10.0);
  const Vector e = (-2.0 * t.array()).exp();
  const auto m = error_metrics(t, e);
  ASSERT_TRUE(m.rate);
  EXPECT_NEAR(*m.rate, 2.0, 0.02);
  ASSERT_TRUE(m.time_to_fraction);
  EXPECT_NEAR(*m.time_to_fraction, std::log(100.0) / 2.0, 0.01);
  EXPECT_DOUBLE_EQ(m.peak, 1.0);
  EXPECT_THROW(error_metrics(Vector(0), Vector(0)), ContractViolation);
}

TEST(Csv, HeaderAndRoundTrip) {
  const auto sys = support::cubic_oscillator();
  Vector x0(2);
  x0 << 0.3, -0.7;
  const auto tr = simulate(sys, cubic_paramfree(), x0, 1.0, 0.1);
  std::stringstream ss;
  write_trajectory_csv(ss, tr);
  std::string first;
  std::getline(std::stringstream(ss.str()), first);
  EXPECT_EQ(first, "t,x_1,x_2,xhat_1,xhat_2,y_1,err_norm");
  const auto t = read_csv(ss);
  ASSERT_EQ(t.data.rows(), tr.size());
  for (Index k = 0; k < tr.size(); ++k) {
    EXPECT_EQ(t.data(k, 0), tr.times(k));
    EXPECT_EQ(t.data(k, 1), tr.x(k, 0));
    EXPECT_EQ(t.data(k, 4), tr.xhat(k, 1));
    EXPECT_EQ(t.data(k, 6), tr.err_norm(k));
  }
  std::stringstream bad("t,a\n1,x\n");
  EXPECT_THROW(read_csv(bad), ContractViolation);
}

TEST(Svg, Deterministic) {
  svg::Series s{"e", {0, 1, 2}, {1, 0.1, 0.01}, false};
  svg::ChartOptions o;
  o.log_y = true;
  const auto a = svg::line_chart({s}, o);
  EXPECT_EQ(a, svg::line_chart({s}, o));
  EXPECT_EQ(count_of(a, "<polyline"), 1u);
  EXPECT_THROW(svg::line_chart({}), ContractViolation);
}

// ---------------------------------------------------------------------------
// cli

TEST(Cli, HelpAndBadArguments) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"synth", "--help"}).code, 0);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"sir-gen", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({"synth"}).code, 1);
  EXPECT_EQ(run({"synth", "--system", "/nonexistent.json"}).code, 1);
}

TEST(Cli, SirGenDeterministicAndSeedFromEnvironment) {
  const auto a = run({"sir-gen", "--n", "4", "--seed", "42"});
  const auto b = run({"sir-gen", "--n", "4", "--seed", "42"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto net = sir::network_from_json(json::parse(a.out));
  EXPECT_EQ(net.n, 4);

  setenv("OBSFORGE_SEED", "42", 1);
  const auto c = run({"sir-gen", "--n", "4"});
  setenv("OBSFORGE_SEED", "nope", 1);
  const auto d = run({"sir-gen", "--n", "4"});
  unsetenv("OBSFORGE_SEED");
  EXPECT_EQ(c.out, a.out);
  EXPECT_EQ(d.code, 1);

  const auto dir = scratch_dir("sirgen");
  EXPECT_EQ(run({"sir-gen", "--seed", "42", "--n", "4", "--out", (dir / "net.json").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "net.json"), a.out);
}

TEST(Cli, SynthVerifySimulatePlotOnSir) {
  const auto dir = scratch_dir("sir");
  const auto net = (dir / "net.json").string(), gains = (dir / "gains.json").string();
  ASSERT_EQ(run({"sir-gen", "--seed", "3", "--out", net}).code, 0);
  const auto s = run({"synth", "--system", net, "--rho", "1", "--out", gains});
  ASSERT_EQ(s.code, 0) << s.out << s.err;
  EXPECT_EQ(json::parse(s.out)["status"], "Feasible");
  EXPECT_EQ(run({"verify", "--system", net, "--gains", gains}).code, 0);

  // At dt = 0.01 the stiff observer leaves RK4's stability region; substeps fix that.
  const auto csv = (dir / "traj.csv").string();
  const auto bad = run({"simulate", "--system", net, "--gains", gains, "--horizon", "1", "--out", csv});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("blow-up"), std::string::npos);
  const int sub = stable_substeps(gains_from_json(json::parse(slurp(gains))), 0.01);
  const auto ok = run({"simulate", "--system", net, "--gains", gains, "--horizon", "0.5", "--substeps",
                       std::to_string(sub), "--out", csv});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(json::parse(ok.out)["rows"], 51);

  const auto svg1 = (dir / "err.svg").string(), svg2 = (dir / "node.svg").string();
  ASSERT_EQ(run({"plot", "--csv", csv, "--log-y", "--out", svg1}).code, 0);
  EXPECT_EQ(count_of(slurp(svg1), "<polyline"), 1u);
  ASSERT_EQ(run({"plot", "--csv", csv, "--cols", "node:3", "--out", svg2}).code, 0);
  EXPECT_EQ(count_of(slurp(svg2), "<polyline"), 2u);
  EXPECT_EQ(run({"plot", "--csv", csv, "--cols", "node:11", "--out", svg2}).code, 1);
  EXPECT_EQ(run({"plot", "--csv", csv, "--cols", "nope", "--out", svg2}).code, 1);

  const auto empty = (dir / "empty.csv").string();
  write_file(empty, "t,x_1,xhat_1,y_1,err_norm\n");
  EXPECT_EQ(run({"plot", "--csv", empty, "--out", svg1}).code, 1);
}

TEST(Cli, InfeasibleDesignsExitNonZero) {
  const auto dir = scratch_dir("infeasible");
  const auto hidden = (dir / "hidden.json").string();
  write_file(hidden, system_to_json(support::hidden_channel()).dump());
  const auto r = run({"synth", "--system", hidden, "--criterion", "lipschitz", "--ell", "10"});
  EXPECT_TRUE(r.code == 2 || r.code == 3) << r.code;
  EXPECT_EQ(run({"synth", "--system", hidden, "--criterion", "lipschitz", "--ell", "0.5"}).code, 0);

  std::mt19937_64 rng(2);
  const auto und = (dir / "undetectable.json").string();
  write_file(und, system_to_json(support::undetectable_system(rng)).dump());
  const auto u = run({"synth", "--system", und});
  EXPECT_TRUE(u.code == 2 || u.code == 3) << u.code;
  EXPECT_EQ(run({"synth", "--system", hidden, "--rho", "0"}).code, 1);
}

TEST(Cli, EstimateAndSimulateGeneralSystem) {
  const auto dir = scratch_dir("general");
  const auto sysf = (dir / "cubic.json").string(), gains = (dir / "gains.json").string();
  write_file(sysf, system_to_json(support::cubic_oscillator()).dump());
  const auto e = run({"estimate", "--system", sysf, "--samples", "2000"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NEAR(json::parse(e.out)["estimate"].get<double>(), 12.0, 0.24);  // sup |3 s^2| on [-2, 2]
  ASSERT_EQ(run({"synth", "--system", sysf, "--mode", "exp-fixed", "--alpha", "0.2", "--out", gains}).code, 0);
  const auto csv = (dir / "t.csv").string();
  const auto s = run({"simulate", "--system", sysf, "--gains", gains, "--horizon", "40", "--x0", "1,-1", "--out", csv});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto j = json::parse(s.out);
  EXPECT_EQ(j["rows"], 4001);
  EXPECT_LT(j["final_over_initial"].get<double>(), 1e-3);
  const auto h0 = run({"simulate", "--system", sysf, "--gains", gains, "--horizon", "0", "--out", csv});
  ASSERT_EQ(h0.code, 0);
  std::ifstream f(csv);
  EXPECT_EQ(read_csv(f).data.rows(), 1);
}

TEST(Cli, DemoSmallRun) {
  const auto dir = scratch_dir("demo");
  const auto r = run({"demo", "--realizations", "2", "--n", "3", "--samples", "500", "--horizon", "0.5",
                      "--substeps", "50", "--threads", "1", "--out-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["counts"]["instances_ok"].get<int>() + j["counts"]["errors"].get<int>(), 2);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "instances" / "instance_000.json"));
}
