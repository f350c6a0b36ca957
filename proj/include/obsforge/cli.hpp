#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "obsforge/demo.hpp"
#include "obsforge/estimation.hpp"
#include "obsforge/simulation.hpp"
#include "obsforge/sir.hpp"
#include "obsforge/svg.hpp"
#include "obsforge/synthesis.hpp"
#include "obsforge/system_model.hpp"

namespace obsforge::cli {

enum ExitCode : int { kOk = 0, kError = 1, kInfeasible = 2, kInconclusive = 3 };

namespace detail {

inline std::uint64_t default_seed() {
  if (const char* s = std::getenv("OBSFORGE_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ContractViolation(std::string("OBSFORGE_SEED is not an unsigned integer: ") + s);
    }
  }
  return 0;
}

inline json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ContractViolation("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContractViolation("cannot write " + path);
  f << text;
}

/// Accepts either a SIR network file or a general system file.
inline NonlinearSystem load_system(const std::string& path) {
  const json j = read_json(path);
  try {
    if (j.contains("W") && j.contains("beta") && j.contains("delta"))
      return sir::build_system(sir::network_from_json(j));
    return system_from_json(j);
  } catch (const json::exception& e) {
    throw ContractViolation("malformed system file " + path + ": " + e.what());
  }
}

inline Criterion::Mode parse_mode(const std::string& m) {
  if (m == "asymptotic") return Criterion::Mode::Asymptotic;
  if (m == "exp-fixed") return Criterion::Mode::ExpFixedAlpha;
  if (m == "exp-variable") return Criterion::Mode::ExpVariableAlpha;
  throw ContractViolation("unknown mode '" + m + "'");
}

inline Vector parse_vector(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  return Eigen::Map<Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace detail

/// Entry point shared by the executable and the tests. args excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"obsforge: observer synthesis for nonlinear systems via LMIs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");
  std::uint64_t env_seed = 0;
  try {
    env_seed = detail::default_seed();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  }

  // sir-gen
  auto* gen = app.add_subcommand("sir-gen", "Generate a random networked SIR instance");
  sir::GeneratorParams gp;
  gp.seed = env_seed;
  double w_max = 2.0, beta_max = 1.0, delta_max = 1.0;
  std::string gen_out;
  gen->add_option("--n", gp.n, "Number of nodes")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--p-edge", gp.p_edge, "Edge probability per node pair")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--w-max", w_max, "Edge and self-loop weights are drawn from (0, w-max)")->capture_default_str();
  gen->add_option("--beta-max", beta_max, "beta_i drawn from (0, beta-max)")->capture_default_str();
  gen->add_option("--delta-max", delta_max, "delta_i drawn from (0, delta-max)")->capture_default_str();
  gen->add_flag("--asymmetric", gp.asymmetric, "Draw w_ij and w_ji independently");
  gen->add_option("--seed", gp.seed, "Random seed (default: $OBSFORGE_SEED or 0)");
  gen->add_option("--out", gen_out, "Output network JSON (default: stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate the Lipschitz constant or diagonal QB weights");
  std::string est_system, est_kind = "lipschitz", est_out;
  EstimationConfig ecfg;
  ecfg.seed = env_seed;
  bool est_fd = false;
  est->add_option("--system", est_system, "System or SIR network JSON")->required();
  est->add_option("--kind", est_kind, "lipschitz | qb")->check(CLI::IsMember({"lipschitz", "qb"}))->capture_default_str();
  est->add_option("--samples", ecfg.samples, "Uniform domain samples")->capture_default_str();
  est->add_option("--refine", ecfg.refinement_steps, "Coordinate refinement steps")->capture_default_str();
  est->add_option("--seed", ecfg.seed, "Random seed (default: $OBSFORGE_SEED or 0)");
  est->add_flag("--finite-difference", est_fd, "Use central differences instead of the analytic Jacobian");
  est->add_option("--out", est_out, "Also write the report JSON here");

  // synth
  auto* syn = app.add_subcommand("synth", "Solve an observer design LMI and verify the certificate");
  std::string syn_system, syn_criterion = "paramfree", syn_mode = "asymptotic", syn_out;
  double syn_rho = 1.0;
  std::optional<double> syn_alpha, syn_ell;
  std::uint64_t syn_seed = env_seed;
  int syn_iters = 120;
  syn->add_option("--system", syn_system, "System or SIR network JSON")->required();
  syn->add_option("--criterion", syn_criterion, "paramfree | lipschitz | qb")
      ->check(CLI::IsMember({"paramfree", "lipschitz", "qb"}))
      ->capture_default_str();
  syn->add_option("--rho", syn_rho, "ParamFree rho > 0")->capture_default_str();
  syn->add_option("--mode", syn_mode, "asymptotic | exp-fixed | exp-variable")
      ->check(CLI::IsMember({"asymptotic", "exp-fixed", "exp-variable"}))
      ->capture_default_str();
  syn->add_option("--alpha", syn_alpha, "Decay rate for exponential designs");
  syn->add_option("--ell", syn_ell, "Lipschitz constant (default: estimated from the system)");
  syn->add_option("--seed", syn_seed, "Seed for estimating ell or Qb when not given");
  syn->add_option("--max-iter", syn_iters, "Interior-point iteration limit")->capture_default_str();
  syn->add_option("--out", syn_out, "Output gains JSON");

  // verify
  auto* ver = app.add_subcommand("verify", "Re-check a stored certificate against a system");
  std::string ver_system, ver_gains;
  double ver_tol = 1e-8;
  ver->add_option("--system", ver_system, "System or SIR network JSON")->required();
  ver->add_option("--gains", ver_gains, "Gains JSON from synth")->required();
  ver->add_option("--tol", ver_tol, "Relative tolerance")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate plant and observer, write a trajectory CSV");
  std::string sim_system, sim_gains, sim_out, sim_x0, sim_xhat0;
  double sim_horizon = 40.0, sim_dt = 0.01, sim_noise = 0.0;
  std::uint64_t sim_seed = env_seed;
  int sim_substeps = 1;
  sim->add_option("--system", sim_system, "System or SIR network JSON")->required();
  sim->add_option("--gains", sim_gains, "Gains JSON from synth")->required();
  sim->add_option("--horizon", sim_horizon, "Final time")->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--dt", sim_dt, "RK4 step")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--substeps", sim_substeps, "RK4 substeps per output step")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--noise-var", sim_noise, "Measurement noise variance (isotropic)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--seed", sim_seed, "Seed for noise and the default initial state");
  sim->add_option("--x0", sim_x0, "Initial plant state, comma separated (default: domain sample)");
  sim->add_option("--xhat0", sim_xhat0, "Initial estimate, comma separated (default: 0)");
  sim->add_option("--out", sim_out, "Output CSV")->required();

  // plot
  auto* plt = app.add_subcommand("plot", "Render trajectory CSV columns as an SVG line chart");
  std::string plt_csv, plt_out, plt_title;
  std::vector<std::string> plt_cols{"err_norm"};
  bool plt_log = false;
  plt->add_option("--csv", plt_csv, "Trajectory CSV")->required();
  plt->add_option("--cols", plt_cols, "err_norm | node:i (x_I) | node_r:i (x_R) | any header name")->capture_default_str();
  plt->add_option("--title", plt_title, "Chart title");
  plt->add_flag("--log-y", plt_log, "Logarithmic y axis");
  plt->add_option("--out", plt_out, "Output SVG")->required();

  // demo
  auto* dem = app.add_subcommand("demo", "Batch SIR reproduction: estimation, synthesis, simulation, plots");
  demo::DemoConfig dc;
  dc.generator.seed = env_seed;
  double dem_w_max = 2.0;
  int dem_highlight = -1;
  dc.out_dir = "demo_out";
  dem->add_option("--realizations", dc.realizations, "Number of random instances")->check(CLI::PositiveNumber)->capture_default_str();
  dem->add_option("--n", dc.generator.n, "Nodes per instance")->check(CLI::PositiveNumber)->capture_default_str();
  dem->add_option("--p-edge", dc.generator.p_edge, "Edge probability")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  dem->add_option("--w-max", dem_w_max, "Weights drawn from (0, w-max)")->capture_default_str();
  dem->add_option("--seed", dc.generator.seed, "Base seed; instance i uses seed + i");
  dem->add_option("--samples", dc.estimation.samples, "Lipschitz estimation samples")->capture_default_str();
  dem->add_option("--rho", dc.rho, "ParamFree rho")->capture_default_str();
  dem->add_option("--horizon", dc.horizon, "Simulation horizon")->capture_default_str();
  dem->add_option("--dt", dc.dt, "RK4 step")->check(CLI::PositiveNumber)->capture_default_str();
  dem->add_option("--substeps", dc.substeps, "RK4 substeps per output step")->check(CLI::PositiveNumber)->capture_default_str();
  dem->add_option("--noise-var", dc.noise_var, "Noise variance for the highlighted run")->capture_default_str();
  dem->add_option("--highlight", dem_highlight, "Instance index to simulate (default: first verified)");
  dem->add_option("--threads", dc.threads, "Worker threads (0 = all cores)")->capture_default_str();
  dem->add_option("--out-dir", dc.out_dir, "Output directory")->capture_default_str();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kError;
  }

  try {
    if (*gen) {
      gp.w_range = {0.0, w_max};
      gp.beta_range = {0.0, beta_max};
      gp.delta_range = {0.0, delta_max};
      const sir::SirNetwork net = sir::random_network(gp);
      const std::string text = sir::network_to_json(net).dump(2) + "\n";
      if (gen_out.empty()) {
        out << text;
      } else {
        detail::write_text(gen_out, text);
        out << "wrote " << gen_out << ": n=" << net.n << " seed=" << gp.seed << " edges="
            << ((net.W.array() > 0.0).count() - (net.W.diagonal().array() > 0.0).count()) / (gp.asymmetric ? 1 : 2)
            << '\n';
      }
      return kOk;
    }

    if (*est) {
      const NonlinearSystem sys = detail::load_system(est_system);
      if (est_fd) ecfg.jacobian_mode = JacobianMode::finite_difference;
      const json rep = est_kind == "lipschitz" ? lipschitz_constant(sys, ecfg).to_json()
                                               : quadratic_bound_diag(sys, ecfg).to_json();
      if (!est_out.empty()) detail::write_text(est_out, rep.dump(2) + "\n");
      out << rep.dump(2) << '\n';
      return kOk;
    }

    if (*syn) {
      const NonlinearSystem sys = detail::load_system(syn_system);
      Criterion c;
      json extra = json::object();
      if (syn_criterion == "paramfree") {
        c = Criterion::paramfree(syn_rho, detail::parse_mode(syn_mode), syn_alpha);
      } else if (syn_criterion == "lipschitz") {
        double ell = 0.0;
        if (syn_ell) {
          ell = *syn_ell;
        } else {
          EstimationConfig ec;
          ec.seed = syn_seed;
          const auto r = lipschitz_constant(sys, ec);
          ell = r.estimate;
          extra["ell_estimate"] = r.to_json();
        }
        c = Criterion::lipschitz(ell, syn_alpha);
      } else {
        EstimationConfig ec;
        ec.seed = syn_seed;
        const auto r = quadratic_bound_diag(sys, ec);
        extra["qb_estimate"] = r.to_json();
        c = Criterion::quadratic_bound(r.Qb);
      }
      lmi::SolverOptions so;
      so.max_iterations = syn_iters;
      const SynthesisResult r = synthesize(sys, c, so);
      json summary{{"criterion", criterion_to_json(c)},
                   {"status", lmi::to_string(r.solution.status)},
                   {"iterations", r.solution.stats.iterations},
                   {"margin", r.solution.stats.margin},
                   {"message", r.solution.stats.message}};
      for (auto it = extra.begin(); it != extra.end(); ++it) summary[it.key()] = it.value();
      if (r.report) summary["verification"] = report_to_json(*r.report);
      if (r.gains && !syn_out.empty())
        detail::write_text(syn_out, gains_to_json(*r.gains, r.report ? &*r.report : nullptr).dump(2) + "\n");
      out << summary.dump(2) << '\n';
      if (r.solution.status == lmi::Status::Infeasible) return kInfeasible;
      if (r.solution.status == lmi::Status::Inconclusive || !r.verified()) return kInconclusive;
      return kOk;
    }

    if (*ver) {
      const NonlinearSystem sys = detail::load_system(ver_system);
      ObserverGains g = gains_from_json(detail::read_json(ver_gains));
      const auto [M, N] = observer_matrices(sys.A(), sys.C(), g.J, g.L);
      g.M = M;
      g.N = N;
      const VerificationReport rep = verify_certificate(sys, g, ver_tol);
      out << report_to_json(rep).dump(2) << '\n';
      return rep.passed ? kOk : kInconclusive;
    }

    if (*sim) {
      const NonlinearSystem sys = detail::load_system(sim_system);
      ObserverGains g = gains_from_json(detail::read_json(sim_gains));
      require(g.L.rows() == sys.nx() && g.L.cols() == sys.ny() && g.J.rows() == sys.nx() &&
                  g.J.cols() == sys.ny() && g.K.rows() == sys.nh() && g.K.cols() == sys.ny(),
              "gains do not match the system dimensions");
      Vector x0;
      if (sim_x0.empty()) {
        std::mt19937_64 rng(sim_seed ^ 0x5eedULL);
        x0 = sys.domain().sample(rng);
      } else {
        x0 = detail::parse_vector(sim_x0);
      }
      SimulationOptions so;
      so.substeps = sim_substeps;
      if (!sim_xhat0.empty()) so.xhat0 = detail::parse_vector(sim_xhat0);
      const NoiseSpec ns = sim_noise > 0.0 ? NoiseSpec::isotropic(sim_noise, sys.ny(), sim_seed) : NoiseSpec::none();
      const Trajectory tr = simulate(sys, g, x0, sim_horizon, sim_dt, ns, so);
      std::ostringstream csv;
      write_trajectory_csv(csv, tr);
      detail::write_text(sim_out, csv.str());
      const ErrorMetrics m = error_metrics(tr);
      json j = m.to_json();
      j["final_over_initial"] = m.initial > 0.0 ? json(m.final_value / m.initial) : json(nullptr);
      j["rows"] = tr.size();
      j["dt"] = sim_dt;
      j["substeps"] = sim_substeps;
      j["method"] = "rk4";
      j["diagnostics"] = tr.diagnostics;
      out << j.dump(2) << '\n';
      return kOk;
    }

    if (*plt) {
      std::ifstream f(plt_csv);
      if (!f) throw ContractViolation("cannot open " + plt_csv);
      const CsvTable t = read_csv(f);
      require(t.data.rows() > 0, "plot: CSV has no data rows");
      const Index tc = t.column("t");
      require(tc >= 0, "plot: CSV has no 't' column");
      const std::vector<double> times(t.data.col(tc).begin(), t.data.col(tc).end());
      auto column = [&](const std::string& name) {
        const Index c = t.column(name);
        if (c < 0) throw ContractViolation("plot: unknown column '" + name + "'");
        return std::vector<double>(t.data.col(c).begin(), t.data.col(c).end());
      };
      Index nx = 0;
      while (t.column("x_" + std::to_string(nx + 1)) >= 0) ++nx;
      std::vector<svg::Series> series;
      for (const auto& spec : plt_cols) {
        const bool node_i = spec.rfind("node:", 0) == 0, node_r = spec.rfind("node_r:", 0) == 0;
        if (node_i || node_r) {
          int i = 0;
          try {
            i = std::stoi(spec.substr(spec.find(':') + 1));
          } catch (const std::exception&) {
            throw ContractViolation("plot: bad node column '" + spec + "'");
          }
          require(nx % 2 == 0 && i >= 1 && i <= nx / 2, "plot: unknown column '" + spec + "'");
          const Index k = node_i ? i : nx / 2 + i;
          const std::string lab = std::string(node_i ? "x_I" : "x_R") + "^" + std::to_string(i);
          series.push_back({lab + " true", times, column("x_" + std::to_string(k)), false});
          series.push_back({lab + " est", times, column("xhat_" + std::to_string(k)), true});
        } else {
          series.push_back({spec, times, column(spec), false});
        }
      }
      svg::ChartOptions co;
      co.title = plt_title;
      co.log_y = plt_log;
      detail::write_text(plt_out, svg::line_chart(series, co));
      out << "wrote " << plt_out << " (" << series.size() << " series)\n";
      return kOk;
    }

    if (*dem) {
      dc.generator.w_range = {0.0, dem_w_max};
      if (dem_highlight >= 0) dc.highlight = dem_highlight;
      const demo::DemoSummary s = demo::run_demo(dc);
      const json j = s.to_json();
      out << j.dump(2) << '\n';
      return kOk;
    }
  } catch (const SimulationDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}

}  // namespace obsforge::cli
