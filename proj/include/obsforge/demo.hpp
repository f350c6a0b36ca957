#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/estimation.hpp"
#include "obsforge/simulation.hpp"
#include "obsforge/sir.hpp"
#include "obsforge/svg.hpp"
#include "obsforge/synthesis.hpp"

// Batch reproduction of the networked SIR experiment: many random instances, Lipschitz
// estimation, Lipschitz and parameterization-free synthesis, and simulations.

namespace obsforge::demo {

struct DemoConfig {
  int realizations = 100;
  sir::GeneratorParams generator;  // seed is the base seed; instance i uses seed + i
  EstimationConfig estimation;
  double rho = 1.0;
  double horizon = 40.0;
  double dt = 0.01;
  int substeps = 1;
  double noise_var = 0.001;
  std::optional<int> highlight;  // default: first instance with verified ParamFree gains
  unsigned threads = 0;          // 0 = hardware concurrency
  std::string out_dir;           // empty = no files
  lmi::SolverOptions solver;
};

struct SynthRecord {
  std::string status = "skipped";
  bool verified = false;
  double margin = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  std::string message;

  json to_json() const {
    return json{{"status", status}, {"verified", verified}, {"margin", margin},
                {"iterations", iterations}, {"seconds", seconds}, {"message", message}};
  }
};

struct ConvergenceRecord {
  bool attempted = false;
  bool diverged = false;
  double blowup_time = 0.0;
  double ratio = 0.0;  ///< err(T) / err(0)
  std::string diagnostic;

  json to_json() const {
    json j{{"attempted", attempted}, {"diverged", diverged}};
    if (diverged) j["blowup_time"] = blowup_time;
    else if (attempted) j["ratio"] = ratio;
    if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
    return j;
  }
};

struct InstanceResult {
  int index = 0;
  std::uint64_t seed = 0;
  sir::SirNetwork network;
  EstimateReport ell;
  SynthRecord lipschitz;
  SynthRecord paramfree;
  ConvergenceRecord convergence;
  std::optional<ObserverGains> paramfree_gains;
  std::optional<VerificationReport> paramfree_report;
  std::string error;

  json to_json() const {
    json j{{"index", index},
           {"seed", seed},
           {"network", sir::network_to_json(network)},
           {"ell", ell.to_json()},
           {"lipschitz", lipschitz.to_json()},
           {"paramfree", paramfree.to_json()},
           {"convergence", convergence.to_json()}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct HighlightResult {
  int index = -1;
  std::optional<Trajectory> noise_free;
  std::optional<Trajectory> noisy;
  std::string noise_free_error;
  std::string noisy_error;
};

struct DemoSummary {
  DemoConfig config;
  std::vector<InstanceResult> instances;
  HighlightResult highlight;
  double runtime_s = 0.0;
  unsigned threads_used = 1;

  int count(bool (*pred)(const InstanceResult&)) const {
    return static_cast<int>(std::count_if(instances.begin(), instances.end(), pred));
  }
  std::pair<double, double> ell_range() const {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : instances)
      if (r.error.empty()) {
        lo = std::min(lo, r.ell.estimate);
        hi = std::max(hi, r.ell.estimate);
      }
    return {lo, hi};
  }
  json to_json() const;
};

namespace detail {

inline SynthRecord record_synthesis(const SynthesisResult& r) {
  SynthRecord s;
  s.status = lmi::to_string(r.solution.status);
  s.verified = r.verified();
  s.margin = r.solution.stats.margin;
  s.iterations = r.solution.stats.iterations;
  s.seconds = r.solution.stats.wall_time_s;
  s.message = r.solution.stats.message;
  return s;
}

inline Vector initial_state(const NonlinearSystem& sys, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  return sys.domain().sample(rng);
}

inline InstanceResult run_instance(const DemoConfig& cfg, int index) {
  InstanceResult r;
  r.index = index;
  r.seed = cfg.generator.seed + static_cast<std::uint64_t>(index);
  try {
    sir::GeneratorParams g = cfg.generator;
    g.seed = r.seed;
    r.network = sir::random_network(g);
    const NonlinearSystem sys = sir::build_system(r.network);

    EstimationConfig ec = cfg.estimation;
    ec.seed = r.seed;
    r.ell = lipschitz_constant(sys, ec);

    r.lipschitz = record_synthesis(synthesize(sys, Criterion::lipschitz(r.ell.estimate), cfg.solver));
    const SynthesisResult pf = synthesize(sys, Criterion::paramfree(cfg.rho), cfg.solver);
    r.paramfree = record_synthesis(pf);
    if (pf.verified()) {
      r.paramfree_gains = pf.gains;
      r.paramfree_report = pf.report;
      r.convergence.attempted = true;
      SimulationOptions so;
      so.substeps = cfg.substeps;
      try {
        const Trajectory tr = simulate(sys, *pf.gains, initial_state(sys, r.seed), cfg.horizon, cfg.dt, {}, so);
        r.convergence.ratio = tr.err_norm(tr.size() - 1) / tr.err_norm(0);
        if (!tr.diagnostics.empty()) r.convergence.diagnostic = tr.diagnostics.front();
      } catch (const SimulationDiverged& e) {
        r.convergence.diverged = true;
        r.convergence.blowup_time = e.time;
      }
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

inline std::string format_index(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

}  // namespace detail

inline json DemoSummary::to_json() const {
  std::vector<double> ells;
  int pf_feasible = 0, pf_verified = 0, lip_feasible = 0, lip_infeasible = 0, lip_inconclusive = 0,
      unsound = 0, errors = 0, conv_attempted = 0, conv_pass = 0, diverged = 0;
  for (const auto& r : instances) {
    if (!r.error.empty()) {
      ++errors;
      continue;
    }
    ells.push_back(r.ell.estimate);
    pf_feasible += r.paramfree.status == "Feasible";
    pf_verified += r.paramfree.verified;
    lip_feasible += r.lipschitz.status == "Feasible";
    lip_infeasible += r.lipschitz.status == "Infeasible";
    lip_inconclusive += r.lipschitz.status == "Inconclusive";
    unsound += (r.paramfree.status == "Feasible" && !r.paramfree.verified) +
               (r.lipschitz.status == "Feasible" && !r.lipschitz.verified);
    if (r.convergence.attempted) {
      ++conv_attempted;
      diverged += r.convergence.diverged;
      conv_pass += !r.convergence.diverged && r.convergence.ratio <= 1e-3;
    }
  }
  json ell_j = json::object();
  if (!ells.empty()) {
    std::vector<double> s = ells;
    std::sort(s.begin(), s.end());
    const double lo = std::floor(s.front()), hi = std::ceil(s.back());
    const int bins = 10;
    const double width = std::max(1e-9, (hi - lo) / bins);
    std::vector<int> counts(bins, 0);
    for (double v : s) counts[std::min(bins - 1, static_cast<int>((v - lo) / width))]++;
    json edges = json::array();
    for (int b = 0; b <= bins; ++b) edges.push_back(lo + width * b);
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    ell_j = json{{"min", s.front()},
                 {"max", s.back()},
                 {"mean", mean},
                 {"median", s[s.size() / 2]},
                 {"histogram", {{"edges", edges}, {"counts", counts}}},
                 {"bound", "lower (sampling estimates)"}};
  }
  const auto& g = config.generator;
  json j{{"realizations", config.realizations},
         {"generator",
          {{"n", g.n}, {"p_edge", g.p_edge}, {"w_range", {g.w_range.lo, g.w_range.hi}},
           {"beta_range", {g.beta_range.lo, g.beta_range.hi}}, {"delta_range", {g.delta_range.lo, g.delta_range.hi}},
           {"base_seed", g.seed}, {"symmetric_weights", !g.asymmetric}}},
         {"estimation", {{"samples", config.estimation.samples}, {"refinement_steps", config.estimation.refinement_steps}}},
         {"rho", config.rho},
         {"simulation",
          {{"method", "rk4"}, {"horizon", config.horizon}, {"dt", config.dt}, {"substeps", config.substeps},
           {"noise_var", config.noise_var}}},
         {"ell", ell_j},
         {"counts",
          {{"instances_ok", static_cast<int>(instances.size()) - errors},
           {"errors", errors},
           {"paramfree_feasible", pf_feasible},
           {"paramfree_verified", pf_verified},
           {"lipschitz_feasible", lip_feasible},
           {"lipschitz_infeasible", lip_infeasible},
           {"lipschitz_inconclusive", lip_inconclusive},
           {"feasible_but_unverified", unsound},
           {"convergence_attempted", conv_attempted},
           {"convergence_passed", conv_pass},
           {"simulations_diverged", diverged}}}};
  json h{{"index", highlight.index}};
  auto traj_j = [](const std::optional<Trajectory>& t, const std::string& err) {
    if (t) {
      json m = error_metrics(*t).to_json();
      if (!t->diagnostics.empty()) m["diagnostics"] = t->diagnostics;
      return m;
    }
    return json{{"error", err}};
  };
  if (highlight.index >= 0) {
    h["noise_free"] = traj_j(highlight.noise_free, highlight.noise_free_error);
    h["noisy"] = traj_j(highlight.noisy, highlight.noisy_error);
  }
  j["highlight"] = h;
  j["timing"] = {{"runtime_s", runtime_s}, {"threads", threads_used}};
  return j;
}

/// Runs the sweep, the highlighted simulations, and (when out_dir is set) writes the bundle.
inline DemoSummary run_demo(const DemoConfig& cfg, std::ostream* progress = nullptr) {
  require(cfg.realizations >= 1, "demo: realizations must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  DemoSummary sum;
  sum.config = cfg;
  sum.instances.resize(static_cast<std::size_t>(cfg.realizations));

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.realizations));
  sum.threads_used = threads;
  std::atomic<int> next{0};
  std::mutex progress_mu;
  auto worker = [&]() {
    for (int i = next++; i < cfg.realizations; i = next++) {
      sum.instances[static_cast<std::size_t>(i)] = detail::run_instance(cfg, i);
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        const auto& r = sum.instances[static_cast<std::size_t>(i)];
        *progress << "instance " << i << ": ell=" << r.ell.estimate << " lipschitz=" << r.lipschitz.status
                  << " paramfree=" << r.paramfree.status << (r.paramfree.verified ? "+verified" : "") << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Highlighted instance: noise-free and noisy runs from the same initial state.
  int hi = -1;
  if (cfg.highlight) {
    require(*cfg.highlight >= 0 && *cfg.highlight < cfg.realizations, "demo: highlight index out of range");
    hi = *cfg.highlight;
  } else {
    for (const auto& r : sum.instances)
      if (r.paramfree_gains) {
        hi = r.index;
        break;
      }
  }
  sum.highlight.index = hi;
  if (hi >= 0) {
    const auto& inst = sum.instances[static_cast<std::size_t>(hi)];
    if (!inst.paramfree_gains) {
      sum.highlight.noise_free_error = sum.highlight.noisy_error = "no verified ParamFree gains for this instance";
    } else {
      const NonlinearSystem sys = sir::build_system(inst.network);
      const Vector x0 = detail::initial_state(sys, inst.seed);
      SimulationOptions so;
      so.substeps = cfg.substeps;
      try {
        sum.highlight.noise_free = simulate(sys, *inst.paramfree_gains, x0, cfg.horizon, cfg.dt, {}, so);
      } catch (const std::exception& e) {
        sum.highlight.noise_free_error = e.what();
      }
      try {
        const NoiseSpec ns = NoiseSpec::isotropic(cfg.noise_var, sys.ny(), inst.seed);
        sum.highlight.noisy = simulate(sys, *inst.paramfree_gains, x0, cfg.horizon, cfg.dt, ns, so);
      } catch (const std::exception& e) {
        sum.highlight.noisy_error = e.what();
      }
    }
  }
  sum.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir / "instances");
    for (const auto& r : sum.instances)
      detail::write_file(dir / "instances" / ("instance_" + detail::format_index(r.index) + ".json"),
                         r.to_json().dump(2) + "\n");
    detail::write_file(dir / "summary.json", sum.to_json().dump(2) + "\n");
    if (hi >= 0 && sum.instances[static_cast<std::size_t>(hi)].paramfree_gains) {
      const auto& inst = sum.instances[static_cast<std::size_t>(hi)];
      const VerificationReport* rep = inst.paramfree_report ? &*inst.paramfree_report : nullptr;
      detail::write_file(dir / "highlight_gains.json", gains_to_json(*inst.paramfree_gains, rep).dump(2) + "\n");
    }
    std::vector<svg::Series> err_series;
    for (const auto* pr : {&sum.highlight.noise_free, &sum.highlight.noisy}) {
      if (!*pr) continue;
      const Trajectory& tr = **pr;
      const std::string tag = pr == &sum.highlight.noise_free ? "noise_free" : "noisy";
      std::ostringstream csv;
      write_trajectory_csv(csv, tr);
      detail::write_file(dir / ("highlight_" + tag + ".csv"), csv.str());
      err_series.push_back({tag, std::vector<double>(tr.times.begin(), tr.times.end()),
                            std::vector<double>(tr.err_norm.begin(), tr.err_norm.end()), tag == "noisy"});
    }
    if (!err_series.empty())
      detail::write_file(dir / "error_norm.svg",
                         svg::line_chart(err_series, {"Estimation error norm", "t", "||xhat - x||", true}));
    if (sum.highlight.noisy) {
      const Trajectory& tr = *sum.highlight.noisy;
      const std::vector<double> t(tr.times.begin(), tr.times.end());
      const Index n = tr.x.cols() / 2;
      for (Index i = 0; i < n; ++i) {
        std::vector<svg::Series> s;
        auto col = [&](const Matrix& m, Index c) { return std::vector<double>(m.col(c).begin(), m.col(c).end()); };
        s.push_back({"x_I true", t, col(tr.x, i), false});
        s.push_back({"x_I est", t, col(tr.xhat, i), true});
        s.push_back({"x_R true", t, col(tr.x, n + i), false});
        s.push_back({"x_R est", t, col(tr.xhat, n + i), true});
        detail::write_file(dir / ("node_" + std::to_string(i + 1) + ".svg"),
                           svg::line_chart(s, {"Node " + std::to_string(i + 1), "t", "fraction", false}));
      }
    }
  }
  return sum;
}

}  // namespace obsforge::demo
