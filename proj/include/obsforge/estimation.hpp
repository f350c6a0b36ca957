#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/system_model.hpp"

// Sampling estimates of the Lipschitz constant sup ||df/ds (Hx)|| and of the diagonal
// quadratic-boundedness weights over the state domain. Sampling only ever sees part of the
// domain, so every estimate is a lower bound on the true supremum.

namespace obsforge {

enum class JacobianMode { analytic, finite_difference };

struct EstimationConfig {
  std::size_t samples = 100000;
  int refinement_steps = 200;
  std::uint64_t seed = 0;
  JacobianMode jacobian_mode = JacobianMode::analytic;  // falls back to differences if absent
  double fd_step = 1e-6;

  void validate() const {
    require(samples >= 1, "estimation: samples must be >= 1");
    require(refinement_steps >= 0, "estimation: refinement_steps must be >= 0");
    require(fd_step > 0.0, "estimation: finite-difference step must be positive");
  }
};

struct EstimateReport {
  double estimate = 0.0;
  Vector argmax;
  std::size_t samples = 0;
  int refinement_steps = 0;
  std::uint64_t seed = 0;
  std::string jacobian;  ///< "analytic" or "finite_difference"

  json to_json() const {
    return json{{"estimate", estimate},
                {"argmax", vector_to_json(argmax)},
                {"samples", samples},
                {"refinement_steps", refinement_steps},
                {"seed", seed},
                {"jacobian", jacobian},
                {"bound", "lower"},
                {"note", "sampling estimate of a supremum; not certified"}};
  }
};

struct QuadraticBoundReport {
  Matrix Qb;  ///< diag(q_1, ..., q_n)
  Matrix argmax;  ///< column i is the maximizer found for q_i
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string jacobian;

  json to_json() const {
    return json{{"q", vector_to_json(Qb.diagonal())},
                {"argmax", matrix_to_json(argmax)},
                {"samples", samples},
                {"seed", seed},
                {"jacobian", jacobian},
                {"bound", "lower"},
                {"note", "sampling estimate of a supremum; not certified"}};
  }
};

namespace detail {

inline bool use_analytic(const NonlinearSystem& sys, const EstimationConfig& cfg) {
  return cfg.jacobian_mode == JacobianMode::analytic && sys.f().has_analytic_jacobian();
}

/// Jacobian of f with respect to its own argument s = Hx.
inline Matrix jacobian_at(const NonlinearSystem& sys, const Vector& x, const EstimationConfig& cfg) {
  const Vector s = sys.H() * x;
  return use_analytic(sys, cfg) ? sys.f().analytic_jacobian(s) : sys.f().finite_difference_jacobian(s, cfg.fd_step);
}

inline double domain_scale(const StateDomain& d) {
  if (d.kind() == StateDomain::Kind::simplex) return 1.0;
  return std::max(1e-12, (d.upper() - d.lower()).maxCoeff());
}

/// Coordinate hill climbing inside the domain: each step tries +-h along every coordinate,
/// halving h after a step without improvement.
inline std::pair<Vector, double> refine(const StateDomain& domain, const std::function<double(const Vector&)>& obj,
                                        Vector x, double value, int steps) {
  double h = 0.1 * domain_scale(domain);
  for (int step = 0; step < steps && h > 1e-12; ++step) {
    bool improved = false;
    for (Index i = 0; i < x.size(); ++i) {
      for (double dir : {1.0, -1.0}) {
        Vector cand = x;
        cand(i) += dir * h;
        cand = domain.project(cand);
        const double v = obj(cand);
        if (v > value) {
          value = v;
          x = std::move(cand);
          improved = true;
          break;
        }
      }
    }
    if (!improved) h *= 0.5;
  }
  return {x, value};
}

}  // namespace detail

/// Estimated sup over the domain of ||J_f(Hx)||_2, by uniform sampling followed by local
/// refinement from the best sample. Deterministic for a fixed seed.
inline EstimateReport lipschitz_constant(const NonlinearSystem& sys, const EstimationConfig& cfg = {}) {
  cfg.validate();
  require(sys.domain().dim() > 0, "lipschitz_constant: empty domain");
  EstimateReport rep;
  rep.samples = cfg.samples;
  rep.refinement_steps = cfg.refinement_steps;
  rep.seed = cfg.seed;
  rep.jacobian = detail::use_analytic(sys, cfg) ? "analytic" : "finite_difference";
  if (sys.nf() == 0 || sys.nh() == 0) {
    rep.argmax = Vector::Zero(sys.nx());
    return rep;
  }
  auto objective = [&](const Vector& x) {
    const Matrix J = detail::jacobian_at(sys, x, cfg);
    if (!J.allFinite()) throw NumericalError("lipschitz_constant: Jacobian evaluation is not finite");
    return linalg::spectral_norm(J);
  };
  std::mt19937_64 rng(cfg.seed);
  double best = -1.0;
  Vector best_x;
  for (std::size_t k = 0; k < cfg.samples; ++k) {
    Vector x = sys.domain().sample(rng);
    const double v = objective(x);
    if (v > best) {
      best = v;
      best_x = std::move(x);
    }
  }
  auto [x, v] = detail::refine(sys.domain(), objective, best_x, best, cfg.refinement_steps);
  rep.estimate = v;
  rep.argmax = x;
  return rep;
}

/// q_i = estimated sup of n_x * sum_j (df_j/dx_i)^2, each coordinate maximized separately.
/// Requires H = I so that the partials with respect to x and to the argument of f coincide.
inline QuadraticBoundReport quadratic_bound_diag(const NonlinearSystem& sys, const EstimationConfig& cfg = {}) {
  cfg.validate();
  const Index n = sys.nx();
  require(sys.H().rows() == n && sys.H().isIdentity(0.0), "quadratic_bound_diag: implemented for H = I only");
  QuadraticBoundReport rep;
  rep.samples = cfg.samples;
  rep.seed = cfg.seed;
  rep.jacobian = detail::use_analytic(sys, cfg) ? "analytic" : "finite_difference";
  rep.argmax = Matrix::Zero(n, n);
  Vector q = Vector::Zero(n);
  if (sys.nf() == 0) {
    rep.Qb = q.asDiagonal();
    return rep;
  }
  auto column_weights = [&](const Vector& x) -> Vector {
    const Matrix J = detail::jacobian_at(sys, x, cfg);
    if (!J.allFinite()) throw NumericalError("quadratic_bound_diag: Jacobian evaluation is not finite");
    return static_cast<double>(n) * J.colwise().squaredNorm().transpose();
  };
  std::mt19937_64 rng(cfg.seed);
  q.setConstant(-1.0);
  for (std::size_t k = 0; k < cfg.samples; ++k) {
    const Vector x = sys.domain().sample(rng);
    const Vector w = column_weights(x);
    for (Index i = 0; i < n; ++i)
      if (w(i) > q(i)) {
        q(i) = w(i);
        rep.argmax.col(i) = x;
      }
  }
  for (Index i = 0; i < n; ++i) {
    auto obj = [&](const Vector& x) { return column_weights(x)(i); };
    auto [x, v] = detail::refine(sys.domain(), obj, rep.argmax.col(i), q(i), cfg.refinement_steps);
    q(i) = v;
    rep.argmax.col(i) = x;
  }
  rep.Qb = q.asDiagonal();
  return rep;
}

/// Largest elementwise deviation between the analytic Jacobian and central differences over
/// sampled domain points, each entry measured relative to max(1, |finite difference|).
inline double jacobian_selfcheck(const NonlinearSystem& sys, int points = 100, std::uint64_t seed = 0,
                                 double fd_step = 1e-6) {
  require(sys.f().has_analytic_jacobian(), "jacobian_selfcheck: no analytic Jacobian registered");
  require(points >= 1, "jacobian_selfcheck: points must be >= 1");
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const Vector s = sys.H() * sys.domain().sample(rng);
    const Matrix a = sys.f().analytic_jacobian(s);
    const Matrix fd = sys.f().finite_difference_jacobian(s, fd_step);
    require(a.rows() == fd.rows() && a.cols() == fd.cols(), "jacobian_selfcheck: analytic Jacobian has wrong shape");
    const Matrix rel = (a - fd).cwiseAbs().cwiseQuotient(fd.cwiseAbs().cwiseMax(1.0));
    if (rel.size()) worst = std::max(worst, rel.maxCoeff());
  }
  return worst;
}

}  // namespace obsforge
