#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/nonlinearity.hpp"
#include "obsforge/system_model.hpp"

namespace obsforge::sir {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct GeneratorParams {
  Index n = 10;
  double p_edge = 0.5;
  Interval w_range{0.0, 2.0};
  Interval beta_range{0.0, 1.0};
  Interval delta_range{0.0, 1.0};
  std::uint64_t seed = 0;
  bool asymmetric = false;  // draw w_ij and w_ji independently
  double delta_gap = 1e-6;
};

/// Weighted contact graph with per-node susceptibility beta and recovery rate delta.
struct SirNetwork {
  Index n = 0;
  Matrix W;
  Vector beta;
  Vector delta;
  GeneratorParams generator;  // how the instance was drawn (informational)

  void validate() const {
    require(n >= 1, "SIR network: n must be >= 1");
    require(W.rows() == n && W.cols() == n, "SIR network: W must be n x n");
    require(beta.size() == n && delta.size() == n, "SIR network: beta and delta need n entries");
    require((W.array() >= 0.0).all(), "SIR network: W must be elementwise nonnegative");
    require((beta.array() > 0.0).all(), "SIR network: beta must be positive");
    require((delta.array() > 0.0).all(), "SIR network: delta must be positive");
  }

  bool delta_distinct(double gap = 0.0) const {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < i; ++j)
        if (std::abs(delta(i) - delta(j)) <= gap) return false;
    return true;
  }
};

struct SirState {
  Vector x_I;
  Vector x_R;

  Vector stacked() const {
    Vector x(x_I.size() + x_R.size());
    x << x_I, x_R;
    return x;
  }
  static SirState from_stacked(const Vector& x) {
    require(x.size() % 2 == 0, "SIR state: stacked vector must have even length");
    const Index n = x.size() / 2;
    return SirState{x.head(n), x.tail(n)};
  }
};

inline SirNetwork random_network(const GeneratorParams& g) {
  require(g.n >= 1, "random_network: n must be >= 1");
  require(g.p_edge >= 0.0 && g.p_edge <= 1.0, "random_network: p_edge must lie in [0, 1]");
  for (const Interval* iv : {&g.w_range, &g.beta_range, &g.delta_range})
    require(std::isfinite(iv->lo) && std::isfinite(iv->hi) && iv->lo < iv->hi,
            "random_network: degenerate interval");
  require(g.w_range.lo >= 0.0, "random_network: weights must be nonnegative");
  require(g.beta_range.hi > 0.0 && g.delta_range.hi > 0.0, "random_network: rate ranges must reach above 0");
  require(static_cast<double>(g.n) * g.delta_gap < g.delta_range.hi - g.delta_range.lo,
          "random_network: delta range too narrow for distinct rates");

  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const Interval& iv) { return iv.lo + (iv.hi - iv.lo) * unit(rng); };
  auto draw_positive = [&](const Interval& iv) {
    double v = draw(iv);
    while (v <= 0.0) v = draw(iv);
    return v;
  };

  SirNetwork net;
  net.n = g.n;
  net.generator = g;
  net.W = Matrix::Zero(g.n, g.n);
  for (Index i = 0; i < g.n; ++i) {
    net.W(i, i) = draw(g.w_range);
    for (Index j = i + 1; j < g.n; ++j) {
      if (unit(rng) >= g.p_edge) continue;
      net.W(i, j) = draw(g.w_range);
      net.W(j, i) = g.asymmetric ? draw(g.w_range) : net.W(i, j);
    }
  }
  net.beta.resize(g.n);
  net.delta.resize(g.n);
  for (Index i = 0; i < g.n; ++i) net.beta(i) = draw_positive(g.beta_range);
  for (Index i = 0; i < g.n; ++i) {
    bool clash = true;
    while (clash) {
      net.delta(i) = draw_positive(g.delta_range);
      clash = false;
      for (Index j = 0; j < i; ++j) clash = clash || std::abs(net.delta(i) - net.delta(j)) < g.delta_gap;
    }
  }
  return net;
}

/// A = [[BW - D, 0], [D, 0]], G = [-I; 0], H = I, C = [0 I], f = diag(x_I + x_R) B W x_I.
inline NonlinearSystem build_system(const SirNetwork& net) {
  net.validate();
  const Index n = net.n;
  const Matrix BW = net.beta.asDiagonal() * net.W;
  Matrix A = Matrix::Zero(2 * n, 2 * n);
  A.topLeftCorner(n, n) = BW;
  A.topLeftCorner(n, n).diagonal() -= net.delta;
  A.bottomLeftCorner(n, n).diagonal() = net.delta;
  Matrix G = Matrix::Zero(2 * n, n);
  G.topRows(n) = -Matrix::Identity(n, n);
  Matrix C = Matrix::Zero(n, 2 * n);
  C.rightCols(n) = Matrix::Identity(n, n);
  return NonlinearSystem(std::move(A), std::move(G), Matrix::Identity(2 * n, 2 * n), std::move(C),
                         sir_mass_action_nonlinearity(net.W, net.beta),
                         StateDomain::simplex(n, "per-node simplex x_I, x_R >= 0, x_I + x_R <= 1"));
}

/// Per-node evaluation of the SIR equations, independent of the matrix assembly.
inline std::pair<Vector, Vector> sir_vector_field(const SirNetwork& net, const SirState& s) {
  const Index n = net.n;
  require(s.x_I.size() == n && s.x_R.size() == n, "sir_vector_field: state has wrong size");
  Vector dI(n), dR(n);
  for (Index i = 0; i < n; ++i) {
    double pressure = 0.0;
    for (Index j = 0; j < n; ++j) pressure += net.beta(i) * net.W(i, j) * s.x_I(j);
    const double susceptible = 1.0 - s.x_I(i) - s.x_R(i);
    dI(i) = susceptible * pressure - net.delta(i) * s.x_I(i);
    dR(i) = net.delta(i) * s.x_I(i);
  }
  return {dI, dR};
}

inline json network_to_json(const SirNetwork& net) {
  const auto& g = net.generator;
  return json{{"n", net.n},
              {"W", matrix_to_json(net.W)},
              {"beta", vector_to_json(net.beta)},
              {"delta", vector_to_json(net.delta)},
              {"seed", g.seed},
              {"generator",
               {{"p_edge", g.p_edge},
                {"w_range", {g.w_range.lo, g.w_range.hi}},
                {"beta_range", {g.beta_range.lo, g.beta_range.hi}},
                {"delta_range", {g.delta_range.lo, g.delta_range.hi}},
                {"asymmetric", g.asymmetric},
                {"delta_gap", g.delta_gap},
                {"symmetric_weights", !g.asymmetric},
                {"self_loop_weights", "drawn from w_range"}}}};
}

inline SirNetwork network_from_json(const json& j) {
  SirNetwork net;
  net.n = j.at("n").get<Index>();
  net.W = matrix_from_json(j.at("W"), "W");
  net.beta = vector_from_json(j.at("beta"), "beta");
  net.delta = vector_from_json(j.at("delta"), "delta");
  net.generator.n = net.n;
  net.generator.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    auto iv = [&](const char* key, Interval def) {
      if (!g.contains(key)) return def;
      return Interval{g.at(key)[0].get<double>(), g.at(key)[1].get<double>()};
    };
    net.generator.p_edge = g.value("p_edge", 0.5);
    net.generator.w_range = iv("w_range", net.generator.w_range);
    net.generator.beta_range = iv("beta_range", net.generator.beta_range);
    net.generator.delta_range = iv("delta_range", net.generator.delta_range);
    net.generator.asymmetric = g.value("asymmetric", false);
    net.generator.delta_gap = g.value("delta_gap", 1e-6);
  }
  net.validate();
  return net;
}

}  // namespace obsforge::sir
