#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"

namespace obsforge {

/// A named map f : R^{n_in} -> R^{n_out} built from the catalog, with an optional analytic
/// Jacobian. The (name, params) pair is the serialized identity; the callables are derived.
class Nonlinearity {
 public:
  using Evaluator = std::function<Vector(const Vector&)>;
  using JacobianEvaluator = std::function<Matrix(const Vector&)>;

  Nonlinearity() = default;
  Nonlinearity(std::string name, json params, Index input_dim, Index output_dim, Evaluator f,
               JacobianEvaluator jac = {})
      : name_(std::move(name)),
        params_(std::move(params)),
        input_dim_(input_dim),
        output_dim_(output_dim),
        f_(std::move(f)),
        jac_(std::move(jac)) {}

  const std::string& name() const { return name_; }
  const json& params() const { return params_; }
  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return output_dim_; }
  bool has_analytic_jacobian() const { return static_cast<bool>(jac_); }

  Vector operator()(const Vector& s) const {
    require(s.size() == input_dim_, "nonlinearity '" + name_ + "': expected input of length " +
                                        std::to_string(input_dim_) + ", got " +
                                        std::to_string(s.size()));
    if (output_dim_ == 0) return Vector(0);
    return f_(s);
  }

  Matrix analytic_jacobian(const Vector& s) const {
    require(has_analytic_jacobian(), "nonlinearity '" + name_ + "' has no analytic Jacobian");
    require(s.size() == input_dim_, "nonlinearity '" + name_ + "': bad Jacobian point");
    return jac_(s);
  }

  /// Central differences with step h = rel_step * (1 + ||s||).
  Matrix finite_difference_jacobian(const Vector& s, double rel_step = 1e-6) const {
    require(rel_step > 0.0, "finite-difference step must be positive");
    const double h = rel_step * (1.0 + s.norm());
    Matrix jac(output_dim_, input_dim_);
    Vector probe = s;
    for (Index k = 0; k < input_dim_; ++k) {
      probe(k) = s(k) + h;
      const Vector up = (*this)(probe);
      probe(k) = s(k) - h;
      const Vector down = (*this)(probe);
      probe(k) = s(k);
      jac.col(k) = (up - down) / (2.0 * h);
    }
    return jac;
  }

  Matrix jacobian(const Vector& s) const {
    return has_analytic_jacobian() ? analytic_jacobian(s) : finite_difference_jacobian(s);
  }

  json to_json() const { return json{{"name", name_}, {"params", params_}}; }

 private:
  std::string name_;
  json params_ = json::object();
  Index input_dim_ = 0;
  Index output_dim_ = 0;
  Evaluator f_;
  JacobianEvaluator jac_;
};

/// Registry of nonlinearity factories keyed by name.
class NonlinearityCatalog {
 public:
  using Factory = std::function<Nonlinearity(const json& params)>;

  static NonlinearityCatalog& instance() {
    static NonlinearityCatalog catalog;
    return catalog;
  }

  void add(const std::string& name, Factory factory) {
    std::lock_guard<std::mutex> lock(mutex_);
    factories_[name] = std::move(factory);
  }

  bool contains(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return factories_.count(name) > 0;
  }

  Nonlinearity make(const std::string& name, const json& params) const {
    Factory factory;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = factories_.find(name);
      if (it == factories_.end()) throw ContractViolation("unknown nonlinearity '" + name + "'");
      factory = it->second;
    }
    return factory(params);
  }

 private:
  NonlinearityCatalog();

  mutable std::mutex mutex_;
  std::map<std::string, Factory> factories_;
};

inline Nonlinearity make_nonlinearity(const std::string& name, const json& params) {
  return NonlinearityCatalog::instance().make(name, params);
}

inline Nonlinearity nonlinearity_from_json(const json& j) {
  require(j.is_object() && j.contains("name"), "nonlinearity: expected {\"name\", \"params\"}");
  return make_nonlinearity(j.at("name").get<std::string>(),
                           j.contains("params") ? j.at("params") : json::object());
}

// ---------------------------------------------------------------------------
// Built-in catalog entries.

inline Nonlinearity zero_nonlinearity(Index input_dim, Index output_dim) {
  return make_nonlinearity("zero", json{{"n_in", input_dim}, {"n_out", output_dim}});
}

inline Nonlinearity linear_nonlinearity(const Matrix& F) {
  return make_nonlinearity("linear", json{{"F", matrix_to_json(F)}});
}

/// Elementwise polynomial p(s_i) = sum_k c_k s_i^k on R^dim.
inline Nonlinearity polynomial_nonlinearity(const std::vector<double>& coefficients, Index dim) {
  return make_nonlinearity("polynomial", json{{"coefficients", coefficients}, {"dim", dim}});
}

/// Networked mass-action term diag(x_I + x_R) B W x_I with x = [x_I; x_R].
inline Nonlinearity sir_mass_action_nonlinearity(const Matrix& W, const Vector& beta) {
  return make_nonlinearity("sir_mass_action",
                           json{{"W", matrix_to_json(W)}, {"beta", vector_to_json(beta)}});
}

namespace detail {

inline Index dim_param(const json& params, const char* key) {
  require(params.contains(key) && params.at(key).is_number_integer(),
          std::string("nonlinearity params: missing integer '") + key + "'");
  const auto v = params.at(key).get<long long>();
  require(v >= 0, std::string("nonlinearity params: negative '") + key + "'");
  return static_cast<Index>(v);
}

inline Nonlinearity make_zero(const json& params) {
  const Index n_in = dim_param(params, "n_in");
  const Index n_out = dim_param(params, "n_out");
  return Nonlinearity(
      "zero", params, n_in, n_out, [n_out](const Vector&) { return Vector::Zero(n_out).eval(); },
      [n_in, n_out](const Vector&) { return Matrix::Zero(n_out, n_in).eval(); });
}

inline Nonlinearity make_linear(const json& params) {
  require(params.contains("F"), "linear nonlinearity: missing 'F'");
  const Matrix F = matrix_from_json(params.at("F"), "linear.F");
  return Nonlinearity(
      "linear", params, F.cols(), F.rows(), [F](const Vector& s) { return (F * s).eval(); },
      [F](const Vector&) { return F; });
}

inline Nonlinearity make_polynomial(const json& params) {
  require(params.contains("coefficients") && params.at("coefficients").is_array(),
          "polynomial nonlinearity: missing 'coefficients'");
  const Index dim = dim_param(params, "dim");
  const std::vector<double> c = params.at("coefficients").get<std::vector<double>>();
  auto value = [c](double s) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * s + *it;
    return acc;
  };
  auto slope = [c](double s) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * s + static_cast<double>(k) * c[k];
    return acc;
  };
  return Nonlinearity(
      "polynomial", params, dim, dim, [value](const Vector& s) { return s.unaryExpr(value).eval(); },
      [slope](const Vector& s) { return Matrix(s.unaryExpr(slope).asDiagonal()); });
}

inline Nonlinearity make_sir_mass_action(const json& params) {
  require(params.contains("W") && params.contains("beta"),
          "sir_mass_action nonlinearity: needs 'W' and 'beta'");
  const Matrix W = matrix_from_json(params.at("W"), "sir_mass_action.W");
  const Vector beta = vector_from_json(params.at("beta"), "sir_mass_action.beta");
  const Index n = beta.size();
  require(W.rows() == n && W.cols() == n, "sir_mass_action: W must be n x n with n = len(beta)");
  const Matrix BW = beta.asDiagonal() * W;
  auto f = [BW, n](const Vector& x) -> Vector {
    const auto xi = x.head(n);
    const auto xr = x.tail(n);
    return ((xi + xr).array() * (BW * xi).array()).matrix();
  };
  auto jac = [BW, n](const Vector& x) -> Matrix {
    const Vector xi = x.head(n);
    const Vector xr = x.tail(n);
    const Vector pressure = BW * xi;
    Matrix J(n, 2 * n);
    J.leftCols(n) = (xi + xr).asDiagonal() * BW;
    J.leftCols(n).diagonal() += pressure;
    J.rightCols(n) = pressure.asDiagonal();
    return J;
  };
  return Nonlinearity("sir_mass_action", params, 2 * n, n, f, jac);
}

// [f(Hx); x]
inline Nonlinearity make_shift_augment(const json& params) {
  require(params.contains("inner") && params.contains("H"), "shift_augment: needs 'inner' and 'H'");
  const Nonlinearity inner = nonlinearity_from_json(params.at("inner"));
  const Matrix H = matrix_from_json(params.at("H"), "shift_augment.H");
  require(H.rows() == inner.input_dim(), "shift_augment: H rows must match inner input");
  const Index nx = H.cols();
  const Index nf = inner.output_dim();
  auto f = [inner, H, nx, nf](const Vector& x) -> Vector {
    Vector out(nf + nx);
    out.head(nf) = inner(H * x);
    out.tail(nx) = x;
    return out;
  };
  Nonlinearity::JacobianEvaluator jac;
  if (inner.has_analytic_jacobian()) {
    jac = [inner, H, nx, nf](const Vector& x) -> Matrix {
      Matrix J(nf + nx, nx);
      J.topRows(nf) = inner.analytic_jacobian(H * x) * H;
      J.bottomRows(nx).setIdentity();
      return J;
    };
  }
  return Nonlinearity("shift_augment", params, nx, nf + nx, f, jac);
}

// G f(Hx) - Delta x
inline Nonlinearity make_shift_absorb(const json& params) {
  require(params.contains("inner") && params.contains("G") && params.contains("H") &&
              params.contains("Delta"),
          "shift_absorb: needs 'inner', 'G', 'H', 'Delta'");
  const Nonlinearity inner = nonlinearity_from_json(params.at("inner"));
  const Matrix G = matrix_from_json(params.at("G"), "shift_absorb.G");
  const Matrix H = matrix_from_json(params.at("H"), "shift_absorb.H");
  const Matrix Delta = matrix_from_json(params.at("Delta"), "shift_absorb.Delta");
  const Index nx = Delta.rows();
  require(Delta.cols() == nx && H.cols() == nx && H.rows() == inner.input_dim(),
          "shift_absorb: inconsistent dimensions");
  require(G.rows() == nx && (G.cols() == inner.output_dim() || inner.output_dim() == 0),
          "shift_absorb: G must be n_x x n_f");
  auto f = [inner, G, H, Delta](const Vector& x) -> Vector {
    Vector out = -Delta * x;
    if (inner.output_dim() > 0) out += G * inner(H * x);
    return out;
  };
  Nonlinearity::JacobianEvaluator jac;
  if (inner.has_analytic_jacobian()) {
    jac = [inner, G, H, Delta](const Vector& x) -> Matrix {
      Matrix J = -Delta;
      if (inner.output_dim() > 0) J += G * inner.analytic_jacobian(H * x) * H;
      return J;
    };
  }
  return Nonlinearity("shift_absorb", params, nx, nx, f, jac);
}

}  // namespace detail

inline NonlinearityCatalog::NonlinearityCatalog() {
  factories_["zero"] = detail::make_zero;
  factories_["linear"] = detail::make_linear;
  factories_["polynomial"] = detail::make_polynomial;
  factories_["sir_mass_action"] = detail::make_sir_mass_action;
  factories_["shift_augment"] = detail::make_shift_augment;
  factories_["shift_absorb"] = detail::make_shift_absorb;
}

}  // namespace obsforge
