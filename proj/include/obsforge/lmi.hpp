#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"

namespace obsforge::lmi {

enum class Structure { symmetric, rectangular, diagonal, scalar };

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::symmetric: return "symmetric";
    case Structure::rectangular: return "rectangular";
    case Structure::diagonal: return "diagonal";
    case Structure::scalar: return "scalar";
  }
  return "?";
}

/// A matrix-valued decision variable. A scalar-structured variable of shape (k, k) stands for
/// alpha * I_k with a single free parameter alpha.
struct MatrixVariable {
  std::string id;
  Index rows = 0;
  Index cols = 0;
  Structure structure = Structure::rectangular;
  bool psd_required = false;  ///< the solver adds the strict constraint V >= eps I

  Index parameter_count() const {
    switch (structure) {
      case Structure::symmetric: return rows * (rows + 1) / 2;
      case Structure::rectangular: return rows * cols;
      case Structure::diagonal: return rows;
      case Structure::scalar: return 1;
    }
    return 0;
  }

  /// Column-major entry index -> parameter index, or -1 for structural zeros.
  std::vector<Index> entry_parameters() const {
    std::vector<Index> map(static_cast<std::size_t>(rows * cols), -1);
    Index p = 0;
    switch (structure) {
      case Structure::rectangular:
        for (Index e = 0; e < rows * cols; ++e) map[static_cast<std::size_t>(e)] = e;
        break;
      case Structure::symmetric:
        for (Index c = 0; c < cols; ++c)
          for (Index r = 0; r <= c; ++r, ++p) {
            map[static_cast<std::size_t>(r + c * rows)] = p;
            map[static_cast<std::size_t>(c + r * rows)] = p;
          }
        break;
      case Structure::diagonal:
        for (Index i = 0; i < rows; ++i) map[static_cast<std::size_t>(i + i * rows)] = i;
        break;
      case Structure::scalar:
        for (Index i = 0; i < rows; ++i) map[static_cast<std::size_t>(i + i * rows)] = 0;
        break;
    }
    return map;
  }

  Matrix from_parameters(const Vector& params) const {
    require(params.size() == parameter_count(), "variable '" + id + "': wrong parameter count");
    Matrix v = Matrix::Zero(rows, cols);
    const auto map = entry_parameters();
    for (Index e = 0; e < rows * cols; ++e)
      if (map[static_cast<std::size_t>(e)] >= 0) v(e % rows, e / rows) = params(map[static_cast<std::size_t>(e)]);
    return v;
  }
};

/// One affine term: left * op(V) * right, where op is identity or transpose, optionally
/// followed by adding its own transpose (sym(Y) = Y + Y^T).
struct Term {
  Matrix left;
  std::string variable;
  Matrix right;
  bool transpose_variable = false;
  bool symmetrize = false;
};

struct AffineMatrixExpr {
  Matrix constant;
  std::vector<Term> terms;

  Index size() const { return constant.rows(); }

  AffineMatrixExpr& add(Matrix left, std::string variable, Matrix right, bool symmetrize = false,
                        bool transpose_variable = false) {
    terms.push_back(Term{std::move(left), std::move(variable), std::move(right), transpose_variable,
                         symmetrize});
    return *this;
  }
};

enum class Sense { NSD, PSD };

struct Constraint {
  std::string label;
  AffineMatrixExpr expr;
  Sense sense = Sense::NSD;
  bool strict = false;
};

struct LmiProblem {
  std::vector<MatrixVariable> variables;
  std::vector<Constraint> constraints;
  double strictness_margin = 1e-7;  ///< base epsilon; per-constraint margin scales with the constant

  const MatrixVariable& variable(const std::string& id) const {
    for (const auto& v : variables)
      if (v.id == id) return v;
    throw ContractViolation("unknown LMI variable '" + id + "'");
  }

  bool has_variable(const std::string& id) const {
    for (const auto& v : variables)
      if (v.id == id) return true;
    return false;
  }

  LmiProblem& add_variable(MatrixVariable v) {
    require(!v.id.empty(), "LMI variable needs an id");
    require(!has_variable(v.id), "duplicate LMI variable '" + v.id + "'");
    require(v.rows >= 0 && v.cols >= 0, "LMI variable '" + v.id + "': negative shape");
    if (v.structure != Structure::rectangular)
      require(v.rows == v.cols, "LMI variable '" + v.id + "': structure requires a square shape");
    if (v.psd_required)
      require(v.structure != Structure::rectangular,
              "LMI variable '" + v.id + "': psd_required needs symmetric/diagonal/scalar structure");
    variables.push_back(std::move(v));
    return *this;
  }

  LmiProblem& add_constraint(std::string label, AffineMatrixExpr expr, Sense sense, bool strict) {
    constraints.push_back(Constraint{std::move(label), std::move(expr), sense, strict});
    return *this;
  }

  /// Explicit constraints followed by the implied V >= 0 (strict) for psd_required variables.
  std::vector<Constraint> expanded_constraints() const {
    std::vector<Constraint> out = constraints;
    for (const auto& v : variables) {
      if (!v.psd_required) continue;
      AffineMatrixExpr e{Matrix::Zero(v.rows, v.rows), {}};
      e.add(Matrix::Identity(v.rows, v.rows), v.id, Matrix::Identity(v.rows, v.rows));
      out.push_back(Constraint{"psd(" + v.id + ")", std::move(e), Sense::PSD, true});
    }
    return out;
  }

  void validate() const;
};

/// Margin eps_k = strictness_margin * (1 + ||constant||_2) for strict constraints, else 0.
inline double constraint_margin(const LmiProblem& problem, const Constraint& c) {
  if (!c.strict) return 0.0;
  return problem.strictness_margin * (1.0 + linalg::spectral_norm(c.expr.constant));
}

using Assignment = std::map<std::string, Matrix>;

namespace detail {

inline Matrix term_value(const Term& t, const Matrix& value) {
  Matrix y = t.transpose_variable ? Matrix(t.left * value.transpose() * t.right)
                                  : Matrix(t.left * value * t.right);
  if (t.symmetrize) y = linalg::sym(y);
  return y;
}

inline void check_term_shape(const Term& t, const MatrixVariable& v, Index size,
                             const std::string& where) {
  const Index inner_rows = t.transpose_variable ? v.cols : v.rows;
  const Index inner_cols = t.transpose_variable ? v.rows : v.cols;
  require(t.left.rows() == size && t.left.cols() == inner_rows,
          where + ": left coefficient of '" + v.id + "' is " + shape_str(t.left));
  require(t.right.rows() == inner_cols && t.right.cols() == size,
          where + ": right coefficient of '" + v.id + "' is " + shape_str(t.right));
}

}  // namespace detail

/// constant + sum of terms under the given assignment.
inline Matrix evaluate(const AffineMatrixExpr& expr, const Assignment& assignment) {
  Matrix out = expr.constant;
  for (const auto& t : expr.terms) {
    auto it = assignment.find(t.variable);
    if (it == assignment.end()) throw ContractViolation("evaluate: no value for variable '" + t.variable + "'");
    const Matrix& v = it->second;
    const Index inner_rows = t.transpose_variable ? v.cols() : v.rows();
    const Index inner_cols = t.transpose_variable ? v.rows() : v.cols();
    require(t.left.cols() == inner_rows && t.right.rows() == inner_cols &&
                t.left.rows() == out.rows() && t.right.cols() == out.cols(),
            "evaluate: shape mismatch for variable '" + t.variable + "'");
    out += detail::term_value(t, v);
  }
  return out;
}

inline void LmiProblem::validate() const {
  require(strictness_margin > 0.0, "LMI problem: strictness margin must be positive");
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> gauss;
  Assignment probe;
  for (const auto& v : variables) {
    Vector p(v.parameter_count());
    for (Index i = 0; i < p.size(); ++i) p(i) = gauss(rng);
    probe[v.id] = v.from_parameters(p);
  }
  for (const auto& c : constraints) {
    const Index s = c.expr.size();
    require(c.expr.constant.cols() == s, "constraint '" + c.label + "': constant must be square");
    require((c.expr.constant - c.expr.constant.transpose()).cwiseAbs().maxCoeff() <=
                1e-12 * (1.0 + c.expr.constant.cwiseAbs().maxCoeff()) || s == 0,
            "constraint '" + c.label + "': constant must be symmetric");
    for (const auto& t : c.expr.terms) detail::check_term_shape(t, variable(t.variable), s, "constraint '" + c.label + "'");
    if (s == 0) continue;
    const Matrix e = evaluate(c.expr, probe);
    const double asym = (e - e.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-9 * (1.0 + e.cwiseAbs().maxCoeff()),
            "constraint '" + c.label + "': expression is not symmetric");
  }
}

/// Signed extreme eigenvalue per constraint: lambda_max(expr) for NSD, -lambda_min(expr) for
/// PSD. Negative means satisfied with margin. Covers expanded_constraints() in order.
inline std::vector<double> residuals(const LmiProblem& problem, const Assignment& assignment) {
  std::vector<double> out;
  for (const auto& c : problem.expanded_constraints()) {
    const Matrix e = evaluate(c.expr, assignment);
    out.push_back(c.sense == Sense::NSD ? linalg::lambda_max(e) : -linalg::lambda_min(e));
  }
  return out;
}

enum class Status { Feasible, Infeasible, Inconclusive };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Feasible: return "Feasible";
    case Status::Infeasible: return "Infeasible";
    case Status::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct SolverOptions {
  int max_iterations = 120;
  double residual_tol = 1e-8;
  std::optional<double> strictness;  ///< overrides LmiProblem::strictness_margin when set
  double margin_cap = 1.0;           ///< stop once the uniform margin reaches this value
  double step_fraction = 0.95;
  bool verbose = false;
};

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;     ///< worst constraint violation relative to its target
  double wall_time_s = 0.0;
  double margin = 0.0;       ///< best uniform margin t reached
  double upper_bound = 0.0;  ///< dual bound on the achievable margin (valid when primal-feasible)
  double primal_infeasibility = 0.0;
  std::string message;
};

struct LmiSolution {
  Status status = Status::Inconclusive;
  Assignment assignment;  ///< present iff Feasible
  SolverStats stats;
  std::vector<double> residuals;
};

/// Feasible iff every constraint meets its target (-eps_k for strict, 0 otherwise) within tol.
inline bool satisfies(const LmiProblem& problem, const std::vector<double>& res, double tol,
                      double* worst = nullptr) {
  const auto cons = problem.expanded_constraints();
  double w = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cons.size(); ++k) w = std::max(w, res[k] + constraint_margin(problem, cons[k]));
  if (worst) *worst = w;
  return w <= tol;
}

// ---------------------------------------------------------------------------
// JSON dump for cross-solver debugging.

inline json term_to_json(const Term& t) {
  return json{{"left", matrix_to_json(t.left)},
              {"variable", t.variable},
              {"right", matrix_to_json(t.right)},
              {"transpose_variable", t.transpose_variable},
              {"symmetrize", t.symmetrize}};
}

inline json problem_to_json(const LmiProblem& p) {
  json vars = json::array();
  for (const auto& v : p.variables)
    vars.push_back(json{{"id", v.id},
                        {"shape", {v.rows, v.cols}},
                        {"structure", to_string(v.structure)},
                        {"psd_required", v.psd_required}});
  json cons = json::array();
  for (const auto& c : p.constraints) {
    json terms = json::array();
    for (const auto& t : c.expr.terms) terms.push_back(term_to_json(t));
    cons.push_back(json{{"label", c.label},
                        {"sense", c.sense == Sense::NSD ? "NSD" : "PSD"},
                        {"strict", c.strict},
                        {"constant", matrix_to_json(c.expr.constant)},
                        {"terms", terms}});
  }
  return json{{"variables", vars}, {"constraints", cons}, {"strictness_margin", p.strictness_margin}};
}

inline LmiProblem problem_from_json(const json& j) {
  LmiProblem p;
  p.strictness_margin = j.value("strictness_margin", 1e-7);
  for (const auto& v : j.at("variables")) {
    const std::string s = v.at("structure").get<std::string>();
    Structure st = s == "symmetric"  ? Structure::symmetric
                   : s == "diagonal" ? Structure::diagonal
                   : s == "scalar"   ? Structure::scalar
                                     : Structure::rectangular;
    p.add_variable(MatrixVariable{v.at("id").get<std::string>(), v.at("shape")[0].get<Index>(),
                                  v.at("shape")[1].get<Index>(), st, v.value("psd_required", false)});
  }
  for (const auto& c : j.at("constraints")) {
    AffineMatrixExpr e{matrix_from_json(c.at("constant"), "constant"), {}};
    for (const auto& t : c.at("terms"))
      e.terms.push_back(Term{matrix_from_json(t.at("left"), "left"), t.at("variable").get<std::string>(),
                             matrix_from_json(t.at("right"), "right"),
                             t.value("transpose_variable", false), t.value("symmetrize", false)});
    p.add_constraint(c.value("label", ""), std::move(e),
                     c.at("sense").get<std::string>() == "PSD" ? Sense::PSD : Sense::NSD,
                     c.value("strict", false));
  }
  return p;
}

}  // namespace obsforge::lmi
