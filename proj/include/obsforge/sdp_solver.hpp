#pragma once

#include <algorithm>
#include <chrono>
#include <iterator>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/lmi.hpp"

// Feasibility is decided by maximizing a uniform margin t over all constraints:
//
//   maximize t  s.t.  S_k(y, t) = C_k - A_k(y) - t I  >= 0   for every constraint block k,
//
// where C_k and A_k absorb the sense of constraint k and its strictness shift. Starting from
// y = 0 and t small enough, the iterates stay dual-feasible; the primal matrices X_k are driven
// to feasibility by an HKM primal-dual path-following method with Mehrotra correction.
// t >= 0 is a feasible point; a primal-feasible X with <C, X> < 0 bounds every t below zero
// and is reported as the infeasibility certificate.

namespace obsforge::lmi {
namespace detail {

struct Piece {
  Index var = 0;
  Matrix left;
  Matrix right;
  bool swapped = false;  // value for entry (a, b) is left * E_ba * right
  double coeff = 1.0;
};

// Pieces acting on the same variable through the same orientation share one entry-space
// Schur block, which is scattered to parameter space once.
struct PieceGroup {
  Index var = 0;
  bool transposed = false;
  std::vector<std::size_t> pieces;
};

struct Block {
  Index size = 0;
  Matrix constant;
  std::vector<Piece> pieces;
  std::vector<PieceGroup> groups;
};

struct VarLayout {
  MatrixVariable def;
  Index offset = 0;
  std::vector<Index> entry_param;       // global parameter index per column-major entry, -1 if none
  std::vector<Index> entry_param_t;     // same for the entries of V^T
};

class SdpModel {
 public:
  SdpModel(const LmiProblem& problem, const std::vector<Constraint>& constraints) {
    Index offset = 0;
    for (const auto& v : problem.variables) {
      VarLayout layout{v, offset, v.entry_parameters(), {}};
      for (auto& p : layout.entry_param)
        if (p >= 0) p += offset;
      layout.entry_param_t.resize(layout.entry_param.size());
      for (Index i = 0; i < v.cols; ++i)
        for (Index j = 0; j < v.rows; ++j)
          layout.entry_param_t[static_cast<std::size_t>(i + j * v.cols)] =
              layout.entry_param[static_cast<std::size_t>(j + i * v.rows)];
      offset += v.parameter_count();
      vars_.push_back(std::move(layout));
    }
    m_ = offset;
    for (const auto& c : constraints) {
      const double sign = c.sense == Sense::NSD ? -1.0 : 1.0;  // S = sign * expr - shift
      Block b;
      b.size = c.expr.size();
      b.constant = sign * c.expr.constant -
                   constraint_margin(problem, c) * Matrix::Identity(b.size, b.size);
      b.constant = linalg::symmetric_part(b.constant);
      for (const auto& t : c.expr.terms) {
        const Index vi = var_index(t.variable);
        b.pieces.push_back(Piece{vi, t.left, t.right, t.transpose_variable, -sign});
        if (t.symmetrize)
          b.pieces.push_back(Piece{vi, t.right.transpose(), t.left.transpose(), !t.transpose_variable, -sign});
      }
      for (std::size_t q = 0; q < b.pieces.size(); ++q) {
        const Piece& pc = b.pieces[q];
        const VarLayout& vl = vars_[static_cast<std::size_t>(pc.var)];
        // Vectors have identical maps in both orientations but still change shape.
        const bool tr = pc.swapped && (vl.def.rows != vl.def.cols || vl.entry_param_t != vl.entry_param);
        auto it = std::find_if(b.groups.begin(), b.groups.end(),
                               [&](const PieceGroup& g) { return g.var == pc.var && g.transposed == tr; });
        if (it == b.groups.end()) {
          b.groups.push_back(PieceGroup{pc.var, tr, {}});
          it = std::prev(b.groups.end());
        }
        it->pieces.push_back(q);
      }
      total_size_ += b.size;
      blocks_.push_back(std::move(b));
    }
  }

  Index m() const { return m_; }
  Index total_size() const { return total_size_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  Index var_index(const std::string& id) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].def.id == id) return static_cast<Index>(i);
    throw ContractViolation("LMI term references undeclared variable '" + id + "'");
  }

  std::vector<Matrix> variable_values(const Vector& y) const {
    std::vector<Matrix> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(v.def.from_parameters(y.segment(v.offset, v.def.parameter_count())));
    return out;
  }

  Assignment assignment(const Vector& y) const {
    Assignment a;
    const auto values = variable_values(y);
    for (std::size_t i = 0; i < vars_.size(); ++i) a[vars_[i].def.id] = values[i];
    return a;
  }

  /// sum_i y_i A_i + t I, block by block.
  std::vector<Matrix> apply(const Vector& y, double t) const {
    const auto values = variable_values(y);
    std::vector<Matrix> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_) {
      Matrix acc = t * Matrix::Identity(b.size, b.size);
      for (const auto& p : b.pieces) {
        const Matrix& v = values[static_cast<std::size_t>(p.var)];
        if (p.swapped)
          acc.noalias() += p.coeff * (p.left * v.transpose() * p.right);
        else
          acc.noalias() += p.coeff * (p.left * v * p.right);
      }
      out.push_back(linalg::symmetric_part(acc));
    }
    return out;
  }

  std::vector<Matrix> slack(const Vector& y, double t) const {
    auto a = apply(y, t);
    for (std::size_t k = 0; k < blocks_.size(); ++k) a[k] = blocks_[k].constant - a[k];
    return a;
  }

  /// (<A_i, Y>)_i followed by sum_k tr(Y_k). Y is taken to be symmetric.
  Vector adjoint(const std::vector<Matrix>& Y) const {
    Vector out = Vector::Zero(m_ + 1);
    std::vector<Matrix> grads;
    for (const auto& v : vars_) grads.push_back(Matrix::Zero(v.def.rows, v.def.cols));
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      for (const auto& p : b.pieces) {
        const Matrix g = p.left.transpose() * Y[k] * p.right.transpose();
        if (p.swapped)
          grads[static_cast<std::size_t>(p.var)] += p.coeff * g.transpose();
        else
          grads[static_cast<std::size_t>(p.var)] += p.coeff * g;
      }
      out(m_) += Y[k].trace();
    }
    for (std::size_t vi = 0; vi < vars_.size(); ++vi) {
      const auto& v = vars_[vi];
      for (std::size_t e = 0; e < v.entry_param.size(); ++e)
        if (v.entry_param[e] >= 0) out(v.entry_param[e]) += grads[vi](static_cast<Index>(e));
    }
    return out;
  }

  /// HKM Schur complement M_ij = tr(A_i X A_j Z) over (y, t).
  ///
  /// Each entry of a piece is rank one, L e_i e_j^T R, so for pieces a and c
  ///   tr(A_a(i,j) X A_c(k,l) Z) = (R_a X L_c)(j,k) * (R_c Z L_a)(l,i),
  /// indices taken in the orientation the piece applies to its variable.
  Matrix schur(const std::vector<Matrix>& X, const std::vector<Matrix>& Z) const {
    Matrix M = Matrix::Zero(m_ + 1, m_ + 1);
    std::vector<Matrix> XZ;
    Matrix F;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const auto& b = blocks_[k];
      XZ.push_back(linalg::symmetric_part(X[k] * Z[k]));
      const auto np = b.pieces.size();
      std::vector<Matrix> XL(np), ZL(np);
      for (std::size_t q = 0; q < np; ++q) {
        XL[q] = X[k] * b.pieces[q].left;
        ZL[q] = Z[k] * b.pieces[q].left;
      }
      for (const auto& ga : b.groups) {
        const VarLayout& va = vars_[static_cast<std::size_t>(ga.var)];
        const Index ra = ga.transposed ? va.def.cols : va.def.rows;  // orientation shape
        const Index ca = ga.transposed ? va.def.rows : va.def.cols;
        for (const auto& gc : b.groups) {
          const VarLayout& vc = vars_[static_cast<std::size_t>(gc.var)];
          const Index rc = gc.transposed ? vc.def.cols : vc.def.rows;
          const Index cc = gc.transposed ? vc.def.rows : vc.def.cols;
          F.setZero(ra * ca, rc * cc);
          for (std::size_t pa : ga.pieces) {
            for (std::size_t pc : gc.pieces) {
              const Piece& a = b.pieces[pa];
              const Piece& c = b.pieces[pc];
              const double w = a.coeff * c.coeff;
              // Oriented as in the group: a swapped piece on a symmetric variable reads V^T = V.
              const Matrix phi1t = (a.right * XL[pc]).transpose();      // (rows_c x cols_a)
              const Matrix phi2t = w * (c.right * ZL[pa]).transpose();  // (rows_a x cols_c)
              for (Index l = 0; l < cc; ++l)
                for (Index j = 0; j < ca; ++j)
                  F.block(j * ra, l * rc, ra, rc).noalias() += phi2t.col(l) * phi1t.col(j).transpose();
            }
          }
          scatter(M, F, ga.transposed ? va.entry_param_t : va.entry_param,
                  gc.transposed ? vc.entry_param_t : vc.entry_param);
        }
      }
    }
    // M is symmetric up to rounding; only its lower triangle is read by the factorization.
    const Vector mt = adjoint(XZ);
    M.col(m_) = mt;
    M.row(m_) = mt.transpose();
    return M;
  }

 private:
  static void scatter(Matrix& M, const Matrix& F, const std::vector<Index>& map_a, const std::vector<Index>& map_c) {
    for (Index e2 = 0; e2 < F.cols(); ++e2) {
      const Index pc = map_c[static_cast<std::size_t>(e2)];
      if (pc < 0) continue;
      auto col = M.col(pc);
      const auto fcol = F.col(e2);
      for (Index e1 = 0; e1 < F.rows(); ++e1) {
        const Index pa = map_a[static_cast<std::size_t>(e1)];
        if (pa >= 0) col(pa) += fcol(e1);
      }
    }
  }

  std::vector<VarLayout> vars_;
  std::vector<Block> blocks_;
  Index m_ = 0;
  Index total_size_ = 0;
};

inline double dot(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].cwiseProduct(b[k]).sum();
  return s;
}

/// Largest alpha in (0, inf] with V + alpha dV >= 0, given V = L L^T.
inline double max_step(const std::vector<Eigen::LLT<Matrix>>& chol, const std::vector<Matrix>& dV) {
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dV.size(); ++k) {
    if (dV[k].size() == 0) continue;
    const Matrix Linv_dV = chol[k].matrixL().solve(dV[k]);
    const Matrix T = chol[k].matrixL().solve(Linv_dV.transpose());
    const double lmin = linalg::lambda_min(T);
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  return alpha;
}

inline bool factor_all(const std::vector<Matrix>& V, std::vector<Eigen::LLT<Matrix>>& out) {
  out.clear();
  for (const auto& v : V) {
    out.emplace_back(v);
    if (v.size() > 0 && out.back().info() != Eigen::Success) return false;
  }
  return true;
}

}  // namespace detail

/// Decides feasibility of an LMI problem. Infeasible is returned only together with a
/// primal certificate; iteration limits and numerical breakdown give Inconclusive.
inline LmiSolution solve_feasibility(const LmiProblem& input, const SolverOptions& options = {}) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  LmiProblem problem = input;
  if (options.strictness) problem.strictness_margin = *options.strictness;
  problem.validate();
  require(options.residual_tol > 0.0, "solver: residual_tol must be positive");

  const auto constraints = problem.expanded_constraints();
  const detail::SdpModel model(problem, constraints);
  const auto& blocks = model.blocks();
  const Index m = model.m();
  const double n_tot = static_cast<double>(std::max<Index>(1, model.total_size()));
  const double tol = options.residual_tol;

  LmiSolution result;
  auto finish = [&](Status status, const std::string& message) {
    result.status = status;
    result.stats.message = message;
    result.stats.wall_time_s = std::chrono::duration<double>(clock::now() - started).count();
    if (status != Status::Feasible) result.assignment.clear();
    return result;
  };

  if (model.total_size() == 0) {
    result.assignment = model.assignment(Vector::Zero(m));
    return finish(Status::Feasible, "no constraints");
  }

  // Dual-feasible start: y = 0 and t below every constant's spectrum.
  double lmin_c = std::numeric_limits<double>::infinity();
  double c_scale = 0.0;
  for (const auto& b : blocks) {
    if (b.size == 0) continue;
    lmin_c = std::min(lmin_c, linalg::lambda_min(b.constant));
    c_scale = std::max(c_scale, b.constant.cwiseAbs().maxCoeff());
  }
  Vector y = Vector::Zero(m);
  double t = lmin_c - 1.0;
  std::vector<Matrix> X;
  for (const auto& b : blocks) X.push_back(Matrix::Identity(b.size, b.size) / n_tot);
  Vector rhs_b = Vector::Zero(m + 1);
  rhs_b(m) = 1.0;

  bool have_feasible = false;
  Vector best_y;
  double best_t = -std::numeric_limits<double>::infinity();
  std::vector<double> best_res;

  auto check_point = [&](const Vector& yy, double tt) -> bool {
    const Assignment a = model.assignment(yy);
    const auto res = residuals(problem, a);
    double worst = 0.0;
    if (!satisfies(problem, res, tol, &worst)) return false;
    if (!have_feasible || tt > best_t) {
      have_feasible = true;
      best_y = yy;
      best_t = tt;
      best_res = res;
      result.stats.residual = worst;
    }
    return true;
  };
  auto return_feasible = [&](const std::string& message) {
    result.assignment = model.assignment(best_y);
    result.residuals = best_res;
    result.stats.margin = best_t;
    return finish(Status::Feasible, message);
  };

  std::vector<Eigen::LLT<Matrix>> cholS, cholX;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.stats.iterations = iter;
    const std::vector<Matrix> S = model.slack(y, t);
    if (!detail::factor_all(S, cholS)) return have_feasible ? return_feasible("slack lost definiteness")
                                                            : finish(Status::Inconclusive, "slack lost definiteness");
    if (!detail::factor_all(X, cholX)) return have_feasible ? return_feasible("primal lost definiteness")
                                                            : finish(Status::Inconclusive, "primal lost definiteness");
    std::vector<Matrix> Z;
    for (std::size_t k = 0; k < blocks.size(); ++k)
      Z.push_back(cholS[k].solve(Matrix::Identity(blocks[k].size, blocks[k].size)));

    const double mu = detail::dot(X, S) / n_tot;
    const Vector ax = model.adjoint(X);
    const Vector rp = rhs_b - ax;
    const double pinf = rp.norm();
    double cx = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) cx += blocks[k].constant.cwiseProduct(X[k]).sum();
    const double trx = ax(m);
    // Any dual-feasible (y', t') obeys t' tr(X) <= <C, X> - y'^T A_y(X); use |y| as the reach.
    const double bound = (cx + y.norm() * ax.head(m).norm()) / std::max(trx, 1e-300);
    result.stats.upper_bound = bound;
    result.stats.primal_infeasibility = pinf;
    result.stats.margin = t;

    if (options.verbose)
      std::fprintf(stderr, "it %3d  t % .6e  ub % .6e  mu %.2e  pinf %.2e\n", iter, t, bound, mu, pinf);

    if (t >= -tol && check_point(y, t)) {
      const bool converged = pinf < 1e-8 && std::abs(bound - t) <= 1e-9 * (1.0 + std::abs(t));
      if (t <= 0.0 || t >= options.margin_cap || converged || (pinf < 1e-6 && t >= 0.5 * bound))
        return return_feasible("margin reached");
    }
    if (pinf < 1e-9 && bound < -2.0 * tol) {
      result.stats.margin = t;
      return finish(Status::Infeasible, "primal certificate bounds the margin below zero");
    }
    if (pinf < 1e-9 && mu < 1e-13 * (1.0 + c_scale)) {
      if (have_feasible) return return_feasible("converged");
      return finish(Status::Inconclusive, "converged to a margin within tolerance of zero");
    }

    Matrix M = model.schur(X, Z);
    const double reg_base = std::max(1e-300, M.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<Matrix> cholM;
    bool ok = false;
    for (double reg = 1e-15; reg < 1e-5; reg *= 100.0) {
      Matrix Mr = M;
      Mr.diagonal().array() += reg * reg_base;
      cholM.compute(Mr);
      if (cholM.info() == Eigen::Success) {
        ok = true;
        break;
      }
    }
    if (!ok) return have_feasible ? return_feasible("Schur complement breakdown")
                                  : finish(Status::Inconclusive, "Schur complement breakdown");

    auto direction = [&](const Vector& rhs, std::vector<Matrix>& dX, std::vector<Matrix>& dS, Vector& dy,
                         double sigma_mu, const std::vector<Matrix>* corr) {
      dy = cholM.solve(rhs);
      const auto ady = model.apply(dy.head(m), dy(m));
      dS.assign(blocks.size(), Matrix());
      dX.assign(blocks.size(), Matrix());
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        dS[k] = -ady[k];
        Matrix d = -X[k] - X[k] * dS[k] * Z[k];
        if (sigma_mu != 0.0) d += sigma_mu * Z[k];
        if (corr) d -= (*corr)[k];
        dX[k] = linalg::symmetric_part(d);
      }
    };

    // Predictor.
    std::vector<Matrix> dXp, dSp;
    Vector dyp;
    direction(rhs_b, dXp, dSp, dyp, 0.0, nullptr);
    const double ap = std::min(1.0, detail::max_step(cholX, dXp));
    const double ad = std::min(1.0, detail::max_step(cholS, dSp));
    std::vector<Matrix> Xa(X.size()), Sa(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) {
      Xa[k] = X[k] + ap * dXp[k];
      Sa[k] = S[k] + ad * dSp[k];
    }
    const double mu_aff = detail::dot(Xa, Sa) / n_tot;
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector.
    std::vector<Matrix> corr(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) corr[k] = dXp[k] * dSp[k] * Z[k];
    std::vector<Matrix> corr_sym(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) corr_sym[k] = linalg::symmetric_part(corr[k]);
    Vector rhs = rhs_b - sigma * mu * model.adjoint(Z) + model.adjoint(corr_sym);
    std::vector<Matrix> dX, dS;
    Vector dy;
    direction(rhs, dX, dS, dy, sigma * mu, &corr);

    const double gamma = options.step_fraction;
    const double step_p = std::min(1.0, gamma * detail::max_step(cholX, dX));
    double step_d = std::min(1.0, gamma * detail::max_step(cholS, dS));
    if (step_p < 1e-10 && step_d < 1e-10)
      return have_feasible ? return_feasible("step length collapsed")
                           : finish(Status::Inconclusive, "step length collapsed");

    // Unbounded problems would otherwise run the margin (and the variables) off to infinity.
    if (dy(m) > 0.0 && t < options.margin_cap)
      step_d = std::min(step_d, (options.margin_cap - t) / dy(m));
    for (std::size_t k = 0; k < X.size(); ++k) X[k] += step_p * dX[k];
    // Keep the dual iterate strictly inside the cone even when rounding disagrees.
    for (int tries = 0; tries < 30; ++tries) {
      const Vector y_new = y + step_d * dy.head(m);
      const double t_new = t + step_d * dy(m);
      std::vector<Eigen::LLT<Matrix>> probe;
      if (detail::factor_all(model.slack(y_new, t_new), probe)) {
        y = y_new;
        t = t_new;
        break;
      }
      step_d *= 0.5;
    }
  }
  result.stats.iterations = options.max_iterations;
  if (t >= -tol) check_point(y, t);
  if (have_feasible) return return_feasible("iteration limit");
  return finish(Status::Inconclusive, "iteration limit");
}

}  // namespace obsforge::lmi
