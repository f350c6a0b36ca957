#pragma once

#include <cstdint>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/synthesis.hpp"
#include "obsforge/system_model.hpp"

namespace obsforge {

/// Measurement noise v ~ N(0, covariance), drawn once per integration step.
struct NoiseSpec {
  enum class Kind { none, gaussian };
  Kind kind = Kind::none;
  Matrix covariance;
  std::uint64_t seed = 0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(Matrix covariance, std::uint64_t seed) {
    return NoiseSpec{Kind::gaussian, std::move(covariance), seed};
  }
  static NoiseSpec isotropic(double variance, Index ny, std::uint64_t seed) {
    require(variance >= 0.0, "noise: variance must be >= 0");
    return gaussian(variance * Matrix::Identity(ny, ny), seed);
  }
};

class SimulationDiverged : public NumericalError {
 public:
  SimulationDiverged(double t, const std::string& what)
      : NumericalError(what + " (blow-up at t = " + std::to_string(t) + ")"), time(t) {}
  double time;
};

struct SimulationOptions {
  std::optional<Vector> xhat0;  ///< initial estimate; the default z(0) = -L y(0) gives xhat(0) = 0
  int substeps = 1;             ///< RK4 steps per output step; noise stays constant across them
  double domain_tol = 1e-6;     ///< leaving the domain by more than this adds a diagnostic
};

struct Trajectory {
  Vector times;
  Matrix x;     ///< one row per sample
  Matrix z;
  Matrix xhat;
  Matrix y;     ///< noisy outputs
  Matrix v;     ///< noise realization
  Vector err_norm;
  double dt = 0.0;
  int substeps = 1;
  double max_domain_violation = 0.0;
  std::vector<std::string> diagnostics;

  Index size() const { return times.size(); }
};

namespace detail {

inline Matrix noise_factor(const NoiseSpec& noise, Index ny) {
  if (noise.kind == NoiseSpec::Kind::none) return Matrix::Zero(ny, ny);
  require(noise.covariance.rows() == ny && noise.covariance.cols() == ny,
          "noise: covariance must be n_y x n_y");
  Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetric_part(noise.covariance));
  require(es.eigenvalues().minCoeff() >= -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()),
          "noise: covariance must be positive semidefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

inline double domain_violation(const StateDomain& d, const Vector& x) {
  if (d.kind() == StateDomain::Kind::simplex) return d.simplex_violation(x);
  return std::max({0.0, (d.lower() - x).maxCoeff(), (x - d.upper()).maxCoeff()});
}

}  // namespace detail

/// Plant x' = Ax + Gf(Hx), y = Cx + v, coupled with the observer
///   z' = Mz + (ML + J)y + NGf(eta),  eta = H xhat + K(y - C xhat),  xhat = z + Ly,
/// integrated by classical RK4. The noise sample v_k is held over [t_k, t_k + dt).
inline Trajectory simulate(const NonlinearSystem& sys, const ObserverGains& gains, const Vector& x0,
                           double horizon, double dt, const NoiseSpec& noise = {},
                           const SimulationOptions& opts = {}) {
  const Index nx = sys.nx(), ny = sys.ny();
  require(dt > 0.0 && std::isfinite(dt), "simulate: dt must be positive");
  require(horizon >= 0.0 && std::isfinite(horizon), "simulate: horizon must be >= 0");
  require(opts.substeps >= 1, "simulate: substeps must be >= 1");
  require(x0.size() == nx, "simulate: x0 has wrong length");
  require(sys.domain().contains(x0, 1e-9), "simulate: x0 lies outside the state domain");
  require(gains.L.rows() == nx && gains.L.cols() == ny && gains.J.rows() == nx && gains.J.cols() == ny &&
              gains.K.rows() == sys.nh() && gains.K.cols() == ny,
          "simulate: gains do not match the system dimensions");

  const auto [M, N] = observer_matrices(sys.A(), sys.C(), gains.J, gains.L);
  const Matrix MLJ = M * gains.L + gains.J;
  const Matrix NG = N * sys.G();
  const Matrix& L = gains.L;
  const Matrix& K = gains.K;
  const Matrix& C = sys.C();
  const Matrix& H = sys.H();

  const auto steps = static_cast<Index>(std::ceil(horizon / dt - 1e-9));
  Trajectory tr;
  tr.dt = dt;
  tr.substeps = opts.substeps;
  tr.times.resize(steps + 1);
  tr.x.resize(steps + 1, nx);
  tr.z.resize(steps + 1, nx);
  tr.xhat.resize(steps + 1, nx);
  tr.y.resize(steps + 1, ny);
  tr.v.resize(steps + 1, ny);
  tr.err_norm.resize(steps + 1);

  const Matrix noise_l = detail::noise_factor(noise, ny);
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_noise = [&]() -> Vector {
    if (noise.kind == NoiseSpec::Kind::none) return Vector::Zero(ny);
    Vector e(ny);
    for (Index i = 0; i < ny; ++i) e(i) = gauss(rng);
    return noise_l * e;
  };

  // Coupled right-hand side for w = [x; z] with the noise sample held fixed.
  auto rhs = [&](const Vector& w, const Vector& v) -> Vector {
    const auto x = w.head(nx);
    const auto z = w.tail(nx);
    const Vector y = C * x + v;
    const Vector xhat = z + L * y;
    const Vector eta = H * xhat + K * (y - C * xhat);
    Vector dw(2 * nx);
    dw.head(nx) = sys.vector_field(x);
    dw.tail(nx) = M * z + MLJ * y;
    if (sys.nf() > 0) dw.tail(nx).noalias() += NG * sys.f()(eta);
    return dw;
  };

  Vector v = draw_noise();
  Vector w(2 * nx);
  const Vector y0 = C * x0 + v;
  w.head(nx) = x0;
  w.tail(nx) = (opts.xhat0 ? *opts.xhat0 : Vector::Zero(nx)) - L * y0;
  require(!opts.xhat0 || opts.xhat0->size() == nx, "simulate: xhat0 has wrong length");

  auto record = [&](Index k, double t) {
    const Vector x = w.head(nx);
    const Vector z = w.tail(nx);
    const Vector y = C * x + v;
    const Vector xhat = z + L * y;
    tr.times(k) = t;
    tr.x.row(k) = x.transpose();
    tr.z.row(k) = z.transpose();
    tr.y.row(k) = y.transpose();
    tr.v.row(k) = v.transpose();
    tr.xhat.row(k) = xhat.transpose();
    tr.err_norm(k) = (xhat - x).norm();
    tr.max_domain_violation = std::max(tr.max_domain_violation, detail::domain_violation(sys.domain(), x));
  };

  double t = 0.0;
  record(0, t);
  for (Index k = 0; k < steps; ++k) {
    const double h_out = std::min(dt, horizon - t);
    const double h = h_out / opts.substeps;
    for (int s = 0; s < opts.substeps; ++s) {
      const Vector k1 = rhs(w, v);
      const Vector k2 = rhs(w + 0.5 * h * k1, v);
      const Vector k3 = rhs(w + 0.5 * h * k2, v);
      const Vector k4 = rhs(w + h * k3, v);
      w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t = (k + 1 == steps) ? horizon : static_cast<double>(k + 1) * dt;
    if (!w.allFinite() || w.cwiseAbs().maxCoeff() > 1e150) throw SimulationDiverged(t, "simulate: state diverged");
    v = draw_noise();
    record(k + 1, t);
  }
  if (tr.max_domain_violation > opts.domain_tol) {
    std::ostringstream msg;
    msg << "plant state left the domain by " << tr.max_domain_violation << "; dt may be too large";
    tr.diagnostics.push_back(msg.str());
  }
  return tr;
}

/// Largest RK4 substep count needed so that h * spectral_radius stays within the real-axis
/// stability interval (with margin) for the observer matrix M.
inline int stable_substeps(const ObserverGains& gains, double dt, double limit = 2.5) {
  require(dt > 0.0 && limit > 0.0, "stable_substeps: dt and limit must be positive");
  Eigen::EigenSolver<Matrix> es(gains.M, false);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return std::max(1, static_cast<int>(std::ceil(dt * radius / limit)));
}

// ---------------------------------------------------------------------------
// Error metrics.

struct ErrorMetrics {
  double initial = 0.0;
  double final_value = 0.0;
  double peak = 0.0;
  std::optional<double> time_to_fraction;  ///< first t with err <= 0.01 err(0)
  std::optional<double> rate;              ///< fitted lambda in err ~ exp(-lambda t)
  double final_quarter_mean = 0.0;

  json to_json() const {
    auto opt = [](const std::optional<double>& o) { return o ? json(*o) : json(nullptr); };
    return json{{"initial", initial},
                {"final", final_value},
                {"peak", peak},
                {"time_to_fraction", opt(time_to_fraction)},
                {"rate", opt(rate)},
                {"final_quarter_mean", final_quarter_mean}};
  }
};

/// window = [t_begin, t_end] for the exponential fit; the whole trajectory by default.
inline ErrorMetrics error_metrics(const Vector& times, const Vector& err,
                                  std::optional<std::pair<double, double>> window = std::nullopt) {
  require(times.size() == err.size() && times.size() > 0, "error_metrics: empty or mismatched series");
  ErrorMetrics m;
  const Index n = err.size();
  m.initial = err(0);
  m.final_value = err(n - 1);
  m.peak = err.maxCoeff();
  for (Index k = 0; k < n; ++k)
    if (err(k) <= 0.01 * m.initial) {
      m.time_to_fraction = times(k);
      break;
    }
  const double t0 = times(0), t1 = times(n - 1);
  const double quarter = t0 + 0.75 * (t1 - t0);
  double sum = 0.0;
  Index count = 0;
  for (Index k = 0; k < n; ++k)
    if (times(k) >= quarter) {
      sum += err(k);
      ++count;
    }
  m.final_quarter_mean = count ? sum / static_cast<double>(count) : m.final_value;

  const double wb = window ? window->first : t0;
  const double we = window ? window->second : t1;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  Index np = 0;
  for (Index k = 0; k < n; ++k) {
    if (times(k) < wb || times(k) > we || !(err(k) > 0.0)) continue;
    const double ly = std::log(err(k));
    sx += times(k);
    sy += ly;
    sxx += times(k) * times(k);
    sxy += times(k) * ly;
    ++np;
  }
  const double den = static_cast<double>(np) * sxx - sx * sx;
  if (np >= 2 && den > 0.0) m.rate = -(static_cast<double>(np) * sxy - sx * sy) / den;
  return m;
}

inline ErrorMetrics error_metrics(const Trajectory& tr, std::optional<std::pair<double, double>> window = std::nullopt) {
  return error_metrics(tr.times, tr.err_norm, window);
}

/// V(xi) = xi^T P xi along the stored trajectory.
inline Vector lyapunov_series(const Trajectory& tr, const Matrix& P) {
  Vector V(tr.size());
  for (Index k = 0; k < tr.size(); ++k) {
    const Vector xi = (tr.xhat.row(k) - tr.x.row(k)).transpose();
    V(k) = xi.dot(P * xi);
  }
  return V;
}

// ---------------------------------------------------------------------------
// CSV.

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const Index nx = tr.x.cols(), ny = tr.y.cols();
  os << "t";
  for (Index i = 1; i <= nx; ++i) os << ",x_" << i;
  for (Index i = 1; i <= nx; ++i) os << ",xhat_" << i;
  for (Index i = 1; i <= ny; ++i) os << ",y_" << i;
  os << ",err_norm\n";
  os << std::setprecision(17);
  for (Index k = 0; k < tr.size(); ++k) {
    os << tr.times(k);
    for (Index i = 0; i < nx; ++i) os << ',' << tr.x(k, i);
    for (Index i = 0; i < nx; ++i) os << ',' << tr.xhat(k, i);
    for (Index i = 0; i < ny; ++i) os << ',' << tr.y(k, i);
    os << ',' << tr.err_norm(k) << '\n';
  }
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix data;  ///< one row per record

  Index column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<Index>(i);
    return -1;
  }
};

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "csv: missing header");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ContractViolation("csv: non-numeric cell '" + cell + "'");
      }
    }
    require(row.size() == t.header.size(), "csv: row width does not match header");
    rows.push_back(std::move(row));
  }
  t.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.data(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return t;
}

}  // namespace obsforge
