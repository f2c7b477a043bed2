#pragma once

#include "flatfiber/assembly.hpp"
#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"
#include "flatfiber/mesh.hpp"
#include "flatfiber/nonlinearity.hpp"
#include "flatfiber/spectral.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace flatfiber {

/// Discrete semilinear Dirichlet problem F(u) = K u - M f(u) with its I-decomposition.
///
/// Invariants: the spectral interval contains the nonlinearity's range bounds,
/// and the vertical shift c differs from every lambda_k, k in the index set.
class Problem {
 public:
  Problem(std::shared_ptr<const Mesh> mesh, std::shared_ptr<const SpectralData> spectral, Nonlinearity nl,
          double c = 0.0)
      : mesh_(std::move(mesh)), spectral_(std::move(spectral)), nl_(std::move(nl)), c_(c) {
    if (!mesh_ || !spectral_) throw ArgumentError("Problem: mesh and spectral data are required");
    if (spectral_->dim() != mesh_->num_dofs()) throw ArgumentError("Problem: spectral data built on another mesh");
    if (!spectral_->interval()) throw ArgumentError("Problem: spectral data has no interval attached");
    const Interval& I = *spectral_->interval();
    if (!I.contains(nl_.range_bounds())) {
      std::ostringstream os;
      os << "Problem: interval [" << I.lo << ", " << I.hi << "] does not contain the range of d2f ["
         << nl_.range_bounds().lo << ", " << nl_.range_bounds().hi << "]";
      throw ArgumentError(os.str());
    }
    for (int k : spectral_->index_set()) {
      const double lam = spectral_->eigenvalue(k);
      if (std::abs(c_ - lam) <= 1e-12 * lam) {
        throw ArgumentError("Problem: shift c coincides with lambda_" + std::to_string(k));
      }
    }
  }

  [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
  [[nodiscard]] const SpectralData& spectral() const { return *spectral_; }
  [[nodiscard]] const Nonlinearity& nonlinearity() const { return nl_; }
  [[nodiscard]] double c() const { return c_; }
  [[nodiscard]] Eigen::Index dim() const { return mesh_->num_dofs(); }
  [[nodiscard]] int vertical_dim() const { return spectral_->vertical_dim(); }

 private:
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const SpectralData> spectral_;
  Nonlinearity nl_;
  double c_;
};

struct ProblemSetup {
  int level = 5;
  Nonlinearity nonlinearity = make_linear(0.0);
  /// defaults to the nonlinearity's range bounds
  std::optional<Interval> interval;
  int eigen_count = 6;
  double c = 0.0;
};

/// Mesh, matrices, eigenpairs and I-decomposition in one go.
///
/// The eigenpair count grows (up to the DOF count) until the spectrum reaches
/// past the interval's upper endpoint.
inline Problem build_problem(const ProblemSetup& setup) {
  auto mesh = std::make_shared<const Mesh>(build_mesh(setup.level));
  auto K = std::make_shared<const SymSparseMatrix>(assemble_stiffness(*mesh));
  auto M = std::make_shared<const SymSparseMatrix>(assemble_mass(*mesh));
  const Interval I = setup.interval.value_or(setup.nonlinearity.range_bounds());
  const int n = mesh->num_dofs();
  int count = std::min(std::max(setup.eigen_count, 1), n);
  for (;;) {
    SpectralData spec = compute_eigenpairs(K, M, count);
    if (spec.eigenvalues().back() > I.hi + endpoint_gap(I) || count == n) {
      auto attached = std::make_shared<const SpectralData>(spec.with_interval(I));
      return Problem(mesh, attached, setup.nonlinearity, setup.c);
    }
    count = std::min(n, count + 4);
  }
}

// ---------------------------------------------------------------------------
// F and its linearizations

/// F^h(u) = K u - M f(u), f evaluated at interior nodes.
inline DualField eval_F(const Problem& p, const NodalField& u) {
  if (!u.all_finite()) throw EvaluationError("eval_F: non-finite input");
  const NodalField fu = eval_f_nodal(p.nonlinearity(), p.mesh(), u);
  return DualField(Eigen::VectorXd(p.spectral().stiffness().matrix() * u.vec() -
                                   p.spectral().mass().matrix() * fu.vec()));
}

/// Exact Jacobian of eval_F: K - M diag(d2f(u)). Not symmetric in general.
inline Eigen::SparseMatrix<double> assemble_DF(const Problem& p, const NodalField& u) {
  const NodalField d = eval_d2f_nodal(p.nonlinearity(), p.mesh(), u);
  Eigen::SparseMatrix<double> md = p.spectral().mass().matrix() * d.vec().asDiagonal();
  Eigen::SparseMatrix<double> df = p.spectral().stiffness().matrix() - md;
  df.makeCompressed();
  return df;
}

/// W_jk = int d2f(., u)_h psi_j psi_k with d2f interpolated into P1 (u = 0 on the boundary).
inline SymSparseMatrix assemble_linearized_weight(const Problem& p, const NodalField& u) {
  return assemble_weighted_mass(p.mesh(), eval_d2f_vertices(p.nonlinearity(), p.mesh(), u));
}

/// The operator L_c(u) z = K z - P_Y W P_X z - c M Q_X z.
///
/// It acts as the projected linearization on horizontal vectors and as
/// (K - c M) on V^h. Solves use that block structure: vertical components in
/// closed form, the horizontal block through a sparse LU of the bordered matrix
///   [ K - W   -K Phi ]
///   [ (K Phi)^T   0  ]
/// whose solution is automatically K-orthogonal to V^h.
class LcOperator {
 public:
  static constexpr double solve_rtol = 1e-12;

  LcOperator(const Problem& p, const NodalField& u) : p_(&p), W_(assemble_linearized_weight(p, u)) {
    factorize();
  }

  [[nodiscard]] const SymSparseMatrix& weight() const { return W_; }

  [[nodiscard]] DualField apply(const NodalField& z) const {
    const SpectralData& s = p_->spectral();
    const NodalField zv = s.project_vertical_X(z);
    const NodalField zh = z - zv;
    DualField out = s.stiffness().apply(z);
    out -= s.project_horizontal_Y(W_.apply(zh));
    if (p_->c() != 0.0) out -= p_->c() * s.mass().apply(zv);
    return out;
  }

  /// z with ||L z - r||_Y <= 1e-12 ||r||_Y, refined iteratively if needed.
  [[nodiscard]] NodalField solve(const DualField& r) const {
    const SpectralData& s = p_->spectral();
    const double rnorm = s.norm_Y(r);
    NodalField z(p_->dim());
    if (rnorm == 0.0) return z;
    z = solve_once(r);
    double res = s.norm_Y(r - apply(z));
    for (int refine = 0; refine < 4 && !(res <= solve_rtol * rnorm); ++refine) {
      z += solve_once(r - apply(z));
      res = s.norm_Y(r - apply(z));
    }
    if (!(res <= solve_rtol * rnorm) || !z.all_finite()) {
      throw SingularOperatorError("L_c solve residual " + std::to_string(res / rnorm) + " relative",
                                  condition_estimate(z, rnorm));
    }
    return z;
  }

 private:
  void factorize() {
    const SpectralData& s = p_->spectral();
    const Eigen::Index n = p_->dim();
    const Eigen::Index k = s.vertical_dim();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(s.stiffness().matrix().nonZeros() + W_.matrix().nonZeros() + 2 * n * k);
    auto add = [&trips](const Eigen::SparseMatrix<double>& m, double sign) {
      for (Eigen::Index c = 0; c < m.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it)
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), sign * it.value());
    };
    add(s.stiffness().matrix(), 1.0);
    add(W_.matrix(), -1.0);
    const Eigen::MatrixXd& kphi = s.vertical_basis_dual();
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) {
        if (kphi(r, c) == 0.0) continue;
        trips.emplace_back(static_cast<int>(r), static_cast<int>(n + c), -kphi(r, c));
        trips.emplace_back(static_cast<int>(n + c), static_cast<int>(r), kphi(r, c));
      }
    }
    Eigen::SparseMatrix<double> bordered(n + k, n + k);
    bordered.setFromTriplets(trips.begin(), trips.end());
    bordered.makeCompressed();
    lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu_->analyzePattern(bordered);
    lu_->factorize(bordered);
    if (lu_->info() != Eigen::Success) {
      throw SingularOperatorError("L_c horizontal block is singular: " + lu_->lastErrorMessage(),
                                  std::numeric_limits<double>::infinity());
    }
  }

  [[nodiscard]] NodalField solve_once(const DualField& r) const {
    const SpectralData& s = p_->spectral();
    const Eigen::Index n = p_->dim();
    const Eigen::Index k = s.vertical_dim();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    rhs.head(n) = r.vec();
    const Eigen::VectorXd sol = lu_->solve(rhs);
    NodalField z(Eigen::VectorXd(sol.head(n)));
    // vertical block: L phi_k = (1 - c / lambda_k) K phi_k
    const Eigen::VectorXd mu = s.vertical_coords_Y(r);
    Eigen::VectorXd a(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double lam = s.eigenvalue(s.index_set()[static_cast<std::size_t>(i)]);
      a[i] = mu[i] / (1.0 - p_->c() / lam);
    }
    z += s.from_vertical_coords(a);
    return z;
  }

  [[nodiscard]] double condition_estimate(const NodalField& z, double rnorm) const {
    const double wmax = W_.matrix().coeffs().cwiseAbs().maxCoeff();
    const double lmin = p_->spectral().eigenvalue(1);
    return (p_->spectral().norm_X(z) / rnorm) * (1.0 + wmax / lmin);
  }

  const Problem* p_;
  SymSparseMatrix W_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

inline DualField apply_Lc(const Problem& p, const NodalField& u, const NodalField& z) {
  return LcOperator(p, u).apply(z);
}

inline NodalField solve_Lc(const Problem& p, const NodalField& u, const DualField& r) {
  return LcOperator(p, u).solve(r);
}

// ---------------------------------------------------------------------------
// Horizontal Newton iteration

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 20;
  int depth_max = 6;
  /// residual growth (relative to the first residual) treated as divergence
  double divergence = 1e8;
  /// tolerance for continuation legs that end short of the final target
  double leg_tol = 1e-4;
};

enum class SolveStatus { converged, max_iter, continuation_used, failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::continuation_used: return "continuation-used";
    case SolveStatus::failed: return "failed";
  }
  return "unknown";
}

/// Iterates u_0..u_n with normalized horizontal residuals
/// e_n = ||P_Y(g - F(u_n))|| / ||P_Y(g - F(u_0))|| in Y^h and L^2 (e_0 = 1).
struct SolveReport {
  std::vector<NodalField> iterates;
  std::vector<double> residuals;
  std::vector<double> residuals_l2;
  std::vector<double> step_seconds;
  SolveStatus status = SolveStatus::failed;
  int continuation_depth = 0;
  int subdivisions = 0;
  /// ||P_Y(g - F(u_0))||_Y and ||P_Y(g - F(u_n))||_Y
  double initial_residual = 0.0;
  double final_residual = 0.0;

  [[nodiscard]] int iterations() const { return static_cast<int>(iterates.size()) - 1; }
  [[nodiscard]] const NodalField& point() const { return iterates.back(); }
  [[nodiscard]] bool ok() const {
    return status == SolveStatus::converged || status == SolveStatus::continuation_used;
  }
};

/// A failed horizontal solve; carries the report of the last attempt.
class SolveFailure : public SolverError {
 public:
  SolveFailure(const std::string& what, SolveReport r) : SolverError(what), report(std::move(r)) {}
  SolveReport report;
};

namespace detail {

struct HorizontalResidual {
  double y = 0.0;
  double l2 = 0.0;
};

inline HorizontalResidual horizontal_residual(const Problem& p, const NodalField& u, const DualField& g) {
  const DualField r = p.spectral().project_horizontal_Y(g - eval_F(p, u));
  return {p.spectral().norm_Y(r), p.spectral().norm_L2(r)};
}

/// Stopping threshold: tol times the larger of the initial residual and the data
/// scale, so warm starts that begin almost on the fiber do not chase roundoff.
inline double stopping_threshold(const Problem& p, const DualField& g, double r0, double tol) {
  return tol * std::max({r0, p.spectral().norm_Y(g), 1.0});
}

}  // namespace detail

namespace detail {

/// Horizontal Newton whose stopping threshold also scales with `reference`
/// (the initial residual of an enclosing continuation run).
inline SolveReport horizontal_newton_scaled(const Problem& p, const NodalField& u0, const DualField& g,
                                            const SolverOptions& opts, double reference) {
  if (u0.size() != p.dim() || g.size() != p.dim()) throw ArgumentError("horizontal_newton: size mismatch");
  if (!(opts.tol > 0.0)) throw ArgumentError("horizontal_newton: tol must be positive");
  const SpectralData& s = p.spectral();
  const NodalField v0 = s.project_vertical_X(u0);

  SolveReport rep;
  rep.iterates.push_back(u0);
  const auto r0 = detail::horizontal_residual(p, u0, g);
  rep.initial_residual = r0.y;
  rep.final_residual = r0.y;
  rep.residuals.push_back(1.0);
  rep.residuals_l2.push_back(1.0);
  const double stop = detail::stopping_threshold(p, g, std::max(r0.y, reference), opts.tol);
  if (r0.y <= stop) {
    rep.status = SolveStatus::converged;
    return rep;
  }

  NodalField u = u0;
  for (int n = 0; n < opts.max_iter; ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    const DualField r = g - eval_F(p, u);
    NodalField h;
    try {
      h = LcOperator(p, u).solve(r);
    } catch (const LinearAlgebraError&) {
      rep.status = SolveStatus::failed;
      return rep;
    }
    // re-impose the height exactly: the projection removes roundoff in the vertical direction
    u = s.project_horizontal_X(u + h) + v0;
    const auto rn = detail::horizontal_residual(p, u, g);
    rep.iterates.push_back(u);
    rep.residuals.push_back(rn.y / r0.y);
    rep.residuals_l2.push_back(r0.l2 > 0.0 ? rn.l2 / r0.l2 : 0.0);
    rep.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    rep.final_residual = rn.y;
    if (!std::isfinite(rn.y) || !u.all_finite() || rn.y > opts.divergence * r0.y) {
      rep.status = SolveStatus::failed;
      return rep;
    }
    if (rn.y <= stop) {
      rep.status = SolveStatus::converged;
      return rep;
    }
  }
  rep.status = SolveStatus::max_iter;
  return rep;
}

}  // namespace detail

/// u_{n+1} = u_n + P_X h with L_c(u_n) h = g - F(u_n); the vertical part of u_0 is kept exactly.
inline SolveReport horizontal_newton(const Problem& p, const NodalField& u0, const DualField& g,
                                     const SolverOptions& opts = {}) {
  return detail::horizontal_newton_scaled(p, u0, g, opts, 0.0);
}

/// Horizontal Newton with recursive bisection of the target segment
/// t -> (1 - t) P_Y F(u_0) + t P_Y g when a leg fails to converge.
/// Every leg is judged against the residual scale of the whole run; legs ending
/// before t = 1 only supply warm starts and stop at leg_tol.
inline SolveReport continuation_horizontal(const Problem& p, const NodalField& u0, const DualField& g,
                                           const SolverOptions& opts = {}) {
  SolveReport direct = horizontal_newton(p, u0, g, opts);
  if (direct.ok() || opts.depth_max <= 0) return direct;

  const SpectralData& s = p.spectral();
  const DualField start = s.project_horizontal_Y(eval_F(p, u0));
  const DualField end = s.project_horizontal_Y(g);
  const double reference = direct.initial_residual;
  auto target = [&](double t) { return (1.0 - t) * start + t * end; };

  SolveReport rep;
  rep.iterates.push_back(u0);
  int max_depth = 0;
  int subdivisions = 0;
  // solves from u (on the fiber of target(a)) to target(b); on success u is advanced
  auto leg = [&](auto&& self, NodalField& u, double a, double b, int depth) -> bool {
    max_depth = std::max(max_depth, depth);
    SolverOptions leg_opts = opts;
    if (b < 1.0) leg_opts.tol = std::max(opts.tol, opts.leg_tol);
    SolveReport r = detail::horizontal_newton_scaled(p, u, target(b), leg_opts, reference);
    if (r.ok()) {
      u = r.point();
      rep.iterates.push_back(u);
      return true;
    }
    if (depth >= opts.depth_max) return false;
    ++subdivisions;
    const double mid = 0.5 * (a + b);
    return self(self, u, a, mid, depth + 1) && self(self, u, mid, b, depth + 1);
  };

  NodalField u = u0;
  const bool ok = leg(leg, u, 0.0, 1.0, 0);
  // residuals of each accepted point against the final target
  const auto r0 = detail::horizontal_residual(p, u0, g);
  rep.initial_residual = r0.y;
  for (std::size_t i = 0; i < rep.iterates.size(); ++i) {
    const auto ri = detail::horizontal_residual(p, rep.iterates[i], g);
    rep.residuals.push_back(ri.y / r0.y);
    rep.residuals_l2.push_back(r0.l2 > 0.0 ? ri.l2 / r0.l2 : 0.0);
    rep.final_residual = ri.y;
  }
  rep.continuation_depth = max_depth;
  rep.subdivisions = subdivisions;
  rep.status = ok ? SolveStatus::continuation_used : SolveStatus::failed;
  return rep;
}

namespace detail {

inline void require_vertical(const Problem& p, const NodalField& v, const char* who) {
  const SpectralData& s = p.spectral();
  const double off = s.norm_X(s.project_horizontal_X(v));
  if (off > 1e-10 * (1.0 + s.norm_X(v))) {
    throw ArgumentError(std::string(who) + ": argument is not in the vertical subspace");
  }
}

inline SolveReport require_ok(SolveReport rep, const char* who) {
  if (!rep.ok()) {
    std::ostringstream os;
    os << who << ": horizontal solve " << to_string(rep.status) << " after " << rep.iterations()
       << " iterate(s), residual " << rep.final_residual;
    throw SolveFailure(os.str(), std::move(rep));
  }
  return rep;
}

}  // namespace detail

/// H_g(v): the unique point of the fiber through g in the horizontal slice v + W_X.
inline SolveReport fiber_point(const Problem& p, const NodalField& v, const DualField& g,
                               const SolverOptions& opts = {}) {
  detail::require_vertical(p, v, "fiber_point");
  return detail::require_ok(continuation_horizontal(p, v, g, opts), "fiber_point");
}

/// Predictor-corrector step along the fiber: warm start at u + pstep, then move horizontally.
inline SolveReport move_along_fiber(const Problem& p, const NodalField& u_on_fiber, const NodalField& pstep,
                                    const DualField& g, const SolverOptions& opts = {}) {
  detail::require_vertical(p, pstep, "move_along_fiber");
  return detail::require_ok(continuation_horizontal(p, u_on_fiber + pstep, g, opts), "move_along_fiber");
}

// ---------------------------------------------------------------------------
// Full-space Newton

struct NewtonResult {
  NodalField u;
  /// ||g - F(u_n)||_Y / max(1, ||g||_Y), one entry per iterate including u_0
  std::vector<double> residuals;
  [[nodiscard]] int iterations() const { return static_cast<int>(residuals.size()) - 1; }
};

/// Full Newton on F(u) = g with the exact Jacobian assemble_DF.
inline NewtonResult newton_full(const Problem& p, const NodalField& u0, const DualField& g, double tol,
                                int max_iter = 30) {
  const SpectralData& s = p.spectral();
  const double scale = std::max(1.0, s.norm_Y(g));
  NewtonResult out{u0, {}};
  for (int it = 0;; ++it) {
    const DualField r = g - eval_F(p, out.u);
    const double e = s.norm_Y(r) / scale;
    out.residuals.push_back(e);
    if (!std::isfinite(e)) throw SolverError("newton_full: non-finite residual");
    if (e <= tol) return out;
    if (it >= max_iter) {
      std::ostringstream os;
      os << "newton_full: no convergence in " << max_iter << " iterations (residual " << e << ")";
      throw SolverError(os.str());
    }
    const Eigen::SparseMatrix<double> df = assemble_DF(p, out.u);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(df);
    lu.factorize(df);
    if (lu.info() != Eigen::Success) {
      throw SingularOperatorError("newton_full: singular Jacobian (" + lu.lastErrorMessage() + ")",
                                  std::numeric_limits<double>::infinity());
    }
    const Eigen::VectorXd step = lu.solve(r.vec());
    const double lin_res = (df * step - r.vec()).norm() / r.vec().norm();
    if (!step.allFinite() || lin_res > 1e-6) {
      throw SingularOperatorError("newton_full: Jacobian numerically singular", 1.0 / std::max(lin_res, 1e-300));
    }
    out.u.vec() += step;
  }
}

}  // namespace flatfiber
