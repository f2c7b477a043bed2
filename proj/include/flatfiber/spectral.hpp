#pragma once

#include "flatfiber/assembly.hpp"
#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace flatfiber {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double width() const { return hi - lo; }
  [[nodiscard]] bool contains(const Interval& other) const { return lo <= other.lo && other.hi <= hi; }
};

/// Margin within which an eigenvalue counts as sitting on an interval endpoint.
inline double endpoint_gap(const Interval& I) {
  const double scale = std::max({1.0, std::abs(I.lo), std::abs(I.hi)});
  return std::max(1e-6 * I.width(), 1e-12 * scale);
}

/// Analytic Dirichlet eigenvalues pi^2 (p^2 + q^2/4) of [0,1] x [0,2], ascending.
inline std::vector<double> rectangle_eigenvalues(int count) {
  std::vector<double> all;
  const int span = count + 2;
  for (int p = 1; p <= span; ++p) {
    for (int q = 1; q <= 2 * span; ++q) {
      all.push_back(std::numbers::pi * std::numbers::pi * (p * p + 0.25 * q * q));
    }
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(std::max(count, 0))));
  return all;
}

enum class EigenMethod { automatic, dense, subspace };

struct EigenOptions {
  EigenMethod method = EigenMethod::automatic;
  double tol = 1e-10;
  int max_iter = 2000;
  /// dense generalized solver is allowed (as primary or fallback) up to this size
  Eigen::Index dense_limit = 2500;
  /// relative gap below which two eigenvalues count as one degenerate cluster
  double degeneracy_tol = 1e-8;
};

/// Discrete Dirichlet-Laplacian eigenpairs plus the I-decomposition machinery.
///
/// Eigenvectors are K-orthonormal (phi_i^T K phi_j = delta_ij) and sign-fixed so
/// that their first non-negligible nodal coefficient is positive. Once an
/// interval is attached, the vertical subspace V^h = span{phi_k : k in index set}
/// and the four projections are available. Immutable after construction.
class SpectralData {
 public:
  using Factor = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

  SpectralData(std::shared_ptr<const SymSparseMatrix> K, std::shared_ptr<const SymSparseMatrix> M,
               std::vector<double> eigenvalues, std::vector<NodalField> eigenvectors,
               std::vector<double> residual_history)
      : K_(std::move(K)),
        M_(std::move(M)),
        eigenvalues_(std::move(eigenvalues)),
        eigenvectors_(std::move(eigenvectors)),
        history_(std::move(residual_history)) {
    k_factor_ = factorize(K_->matrix(), "stiffness");
    m_factor_ = factorize(M_->matrix(), "mass");
    set_index_set({});
  }

  [[nodiscard]] Eigen::Index dim() const { return K_->dim(); }
  [[nodiscard]] const SymSparseMatrix& stiffness() const { return *K_; }
  [[nodiscard]] const SymSparseMatrix& mass() const { return *M_; }
  [[nodiscard]] const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  [[nodiscard]] const std::vector<NodalField>& eigenvectors() const { return eigenvectors_; }
  [[nodiscard]] const std::vector<double>& residual_history() const { return history_; }
  /// 1-based eigenvalue index
  [[nodiscard]] double eigenvalue(int k) const { return eigenvalues_.at(k - 1); }
  [[nodiscard]] const NodalField& eigenvector(int k) const { return eigenvectors_.at(k - 1); }

  [[nodiscard]] const std::optional<Interval>& interval() const { return interval_; }
  /// 1-based indices k with lambda_k in the interval
  [[nodiscard]] const std::vector<int>& index_set() const { return kset_; }
  [[nodiscard]] int vertical_dim() const { return static_cast<int>(kset_.size()); }

  /// Copy with the I-decomposition for [lo, hi] attached.
  [[nodiscard]] SpectralData with_interval(const Interval& I) const;

  // ---- domain side (X^h, inner product u^T K v)

  [[nodiscard]] double inner_X(const NodalField& a, const NodalField& b) const {
    return a.vec().dot(K_->matrix() * b.vec());
  }
  [[nodiscard]] double norm_X(const NodalField& a) const { return std::sqrt(std::max(0.0, inner_X(a, a))); }

  /// Heights t_k = <z, phi_k>_X for k in the index set.
  [[nodiscard]] Eigen::VectorXd vertical_coords_X(const NodalField& z) const {
    return k_phi_.transpose() * z.vec();
  }
  [[nodiscard]] NodalField from_vertical_coords(const Eigen::VectorXd& t) const {
    return NodalField(Eigen::VectorXd(phi_ * t));
  }
  [[nodiscard]] NodalField project_vertical_X(const NodalField& z) const {
    return from_vertical_coords(vertical_coords_X(z));
  }
  [[nodiscard]] NodalField project_horizontal_X(const NodalField& z) const { return z - project_vertical_X(z); }

  // ---- range side (Y^h, inner product g^T K^{-1} h)

  [[nodiscard]] double inner_Y(const DualField& a, const DualField& b) const {
    return a.vec().dot(solve_K(b).vec());
  }
  /// sqrt(g^T K^{-1} g), one sparse solve.
  [[nodiscard]] double norm_Y(const DualField& g) const { return std::sqrt(std::max(0.0, inner_Y(g, g))); }
  /// L^2 norm of the Riesz representer M^{-1} g.
  [[nodiscard]] double norm_L2(const DualField& g) const {
    const Eigen::VectorXd r = m_factor_->solve(g.vec());
    return std::sqrt(std::max(0.0, g.vec().dot(r)));
  }

  /// Vertical image heights s_k = <g, K phi_k>_Y = phi_k^T g.
  [[nodiscard]] Eigen::VectorXd vertical_coords_Y(const DualField& g) const { return phi_.transpose() * g.vec(); }
  [[nodiscard]] DualField from_vertical_coords_Y(const Eigen::VectorXd& s) const {
    return DualField(Eigen::VectorXd(k_phi_ * s));
  }
  [[nodiscard]] DualField project_vertical_Y(const DualField& g) const {
    return from_vertical_coords_Y(vertical_coords_Y(g));
  }
  [[nodiscard]] DualField project_horizontal_Y(const DualField& g) const { return g - project_vertical_Y(g); }

  /// K^{-1} g: the X^h point whose Y^h image under the isometry is g.
  [[nodiscard]] NodalField solve_K(const DualField& g) const {
    NodalField out(Eigen::VectorXd(k_factor_->solve(g.vec())));
    if (k_factor_->info() != Eigen::Success || !out.all_finite()) {
      throw LinearAlgebraError("stiffness solve failed");
    }
    return out;
  }
  [[nodiscard]] const Factor& stiffness_factor() const { return *k_factor_; }

  /// Columns phi_k, k in the index set (N x |K|).
  [[nodiscard]] const Eigen::MatrixXd& vertical_basis() const { return phi_; }
  /// Columns K phi_k (N x |K|).
  [[nodiscard]] const Eigen::MatrixXd& vertical_basis_dual() const { return k_phi_; }

 private:
  static std::shared_ptr<const Factor> factorize(const Eigen::SparseMatrix<double>& a, const char* what) {
    auto f = std::make_shared<Factor>(a);
    if (f->info() != Eigen::Success) {
      throw LinearAlgebraError(std::string("factorization of the ") + what + " matrix failed");
    }
    return f;
  }

  void set_index_set(std::vector<int> kset) {
    kset_ = std::move(kset);
    const Eigen::Index n = dim();
    phi_.resize(n, static_cast<Eigen::Index>(kset_.size()));
    for (std::size_t c = 0; c < kset_.size(); ++c) phi_.col(static_cast<Eigen::Index>(c)) = eigenvector(kset_[c]).vec();
    k_phi_ = K_->matrix() * phi_;
  }

  std::shared_ptr<const SymSparseMatrix> K_;
  std::shared_ptr<const SymSparseMatrix> M_;
  std::shared_ptr<const Factor> k_factor_;
  std::shared_ptr<const Factor> m_factor_;
  std::vector<double> eigenvalues_;
  std::vector<NodalField> eigenvectors_;
  std::vector<double> history_;
  std::optional<Interval> interval_;
  std::vector<int> kset_;
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd k_phi_;
};

/// I-index set {k : a <= lambda_k <= b}, 1-based.
///
/// Throws ResonanceError when an eigenvalue lies within endpoint_gap(I) of a or
/// b, and NeedsMoreEigenvaluesError when the computed spectrum stops at or below b.
inline std::vector<int> index_set(const SpectralData& spec, double a, double b) {
  if (!(a < b)) {
    std::ostringstream os;
    os << "index_set: interval [" << a << ", " << b << "] is empty or degenerate";
    throw ArgumentError(os.str());
  }
  const Interval I{a, b};
  const double gap = endpoint_gap(I);
  const auto& lam = spec.eigenvalues();
  if (lam.empty() || lam.back() <= b + gap) {
    std::ostringstream os;
    os << "index_set: largest computed eigenvalue " << (lam.empty() ? 0.0 : lam.back())
       << " does not exceed the upper endpoint " << b;
    throw NeedsMoreEigenvaluesError(os.str());
  }
  std::vector<int> k;
  for (std::size_t i = 0; i < lam.size(); ++i) {
    if (std::abs(lam[i] - a) <= gap || std::abs(lam[i] - b) <= gap) {
      std::ostringstream os;
      os << "eigenvalue lambda_" << i + 1 << " = " << lam[i] << " resonates with an endpoint of [" << a << ", "
         << b << "]";
      throw ResonanceError(os.str());
    }
    if (a <= lam[i] && lam[i] <= b) k.push_back(static_cast<int>(i) + 1);
  }
  return k;
}

inline SpectralData SpectralData::with_interval(const Interval& I) const {
  SpectralData out = *this;
  out.interval_ = I;
  out.set_index_set(flatfiber::index_set(*this, I.lo, I.hi));
  return out;
}

namespace detail {

inline void normalize_and_fix_sign(Eigen::Ref<Eigen::VectorXd> v, const Eigen::SparseMatrix<double>& K) {
  v /= std::sqrt(v.dot(K * v));
  const double cutoff = 1e-8 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > cutoff) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

inline double eigen_residual(const Eigen::SparseMatrix<double>& K, const Eigen::SparseMatrix<double>& M,
                             const Eigen::VectorXd& v, double lambda) {
  const Eigen::VectorXd kv = K * v;
  return (kv - lambda * (M * v)).norm() / kv.norm();
}

struct RawEigen {
  std::vector<double> values;  // count + 1 when available, to check the last gap
  Eigen::MatrixXd vectors;
  std::vector<double> history;
};

inline RawEigen dense_eigen(const SymSparseMatrix& K, const SymSparseMatrix& M, int wanted) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K.to_dense(), M.to_dense());
  if (es.info() != Eigen::Success) throw EigenConvergenceError("dense generalized eigensolver failed", {});
  RawEigen out;
  const int have = static_cast<int>(std::min<Eigen::Index>(wanted, K.dim()));
  out.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + have);
  out.vectors = es.eigenvectors().leftCols(have);
  return out;
}

/// Subspace iteration with K^{-1} M (shift 0) and Rayleigh-Ritz on the block.
inline RawEigen subspace_eigen(const SymSparseMatrix& K, const SymSparseMatrix& M, int count,
                               const SpectralData::Factor& kfac, const EigenOptions& opts) {
  const Eigen::Index n = K.dim();
  const Eigen::Index block = std::min<Eigen::Index>(n, count + std::max(count, 8));
  std::mt19937_64 rng(20240917);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::MatrixXd X(n, block);
  for (Eigen::Index c = 0; c < block; ++c)
    for (Eigen::Index r = 0; r < n; ++r) X(r, c) = dist(rng);

  const auto& Ks = K.matrix();
  const auto& Ms = M.matrix();
  RawEigen out;
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::MatrixXd Y = kfac.solve(Eigen::MatrixXd(Ms * X));
    const Eigen::MatrixXd A = Y.transpose() * (Ks * Y);
    const Eigen::MatrixXd B = Y.transpose() * (Ms * Y);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> rr(0.5 * (A + A.transpose()),
                                                                 0.5 * (B + B.transpose()));
    if (rr.info() != Eigen::Success) break;
    X = Y * rr.eigenvectors();
    // rescale columns to keep the block well conditioned
    for (Eigen::Index c = 0; c < block; ++c) X.col(c) /= std::sqrt(X.col(c).dot(Ms * X.col(c)));
    double worst = 0.0;
    for (int k = 0; k < count; ++k) worst = std::max(worst, eigen_residual(Ks, Ms, X.col(k), rr.eigenvalues()[k]));
    out.history.push_back(worst);
    if (worst <= opts.tol) {
      const int keep = static_cast<int>(std::min<Eigen::Index>(count + 1, block));
      out.values.assign(rr.eigenvalues().data(), rr.eigenvalues().data() + keep);
      out.vectors = X.leftCols(keep);
      return out;
    }
  }
  std::ostringstream os;
  os << "subspace iteration did not reach residual " << opts.tol << " in " << out.history.size()
     << " iterations (last " << (out.history.empty() ? NAN : out.history.back()) << ")";
  throw EigenConvergenceError(os.str(), out.history);
}

}  // namespace detail

/// The `count` smallest eigenpairs of K phi = lambda M phi, ascending, K-orthonormal.
inline SpectralData compute_eigenpairs(std::shared_ptr<const SymSparseMatrix> K,
                                       std::shared_ptr<const SymSparseMatrix> M, int count,
                                       const EigenOptions& opts = {}) {
  if (!K || !M || K->dim() != M->dim()) throw ArgumentError("compute_eigenpairs: K and M must have equal size");
  if (count < 1 || count > K->dim()) {
    throw ArgumentError("compute_eigenpairs: count " + std::to_string(count) + " outside [1, " +
                        std::to_string(K->dim()) + "]");
  }
  const Eigen::Index n = K->dim();
  SpectralData::Factor kfac(K->matrix());
  if (kfac.info() != Eigen::Success) throw LinearAlgebraError("compute_eigenpairs: K is not positive definite");

  EigenMethod method = opts.method;
  const Eigen::Index block = std::min<Eigen::Index>(n, count + std::max(count, 8));
  if (method == EigenMethod::automatic) method = (2 * block >= n) ? EigenMethod::dense : EigenMethod::subspace;
  if (method == EigenMethod::dense && n > opts.dense_limit) {
    throw ArgumentError("compute_eigenpairs: dense method requested above dense_limit");
  }

  detail::RawEigen raw;
  if (method == EigenMethod::dense) {
    raw = detail::dense_eigen(*K, *M, count + 1);
  } else {
    try {
      raw = detail::subspace_eigen(*K, *M, count, kfac, opts);
    } catch (const EigenConvergenceError&) {
      if (n > opts.dense_limit) throw;
      raw = detail::dense_eigen(*K, *M, count + 1);
    }
  }

  for (std::size_t i = 0; i + 1 < raw.values.size(); ++i) {
    if (raw.values[i + 1] - raw.values[i] <= opts.degeneracy_tol * raw.values[i + 1]) {
      std::ostringstream os;
      os << "degenerate eigenvalue cluster at lambda_" << i + 1 << " ~ " << raw.values[i]
         << "; multiple eigenvalues are not supported";
      throw NotSupportedError(os.str());
    }
  }

  std::vector<double> values(raw.values.begin(), raw.values.begin() + count);
  std::vector<NodalField> vectors;
  vectors.reserve(count);
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd v = raw.vectors.col(k);
    detail::normalize_and_fix_sign(v, K->matrix());
    const double res = detail::eigen_residual(K->matrix(), M->matrix(), v, values[k]);
    if (!(res <= opts.tol)) {
      std::ostringstream os;
      os << "eigenpair " << k + 1 << " residual " << res << " exceeds " << opts.tol;
      raw.history.push_back(res);
      throw EigenConvergenceError(os.str(), raw.history);
    }
    vectors.emplace_back(std::move(v));
  }
  return SpectralData(std::move(K), std::move(M), std::move(values), std::move(vectors), std::move(raw.history));
}

}  // namespace flatfiber
