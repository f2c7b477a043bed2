#pragma once

#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"
#include "flatfiber/mesh.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <vector>

namespace flatfiber {

/// Symmetric sparse matrix with full (both triangles) storage.
///
/// Symmetry is exact: every element contribution is added as a symmetric pair.
class SymSparseMatrix {
 public:
  SymSparseMatrix() = default;
  explicit SymSparseMatrix(Eigen::SparseMatrix<double> m) : m_(std::move(m)) { m_.makeCompressed(); }

  [[nodiscard]] Eigen::Index dim() const { return m_.rows(); }
  [[nodiscard]] const Eigen::SparseMatrix<double>& matrix() const { return m_; }
  [[nodiscard]] double coeff(Eigen::Index i, Eigen::Index j) const { return m_.coeff(i, j); }

  /// Nodal coefficients in, dual coordinates out (K u, M u, W u).
  [[nodiscard]] DualField apply(const NodalField& u) const { return DualField(Eigen::VectorXd(m_ * u.vec())); }

  [[nodiscard]] Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(m_); }

  /// (row, col, value) for every stored entry in column-major order.
  [[nodiscard]] std::vector<Eigen::Triplet<double>> triplets() const {
    std::vector<Eigen::Triplet<double>> out;
    out.reserve(m_.nonZeros());
    for (Eigen::Index k = 0; k < m_.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(m_, k); it; ++it) {
        out.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    return out;
  }

 private:
  Eigen::SparseMatrix<double> m_;
};

enum class Scope {
  interior,      ///< rows/cols are interior DOFs (Dirichlet problem)
  all_vertices,  ///< rows/cols are all vertices (used for partition-of-unity checks)
};

namespace detail {

using LocalMatrix = std::array<std::array<double, 3>, 3>;

template <class LocalFn>
SymSparseMatrix assemble(const Mesh& mesh, Scope scope, LocalFn&& local) {
  const bool all = scope == Scope::all_vertices;
  const int n = all ? mesh.num_vertices() : mesh.num_dofs();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const LocalMatrix a = local(tri);
    for (int r = 0; r < 3; ++r) {
      const int gr = all ? tri[r] : mesh.interior_index[tri[r]];
      if (gr < 0) continue;
      for (int c = 0; c < 3; ++c) {
        const int gc = all ? tri[c] : mesh.interior_index[tri[c]];
        if (gc < 0) continue;
        trips.emplace_back(gr, gc, a[r][c]);
      }
    }
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return SymSparseMatrix(std::move(m));
}

/// Exact integral of lambda_a * lambda_b * lambda_l over a triangle, divided by its area.
inline double cubic_moment(int a, int b, int l) {
  if (a == b && b == l) return 1.0 / 10.0;
  if (a == b || b == l || a == l) return 1.0 / 30.0;
  return 1.0 / 60.0;
}

}  // namespace detail

/// K_ij = int grad psi_i . grad psi_j, closed form per triangle.
inline SymSparseMatrix assemble_stiffness(const Mesh& mesh, Scope scope = Scope::interior) {
  return detail::assemble(mesh, scope, [&mesh](const std::array<int, 3>& tri) {
    const double area = mesh.signed_area(tri);
    // gradient of the barycentric coordinate i is (y_j - y_k, x_k - x_j) / (2 area)
    std::array<std::array<double, 2>, 3> grad{};
    for (int i = 0; i < 3; ++i) {
      const Point& pj = mesh.vertices[tri[(i + 1) % 3]];
      const Point& pk = mesh.vertices[tri[(i + 2) % 3]];
      grad[i] = {(pj.y - pk.y) / (2.0 * area), (pk.x - pj.x) / (2.0 * area)};
    }
    detail::LocalMatrix a{};
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) {
        a[r][c] = area * (grad[r][0] * grad[c][0] + grad[r][1] * grad[c][1]);
        a[c][r] = a[r][c];
      }
    }
    return a;
  });
}

/// M_ij = int psi_i psi_j (exact P1 element mass).
inline SymSparseMatrix assemble_mass(const Mesh& mesh, Scope scope = Scope::interior) {
  return detail::assemble(mesh, scope, [&mesh](const std::array<int, 3>& tri) {
    const double area = mesh.signed_area(tri);
    detail::LocalMatrix a{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r][c] = area * (r == c ? 2.0 : 1.0) / 12.0;
    }
    return a;
  });
}

/// W_jk = int w_h psi_j psi_k with w_h the P1 interpolant of the vertex weights.
///
/// The integrand is cubic on each triangle and integrated exactly. The weight
/// needs boundary values too, since boundary hat functions share support with
/// interior ones.
inline SymSparseMatrix assemble_weighted_mass(const Mesh& mesh, const VertexField& w,
                                              Scope scope = Scope::interior) {
  if (w.size() != mesh.num_vertices()) {
    throw ArgumentError("assemble_weighted_mass: weight has " + std::to_string(w.size()) +
                        " entries, mesh has " + std::to_string(mesh.num_vertices()) + " vertices");
  }
  if (!w.all_finite()) throw EvaluationError("assemble_weighted_mass: non-finite weight");
  return detail::assemble(mesh, scope, [&](const std::array<int, 3>& tri) {
    const double area = mesh.signed_area(tri);
    detail::LocalMatrix a{};
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l) s += w[tri[l]] * detail::cubic_moment(r, c, l);
        a[r][c] = area * s;
        a[c][r] = a[r][c];
      }
    }
    return a;
  });
}

}  // namespace flatfiber
