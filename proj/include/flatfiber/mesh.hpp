#pragma once

#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace flatfiber {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Uniform right-triangle triangulation of [0,1] x [0,2].
///
/// Vertices are numbered lexicographically by (y, then x); interior vertices
/// receive DOF indices 0..N-1 in the same order. Every grid cell is split along
/// its lower-left to upper-right diagonal, both triangles counter-clockwise.
struct Mesh {
  static constexpr double width = 1.0;
  static constexpr double height = 2.0;
  static constexpr int min_level = 1;
  static constexpr int max_level = 8;

  int level = 0;
  int cells_per_side = 0;
  double hx = 0.0;
  double hy = 0.0;
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// vertex -> DOF index, -1 on the boundary
  std::vector<int> interior_index;
  /// DOF index -> vertex
  std::vector<int> dof_vertex;

  [[nodiscard]] int num_dofs() const { return static_cast<int>(dof_vertex.size()); }
  [[nodiscard]] int num_vertices() const { return static_cast<int>(vertices.size()); }
  [[nodiscard]] bool is_boundary(int vertex) const { return interior_index[vertex] < 0; }
  [[nodiscard]] const Point& dof_point(int dof) const { return vertices[dof_vertex[dof]]; }

  [[nodiscard]] double signed_area(const std::array<int, 3>& t) const {
    const Point& a = vertices[t[0]];
    const Point& b = vertices[t[1]];
    const Point& c = vertices[t[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }
};

/// Builds the m-triangulation: 2^m intervals along each side of the rectangle.
inline Mesh build_mesh(int m) {
  if (m < Mesh::min_level || m > Mesh::max_level) {
    throw ArgumentError("mesh level m=" + std::to_string(m) + " outside [" +
                        std::to_string(Mesh::min_level) + ", " + std::to_string(Mesh::max_level) + "]");
  }
  Mesh mesh;
  const int n = 1 << m;
  mesh.level = m;
  mesh.cells_per_side = n;
  mesh.hx = Mesh::width / n;
  mesh.hy = Mesh::height / n;

  const int nv = (n + 1) * (n + 1);
  mesh.vertices.reserve(nv);
  mesh.interior_index.assign(nv, -1);
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      // i * hx rather than accumulated sums keeps coordinates exact dyadics
      mesh.vertices.push_back({i * mesh.hx, j * mesh.hy});
      if (i > 0 && i < n && j > 0 && j < n) {
        const int vid = j * (n + 1) + i;
        mesh.interior_index[vid] = static_cast<int>(mesh.dof_vertex.size());
        mesh.dof_vertex.push_back(vid);
      }
    }
  }

  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  mesh.triangles.reserve(2 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  }
  return mesh;
}

/// Nodal interpolant at interior vertices: coeffs[j] = expr(nu_j).
template <class Expr>
NodalField interpolate(Expr&& expr, const Mesh& mesh) {
  NodalField out(mesh.num_dofs());
  for (int j = 0; j < mesh.num_dofs(); ++j) {
    const Point& p = mesh.dof_point(j);
    const double v = expr(p.x, p.y);
    if (!std::isfinite(v)) {
      throw EvaluationError("interpolate: non-finite value at node " + std::to_string(j) + " (" +
                            std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
    }
    out[j] = v;
  }
  return out;
}

/// Values at all vertices, boundary included.
template <class Expr>
VertexField interpolate_vertices(Expr&& expr, const Mesh& mesh) {
  VertexField out(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Point& p = mesh.vertices[v];
    const double val = expr(p.x, p.y);
    if (!std::isfinite(val)) {
      throw EvaluationError("interpolate_vertices: non-finite value at vertex " + std::to_string(v));
    }
    out[v] = val;
  }
  return out;
}

/// Extends interior coefficients by zero on the Dirichlet boundary.
inline VertexField extend_by_zero(const NodalField& u, const Mesh& mesh) {
  VertexField out(mesh.num_vertices());
  for (int j = 0; j < mesh.num_dofs(); ++j) out[mesh.dof_vertex[j]] = u[j];
  return out;
}

/// Restriction of a vertex field to interior DOFs.
inline NodalField restrict_to_interior(const VertexField& w, const Mesh& mesh) {
  NodalField out(mesh.num_dofs());
  for (int j = 0; j < mesh.num_dofs(); ++j) out[j] = w[mesh.dof_vertex[j]];
  return out;
}

}  // namespace flatfiber
