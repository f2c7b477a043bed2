#pragma once

#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"
#include "flatfiber/mesh.hpp"
#include "flatfiber/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace flatfiber {

/// An appropriate nonlinearity f(x, s) together with d2f = df/ds.
///
/// range_bounds() is a closed interval [a, b] containing d2f(Omega x R).
/// Functions receive the point x so nonautonomous f are expressible.
class Nonlinearity {
 public:
  using Fn = std::function<double(const Point&, double)>;

  Nonlinearity(Fn f, Fn d2f, Interval range_bounds, std::string label)
      : f_(std::move(f)), d2f_(std::move(d2f)), range_(range_bounds), label_(std::move(label)) {
    if (!(range_.lo <= range_.hi)) throw ArgumentError("Nonlinearity: range bounds must satisfy a <= b");
  }

  [[nodiscard]] double f(const Point& x, double s) const { return f_(x, s); }
  [[nodiscard]] double d2f(const Point& x, double s) const { return d2f_(x, s); }
  [[nodiscard]] const Interval& range_bounds() const { return range_; }
  [[nodiscard]] const std::string& label() const { return label_; }

 private:
  Fn f_;
  Fn d2f_;
  Interval range_;
  std::string label_;
};

namespace detail {

/// alpha (s arctan s - ln(1 + s^2)/2), the antiderivative of alpha arctan s vanishing at 0.
inline double arctan_antiderivative(double s) {
  return s * std::atan(s) - 0.5 * std::log1p(s * s);
}

inline std::string format_params(std::initializer_list<std::pair<const char*, double>> params) {
  std::ostringstream os;
  os.precision(10);
  bool first = true;
  for (const auto& [k, v] : params) {
    os << (first ? "" : ", ") << k << "=" << v;
    first = false;
  }
  return os.str();
}

}  // namespace detail

/// f(s) = alpha (s arctan s - ln(1+s^2)/2) + beta s, so f(0) = 0 and f'(s) = alpha arctan s + beta.
inline Nonlinearity make_arctan_family(double alpha, double beta) {
  if (!(alpha >= 0.0)) throw ArgumentError("make_arctan_family: alpha must be >= 0");
  const double half = alpha * std::numbers::pi / 2.0;
  return Nonlinearity(
      [alpha, beta](const Point&, double s) { return alpha * detail::arctan_antiderivative(s) + beta * s; },
      [alpha, beta](const Point&, double s) { return alpha * std::atan(s) + beta; },
      Interval{beta - half, beta + half},
      "arctan(" + detail::format_params({{"alpha", alpha}, {"beta", beta}}) + ")");
}

inline Nonlinearity make_linear(double beta) { return make_arctan_family(0.0, beta); }

namespace detail {

/// Extremes of a scalar function over a validation grid, refined by golden section.
template <class Fn>
Interval sampled_range(Fn&& fn, const std::vector<double>& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t arg_lo = 0;
  std::size_t arg_hi = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = fn(grid[i]);
    if (v < lo) lo = v, arg_lo = i;
    if (v > hi) hi = v, arg_hi = i;
  }
  auto refine = [&](std::size_t i, double sign) {
    double a = grid[i > 0 ? i - 1 : i];
    double b = grid[i + 1 < grid.size() ? i + 1 : i];
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200 && b - a > 1e-14 * (1.0 + std::abs(a)); ++it) {
      const double c = b - r * (b - a);
      const double d = a + r * (b - a);
      if (sign * fn(c) > sign * fn(d)) b = d; else a = c;
    }
    return fn(0.5 * (a + b));
  };
  lo = std::min(lo, refine(arg_lo, -1.0));
  hi = std::max(hi, refine(arg_hi, 1.0));
  return {lo, hi};
}

/// 10^5-point validation grid: dense around `center` plus a symmetric log grid out to 10^8.
inline std::vector<double> validation_grid(double center, double width) {
  std::vector<double> g;
  constexpr int dense = 50000;
  constexpr int sparse = 25000;
  g.reserve(dense + 2 * sparse + 1);
  for (int i = 0; i < dense; ++i) g.push_back(center - 10.0 * width + 20.0 * width * i / (dense - 1));
  for (int i = 0; i < sparse; ++i) {
    const double s = std::pow(10.0, -4.0 + 12.0 * i / (sparse - 1));
    g.push_back(s);
    g.push_back(-s);
  }
  g.push_back(0.0);
  std::sort(g.begin(), g.end());
  return g;
}

}  // namespace detail

/// f'(s) = beta + alpha arctan s + gamma exp(-((s - s0)/w)^2), f(0) = 0.
///
/// The Gaussian part integrates to gamma w sqrt(pi)/2 (erf((s-s0)/w) - erf(-s0/w)).
/// Range bounds combine sampled extrema of f' with the arctan asymptotes.
inline Nonlinearity make_bump_family(double beta, double alpha, double gamma, double s0, double w) {
  if (!(w > 0.0)) throw ArgumentError("make_bump_family: width must be > 0");
  if (!(alpha >= 0.0)) throw ArgumentError("make_bump_family: alpha must be >= 0");
  const double c = gamma * w * std::sqrt(std::numbers::pi) / 2.0;
  auto d2f = [=](double s) {
    const double z = (s - s0) / w;
    return beta + alpha * std::atan(s) + gamma * std::exp(-z * z);
  };
  Interval range = detail::sampled_range(d2f, detail::validation_grid(s0, w));
  const double half = alpha * std::numbers::pi / 2.0;
  range.lo = std::min(range.lo, beta - half);
  range.hi = std::max(range.hi, beta + half);
  return Nonlinearity(
      [=](const Point&, double s) {
        return alpha * detail::arctan_antiderivative(s) + beta * s +
               c * (std::erf((s - s0) / w) - std::erf(-s0 / w));
      },
      [d2f](const Point&, double s) { return d2f(s); }, range,
      "bump(" +
          detail::format_params({{"beta", beta}, {"alpha", alpha}, {"gamma", gamma}, {"s0", s0}, {"w", w}}) +
          ")");
}

/// Outcome of checking the non-resonance and finite-spectral-interaction hypotheses.
struct AppropriatenessVerdict {
  Interval range;
  double gap = 0.0;
  std::vector<double> distance_to_lo;  ///< |lambda_k - a| per computed eigenvalue
  std::vector<double> distance_to_hi;  ///< |lambda_k - b|
  std::vector<int> index_set;
  bool pass = false;
  std::string message;
};

inline AppropriatenessVerdict validate_appropriate(const Nonlinearity& nl, const SpectralData& spec) {
  AppropriatenessVerdict v;
  v.range = nl.range_bounds();
  v.gap = endpoint_gap(v.range);
  const auto& lam = spec.eigenvalues();
  if (lam.empty() || lam.back() <= v.range.hi + v.gap) {
    std::ostringstream os;
    os << "validate_appropriate: need an eigenvalue above " << v.range.hi << " to certify the upper endpoint";
    throw NeedsMoreEigenvaluesError(os.str());
  }
  v.pass = true;
  for (std::size_t i = 0; i < lam.size(); ++i) {
    v.distance_to_lo.push_back(std::abs(lam[i] - v.range.lo));
    v.distance_to_hi.push_back(std::abs(lam[i] - v.range.hi));
    if (v.distance_to_lo.back() <= v.gap || v.distance_to_hi.back() <= v.gap) {
      v.pass = false;
      std::ostringstream os;
      os << "lambda_" << i + 1 << " = " << lam[i] << " is an endpoint of [" << v.range.lo << ", " << v.range.hi
         << "]";
      v.message = os.str();
    }
    if (v.range.lo <= lam[i] && lam[i] <= v.range.hi) v.index_set.push_back(static_cast<int>(i) + 1);
  }
  if (v.pass) v.message = "non-resonant; " + std::to_string(v.index_set.size()) + " eigenvalue(s) inside";
  return v;
}

/// f(nu_j, u_j) at interior nodes.
inline NodalField eval_f_nodal(const Nonlinearity& nl, const Mesh& mesh, const NodalField& u) {
  NodalField out(u.size());
  for (int j = 0; j < mesh.num_dofs(); ++j) {
    out[j] = nl.f(mesh.dof_point(j), u[j]);
    if (!std::isfinite(out[j])) throw EvaluationError("eval_f_nodal: non-finite value at node " + std::to_string(j));
  }
  return out;
}

/// d2f(nu_j, u_j) at interior nodes.
inline NodalField eval_d2f_nodal(const Nonlinearity& nl, const Mesh& mesh, const NodalField& u) {
  NodalField out(u.size());
  for (int j = 0; j < mesh.num_dofs(); ++j) {
    out[j] = nl.d2f(mesh.dof_point(j), u[j]);
    if (!std::isfinite(out[j])) {
      throw EvaluationError("eval_d2f_nodal: non-finite value at node " + std::to_string(j));
    }
  }
  return out;
}

/// d2f(nu, u(nu)) at every vertex, with u = 0 on the boundary.
inline VertexField eval_d2f_vertices(const Nonlinearity& nl, const Mesh& mesh, const NodalField& u) {
  VertexField out(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int dof = mesh.interior_index[v];
    out[v] = nl.d2f(mesh.vertices[v], dof < 0 ? 0.0 : u[dof]);
    if (!std::isfinite(out[v])) throw EvaluationError("eval_d2f_vertices: non-finite value at vertex " + std::to_string(v));
  }
  return out;
}

}  // namespace flatfiber
