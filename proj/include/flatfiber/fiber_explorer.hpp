#pragma once

#include "flatfiber/error.hpp"
#include "flatfiber/field.hpp"
#include "flatfiber/flat_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace flatfiber {

/// Samples of the finite-dimensional map t -> s: height of a fiber point to the height of its image.
struct FiberTrace {
  std::vector<Eigen::VectorXd> heights_in;
  std::vector<Eigen::VectorXd> heights_out;
  std::vector<NodalField> fiber_points;
  /// horizontal Newton iterations spent on each sample
  std::vector<int> iterations;
  DualField g_ref;
  bool closed = false;

  [[nodiscard]] std::size_t size() const { return heights_in.size(); }
  [[nodiscard]] int dim() const { return heights_in.empty() ? 0 : static_cast<int>(heights_in.front().size()); }
};

/// A trace aborted by a failed fiber point; `partial` holds the samples computed so far.
class TraceFailure : public SolverError {
 public:
  TraceFailure(const std::string& what, FiberTrace t) : SolverError(what), partial(std::move(t)) {}
  FiberTrace partial;
};

/// Distinct polished solutions of F(u) = g.
struct SolutionSet {
  std::vector<NodalField> solutions;
  /// ||g - F(u)||_Y / max(1, ||g||_Y)
  std::vector<double> residuals;
  std::vector<Eigen::VectorXd> heights;
  /// origin of each solution: bracket_<i>, sample_<i> or a guess label; merged duplicates joined by '+'
  std::vector<std::string> labels;
  /// 1-D only: number of sign changes of s - s* found in the trace
  int sign_changes = 0;
  /// 1-D only: sample heights where |s - s*| is tiny without a sign change
  std::vector<double> near_touches;

  [[nodiscard]] int multiplicity() const { return static_cast<int>(solutions.size()); }
};

struct ExplorerOptions {
  SolverOptions solver;
  double bisection_width = 1e-6;
  double polish_tol = 1e-10;
  int polish_max_iter = 30;
  /// relative X^h separation below which two solutions are the same
  double separation = 1e-4;
  bool store_points = true;
};

// ---------------------------------------------------------------------------
// Tracing

/// Samples the fiber through g at the given vertical heights, each warm-started from the previous one.
inline FiberTrace trace_heights(const Problem& p, const DualField& g, const std::vector<Eigen::VectorXd>& heights,
                                const ExplorerOptions& opts = {}) {
  const SpectralData& s = p.spectral();
  FiberTrace tr;
  tr.g_ref = g;
  std::optional<NodalField> prev;
  Eigen::VectorXd prev_t;
  for (const Eigen::VectorXd& t : heights) {
    if (t.size() != s.vertical_dim()) throw ArgumentError("trace: height dimension differs from |K|");
    SolveReport rep;
    try {
      rep = prev ? move_along_fiber(p, *prev, s.from_vertical_coords(t - prev_t), g, opts.solver)
                 : fiber_point(p, s.from_vertical_coords(t), g, opts.solver);
    } catch (const SolverError& e) {
      std::ostringstream os;
      os << "trace aborted at sample " << tr.size() << ": " << e.what();
      throw TraceFailure(os.str(), std::move(tr));
    }
    prev = rep.point();
    prev_t = t;
    tr.heights_in.push_back(t);
    tr.heights_out.push_back(s.vertical_coords_Y(eval_F(p, rep.point())));
    tr.iterations.push_back(rep.iterations());
    if (opts.store_points) tr.fiber_points.push_back(rep.point());
  }
  return tr;
}

/// Uniform 1-D sweep t in [t_min, t_max] along phi_k, |K| = 1.
inline FiberTrace trace_fiber_1d(const Problem& p, const DualField& g, double t_min, double t_max, int steps,
                                 const ExplorerOptions& opts = {}) {
  if (p.vertical_dim() != 1) throw ArgumentError("trace_fiber_1d: requires |K| = 1");
  if (steps < 2) throw ArgumentError("trace_fiber_1d: steps must be >= 2");
  if (!(t_min < t_max)) throw ArgumentError("trace_fiber_1d: t_min must be < t_max");
  std::vector<Eigen::VectorXd> hs;
  for (int i = 0; i < steps; ++i) {
    // the endpoint is exact so that reruns do not depend on accumulated increments
    const double t = (i == steps - 1) ? t_max : t_min + (t_max - t_min) * i / (steps - 1);
    hs.push_back(Eigen::VectorXd::Constant(1, t));
  }
  return trace_heights(p, g, hs, opts);
}

/// Circle t(theta_j) = radius (cos theta_j, sin theta_j), j = 0..n-1, |K| = 2.
inline FiberTrace trace_circle_2d(const Problem& p, const DualField& g, double radius, int n,
                                  const ExplorerOptions& opts = {}) {
  if (p.vertical_dim() != 2) throw ArgumentError("trace_circle_2d: requires |K| = 2");
  if (n < 3) throw ArgumentError("trace_circle_2d: need at least 3 samples");
  if (!(radius >= 0.0)) throw ArgumentError("trace_circle_2d: radius must be >= 0");
  std::vector<Eigen::VectorXd> hs;
  for (int j = 0; j < n; ++j) {
    const double th = 2.0 * std::numbers::pi * j / n;
    hs.push_back(Eigen::Vector2d(radius * std::cos(th), radius * std::sin(th)));
  }
  FiberTrace tr = trace_heights(p, g, hs, opts);
  tr.closed = true;
  return tr;
}

/// Ray t = r d, r in [0, r_max] with `steps` intervals, |K| = 2. r_max = 0 gives the base point only.
inline FiberTrace trace_radial_2d(const Problem& p, const DualField& g, const Eigen::Vector2d& direction,
                                  double r_max, int steps, const ExplorerOptions& opts = {}) {
  if (p.vertical_dim() != 2) throw ArgumentError("trace_radial_2d: requires |K| = 2");
  const double len = direction.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw ArgumentError("trace_radial_2d: direction must be nonzero");
  if (!(r_max >= 0.0)) throw ArgumentError("trace_radial_2d: r_max must be >= 0");
  const Eigen::Vector2d d = direction / len;
  std::vector<Eigen::VectorXd> hs;
  if (r_max == 0.0) {
    hs.push_back(Eigen::Vector2d::Zero());
  } else {
    if (steps < 1) throw ArgumentError("trace_radial_2d: steps must be >= 1");
    for (int i = 0; i <= steps; ++i) hs.push_back(Eigen::Vector2d(d * (r_max * i / steps)));
  }
  return trace_heights(p, g, hs, opts);
}

// ---------------------------------------------------------------------------
// Solutions

namespace detail {

inline double full_residual(const Problem& p, const NodalField& u, const DualField& g) {
  return p.spectral().norm_Y(g - eval_F(p, u)) / std::max(1.0, p.spectral().norm_Y(g));
}

/// Appends `u` unless it duplicates an existing member; keeps the smaller residual.
inline void add_distinct(const Problem& p, SolutionSet& set, const NodalField& u, double residual,
                         const std::string& label, double separation) {
  const SpectralData& s = p.spectral();
  const double nu = s.norm_X(u);
  for (std::size_t i = 0; i < set.solutions.size(); ++i) {
    const double scale = 1.0 + std::max(nu, s.norm_X(set.solutions[i]));
    if (s.norm_X(u - set.solutions[i]) <= separation * scale) {
      if (residual < set.residuals[i]) {
        set.solutions[i] = u;
        set.residuals[i] = residual;
        set.heights[i] = s.vertical_coords_X(u);
      }
      set.labels[i] += "+" + label;
      return;
    }
  }
  set.solutions.push_back(u);
  set.residuals.push_back(residual);
  set.heights.push_back(s.vertical_coords_X(u));
  set.labels.push_back(label);
}

}  // namespace detail

/// Bisection on t -> s(t) - s* followed by full Newton polishing, for every sign change of a 1-D trace.
inline SolutionSet solve_on_fiber_1d(const Problem& p, const DualField& g, const FiberTrace& trace,
                                     const ExplorerOptions& opts = {}) {
  if (trace.dim() != 1) throw ArgumentError("solve_on_fiber_1d: requires a 1-D trace");
  if (trace.fiber_points.size() != trace.size()) throw ArgumentError("solve_on_fiber_1d: trace has no stored points");
  if (trace.size() < 2) throw ArgumentError("solve_on_fiber_1d: trace needs at least two samples");
  const SpectralData& s = p.spectral();
  const double target = s.vertical_coords_Y(g)[0];
  const std::size_t n = trace.size();
  std::vector<double> t(n);
  std::vector<double> d(n);
  double smax = std::abs(target);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = trace.heights_in[i][0];
    d[i] = trace.heights_out[i][0] - target;
    smax = std::max(smax, std::abs(trace.heights_out[i][0]));
  }
  // fiber point at height tau, warm-started from the nearest stored sample
  auto eval_at = [&](double tau) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(t[i] - tau) < std::abs(t[best] - tau)) best = i;
    const NodalField step = s.from_vertical_coords(Eigen::VectorXd::Constant(1, tau - t[best]));
    NodalField u = move_along_fiber(p, trace.fiber_points[best], step, g, opts.solver).point();
    return std::pair<NodalField, double>(u, s.vertical_coords_Y(eval_F(p, u))[0] - target);
  };

  SolutionSet out;
  auto polish = [&](const NodalField& start, const std::string& label) {
    const NewtonResult nr = newton_full(p, start, g, opts.polish_tol, opts.polish_max_iter);
    detail::add_distinct(p, out, nr.u, detail::full_residual(p, nr.u, g), label, opts.separation);
  };

  const double touch_tol = 1e-6 * (1.0 + smax);
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] == 0.0) {
      ++out.sign_changes;
      polish(trace.fiber_points[i], "sample_" + std::to_string(i));
      continue;
    }
    const bool interior = i > 0 && i + 1 < n;
    if (interior && std::abs(d[i]) <= touch_tol && d[i - 1] * d[i] > 0.0 && d[i] * d[i + 1] > 0.0) {
      out.near_touches.push_back(t[i]);
    }
    if (i + 1 == n || d[i + 1] == 0.0 || d[i] * d[i + 1] > 0.0) continue;

    ++out.sign_changes;
    double lo = t[i];
    double hi = t[i + 1];
    double dlo = d[i];
    NodalField u_mid = trace.fiber_points[i];
    bool exact = false;
    while (hi - lo > opts.bisection_width) {
      const double mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) {
        std::ostringstream os;
        os << "solve_on_fiber_1d: bisection stagnated on [" << lo << ", " << hi << "]";
        throw SolverError(os.str());
      }
      auto [u, dm] = eval_at(mid);
      if (!std::isfinite(dm)) {
        std::ostringstream os;
        os << "solve_on_fiber_1d: non-finite height difference on [" << lo << ", " << hi << "]";
        throw SolverError(os.str());
      }
      u_mid = std::move(u);
      if (dm == 0.0) {
        exact = true;
        break;
      }
      if ((dm < 0.0) == (dlo < 0.0)) {
        lo = mid;
        dlo = dm;
      } else {
        hi = mid;
      }
    }
    if (!exact) u_mid = eval_at(0.5 * (lo + hi)).first;
    polish(u_mid, "bracket_" + std::to_string(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar curve geometry

struct CurveCrossing {
  Eigen::Vector2d point;
  /// interpolated heights on the two crossing segments
  Eigen::Vector2d t_first;
  Eigen::Vector2d t_second;
  std::size_t segment_first = 0;
  std::size_t segment_second = 0;
};

struct CurveHit {
  Eigen::Vector2d t;
  std::size_t segment = 0;
  double distance = 0.0;
};

struct IntersectionReport {
  std::vector<CurveCrossing> self_crossings;
  std::vector<CurveHit> target_hits;
};

namespace detail {

inline Eigen::Vector2d as2(const Eigen::VectorXd& v) { return {v[0], v[1]}; }

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Parameters (a, b) in [0,1)^2 where p + a r meets q + b s, if the segments cross.
inline std::optional<Eigen::Vector2d> segment_intersection(const Eigen::Vector2d& p, const Eigen::Vector2d& r,
                                                            const Eigen::Vector2d& q, const Eigen::Vector2d& s) {
  const double den = cross2(r, s);
  if (den == 0.0) return std::nullopt;
  const Eigen::Vector2d qp = q - p;
  const double a = cross2(qp, s) / den;
  const double b = cross2(qp, r) / den;
  if (a < 0.0 || a >= 1.0 || b < 0.0 || b >= 1.0) return std::nullopt;
  return Eigen::Vector2d(a, b);
}

}  // namespace detail

/// Self-crossings of the polygonal image curve, and the points where it passes through `target`.
///
/// Segments are half-open so a crossing at a shared vertex is counted once. The
/// hit tolerance defaults to 1e-9 times (1 + curve diameter).
inline IntersectionReport find_intersections_2d(const FiberTrace& trace, const Eigen::Vector2d& target,
                                                double hit_tol = -1.0) {
  if (trace.dim() != 2) throw ArgumentError("find_intersections_2d: requires a 2-D trace");
  IntersectionReport rep;
  const std::size_t n = trace.size();
  if (n < 2) return rep;
  const std::size_t nseg = trace.closed ? n : n - 1;
  auto pt = [&](std::size_t i) { return detail::as2(trace.heights_out[i % n]); };
  auto tin = [&](std::size_t i) { return detail::as2(trace.heights_in[i % n]); };

  for (std::size_t i = 0; i < nseg; ++i) {
    const Eigen::Vector2d p0 = pt(i);
    const Eigen::Vector2d r = pt(i + 1) - p0;
    for (std::size_t j = i + 2; j < nseg; ++j) {
      if (trace.closed && i == 0 && j == nseg - 1) continue;  // adjacent through the wrap
      const Eigen::Vector2d q0 = pt(j);
      const auto ab = detail::segment_intersection(p0, r, q0, pt(j + 1) - q0);
      if (!ab) continue;
      CurveCrossing c;
      c.point = p0 + (*ab)[0] * r;
      c.t_first = tin(i) + (*ab)[0] * (tin(i + 1) - tin(i));
      c.t_second = tin(j) + (*ab)[1] * (tin(j + 1) - tin(j));
      c.segment_first = i;
      c.segment_second = j;
      rep.self_crossings.push_back(c);
    }
  }

  double diam = 0.0;
  for (std::size_t i = 0; i < n; ++i) diam = std::max(diam, (pt(i) - pt(0)).norm());
  if (hit_tol < 0.0) hit_tol = 1e-9 * (1.0 + diam);
  for (std::size_t i = 0; i < nseg; ++i) {
    const Eigen::Vector2d p0 = pt(i);
    const Eigen::Vector2d r = pt(i + 1) - p0;
    const double rr = r.squaredNorm();
    const double a = rr > 0.0 ? std::clamp((target - p0).dot(r) / rr, 0.0, 1.0) : 0.0;
    const double dist = (p0 + a * r - target).norm();
    if (dist > hit_tol || a >= 1.0) continue;
    CurveHit h;
    h.t = tin(i) + a * (tin(i + 1) - tin(i));
    h.segment = i;
    h.distance = dist;
    rep.target_hits.push_back(h);
  }
  return rep;
}

/// Point of a polyline image closest to `target`, with its interpolated height.
inline CurveHit closest_on_polyline(const FiberTrace& trace, const Eigen::Vector2d& target) {
  if (trace.dim() != 2 || trace.size() == 0) throw ArgumentError("closest_on_polyline: requires a 2-D trace");
  CurveHit best;
  best.distance = std::numeric_limits<double>::infinity();
  const std::size_t n = trace.size();
  if (n == 1) {
    best.t = detail::as2(trace.heights_in[0]);
    best.distance = (detail::as2(trace.heights_out[0]) - target).norm();
    return best;
  }
  const std::size_t nseg = trace.closed ? n : n - 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const Eigen::Vector2d p0 = detail::as2(trace.heights_out[i]);
    const Eigen::Vector2d r = detail::as2(trace.heights_out[(i + 1) % n]) - p0;
    const double rr = r.squaredNorm();
    const double a = rr > 0.0 ? std::clamp((target - p0).dot(r) / rr, 0.0, 1.0) : 0.0;
    const double dist = (p0 + a * r - target).norm();
    if (dist < best.distance) {
      const Eigen::Vector2d t0 = detail::as2(trace.heights_in[i]);
      best.t = t0 + a * (detail::as2(trace.heights_in[(i + 1) % n]) - t0);
      best.segment = i;
      best.distance = dist;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// 2-D inversion by circle and radial probing

struct ProbeConfig {
  double radius = 60.0;
  int circle_samples = 72;
  std::vector<Eigen::Vector2d> directions{{1.0, 0.0}, {-1.0, 0.0}};
  double ray_length = 200.0;
  int ray_steps = 100;
  /// which self-crossing supplies the target height
  std::size_t crossing_index = 0;
};

struct ProbeGuess {
  std::string label;
  Eigen::Vector2d t;
  double image_distance = 0.0;
};

struct ProbeResult {
  FiberTrace circle;
  std::vector<FiberTrace> rays;
  IntersectionReport intersections;
  Eigen::Vector2d target_height = Eigen::Vector2d::Zero();
  DualField target;
  std::vector<ProbeGuess> guesses;
  SolutionSet solutions;
};

/// Samples the image of a circle on the fiber through g, takes a self-crossing of that curve as
/// target height, and polishes the preimage guesses from the circle and from radial rays.
inline ProbeResult solve_by_probing(const Problem& p, const DualField& g, const ProbeConfig& cfg,
                                    const ExplorerOptions& opts = {}) {
  if (p.vertical_dim() != 2) throw ArgumentError("solve_by_probing: requires |K| = 2");
  const SpectralData& s = p.spectral();
  ProbeResult res;
  res.circle = trace_circle_2d(p, g, cfg.radius, cfg.circle_samples, opts);
  res.intersections = find_intersections_2d(res.circle, Eigen::Vector2d::Zero());
  if (res.intersections.self_crossings.size() <= cfg.crossing_index) {
    throw SolverError("solve_by_probing: the circle image has no self-crossing number " +
                      std::to_string(cfg.crossing_index));
  }
  const CurveCrossing& cross = res.intersections.self_crossings[cfg.crossing_index];
  res.target_height = cross.point;
  res.target = s.project_horizontal_Y(g) + s.from_vertical_coords_Y(cross.point);
  res.intersections.target_hits = find_intersections_2d(res.circle, cross.point).target_hits;

  // the target lies on the same fiber as g, so sampled fiber points stay valid
  const char* circle_labels[] = {"U", "D"};
  for (std::size_t i = 0; i < res.intersections.target_hits.size(); ++i) {
    const CurveHit& h = res.intersections.target_hits[i];
    res.guesses.push_back({i < 2 ? circle_labels[i] : "C" + std::to_string(i), h.t, h.distance});
  }
  for (std::size_t k = 0; k < cfg.directions.size(); ++k) {
    res.rays.push_back(trace_radial_2d(p, g, cfg.directions[k], cfg.ray_length, cfg.ray_steps, opts));
    const CurveHit h = closest_on_polyline(res.rays.back(), cross.point);
    const Eigen::Vector2d& d = cfg.directions[k];
    std::string label = "ray" + std::to_string(k);
    if (d.y() == 0.0) label = d.x() > 0.0 ? "R" : "L";
    res.guesses.push_back({label, h.t, h.distance});
  }

  for (const ProbeGuess& guess : res.guesses) {
    const SolveReport start = fiber_point(p, s.from_vertical_coords(guess.t), res.target, opts.solver);
    const NewtonResult nr = newton_full(p, start.point(), res.target, opts.polish_tol, opts.polish_max_iter);
    detail::add_distinct(p, res.solutions, nr.u, detail::full_residual(p, nr.u, res.target), guess.label,
                         opts.separation);
  }
  return res;
}

}  // namespace flatfiber
