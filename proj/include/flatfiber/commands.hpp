#pragma once

#include "flatfiber/config.hpp"
#include "flatfiber/csv.hpp"
#include "flatfiber/error.hpp"
#include "flatfiber/fiber_explorer.hpp"
#include "flatfiber/flat_solver.hpp"
#include "flatfiber/mesh.hpp"
#include "flatfiber/nonlinearity.hpp"
#include "flatfiber/spectral.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace flatfiber {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_config = 2,
  exit_eigs = 3,
  exit_solver = 4,
  exit_io = 5,
};

/// Typed view of a run configuration.
struct RunConfig {
  std::string hash;
  int level = 0;
  std::vector<int> levels;
  int eigen_count = 6;

  std::string family;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double s0 = 0.0;
  double width = 1.0;
  std::optional<Interval> interval;

  std::string rhs_kind = "bubble";
  double rhs_scale = -100.0;
  std::vector<double> rhs_u0;
  std::vector<double> start_u0;

  double c = 0.0;
  SolverOptions solver;

  std::string trace_mode = "line";
  double t_min = -120.0;
  double t_max = 120.0;
  int steps = 121;
  ProbeConfig probe;

  std::string output_dir = "out";
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "mesh.m",          "mesh.levels",      "eigs.count",        "nonlinearity.family", "nonlinearity.alpha",
      "nonlinearity.beta", "nonlinearity.gamma", "nonlinearity.s0", "nonlinearity.width", "interval.bounds",
      "rhs.kind",        "rhs.scale",        "rhs.u0",            "start.u0",            "solver.c",
      "solver.tol",      "solver.max_iter",  "solver.depth_max",  "solver.leg_tol",      "trace.mode",
      "trace.window",    "trace.steps",      "trace.radius",      "trace.samples",       "trace.directions",
      "trace.ray_length", "trace.ray_steps", "trace.crossing",    "output.dir"};
  return keys;
}

inline RunConfig parse_run_config(const Config& cfg) {
  cfg.require_known(known_config_keys());
  RunConfig rc;
  rc.hash = cfg.hash();

  rc.level = cfg.integer("mesh.m");
  auto check_level = [&](int m, const char* key) {
    if (m < Mesh::min_level || m > Mesh::max_level) {
      cfg.fail_key(key, "level " + std::to_string(m) + " outside [" + std::to_string(Mesh::min_level) + ", " +
                            std::to_string(Mesh::max_level) + "]");
    }
  };
  check_level(rc.level, "mesh.m");
  if (cfg.has("mesh.levels")) {
    for (double v : cfg.numbers("mesh.levels")) {
      if (v != std::floor(v)) cfg.fail_key("mesh.levels", "levels must be integers");
      rc.levels.push_back(static_cast<int>(v));
      check_level(rc.levels.back(), "mesh.levels");
    }
  } else {
    rc.levels = {rc.level};
  }
  rc.eigen_count = cfg.integer("eigs.count", 6);
  if (rc.eigen_count < 1) cfg.fail_key("eigs.count", "must be >= 1");

  rc.family = cfg.string("nonlinearity.family");
  if (rc.family != "arctan" && rc.family != "linear" && rc.family != "bump") {
    cfg.fail_key("nonlinearity.family", "expected arctan, linear or bump, got '" + rc.family + "'");
  }
  rc.alpha = cfg.number("nonlinearity.alpha", 0.0);
  rc.beta = cfg.number("nonlinearity.beta", 0.0);
  rc.gamma = cfg.number("nonlinearity.gamma", 0.0);
  rc.s0 = cfg.number("nonlinearity.s0", 0.0);
  rc.width = cfg.number("nonlinearity.width", 1.0);
  if (rc.alpha < 0.0) cfg.fail_key("nonlinearity.alpha", "must be >= 0");
  if (rc.width <= 0.0) cfg.fail_key("nonlinearity.width", "must be > 0");

  const std::string bounds = cfg.string("interval.bounds", "auto");
  if (bounds != "auto") {
    const std::vector<double> ab = cfg.numbers("interval.bounds");
    if (ab.size() != 2 || !(ab[0] < ab[1])) cfg.fail_key("interval.bounds", "expected 'auto' or 'a, b' with a < b");
    rc.interval = Interval{ab[0], ab[1]};
  }

  rc.rhs_kind = cfg.string("rhs.kind", "bubble");
  if (rc.rhs_kind != "bubble" && rc.rhs_kind != "zero" && rc.rhs_kind != "f-of-u0") {
    cfg.fail_key("rhs.kind", "expected bubble, zero or f-of-u0");
  }
  rc.rhs_scale = cfg.number("rhs.scale", -100.0);
  rc.rhs_u0 = cfg.numbers("rhs.u0", {});
  if (rc.rhs_kind == "f-of-u0" && rc.rhs_u0.empty()) cfg.fail_key("rhs.u0", "required when rhs.kind = f-of-u0");
  rc.start_u0 = cfg.numbers("start.u0", {});
  rc.eigen_count = std::max({rc.eigen_count, static_cast<int>(rc.rhs_u0.size()),
                             static_cast<int>(rc.start_u0.size())});

  rc.c = cfg.number("solver.c", 0.0);
  rc.solver.tol = cfg.number("solver.tol", rc.solver.tol);
  rc.solver.max_iter = cfg.integer("solver.max_iter", rc.solver.max_iter);
  rc.solver.depth_max = cfg.integer("solver.depth_max", rc.solver.depth_max);
  rc.solver.leg_tol = cfg.number("solver.leg_tol", rc.solver.leg_tol);
  if (!(rc.solver.tol > 0.0)) cfg.fail_key("solver.tol", "must be > 0");
  if (rc.solver.max_iter < 1) cfg.fail_key("solver.max_iter", "must be >= 1");
  if (rc.solver.depth_max < 0) cfg.fail_key("solver.depth_max", "must be >= 0");

  rc.trace_mode = cfg.string("trace.mode", "line");
  if (rc.trace_mode != "line" && rc.trace_mode != "circle" && rc.trace_mode != "ray" && rc.trace_mode != "probe") {
    cfg.fail_key("trace.mode", "expected line, circle, ray or probe");
  }
  const std::vector<double> window = cfg.numbers("trace.window", {rc.t_min, rc.t_max});
  if (window.size() != 2 || !(window[0] < window[1])) cfg.fail_key("trace.window", "expected 't_min, t_max'");
  rc.t_min = window[0];
  rc.t_max = window[1];
  rc.steps = cfg.integer("trace.steps", rc.steps);
  if (rc.steps < 2) cfg.fail_key("trace.steps", "must be >= 2");
  rc.probe.radius = cfg.number("trace.radius", rc.probe.radius);
  rc.probe.circle_samples = cfg.integer("trace.samples", rc.probe.circle_samples);
  if (rc.probe.circle_samples < 3) cfg.fail_key("trace.samples", "must be >= 3");
  if (cfg.has("trace.directions")) {
    rc.probe.directions.clear();
    for (const auto& d : cfg.groups("trace.directions")) {
      if (d.size() != 2 || (d[0] == 0.0 && d[1] == 0.0)) {
        cfg.fail_key("trace.directions", "expected nonzero pairs 'x, y; x, y'");
      }
      rc.probe.directions.emplace_back(d[0], d[1]);
    }
  }
  rc.probe.ray_length = cfg.number("trace.ray_length", rc.probe.ray_length);
  rc.probe.ray_steps = cfg.integer("trace.ray_steps", rc.probe.ray_steps);
  if (rc.probe.ray_steps < 1) cfg.fail_key("trace.ray_steps", "must be >= 1");
  const int crossing = cfg.integer("trace.crossing", 0);
  if (crossing < 0) cfg.fail_key("trace.crossing", "must be >= 0");
  rc.probe.crossing_index = static_cast<std::size_t>(crossing);

  rc.output_dir = cfg.string("output.dir", rc.output_dir);
  return rc;
}

inline Nonlinearity make_nonlinearity(const RunConfig& rc) {
  if (rc.family == "linear") return make_linear(rc.beta);
  if (rc.family == "arctan") return make_arctan_family(rc.alpha, rc.beta);
  return make_bump_family(rc.beta, rc.alpha, rc.gamma, rc.s0, rc.width);
}

inline Problem make_problem(const RunConfig& rc, int level) {
  ProblemSetup st;
  st.level = level;
  st.nonlinearity = make_nonlinearity(rc);
  st.interval = rc.interval;
  st.eigen_count = rc.eigen_count;
  st.c = rc.c;
  return build_problem(st);
}

/// sum_k coeffs[k] phi_{k+1}
inline NodalField eigen_combination(const Problem& p, const std::vector<double>& coeffs) {
  NodalField u(p.dim());
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    u += coeffs[k] * p.spectral().eigenvector(static_cast<int>(k) + 1);
  }
  return u;
}

inline DualField make_rhs(const RunConfig& rc, const Problem& p) {
  if (rc.rhs_kind == "zero") return DualField(p.dim());
  if (rc.rhs_kind == "f-of-u0") return eval_F(p, eigen_combination(p, rc.rhs_u0));
  const double a = rc.rhs_scale;
  const NodalField gb =
      interpolate([a](double x, double y) { return a * x * (x - 1.0) * y * (y - 2.0); }, p.mesh());
  return p.spectral().mass().apply(gb);
}

/// Collects written artifacts and emits the manifest.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, std::string hash, bool quiet)
      : dir_(std::move(dir)), hash_(std::move(hash)), quiet_(quiet) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  [[nodiscard]] CsvTable table(std::vector<std::string> columns) const { return CsvTable(hash_, std::move(columns)); }

  void write(const std::string& name, const CsvTable& t, bool partial = false) {
    const std::string file = partial ? name + ".partial" : name;
    t.write(dir_ / file);
    files_.push_back({file, t.rows(), hex64(fnv1a64(t.str()))});
    log("wrote " + (dir_ / file).string());
  }

  void write_field(const std::string& name, const Mesh& mesh, const NodalField& u) {
    CsvTable t = table({"dof", "x", "y", "u"});
    for (int j = 0; j < mesh.num_dofs(); ++j) {
      const Point& q = mesh.dof_point(j);
      t.add(j, q.x, q.y, u[j]);
    }
    write(name, t);
  }

  void manifest() {
    CsvTable t = table({"file", "rows", "content_hash"});
    for (const auto& f : files_) t.add(f.name, f.rows, f.hash);
    t.write(dir_ / "manifest.csv");
  }

  void log(const std::string& msg) const {
    if (!quiet_) std::cerr << msg << "\n";
  }

 private:
  struct File {
    std::string name;
    std::size_t rows;
    std::string hash;
  };
  std::filesystem::path dir_;
  std::string hash_;
  bool quiet_;
  std::vector<File> files_;
};

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_mesh(const RunConfig& rc, ArtifactWriter& out) {
  const Mesh mesh = build_mesh(rc.level);
  CsvTable v = out.table({"vertex", "x", "y", "boundary", "dof"});
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    v.add(i, mesh.vertices[i].x, mesh.vertices[i].y, mesh.is_boundary(i) ? 1 : 0, mesh.interior_index[i]);
  }
  out.write("vertices.csv", v);
  CsvTable d = out.table({"dof", "vertex", "x", "y"});
  for (int j = 0; j < mesh.num_dofs(); ++j) {
    const Point& q = mesh.dof_point(j);
    d.add(j, mesh.dof_vertex[j], q.x, q.y);
  }
  out.write("dofs.csv", d);
  CsvTable t = out.table({"triangle", "v0", "v1", "v2"});
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& tri = mesh.triangles[i];
    t.add(i, tri[0], tri[1], tri[2]);
  }
  out.write("triangles.csv", t);
}

inline void cmd_eigs(const RunConfig& rc, ArtifactWriter& out) {
  CsvTable t = out.table({"m", "k", "lambda_h", "lambda", "rel_error"});
  const std::vector<double> exact = rectangle_eigenvalues(rc.eigen_count);
  for (int m : rc.levels) {
    const Mesh mesh = build_mesh(m);
    const int count = std::min(rc.eigen_count, mesh.num_dofs());
    auto K = std::make_shared<const SymSparseMatrix>(assemble_stiffness(mesh));
    auto M = std::make_shared<const SymSparseMatrix>(assemble_mass(mesh));
    const SpectralData spec = compute_eigenpairs(K, M, count);
    for (int k = 1; k <= count; ++k) {
      const double lam = exact[static_cast<std::size_t>(k - 1)];
      t.add(m, k, spec.eigenvalue(k), lam, (spec.eigenvalue(k) - lam) / lam);
    }
    out.log("m=" + std::to_string(m) + ": " + std::to_string(count) + " eigenpairs");
  }
  out.write("eigenvalues.csv", t);
}

/// Horizontal Newton (with continuation) from start.u0 at every level in mesh.levels.
inline int cmd_fiber_point(const RunConfig& rc, ArtifactWriter& out) {
  CsvTable res = out.table({"m", "n", "e_Y", "e_L2"});
  CsvTable table = out.table({"m", "e1_Y", "e2_Y", "e3_Y", "e1_L2", "e2_L2", "e3_L2"});
  CsvTable summary = out.table({"m", "status", "iterations", "subdivisions", "depth", "final_residual_Y"});
  bool failed = false;
  for (int m : rc.levels) {
    const Problem p = make_problem(rc, m);
    const DualField g = make_rhs(rc, p);
    const NodalField u0 = eigen_combination(p, rc.start_u0);
    const SolveReport rep = continuation_horizontal(p, u0, g, rc.solver);
    for (std::size_t n = 0; n < rep.residuals.size(); ++n) res.add(m, n, rep.residuals[n], rep.residuals_l2[n]);
    auto e = [&](const std::vector<double>& v, std::size_t n) {
      return n < v.size() ? v[n] : std::numeric_limits<double>::quiet_NaN();
    };
    table.add(m, e(rep.residuals, 1), e(rep.residuals, 2), e(rep.residuals, 3), e(rep.residuals_l2, 1),
              e(rep.residuals_l2, 2), e(rep.residuals_l2, 3));
    summary.add(m, to_string(rep.status), rep.iterations(), rep.subdivisions, rep.continuation_depth,
                rep.final_residual);
    out.write_field("fiber_point_m" + std::to_string(m) + ".csv", p.mesh(), rep.point());
    out.log("m=" + std::to_string(m) + ": " + to_string(rep.status) + " after " + std::to_string(rep.iterations()) +
            " iterate(s)");
    failed = failed || !rep.ok();
  }
  out.write("residuals.csv", res, failed);
  out.write("table.csv", table, failed);
  out.write("summary.csv", summary);
  return failed ? exit_solver : exit_ok;
}

namespace detail {

inline CsvTable trace_table(const ArtifactWriter& out, const FiberTrace& tr, int dim) {
  CsvTable t = dim == 1 ? out.table({"t", "s"}) : out.table({"t1", "t2", "s1", "s2"});
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (dim == 1) {
      t.add(tr.heights_in[i][0], tr.heights_out[i][0]);
    } else {
      t.add(tr.heights_in[i][0], tr.heights_in[i][1], tr.heights_out[i][0], tr.heights_out[i][1]);
    }
  }
  return t;
}

/// Runs a trace; on failure writes the partial samples with a .partial suffix and rethrows.
template <class Fn>
FiberTrace traced(ArtifactWriter& out, const std::string& name, int dim, Fn&& fn) {
  try {
    return fn();
  } catch (const TraceFailure& e) {
    out.write(name, trace_table(out, e.partial, dim), true);
    throw;
  }
}

inline void write_solutions(ArtifactWriter& out, const Problem& p, const SolutionSet& set) {
  const int dim = p.vertical_dim();
  std::vector<std::string> cols{"index", "label", "residual"};
  for (int k = 0; k < dim; ++k) cols.push_back("t" + std::to_string(k + 1));
  CsvTable t = out.table(cols);
  for (int i = 0; i < set.multiplicity(); ++i) {
    const auto& h = set.heights[static_cast<std::size_t>(i)];
    const std::string& label = set.labels[static_cast<std::size_t>(i)];
    const double r = set.residuals[static_cast<std::size_t>(i)];
    if (dim == 1) t.add(i, label, r, h[0]);
    else t.add(i, label, r, h[0], h[1]);
    out.write_field("solution_" + std::to_string(i) + ".csv", p.mesh(), set.solutions[static_cast<std::size_t>(i)]);
  }
  out.write("summary.csv", t);
}

}  // namespace detail

inline void cmd_trace(const RunConfig& rc, ArtifactWriter& out) {
  const Problem p = make_problem(rc, rc.level);
  const DualField g = make_rhs(rc, p);
  ExplorerOptions opts;
  opts.solver = rc.solver;
  opts.store_points = false;
  if (rc.trace_mode == "line") {
    const FiberTrace tr = detail::traced(out, "trace.csv", 1, [&] {
      return trace_fiber_1d(p, g, rc.t_min, rc.t_max, rc.steps, opts);
    });
    out.write("trace.csv", detail::trace_table(out, tr, 1));
  } else if (rc.trace_mode == "circle" || rc.trace_mode == "probe") {
    const FiberTrace tr = detail::traced(out, "circle.csv", 2, [&] {
      return trace_circle_2d(p, g, rc.probe.radius, rc.probe.circle_samples, opts);
    });
    out.write("circle.csv", detail::trace_table(out, tr, 2));
  } else {
    for (std::size_t k = 0; k < rc.probe.directions.size(); ++k) {
      const std::string name = "ray_" + std::to_string(k) + ".csv";
      const FiberTrace tr = detail::traced(out, name, 2, [&] {
        return trace_radial_2d(p, g, rc.probe.directions[k], rc.probe.ray_length, rc.probe.ray_steps, opts);
      });
      out.write(name, detail::trace_table(out, tr, 2));
    }
  }
}

inline void cmd_solve(const RunConfig& rc, ArtifactWriter& out) {
  const Problem p = make_problem(rc, rc.level);
  const DualField g = make_rhs(rc, p);
  ExplorerOptions opts;
  opts.solver = rc.solver;
  if (p.vertical_dim() == 1) {
    const FiberTrace tr = detail::traced(out, "trace.csv", 1, [&] {
      return trace_fiber_1d(p, g, rc.t_min, rc.t_max, rc.steps, opts);
    });
    out.write("trace.csv", detail::trace_table(out, tr, 1));
    const SolutionSet set = solve_on_fiber_1d(p, g, tr, opts);
    CsvTable touches = out.table({"t"});
    for (double t : set.near_touches) touches.add(t);
    out.write("near_touches.csv", touches);
    detail::write_solutions(out, p, set);
    out.log(std::to_string(set.multiplicity()) + " solution(s), " + std::to_string(set.sign_changes) +
            " sign change(s)");
    return;
  }
  if (p.vertical_dim() != 2) {
    throw NotSupportedError("solve: vertical dimension " + std::to_string(p.vertical_dim()) +
                            " (supported: 1 and 2)");
  }
  ProbeResult res;
  try {
    res = solve_by_probing(p, g, rc.probe, opts);
  } catch (const TraceFailure& e) {
    out.write("circle.csv", detail::trace_table(out, e.partial, 2), true);
    throw;
  }
  out.write("circle.csv", detail::trace_table(out, res.circle, 2));
  for (std::size_t k = 0; k < res.rays.size(); ++k) {
    out.write("ray_" + std::to_string(k) + ".csv", detail::trace_table(out, res.rays[k], 2));
  }
  CsvTable cross = out.table({"s1", "s2", "t1_first", "t2_first", "t1_second", "t2_second"});
  for (const auto& c : res.intersections.self_crossings) {
    cross.add(c.point[0], c.point[1], c.t_first[0], c.t_first[1], c.t_second[0], c.t_second[1]);
  }
  out.write("crossings.csv", cross);
  CsvTable guesses = out.table({"label", "t1", "t2", "image_distance"});
  for (const auto& gu : res.guesses) guesses.add(gu.label, gu.t[0], gu.t[1], gu.image_distance);
  out.write("guesses.csv", guesses);
  detail::write_solutions(out, p, res.solutions);
  out.log(std::to_string(res.solutions.multiplicity()) + " solution(s)");
}

/// Maps an exception to the documented exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const ResonanceError*>(&e)) {
    return exit_config;
  }
  if (dynamic_cast<const EigenConvergenceError*>(&e) || dynamic_cast<const NotSupportedError*>(&e) ||
      dynamic_cast<const NeedsMoreEigenvaluesError*>(&e)) {
    return exit_eigs;
  }
  if (dynamic_cast<const IoError*>(&e)) return exit_io;
  if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const LinearAlgebraError*>(&e) ||
      dynamic_cast<const EvaluationError*>(&e)) {
    return exit_solver;
  }
  return exit_internal;
}

/// Loads the config, runs `command`, writes the manifest. Returns the exit code.
inline int run_command(const std::string& command, const std::filesystem::path& config_path,
                       const std::optional<std::filesystem::path>& out_dir, bool quiet) {
  std::optional<ArtifactWriter> out;
  try {
    const RunConfig rc = parse_run_config(Config::load(config_path));
    out.emplace(out_dir.value_or(rc.output_dir), rc.hash, quiet);
    int code = exit_ok;
    if (command == "mesh") cmd_mesh(rc, *out);
    else if (command == "eigs") cmd_eigs(rc, *out);
    else if (command == "fiber-point") code = cmd_fiber_point(rc, *out);
    else if (command == "trace-fiber") cmd_trace(rc, *out);
    else if (command == "solve") cmd_solve(rc, *out);
    else throw ArgumentError("unknown command '" + command + "'");
    out->manifest();
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (out) {
      try {
        out->manifest();
      } catch (const std::exception&) {
      }
    }
    return exit_code_for(e);
  }
}

}  // namespace flatfiber
