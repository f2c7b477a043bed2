// Acceptance run: drives the command-line tool on the frozen configs and checks
// the library properties directly. Prints one PASS/FAIL line per criterion.

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace flatfiber;
namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "flatfiber_acceptance";

/// Collects failed sub-checks of one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Runs the CLI; returns (exit code, wall seconds).
std::pair<int, double> cli(const std::string& command, const std::string& config, const fs::path& out) {
  fs::remove_all(out);
  const std::string cmd = std::string(FLATFIBER_CLI) + " " + command + " --config " + FLATFIBER_CONFIGS + "/" +
                          config + " --out " + out.string() + " --quiet";
  const auto t0 = std::chrono::steady_clock::now();
  const int status = std::system(cmd.c_str());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, secs};
}

void eigenvalues(Check& c) {
  const auto [code, secs] = cli("eigs", "eigs.cfg", work / "eigs");
  c.expect(code == 0, "eigs exit code " + std::to_string(code));
  if (code != 0) return;
  const CsvData d = read_csv(work / "eigs" / "eigenvalues.csv");
  std::map<std::pair<int, int>, double> err;
  for (std::size_t r = 0; r < d.rows.size(); ++r) {
    const int m = static_cast<int>(d.number(r, "m"));
    const int k = static_cast<int>(d.number(r, "k"));
    err[{m, k}] = d.number(r, "lambda_h") - d.number(r, "lambda");
    if (m == 5) {
      const double rel = d.number(r, "rel_error");
      c.expect(rel <= 0.02, "m=5 k=" + std::to_string(k) + " rel error " + fmt(rel));
      c.notes << " l" << k << "=" << fmt(d.number(r, "lambda_h")) << "(" << fmt(100 * rel) << "%)";
    }
  }
  for (int k = 1; k <= 3; ++k) {
    for (int m = 3; m < 6; ++m) {
      const double ratio = err.at({m, k}) / err.at({m + 1, k});
      c.expect(ratio >= 3.0 && ratio <= 5.0, "k=" + std::to_string(k) + " ratio m=" + std::to_string(m) + " " + fmt(ratio));
    }
  }
  c.expect(secs <= 30.0, "runtime " + fmt(secs) + " s");
  c.notes << "; " << fmt(secs) << " s";
}

void horizontal_table(Check& c) {
  const auto [code, secs] = cli("fiber-point", "horizontal_table.cfg", work / "table");
  c.expect(code == 0, "fiber-point exit code " + std::to_string(code));
  if (code != 0) return;
  const CsvData d = read_csv(work / "table" / "table.csv");
  // published normalized errors e1..e3 for m = 3, 4, 5 in H^-1 and L^2
  const double ref_y[3][3] = {{1.42e-2, 5.27e-5, 4.48e-8}, {1.70e-2, 1.12e-4, 3.93e-8}, {1.75e-2, 1.31e-4, 4.25e-8}};
  const double ref_l2[3][3] = {{1.97e-2, 9.37e-5, 7.45e-8}, {2.36e-2, 1.74e-4, 1.21e-7}, {2.44e-2, 1.93e-4, 1.11e-7}};
  const double lo[3] = {1e-3, 1e-5, 1e-9};
  const double hi[3] = {1e-1, 1e-3, 1e-6};
  c.expect(d.rows.size() == 3, "expected 3 table rows");
  for (std::size_t r = 0; r < d.rows.size() && r < 3; ++r) {
    const int m = static_cast<int>(d.number(r, "m"));
    c.expect(m == static_cast<int>(r) + 3, "unexpected level order");
    for (int n = 0; n < 3; ++n) {
      for (int norm = 0; norm < 2; ++norm) {
        const std::string col = "e" + std::to_string(n + 1) + (norm == 0 ? "_Y" : "_L2");
        const double v = d.number(r, col);
        const double ref = norm == 0 ? ref_y[r][n] : ref_l2[r][n];
        const std::string tag = "m=" + std::to_string(m) + " " + col + "=" + fmt(v);
        c.expect(v >= lo[n] && v <= hi[n], tag + " outside [" + fmt(lo[n]) + ", " + fmt(hi[n]) + "]");
        c.expect(v >= ref / 10.0 && v <= ref * 10.0, tag + " not within 10x of " + fmt(ref));
      }
    }
    c.notes << " m" << m << ":" << fmt(d.number(r, "e1_Y")) << "/" << fmt(d.number(r, "e2_Y")) << "/"
            << fmt(d.number(r, "e3_Y"));
  }
  c.expect(secs <= 120.0, "runtime " + fmt(secs) + " s");
  c.notes << "; " << fmt(secs) << " s";
}

void multiplicities(Check& c) {
  struct Case {
    const char* config;
    int expected;
    bool monotone;
  };
  const Case cases[] = {{"dh_below.cfg", 1, true},
                        {"dh_between.cfg", 1, true},
                        {"fold.cfg", 2, false},
                        {"convex_k2.cfg", 3, false},
                        {"nonconvex.cfg", 3, false}};
  for (const Case& k : cases) {
    const fs::path out = work / fs::path(k.config).stem();
    const auto [code, secs] = cli("solve", k.config, out);
    c.expect(code == 0, std::string(k.config) + " exit code " + std::to_string(code));
    if (code != 0) continue;
    const CsvData sol = read_csv(out / "summary.csv");
    const int count = static_cast<int>(sol.rows.size());
    c.expect(count == k.expected, std::string(k.config) + ": " + std::to_string(count) + " solution(s), expected " +
                                      std::to_string(k.expected));
    for (std::size_t r = 0; r < sol.rows.size(); ++r) {
      const double res = sol.number(r, "residual");
      c.expect(res <= 1e-8, std::string(k.config) + ": residual " + fmt(res));
    }
    if (k.monotone) {
      const CsvData tr = read_csv(out / "trace.csv");
      int up = 0;
      int down = 0;
      for (std::size_t r = 1; r < tr.rows.size(); ++r) {
        const double ds = tr.number(r, "s") - tr.number(r - 1, "s");
        up += ds > 0.0;
        down += ds < 0.0;
      }
      const int steps = static_cast<int>(tr.rows.size()) - 1;
      c.expect(up == steps || down == steps, std::string(k.config) + ": trace not strictly monotone");
    }
    c.notes << " " << fs::path(k.config).stem().string() << "=" << count;
  }
}

void planar_fiber(Check& c) {
  const fs::path out = work / "fiber2d";
  const auto [code, secs] = cli("solve", "fiber2d.cfg", out);
  c.expect(code == 0, "fiber2d exit code " + std::to_string(code));
  if (code != 0) return;
  const CsvData cross = read_csv(out / "crossings.csv");
  c.expect(!cross.rows.empty(), "circle image has no self-crossing");
  const CsvData sol = read_csv(out / "summary.csv");
  c.expect(sol.rows.size() == 4, std::to_string(sol.rows.size()) + " solution(s), expected 4");
  std::string labels;
  for (std::size_t r = 0; r < sol.rows.size(); ++r) {
    labels += sol.rows[r][sol.column("label")];
    const double res = sol.number(r, "residual");
    c.expect(res <= 1e-8, "residual " + fmt(res));
  }
  for (char l : std::string("UDLR")) {
    c.expect(labels.find(l) != std::string::npos, std::string("no solution from guess ") + l);
  }
  c.expect(secs <= 600.0, "runtime " + fmt(secs) + " s");
  c.notes << " crossings=" << cross.rows.size() << " solutions=" << sol.rows.size() << " labels=" << labels << "; "
          << fmt(secs) << " s";
}

Problem fold_problem(int m) {
  const std::vector<double> lam = rectangle_eigenvalues(2);
  ProblemSetup st;
  st.level = m;
  st.nonlinearity = make_arctan_family((lam[1] - lam[0]) / std::numbers::pi, lam[0]);
  return build_problem(st);
}

DualField bubble(const Problem& p) {
  return p.spectral().mass().apply(
      interpolate([](double x, double y) { return -100.0 * x * (x - 1) * y * (y - 2); }, p.mesh()));
}

void properties(Check& c) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  auto track = [&](double v, double tol, const std::string& what) {
    c.expect(v <= tol, what + " " + fmt(v) + " > " + fmt(tol));
  };

  // projections and isometry, plus the dense oracles, at m = 2
  const Problem p2 = fold_problem(2);
  const SpectralData& s2 = p2.spectral();
  const Eigen::MatrixXd K = s2.stiffness().to_dense();
  const Eigen::MatrixXd M = s2.mass().to_dense();
  const oracle::DenseProjectors P = oracle::projectors(K, s2.vertical_basis());
  for (int trial = 0; trial < 10; ++trial) {
    const NodalField z(oracle::random_vector(p2.dim(), rng));
    const DualField g(oracle::random_vector(p2.dim(), rng));
    const double zn = s2.norm_X(z);
    const double gn = s2.norm_Y(g);
    const NodalField qz = s2.project_vertical_X(z);
    const DualField qg = s2.project_vertical_Y(g);
    worst = std::max({s2.norm_X(s2.project_vertical_X(qz) - qz) / zn, s2.norm_X(qz + s2.project_horizontal_X(z) - z) / zn,
                      std::abs(s2.inner_X(qz, s2.project_horizontal_X(z))) / (zn * zn),
                      s2.norm_Y(s2.project_vertical_Y(qg) - qg) / gn,
                      std::abs(s2.inner_Y(qg, s2.project_horizontal_Y(g))) / (gn * gn)});
    track(worst, 1e-10, "projection idempotence/complementarity");
    const DualField kz = s2.stiffness().apply(z);
    track(std::abs(s2.norm_Y(kz) - zn) / zn, 1e-10, "X/Y isometry");
    const Eigen::VectorXd zv = z.vec();
    track((s2.project_vertical_X(z).vec() - P.QX * zv).norm() / zv.norm(), 1e-10, "dense Q_X");
    track((s2.project_horizontal_X(z).vec() - P.PX * zv).norm() / zv.norm(), 1e-10, "dense P_X");
    track((s2.project_vertical_Y(DualField(zv)).vec() - P.QY * zv).norm() / zv.norm(), 1e-10, "dense Q_Y");
    track((s2.project_horizontal_Y(DualField(zv)).vec() - P.PY * zv).norm() / zv.norm(), 1e-10, "dense P_Y");
    const NodalField u(5.0 * oracle::random_vector(p2.dim(), rng));
    const Eigen::MatrixXd W = assemble_linearized_weight(p2, u).to_dense();
    const Eigen::MatrixXd L = oracle::lc_matrix(K, M, W, P, p2.c());
    const Eigen::VectorXd lz = apply_Lc(p2, u, z).vec();
    track((lz - L * zv).norm() / (L * zv).norm(), 1e-10, "dense L_c");
  }

  // derivative against central differences
  const Problem p3 = fold_problem(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd u = 3.0 * oracle::random_vector(p3.dim(), rng);
    const Eigen::VectorXd h = oracle::random_vector(p3.dim(), rng);
    auto F = [&p3](const Eigen::VectorXd& x) { return eval_F(p3, NodalField(x)).vec(); };
    const Eigen::VectorXd fd = (F(u + 1e-6 * h) - F(u - 1e-6 * h)) / 2e-6;
    const Eigen::VectorXd df = assemble_DF(p3, NodalField(u)) * h;
    track((fd - df).norm() / df.norm(), 1e-5, "DF vs finite differences");
  }

  // one-step exactness for a linear nonlinearity
  {
    ProblemSetup st;
    st.level = 3;
    st.nonlinearity = make_linear(10.0);
    st.interval = Interval{9.0, 14.0};
    const Problem pl = build_problem(st);
    SolverOptions opts;
    opts.tol = 1e-13;
    const SolveReport rep = horizontal_newton(pl, NodalField(oracle::random_vector(pl.dim(), rng)),
                                              DualField(oracle::random_vector(pl.dim(), rng)), opts);
    c.expect(rep.iterations() == 1, "linear problem took " + std::to_string(rep.iterations()) + " steps");
    track(rep.residuals.back(), 1e-12, "linear one-step residual");
  }

  // height preservation and uniqueness at m = 3
  {
    const DualField g = bubble(p3);
    const SpectralData& s = p3.spectral();
    SolverOptions opts;
    opts.tol = 1e-10;
    const NodalField v = s.from_vertical_coords(Eigen::VectorXd::Constant(1, 40.0));
    const SolveReport a = fiber_point(p3, v, g, opts);
    track(std::abs(s.vertical_coords_X(a.point())[0] - 40.0) / 40.0, 1e-10, "height preservation");
    NodalField w = s.project_horizontal_X(NodalField(oracle::random_vector(p3.dim(), rng)));
    w *= s.norm_X(s.project_horizontal_X(a.point())) / s.norm_X(w);
    const SolveReport b = continuation_horizontal(p3, v + w, g, opts);
    c.expect(b.ok(), "second start did not converge");
    track(s.norm_X(a.point() - b.point()) / (1.0 + s.norm_X(a.point())), 10.0 * opts.tol, "fiber-point uniqueness");
  }

  // coercivity of the horizontal block across random states at m = 2
  double sigma_min = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const NodalField u(std::pow(10.0, trial % 4) * oracle::random_vector(p2.dim(), rng));
    const Eigen::MatrixXd DF(assemble_DF(p2, u));
    sigma_min = std::min(sigma_min, oracle::horizontal_min_singular_value(K, DF, s2.vertical_basis()));
  }
  c.expect(sigma_min > 0.0, "horizontal block singular");
  c.notes << " sigma_min=" << fmt(sigma_min);
}

void determinism(Check& c) {
  const char* runs[][2] = {{"solve", "fold.cfg"}, {"fiber-point", "horizontal_table.cfg"}};
  std::size_t files = 0;
  for (const auto& r : runs) {
    const fs::path a = work / "det_a";
    const fs::path b = work / "det_b";
    const int ca = cli(r[0], r[1], a).first;
    const int cb = cli(r[0], r[1], b).first;
    c.expect(ca == 0 && cb == 0, std::string(r[1]) + " failed");
    for (const auto& entry : fs::directory_iterator(a)) {
      const fs::path other = b / entry.path().filename();
      const bool same = fs::exists(other) && read_file(entry.path()) == read_file(other);
      c.expect(same, std::string(r[1]) + ": " + entry.path().filename().string() + " differs");
      ++files;
    }
  }
  c.notes << " " << files << " files compared";
}

}  // namespace

int main() {
  fs::create_directories(work);
  const std::pair<const char*, std::function<void(Check&)>> criteria[] = {
      {"1 eigenvalues", eigenvalues},       {"2 horizontal error table", horizontal_table},
      {"3 solution multiplicities", multiplicities}, {"4 two-dimensional fiber", planar_fiber},
      {"5 property suites", properties},    {"6 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << ":" << c.notes.str();
    for (const auto& f : c.failures) std::cout << "\n     - " << f;
    std::cout << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criterion/criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
