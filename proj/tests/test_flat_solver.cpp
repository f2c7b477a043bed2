#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace flatfiber;

namespace {

constexpr double pi = std::numbers::pi;

/// f' = lambda1 + (lambda2 - lambda1)/pi arctan s, interacting with lambda1 only.
Nonlinearity fold_nonlinearity() {
  const std::vector<double> lam = rectangle_eigenvalues(2);
  return make_arctan_family((lam[1] - lam[0]) / pi, lam[0]);
}

Problem fold_problem(int m, double c = 0.0) {
  ProblemSetup st;
  st.level = m;
  st.nonlinearity = fold_nonlinearity();
  st.c = c;
  return build_problem(st);
}

Problem linear_problem(int m, double beta, Interval I, double c = 0.0) {
  ProblemSetup st;
  st.level = m;
  st.nonlinearity = make_linear(beta);
  st.interval = I;
  st.c = c;
  return build_problem(st);
}

DualField bubble(const Problem& p, double scale) {
  const NodalField b = interpolate([scale](double x, double y) { return scale * x * (x - 1) * y * (y - 2); }, p.mesh());
  return p.spectral().mass().apply(b);
}

Eigen::MatrixXd dense_weight(const Problem& p, const NodalField& u) {
  return assemble_linearized_weight(p, u).to_dense();
}

}  // namespace

TEST(Residual, LinearNonlinearityGivesLinearMap) {
  std::mt19937_64 rng(1);
  const Problem p = linear_problem(3, 7.0, {5.0, 9.0});
  const NodalField u(oracle::random_vector(p.dim(), rng));
  const Eigen::VectorXd expected =
      p.spectral().stiffness().matrix() * u.vec() - 7.0 * (p.spectral().mass().matrix() * u.vec());
  EXPECT_LE((eval_F(p, u).vec() - expected).norm(), 1e-12 * expected.norm());
}

TEST(Residual, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Problem p = fold_problem(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd u = 3.0 * oracle::random_vector(p.dim(), rng);
    const Eigen::VectorXd h = oracle::random_vector(p.dim(), rng);
    auto F = [&p](const Eigen::VectorXd& x) { return eval_F(p, NodalField(x)).vec(); };
    const double eps = 1e-6;
    const Eigen::VectorXd fd = (F(u + eps * h) - F(u - eps * h)) / (2.0 * eps);
    const Eigen::VectorXd df = assemble_DF(p, NodalField(u)) * h;
    EXPECT_LE((fd - df).norm(), 1e-5 * df.norm());
    EXPECT_LE((oracle::fd_directional(F, u, h, 1e-7) - df).norm(), 1e-4 * df.norm());
  }
}

TEST(Residual, LinearizedWeightMatchesQuadrature) {
  std::mt19937_64 rng(3);
  const Problem p = fold_problem(2);
  const NodalField u(5.0 * oracle::random_vector(p.dim(), rng));
  const VertexField d = eval_d2f_vertices(p.nonlinearity(), p.mesh(), u);
  const Eigen::MatrixXd ref = oracle::weighted_mass(p.mesh(), d.vec());
  EXPECT_LE((dense_weight(p, u) - ref).cwiseAbs().maxCoeff(), 1e-14 * ref.cwiseAbs().maxCoeff());
}

TEST(Lc, MatchesDenseOperator) {
  std::mt19937_64 rng(4);
  for (double c : {0.0, 5.0, 30.0}) {
    const Problem p = fold_problem(2, c);
    const NodalField u(4.0 * oracle::random_vector(p.dim(), rng));
    const Eigen::MatrixXd K = p.spectral().stiffness().to_dense();
    const Eigen::MatrixXd M = p.spectral().mass().to_dense();
    const oracle::DenseProjectors P = oracle::projectors(K, p.spectral().vertical_basis());
    const Eigen::MatrixXd L = oracle::lc_matrix(K, M, dense_weight(p, u), P, c);
    for (int trial = 0; trial < 4; ++trial) {
      const Eigen::VectorXd z = oracle::random_vector(p.dim(), rng);
      const Eigen::VectorXd lz = apply_Lc(p, u, NodalField(z)).vec();
      EXPECT_LE((lz - L * z).norm(), 1e-10 * (L * z).norm()) << "c=" << c;
      const Eigen::VectorXd r = oracle::random_vector(p.dim(), rng);
      const Eigen::VectorXd sol = solve_Lc(p, u, DualField(r)).vec();
      EXPECT_LE((sol - L.lu().solve(r)).norm(), 1e-9 * sol.norm()) << "c=" << c;
    }
  }
}

TEST(Lc, ActsAsShiftedStiffnessOnVerticalModes) {
  std::mt19937_64 rng(5);
  const double c = 3.0;
  const Problem p = fold_problem(4, c);
  const NodalField u(10.0 * oracle::random_vector(p.dim(), rng));
  for (int k : p.spectral().index_set()) {
    const NodalField phi = p.spectral().eigenvector(k);
    const Eigen::VectorXd expected =
        p.spectral().stiffness().matrix() * phi.vec() - c * (p.spectral().mass().matrix() * phi.vec());
    EXPECT_LE((apply_Lc(p, u, phi).vec() - expected).norm(), 1e-12 * expected.norm());
  }
}

TEST(Lc, SolveResidualInYNorm) {
  std::mt19937_64 rng(6);
  const Problem p = fold_problem(4, 2.0);
  const NodalField u(20.0 * oracle::random_vector(p.dim(), rng));
  const LcOperator L(p, u);
  const DualField r(oracle::random_vector(p.dim(), rng));
  const NodalField z = L.solve(r);
  EXPECT_LE(p.spectral().norm_Y(r - L.apply(z)), 1e-12 * p.spectral().norm_Y(r));
  EXPECT_EQ(L.solve(DualField(p.dim())).vec().norm(), 0.0);
}

TEST(ProblemSetupChecks, RejectsResonantShiftAndNarrowInterval) {
  const Problem p = fold_problem(3);
  const double l1 = p.spectral().eigenvalue(1);
  EXPECT_THROW(fold_problem(3, l1), ArgumentError);
  EXPECT_THROW(linear_problem(3, 7.0, {8.0, 9.0}), ArgumentError);
}

TEST(HorizontalNewton, LinearProblemConvergesInOneStep) {
  std::mt19937_64 rng(7);
  for (Interval I : {Interval{9.0, 11.0}, Interval{9.0, 14.0}}) {
    const Problem p = linear_problem(4, 10.0, I);
    const DualField g(oracle::random_vector(p.dim(), rng));
    const NodalField u0(oracle::random_vector(p.dim(), rng));
    SolverOptions opts;
    opts.tol = 1e-13;
    const SolveReport rep = horizontal_newton(p, u0, g, opts);
    ASSERT_TRUE(rep.ok());
    EXPECT_EQ(rep.iterations(), 1);
    EXPECT_LE(rep.residuals.back(), 1e-12);
  }
}

TEST(HorizontalNewton, KeepsVerticalPartAndReachesTolerance) {
  const Problem p = fold_problem(4);
  const DualField g = bubble(p, -100.0);
  const SpectralData& s = p.spectral();
  for (double t : {-80.0, 0.0, 35.0}) {
    const NodalField v = s.from_vertical_coords(Eigen::VectorXd::Constant(1, t));
    const SolveReport rep = fiber_point(p, v, g);
    ASSERT_TRUE(rep.ok());
    for (const NodalField& it : rep.iterates) {
      EXPECT_LE(s.norm_X(s.project_vertical_X(it) - v), 1e-10 * (1.0 + s.norm_X(v)));
    }
    EXPECT_NEAR(s.vertical_coords_X(rep.point())[0], t, 1e-10 * (1.0 + std::abs(t)));
    const double rh = s.norm_Y(s.project_horizontal_Y(g - eval_F(p, rep.point())));
    EXPECT_LE(rh, 1e-8 * std::max({rep.initial_residual, s.norm_Y(g), 1.0}));
  }
}

TEST(HorizontalNewton, UniqueInEachSlice) {
  std::mt19937_64 rng(8);
  const Problem p = fold_problem(4);
  const DualField g = bubble(p, -100.0);
  const SpectralData& s = p.spectral();
  const NodalField v = s.from_vertical_coords(Eigen::VectorXd::Constant(1, 25.0));
  SolverOptions opts;
  opts.tol = 1e-10;
  const SolveReport a = fiber_point(p, v, g, opts);
  // horizontal perturbations as large as the horizontal part of the solution
  const double size = s.norm_X(s.project_horizontal_X(a.point()));
  for (int trial = 0; trial < 3; ++trial) {
    NodalField w = s.project_horizontal_X(NodalField(oracle::random_vector(p.dim(), rng)));
    w *= size / s.norm_X(w);
    const SolveReport b = continuation_horizontal(p, v + w, g, opts);
    ASSERT_TRUE(b.ok());
    EXPECT_LE(s.norm_X(a.point() - b.point()), 10.0 * opts.tol * (1.0 + s.norm_X(a.point())));
  }
}

TEST(HorizontalNewton, RejectsNonVerticalStart) {
  const Problem p = fold_problem(3);
  const NodalField u(Eigen::VectorXd::Ones(p.dim()));
  EXPECT_THROW(fiber_point(p, u, bubble(p, -100.0)), ArgumentError);
  EXPECT_THROW(move_along_fiber(p, u, u, bubble(p, -100.0)), ArgumentError);
}

TEST(MoveAlongFiber, ZeroStepAndWarmVersusCold) {
  const Problem p = fold_problem(4);
  const DualField g = bubble(p, -100.0);
  const SpectralData& s = p.spectral();
  const SolveReport base = fiber_point(p, s.from_vertical_coords(Eigen::VectorXd::Constant(1, 10.0)), g);
  const SolveReport still = move_along_fiber(p, base.point(), NodalField(p.dim()), g);
  EXPECT_EQ(still.iterations(), 0);
  EXPECT_EQ(still.point().vec(), base.point().vec());

  const NodalField step = s.from_vertical_coords(Eigen::VectorXd::Constant(1, 5.0));
  const SolveReport warm = move_along_fiber(p, base.point(), step, g);
  const SolveReport cold = fiber_point(p, s.from_vertical_coords(Eigen::VectorXd::Constant(1, 15.0)), g);
  EXPECT_LE(warm.iterations(), cold.iterations());
  EXPECT_LE(s.norm_X(warm.point() - cold.point()), 1e-7 * (1.0 + s.norm_X(cold.point())));
}

TEST(Continuation, NotUsedWhenPlainNewtonConverges) {
  const Problem p = fold_problem(3);
  const DualField g = bubble(p, -100.0);
  const NodalField u0 = p.spectral().from_vertical_coords(Eigen::VectorXd::Constant(1, 0.0));
  const SolveReport rep = continuation_horizontal(p, u0, g);
  EXPECT_EQ(rep.status, SolveStatus::converged);
  EXPECT_EQ(rep.subdivisions, 0);
  EXPECT_EQ(rep.continuation_depth, 0);
}

TEST(Continuation, RecoversUnderTightIterationBudget) {
  const Problem p = fold_problem(3);
  const DualField g = bubble(p, -100.0);
  const SpectralData& s = p.spectral();
  const NodalField u0 = 1e4 * s.eigenvector(2);
  SolverOptions opts;
  opts.max_iter = 3;
  const SolveReport plain = horizontal_newton(p, u0, g, opts);
  EXPECT_FALSE(plain.ok());
  const SolveReport rep = continuation_horizontal(p, u0, g, opts);
  ASSERT_TRUE(rep.ok());
  EXPECT_EQ(rep.status, SolveStatus::continuation_used);
  EXPECT_GE(rep.continuation_depth, 1);
  EXPECT_LE(rep.continuation_depth, opts.depth_max);
  EXPECT_LE(rep.residuals.back(), 1e-8);
  // the vertical component of the start survives every leg
  EXPECT_LE(s.norm_X(s.project_vertical_X(rep.point()) - s.project_vertical_X(u0)), 1e-8 * s.norm_X(u0));
}

TEST(Coercivity, HorizontalBlockBoundedBelow) {
  std::mt19937_64 rng(10);
  const Problem p = fold_problem(2);
  const SpectralData& s = p.spectral();
  const Eigen::MatrixXd K = s.stiffness().to_dense();
  const Interval& r = p.nonlinearity().range_bounds();
  // distance of the range from the eigenvalues outside the index set, relative to lambda
  double gamma = 1.0;
  const auto& kset = s.index_set();
  for (int k = 1; k <= static_cast<int>(s.eigenvalues().size()); ++k) {
    if (std::find(kset.begin(), kset.end(), k) != kset.end()) continue;
    const double lam = s.eigenvalue(k);
    gamma = std::min({gamma, std::abs(1.0 - r.lo / lam), std::abs(1.0 - r.hi / lam)});
  }
  std::vector<double> sigmas;
  for (int trial = 0; trial < 20; ++trial) {
    const NodalField u(std::pow(10.0, trial % 4) * oracle::random_vector(p.dim(), rng));
    const Eigen::MatrixXd DF(assemble_DF(p, u));
    sigmas.push_back(oracle::horizontal_min_singular_value(K, DF, s.vertical_basis()));
    EXPECT_GT(sigmas.back(), 0.25 * gamma) << "trial " << trial;
  }
}

TEST(Coercivity, LinearCaseMatchesSpectralGap) {
  const Problem p = linear_problem(2, 10.0, {9.0, 14.0});
  const SpectralData& s = p.spectral();
  const Eigen::MatrixXd K = s.stiffness().to_dense();
  const Eigen::MatrixXd DF(assemble_DF(p, NodalField(p.dim())));
  const oracle::DenseEigen all = oracle::generalized_eigen(K, s.mass().to_dense());
  const auto& kset = s.index_set();
  double expected = 1e300;
  for (Eigen::Index k = 0; k < all.values.size(); ++k) {
    if (std::find(kset.begin(), kset.end(), static_cast<int>(k) + 1) != kset.end()) continue;
    expected = std::min(expected, std::abs(1.0 - 10.0 / all.values[k]));
  }
  EXPECT_NEAR(oracle::horizontal_min_singular_value(K, DF, s.vertical_basis()), expected, 1e-10);
}

TEST(NewtonFull, QuadraticDecayNearSolution) {
  const Problem p = fold_problem(4);
  const SpectralData& s = p.spectral();
  const NodalField exact = -50.0 * s.eigenvector(1) + 30.0 * s.eigenvector(2);
  const DualField g = eval_F(p, exact);
  const NodalField start = exact + 0.5 * s.eigenvector(1) - 0.5 * s.eigenvector(3);
  const NewtonResult nr = newton_full(p, start, g, 1e-13);
  ASSERT_GE(nr.residuals.size(), 3u);
  EXPECT_LE(nr.residuals.back(), 1e-13);
  for (std::size_t i = 1; i + 1 < nr.residuals.size(); ++i) {
    if (nr.residuals[i] < 1e-10) break;
    EXPECT_LE(nr.residuals[i + 1], 50.0 * nr.residuals[i] * nr.residuals[i] / nr.residuals[0] + 1e-12);
  }
  EXPECT_LE(s.norm_X(nr.u - exact), 1e-8 * s.norm_X(exact));
}

TEST(StatusNames, Stable) {
  EXPECT_STREQ(to_string(SolveStatus::converged), "converged");
  EXPECT_STREQ(to_string(SolveStatus::max_iter), "max-iter");
  EXPECT_STREQ(to_string(SolveStatus::continuation_used), "continuation-used");
  EXPECT_STREQ(to_string(SolveStatus::failed), "failed");
}
