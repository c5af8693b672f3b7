#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mvda/dataio.hpp"
#include "mvda/experiment.hpp"
#include "mvda/subspace.hpp"
#include "test_util.hpp"

using namespace mvda;
using namespace mvda::subspace;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace {

Matrix unit_columns(Eigen::Index n, std::initializer_list<Eigen::Index> idx) {
  Matrix m = Matrix::Zero(n, static_cast<Eigen::Index>(idx.size()));
  Eigen::Index c = 0;
  for (auto i : idx) m(i, c++) = 1.0;
  return m;
}

// Reference lemma-2 formula, evaluated term by term.
double lemma2_reference(double n, double m, double eta, double k) {
  const double L = std::log(2.0 * n / eta);
  const double a = 2.0 * n * L / (3.0 * m);
  const double b = std::sqrt(4.0 * n * n * L * L + 18.0 * m * n * k * L) / (3.0 * m);
  return a + b;
}

}  // namespace

TEST(Subspace, OrthonormalizeSpansInput) {
  const Matrix Z = testutil::gaussian(9, 3, 1);
  const auto b = orthonormalize(Z);
  EXPECT_LE((b.matrix().transpose() * b.matrix() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix P = Z * (Z.transpose() * Z).inverse() * Z.transpose();
  EXPECT_LE((b.projector() - P).cwiseAbs().maxCoeff(), 1e-10);

  Matrix dep = Z;
  dep.col(2) = 2.0 * dep.col(0) - dep.col(1);
  EXPECT_THROW(orthonormalize(dep), NumericalError);
  EXPECT_THROW(orthonormalize(Matrix::Zero(4, 2)), NumericalError);
  EXPECT_THROW(orthonormalize(testutil::gaussian(2, 3, 1)), ValidationError);
}

TEST(Subspace, PrincipalAnglesOfRotatedLine) {
  for (double t : {0.0, 1e-9, 0.3, 1.0, std::numbers::pi / 2}) {
    Matrix a = unit_columns(3, {0});
    Matrix b(3, 1);
    b << std::cos(t), std::sin(t), 0.0;
    const auto pa = principal_angles(orthonormalize(a), orthonormalize(b));
    EXPECT_NEAR(pa.theta(0), t, 1e-12) << t;
    EXPECT_NEAR(pa.sin_spectral, std::sin(t), 1e-12 + 1e-6 * std::sin(t)) << t;
  }
}

TEST(Subspace, PrincipalAnglesOfPlanes) {
  const double t = 0.4;
  Matrix b(4, 2);
  b << 1.0, 0.0, 0.0, std::cos(t), 0.0, std::sin(t), 0.0, 0.0;
  const auto pa = principal_angles(orthonormalize(unit_columns(4, {0, 1})), orthonormalize(b));
  ASSERT_EQ(pa.theta.size(), 2);
  EXPECT_NEAR(pa.theta.minCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(pa.theta.maxCoeff(), t, 1e-12);
  EXPECT_NEAR(pa.sin_spectral, std::sin(t), 1e-12);
  EXPECT_NEAR(pa.sin_frobenius, std::sin(t), 1e-12);

  const auto ortho = principal_angles(orthonormalize(unit_columns(4, {0, 1})),
                                      orthonormalize(unit_columns(4, {2, 3})));
  EXPECT_NEAR(ortho.sin_spectral, 1.0, 1e-12);
  EXPECT_NEAR(ortho.sin_frobenius, std::numbers::sqrt2, 1e-12);
  EXPECT_THROW(principal_angles(orthonormalize(unit_columns(4, {0})), orthonormalize(unit_columns(4, {0, 1}))),
               Error);
}

TEST(Subspace, ProjectorIdentitiesOnRandomPairs) {
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index n = 6 + t % 10;
    const Eigen::Index l = 1 + t % 4;
    Matrix Z1 = testutil::gaussian(n, l, 1000 + t);
    // Mix of near and far pairs.
    Matrix Z2 = Z1 + (0.01 + 0.2 * (t % 7)) * testutil::gaussian(n, l, 2000 + t);
    const auto b1 = orthonormalize(Z1);
    const auto b2 = orthonormalize(Z2);
    const auto pa = principal_angles(b1, b2);
    const auto pd = projector_distance(b1, b2);
    EXPECT_NEAR(gap_metric(b1, b2), pa.sin_spectral, 1e-8) << t;
    EXPECT_NEAR(pd.frobenius, std::numbers::sqrt2 * pa.sin_frobenius, 1e-8) << t;
    EXPECT_LE(pa.sin_spectral, 1.0 + 1e-12);
  }
}

TEST(Subspace, AnglesIgnoreBasisChoice) {
  const Matrix Z1 = testutil::gaussian(10, 3, 5);
  const Matrix Z2 = testutil::gaussian(10, 3, 6);
  const Matrix R = testutil::gaussian(3, 3, 7) + 3.0 * Matrix::Identity(3, 3);
  const auto a = principal_angles(orthonormalize(Z1), orthonormalize(Z2));
  const auto b = principal_angles(orthonormalize(Z1 * R), orthonormalize(Z2));
  EXPECT_NEAR(a.sin_spectral, b.sin_spectral, 1e-10);
  EXPECT_NEAR(a.sin_frobenius, b.sin_frobenius, 1e-10);
  const auto self = principal_angles(orthonormalize(Z1), orthonormalize(Z1 * R));
  EXPECT_LE(self.sin_spectral, 1e-10);
}

TEST(Subspace, Lemma2MatchesReference) {
  EXPECT_NEAR(bound_lemma2(40, 256, 0.1, 12.5), lemma2_reference(40, 256, 0.1, 12.5), 1e-12);
  double previous = std::numeric_limits<double>::infinity();
  for (double m : {64.0, 256.0, 1024.0, 4096.0}) {
    const double b = bound_lemma2(40, m, 0.1, 10.0);
    EXPECT_LT(b, previous);
    previous = b;
  }
  EXPECT_LT(bound_lemma2(40, 256, 0.2, 10.0), bound_lemma2(40, 256, 0.1, 10.0));
  EXPECT_THROW(bound_lemma2(40, 256, 0.0, 1.0), ValidationError);
  EXPECT_THROW(bound_lemma2(40, 256, 1.0, 1.0), ValidationError);
  EXPECT_THROW(bound_lemma2(0, 256, 0.1, 1.0), ValidationError);
}

TEST(Subspace, XiMonotoneAndReducesToLemma2ForOneView) {
  EXPECT_NEAR(bound_xi(40, 1, 512, 0.1, 7.0), bound_lemma2(40, 512, 0.1, 7.0), 1e-12);
  double previous = std::numeric_limits<double>::infinity();
  for (double m : {64.0, 256.0, 1024.0, 4096.0}) {
    const double x = bound_xi(80, 2, m, 0.1, 20.0);
    EXPECT_LT(x, previous);
    previous = x;
  }
  EXPECT_LT(bound_xi(40, 2, 256, 0.1, 5.0), bound_xi(80, 2, 256, 0.1, 5.0));
  EXPECT_LT(bound_xi(40, 2, 256, 0.1, 5.0), bound_xi(40, 2, 256, 0.1, 6.0));
}

TEST(Subspace, QAndPFactors) {
  EXPECT_EQ(q_factor(0.0), 2.0);
  EXPECT_NEAR(q_factor(0.5), 2.0 * std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(p_factor(0.0, 0.3, 0.0), 2.0, 1e-15);
  EXPECT_NEAR(p_factor(0.0, 0.3, 1.0), 2.0 * std::numbers::sqrt2, 1e-15);
  const double a = 0.2;
  const double d = 0.5;
  const double expected = 2.0 * ((a + d) * std::sqrt(1 - a * a) + a * std::sqrt(1 - (a + d) * (a + d))) / (2 * a + d);
  EXPECT_NEAR(p_factor(a, d, 0.0), expected, 1e-15);
}

TEST(Subspace, Thm3ScalingAndStatus) {
  EXPECT_NEAR(kGoldenRatio, 1.618034, 1e-6);
  const auto t = bound_thm3_terms(0.5, 2.0, 3.0, 4.0, 0.25);
  EXPECT_NEAR(t.quadratic, 0.5 / 0.25 * kGoldenRatio * 9.0 * 7.0 / 4.0, 1e-12);
  EXPECT_NEAR(t.linear, 0.5 / 0.25 * 7.0 / 2.0, 1e-12);
  const auto t2 = bound_thm3_terms(1.0, 4.0, 3.0, 4.0, 0.25);
  EXPECT_NEAR(t2.quadratic, t.quadratic * 2.0 / 4.0, 1e-12);
  EXPECT_NEAR(t2.linear, t.linear * 2.0 / 2.0, 1e-12);
  const auto t3 = bound_thm3_terms(0.5, 2.0, 3.0, 4.0, 0.5);
  EXPECT_NEAR(t3.quadratic + t3.linear, 0.5 * (t.quadratic + t.linear), 1e-12);

  EXPECT_EQ(bound_thm3(0.5, 2.0, 3.0, 4.0, 0.0).status, BoundStatus::inapplicable);
  EXPECT_EQ(bound_thm3(0.5, 2.0, 3.0, 4.0, 0.25).status, BoundStatus::vacuous);
  const auto small = bound_thm3(1e-6, 100.0, 1.0, 1.0, 1.0);
  EXPECT_EQ(small.status, BoundStatus::ok);
  EXPECT_TRUE(small.usable());
  EXPECT_THROW(bound_thm3(0.5, 0.0, 3.0, 4.0, 0.25), ValidationError);
}

TEST(Subspace, Thm2StatusAndValue) {
  Thm2Inputs in{0.0, 0.5, 0.0, 2.0, 2.0, 1.0, 1.0, 0.01};
  const auto b = bound_thm2(in);
  EXPECT_NEAR(b.value, 2.0 * 1.0 * 0.01 / 4.0 * 2.0 / 0.5, 1e-15);
  EXPECT_EQ(b.status, BoundStatus::ok);
  in.crawford_approx = 0.0;
  EXPECT_EQ(bound_thm2(in).status, BoundStatus::inapplicable);
  in.crawford_approx = 2.0;
  in.delta = -0.1;
  EXPECT_EQ(bound_thm2(in).status, BoundStatus::inapplicable);
  in.alpha = 0.8;
  in.delta = 0.5;
  EXPECT_THROW(bound_thm2(in), ValidationError);
}

TEST(Subspace, SeparationExample) {
  Vector exact(2);
  Vector approx(2);
  exact << 2.0, 0.1;
  approx << 1.9, 0.0;
  const auto s = separation_report(exact, approx, 1);
  EXPECT_TRUE(s.feasible);
  EXPECT_EQ(s.gamma, 2.0);
  EXPECT_NEAR(s.alpha, 0.0, 1e-15);
  EXPECT_NEAR(s.delta, 2.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(s.sin_theta_g, s.delta, 1e-12);
  EXPECT_NEAR(separation_sine(0.1, 0.3), 0.4 * std::sqrt(0.99) - 0.1 * std::sqrt(0.84), 1e-15);
  EXPECT_THROW(separation_report(exact, approx, 2), ValidationError);

  Vector overlap(2);
  overlap << 2.0, 2.0;
  EXPECT_FALSE(separation_report(exact, overlap, 1).feasible);
}

namespace {

dataio::MultiViewDataset small_dataset() {
  dataio::SynthesisConfig sc;
  sc.classes = 4;
  sc.views = 2;
  sc.per_class = 5;
  sc.seed = 11;
  return dataio::generate_synthetic(sc);
}

}  // namespace

TEST(Subspace, SelfComparisonIsZero) {
  const auto ds = small_dataset();
  const auto H = scatter::build_structure(ds.layout);
  const auto grams = kernels::view_grams(ds.views, kernels::KernelSpec::rbf(1.0));
  const auto exact = solve_pipeline(grams, H, 1e-4, 2);
  ComparisonOptions opt;
  opt.with_crawford = false;
  const auto rep = compare_pipelines(exact, exact, 64, opt, {});
  EXPECT_LE(rep.sin_theta_spectral, 1e-10);
  EXPECT_LE(rep.gap, 1e-10);
  EXPECT_EQ(rep.kernel_error, 0.0);
  EXPECT_EQ(rep.eigengap.delta, exact.solution.eigenvalues(1) - exact.solution.eigenvalues(2));
}

TEST(Subspace, ExperimentTrendAndIdentities) {
  const auto ds = small_dataset();
  PerturbationConfig cfg;
  cfg.sigma = 2.0;
  cfg.l = 3;
  cfg.m_grid = {64, 4096};
  cfg.trials = 9;
  cfg.with_crawford = false;
  cfg.seed = 5;
  const auto reps = perturbation_experiment(ds, cfg);
  ASSERT_EQ(reps.size(), 18u);
  for (const auto& r : reps) {
    EXPECT_NEAR(r.gap, r.sin_theta_spectral, 1e-8);
    EXPECT_NEAR(r.proj_dist_frobenius, std::numbers::sqrt2 * r.sin_theta_frobenius, 1e-8);
    EXPECT_GT(r.xi, 0.0);
  }
  const auto rows = median_by_m(reps);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].m, 64u);
  EXPECT_LT(rows[1].sin_theta_spectral, rows[0].sin_theta_spectral);
  EXPECT_LT(rows[1].kernel_error, rows[0].kernel_error);
  EXPECT_EQ(rows[0].thm3_usable + rows[0].thm3_vacuous + rows[0].thm3_inapplicable, 9u);

  cfg.threads = 3;
  const auto again = perturbation_experiment(ds, cfg);
  for (std::size_t i = 0; i < reps.size(); ++i) EXPECT_EQ(to_csv_row(reps[i]), to_csv_row(again[i]));
}

TEST(Subspace, ExperimentWithCrawfordReportsBothVariants) {
  const auto ds = small_dataset();
  PerturbationConfig cfg;
  cfg.l = 2;
  cfg.m_grid = {256};
  cfg.trials = 2;
  const auto reps = perturbation_experiment(ds, cfg);
  for (const auto& r : reps) {
    EXPECT_GE(r.crawford_exact_reg, r.crawford_exact - 1e-9);
    EXPECT_GT(r.crawford_exact_reg, 0.0);
    const auto j = to_json(r);
    EXPECT_TRUE(j.contains("bound_thm2"));
    EXPECT_TRUE(j.contains("crawford_approx_reg"));
  }
}
