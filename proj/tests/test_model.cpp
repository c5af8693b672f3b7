#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mvda/dataio.hpp"
#include "mvda/model.hpp"
#include "test_util.hpp"

using namespace mvda;
using kernels::KernelSpec;
using model::Regularizer;
using Matrix = Eigen::MatrixXd;

namespace {

dataio::MultiViewDataset make(std::size_t classes, std::size_t per, double noise, std::uint64_t seed,
                              std::size_t views = 2) {
  dataio::SynthesisConfig sc;
  sc.classes = classes;
  sc.views = views;
  sc.per_class = per;
  sc.noise = noise;
  sc.dims = {5};
  sc.seed = seed;
  return dataio::generate_synthetic(sc);
}

}  // namespace

TEST(Model, SingleClassHasNoBetweenClassScatter) {
  const auto ds = make(1, 5, 0.1, 1);
  try {
    model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 1);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("between-class scatter is zero"), std::string::npos);
  }
}

TEST(Model, InputValidation) {
  const auto ds = make(3, 4, 0.1, 2);
  EXPECT_THROW(model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 0), ValidationError);
  EXPECT_THROW(model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 25), ValidationError);
  EXPECT_THROW(model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 1, model::FitMode::feature_space),
               ValidationError);
  EXPECT_THROW(model::fit(ds, KernelSpec::rbf(1.0), Regularizer::absolute(0.0), 1), ValidationError);
  const auto m = model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 2);
  EXPECT_THROW(model::project(m, 2, ds.views[0]), ValidationError);
  EXPECT_THROW(model::project(m, 0, testutil::gaussian(3, 4, 1)), DimensionError);
  EXPECT_THROW(model::nearest_neighbors(Matrix(2, 2), Matrix(0, 2)), ValidationError);
  EXPECT_THROW(m.truncated(3), ValidationError);
  EXPECT_THROW(model::fit_mode_from_string("dual"), ValidationError);
}

TEST(Model, IdenticalViewsGiveSymmetricPerfectTable) {
  auto ds = make(4, 5, 0.3, 3);
  ds.views[1] = ds.views[0];
  ds.labels[1] = ds.labels[0];
  ds.layout.counts = [&] {
    auto c = ds.layout.counts;
    for (auto& row : c) row[1] = row[0];
    return c;
  }();
  const auto m = model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 3);
  const auto coords = model::project_all(m, ds);
  EXPECT_LE((coords[0] - coords[1]).cwiseAbs().maxCoeff(), 1e-8 * coords[0].cwiseAbs().maxCoeff());
  const Matrix t = model::cross_view_table_from_coords(coords, ds);
  EXPECT_EQ(t(0, 1), 100.0);
  EXPECT_EQ(t(1, 0), 100.0);
  EXPECT_TRUE(std::isnan(t(0, 0)));
}

TEST(Model, WellSeparatedTrainingSetIsClassifiedPerfectly) {
  const auto ds = make(3, 6, 0.02, 4);
  const auto m = model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 2);
  const Matrix t = model::cross_view_table(m, ds);
  EXPECT_EQ(t(0, 1), 100.0);
  EXPECT_EQ(t(1, 0), 100.0);
  const auto r = model::classify_cross_view(m, {0, ds.views[0], ds.labels[0]}, {1, ds.views[1], ds.labels[1]});
  EXPECT_EQ(r.rate, t(0, 1));
  EXPECT_EQ(r.params.l, 2u);
  EXPECT_EQ(r.params.kind, kernels::KernelKind::rbf);
  EXPECT_EQ(model::mean_off_diagonal(t), 100.0);
}

TEST(Model, TrainingProjectionIsGramTimesBlock) {
  const auto ds = make(3, 4, 0.2, 5);
  const auto spec = KernelSpec::rbf(1.5);
  const auto m = model::fit(ds, spec, Regularizer{}, 2);
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix expected = kernels::gram(ds.views[j], spec) * m.blocks[j];
    EXPECT_LE((model::project(m, j, ds.views[j]) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Model, LinearKernelProjectsThroughExplicitWeights) {
  auto ds = make(3, 4, 0.2, 6);
  for (auto& x : ds.views) x.col(4).setZero();
  const auto m = model::fit(ds, KernelSpec::linear(), Regularizer{}, 2);
  // A direction outside the span of the training samples projects to zero.
  Matrix e = Matrix::Zero(1, 5);
  e(0, 4) = 3.0;
  EXPECT_EQ(model::project(m, 0, e).cwiseAbs().maxCoeff(), 0.0);
  const Matrix Y = testutil::gaussian(7, 5, 8);
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix W = ds.views[j].transpose() * m.blocks[j];
    EXPECT_LE((model::project(m, j, Y) - Y * W).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Model, NearestNeighborTiesAndPermutation) {
  Matrix gallery(4, 2);
  gallery << 1, 1, 0, 0, 1, 1, 5, 5;
  Matrix probe(2, 2);
  probe << 1.1, 1.0, 4.0, 4.0;
  EXPECT_EQ(model::nearest_neighbors(probe, gallery), (std::vector<std::size_t>{0, 3}));

  const Matrix g = testutil::gaussian(12, 3, 9);
  const Matrix p = testutil::gaussian(6, 3, 10);
  const auto nn = model::nearest_neighbors(p, g);
  const std::vector<Eigen::Index> perm{5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6};
  Matrix gp(12, 3);
  std::vector<std::size_t> inverse(12);
  for (std::size_t k = 0; k < 12; ++k) {
    gp.row(static_cast<Eigen::Index>(k)) = g.row(perm[k]);
    inverse[static_cast<std::size_t>(perm[k])] = k;
  }
  const auto nnp = model::nearest_neighbors(p, gp);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(nnp[k], inverse[nn[k]]);

  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  EXPECT_EQ(model::rank1(g, labels, g, labels).rate, 100.0);
}

TEST(Model, SweepSinglePointAndConsistency) {
  const auto full = make(6, 5, 0.2, 11);
  const auto [train, test] = dataio::split_by_class(full, 3);
  model::SweepConfig one;
  one.kinds = {kernels::KernelKind::linear};
  one.ls = {1};
  const auto r1 = model::sweep(train, test, one);
  ASSERT_EQ(r1.rows.size(), 1u);
  ASSERT_EQ(r1.points.size(), 1u);
  ASSERT_EQ(r1.best.size(), 1u);
  EXPECT_EQ(r1.best[0].rate, r1.rows[0].rate);
  EXPECT_EQ(r1.rows[0].sigma, 0.0);
  EXPECT_EQ(r1.rows[0].m, 0u);

  model::SweepConfig cfg;
  cfg.sigmas = {0.5, 2.0};
  cfg.ls = {1, 2};
  cfg.ms = {64};
  cfg.rff_seeds = 3;
  const auto res = model::sweep(train, test, cfg);
  EXPECT_EQ(res.rows.size(), 2u * (1 + 2 + 2 * 3));
  EXPECT_EQ(res.points.size(), 2u * (1 + 2 + 2));
  ASSERT_EQ(res.best.size(), 3u);
  for (const auto& b : res.best) {
    for (const auto& pt : res.points) {
      if (pt.kind == b.kind && pt.l == 1) {
        EXPECT_GE(b.rate, pt.rate);
      }
    }
  }
  // Each row equals a direct fit at that l.
  for (const auto& row : res.rows) {
    if (row.kind == kernels::KernelKind::rff) continue;
    const auto spec = row.kind == kernels::KernelKind::linear ? KernelSpec::linear() : KernelSpec::rbf(row.sigma);
    const auto m = model::fit(train, spec, cfg.reg, row.l);
    const Matrix t = model::cross_view_table(m, test);
    EXPECT_EQ(t(0, 1), row.table(0, 1));
    EXPECT_EQ(t(1, 0), row.table(1, 0));
  }
  // RFF points are medians and their representative row belongs to them.
  for (const auto& pt : res.points) {
    if (pt.kind != kernels::KernelKind::rff) continue;
    const auto& rep = res.rows[pt.representative];
    EXPECT_EQ(rep.sigma, pt.sigma);
    EXPECT_EQ(rep.l, pt.l);
    std::vector<double> rates;
    for (const auto& row : res.rows) {
      if (row.kind == pt.kind && row.sigma == pt.sigma && row.l == pt.l) rates.push_back(row.rate);
    }
    EXPECT_EQ(rates.size(), 3u);
    EXPECT_EQ(pt.rate, model::median_of(rates));
    EXPECT_EQ(rep.rate, pt.rate);
  }

  cfg.threads = 3;
  const auto again = model::sweep(train, test, cfg);
  ASSERT_EQ(again.rows.size(), res.rows.size());
  for (std::size_t k = 0; k < res.rows.size(); ++k) EXPECT_EQ(again.rows[k].rate, res.rows[k].rate);
}

TEST(Model, SaveLoadRoundTrip) {
  const auto ds = make(3, 4, 0.2, 12);
  const Matrix probe = testutil::gaussian(5, 5, 13);
  for (const auto& spec : {KernelSpec::linear(), KernelSpec::rbf(1.2), KernelSpec::rff(1.2, 32, 7)}) {
    for (auto mode : {model::FitMode::kernel, model::FitMode::feature_space}) {
      if (mode == model::FitMode::feature_space && spec.kind != kernels::KernelKind::rff) continue;
      const auto m = model::fit(ds, spec, Regularizer{}, 2, mode);
      const auto dir = testutil::temp_dir("model_" + kernels::to_string(spec.kind) + model::to_string(mode));
      model::save(m, dir, "# header");
      const auto back = model::load(dir);
      EXPECT_EQ(back.l, m.l);
      EXPECT_EQ(back.epsilon, m.epsilon);
      EXPECT_EQ(back.mode, m.mode);
      for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(back.blocks[j], m.blocks[j]);
        EXPECT_EQ(model::project(back, j, probe), model::project(m, j, probe));
      }
    }
  }
  EXPECT_THROW(model::load(testutil::temp_dir("model_missing")), IoError);
}

TEST(Model, RffModes) {
  const auto ds = make(3, 6, 0.05, 14);
  const auto spec = KernelSpec::rff(1.0, 256, 3);
  const auto km = model::fit(ds, spec, Regularizer{}, 2);
  const auto fm = model::fit(ds, spec, Regularizer{}, 2, model::FitMode::feature_space);
  EXPECT_EQ(km.blocks[0].rows(), 18);
  EXPECT_EQ(fm.blocks[0].rows(), 256);
  EXPECT_EQ(km.maps[1].W, fm.maps[1].W);
  EXPECT_EQ(km.rff_lift[0].rows(), 256);
  EXPECT_TRUE(fm.rff_lift.empty());
  EXPECT_EQ(model::mean_off_diagonal(model::cross_view_table(km, ds)), 100.0);
  EXPECT_EQ(model::mean_off_diagonal(model::cross_view_table(fm, ds)), 100.0);

  // Kernel-mode RFF projection equals the approximate Gram times the block.
  const auto phi0 = kernels::rff_transform(ds.views[0], km.maps[0], spec.normalize);
  EXPECT_LE((model::project(km, 0, ds.views[0]) - kernels::approx_gram(phi0) * km.blocks[0]).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(Model, FlatKernelIsDegenerate) {
  const auto ds = make(3, 4, 0.1, 15);
  EXPECT_THROW(model::fit(ds, KernelSpec::rbf(1e8), Regularizer{}, 1), NumericalError);
}

TEST(Model, TruncationMatchesLowerDimensionalFit) {
  const auto ds = make(4, 4, 0.2, 16);
  const auto m3 = model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 3);
  const auto m1 = model::fit(ds, KernelSpec::rbf(1.0), Regularizer{}, 1);
  const auto t = m3.truncated(1);
  EXPECT_EQ(t.blocks[0], m1.blocks[0]);
  EXPECT_EQ(t.eigenvalues, m1.eigenvalues);
}
