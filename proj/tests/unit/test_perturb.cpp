#include <gtest/gtest.h>

#include "enlstm/data.hpp"
#include "enlstm/perturb.hpp"

using namespace enlstm;

TEST(Perturb, ContractionExample) {
  Matrix m(1, 2);
  m << 0, 2;
  const Matrix out = smooth_perturb(m, 0.5, 0.0, 1);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out(0, 1), 1.5);
}

TEST(Perturb, NoiseScalesWithEnsembleVariance) {
  // 2000 members at +-1 (variance ~1); h = 0.25 adds noise of variance 0.25.
  const Eigen::Index n = 2000;
  Matrix m(1, n);
  for (Eigen::Index j = 0; j < n; ++j) m(0, j) = (j % 2 == 0) ? 1.0 : -1.0;
  const Matrix out = smooth_perturb(m, 1.0, 0.25, 99);
  const double added = covariance(out - m)(0, 0);
  EXPECT_NEAR(added, 0.25 * covariance(m)(0, 0), 0.03);
}

TEST(Perturb, CompensationExamples) {
  EXPECT_DOUBLE_EQ(compensation_term(0.3, {0.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(compensation_term(0.0, {5.0, 2.0}), 0.0);
  EXPECT_NEAR(compensation_term(0.1, {2.0, 1.0}), 0.2, 1e-15);
  EXPECT_NEAR(perturb_normalized(1.0, 0.1, {2.0, 1.0}), 1.3, 1e-15);
  EXPECT_THROW(compensation_term(0.1, {2.0, 0.0}), InvalidArgument);
}

TEST(Perturb, NormalizedPerturbationMatchesRealScale) {
  const ChannelScale ch{30.0, 4.0};
  const double x = 37.0;
  const double eps = 0.03;
  EXPECT_NEAR(perturb_normalized(normalize(x, ch), eps, ch), normalize(x * (1.0 + eps), ch), 1e-14);
}

TEST(Perturb, ObservationNoiseGrowsLinearlyWithEps) {
  PerturbationConfig cfg;
  cfg.channel_stats = {{0.0, 1.0}};
  std::vector<double> d(20000, 1.0);
  std::vector<std::size_t> ch(d.size(), 0);
  auto sd_for = [&](double eps) {
    cfg.eps_real_std = eps;
    const auto out = perturb_observations(d, ch, cfg, 0, 42);
    double s = 0.0;
    for (double v : out) s += (v - 1.0) * (v - 1.0);
    return std::sqrt(s / out.size());
  };
  EXPECT_NEAR(sd_for(0.02), 0.02, 0.001);
  EXPECT_NEAR(sd_for(0.04) / sd_for(0.02), 2.0, 1e-9);  // same draws, scaled
}

TEST(Perturb, MembersDrawIndependentStreams) {
  PerturbationConfig cfg;
  cfg.channel_stats = {{1.0, 2.0}};
  std::vector<double> d(10, 0.5);
  std::vector<std::size_t> ch(10, 0);
  EXPECT_NE(perturb_observations(d, ch, cfg, 0, 7), perturb_observations(d, ch, cfg, 1, 7));
  EXPECT_EQ(perturb_observations(d, ch, cfg, 3, 7), perturb_observations(d, ch, cfg, 3, 7));
}

TEST(Perturb, ConfigValidation) {
  PerturbationConfig cfg;
  cfg.alpha = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.h = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.channel_stats = {{1.0, 0.0}};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  EXPECT_THROW(smooth_perturb(Matrix::Zero(3, 1), 0.9, 0.1, 0), InvalidArgument);
}

TEST(Perturb, SmoothingFactorDecay) {
  PerturbationConfig cfg;
  cfg.h = 0.2;
  cfg.h_decay = 0.5;
  EXPECT_DOUBLE_EQ(cfg.h_at(0), 0.2);
  EXPECT_DOUBLE_EQ(cfg.h_at(2), 0.05);
}
