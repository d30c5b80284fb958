#include <gtest/gtest.h>

#include <vector>

#include "siavc/core.hpp"

using siavc::onehot;
using siavc::Prediction;
using siavc::PseudoLabeledSample;
using siavc::RunConfig;
using siavc::VideoTensor;

TEST(Onehot, Definition) {
  const std::vector<double> expected = {0, 0, 1, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(onehot(2, 9), expected);
  EXPECT_EQ(onehot(0, 2), (std::vector<double>{1, 0}));
}

TEST(Onehot, OutOfRange) {
  EXPECT_THROW(onehot(9, 9), std::invalid_argument);
  EXPECT_THROW(onehot(-1, 9), std::invalid_argument);
}

TEST(Prediction, SimplexValidation) {
  EXPECT_NO_THROW(Prediction({0.5, 0.5}));
  EXPECT_THROW(Prediction({0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(Prediction({-0.1, 1.1}), std::invalid_argument);
  EXPECT_THROW(Prediction({}), std::invalid_argument);
}

TEST(Prediction, FromLogitsOnSimplex) {
  const std::vector<double> logits = {1.0, -2.0, 0.5, 3.0};
  const Prediction p = Prediction::from_logits(logits);
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    EXPECT_GE(p[i], 0.0);
    sum += p[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(p.argmax(), 3);
}

TEST(Prediction, ShiftInvariance) {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {11.0, 12.0, 13.0};
  const Prediction pa = Prediction::from_logits(a);
  const Prediction pb = Prediction::from_logits(b);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
}

TEST(PseudoLabeled, DiscLabelDerivedFromLambda) {
  VideoTensor v(1, 1, 2, 2, 0.5f);
  const PseudoLabeledSample s(v, {0.6, 0.4}, 0.6);
  EXPECT_DOUBLE_EQ(s.disc_label, 1.0 - s.lambda);
  EXPECT_THROW(PseudoLabeledSample(v, {0.6, 0.4}, 1.5), std::invalid_argument);
  EXPECT_THROW(PseudoLabeledSample(v, {0.6, 0.6}, 0.5), std::invalid_argument);
}

TEST(VideoTensorType, Invariants) {
  EXPECT_THROW(VideoTensor(0, 1, 1, 1), std::invalid_argument);
  VideoTensor v(2, 3, 4, 5, 0.25f);
  EXPECT_EQ(v.numel(), 2 * 3 * 4 * 5);
  v.at(1, 2, 3, 4) = 2.0f;
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.clamp01();
  EXPECT_NO_THROW(v.validate());
}

TEST(RunConfigType, Validation) {
  RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.vcam_tau = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.mask_lo = 0.5;
  cfg.mask_hi = 0.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.w_fair = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = RunConfig{};
  cfg.patch.patch_h = 7;  // does not divide 32
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
