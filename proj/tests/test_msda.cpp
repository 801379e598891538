#include <gtest/gtest.h>

#include "support.hpp"

namespace oculomix {
namespace {

using testing::make_cohort;
using testing::PatientSpec;
using testing::random_grid;

TEST(SampleLambda, UniformMean) {
  Rng rng(1);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) sum += sample_lambda(1.0, rng);
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(SampleLambda, SupportAndDeterminism) {
  Rng a(2), b(2);
  for (int k = 0; k < 10000; ++k) {
    const double x = sample_lambda(0.8, a);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    ASSERT_EQ(x, sample_lambda(0.8, b));
  }
}

TEST(SampleLambda, BetaVariance) {
  // Var Beta(a, a) = 1 / (4 (2a + 1)).
  Rng rng(3);
  const double alpha = 0.8;
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double x = sample_lambda(alpha, rng);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(s2 / n - mean * mean, 1.0 / (4.0 * (2.0 * alpha + 1.0)), 0.003);
}

TEST(SampleLambda, NonPositiveAlpha) {
  Rng rng(4);
  for (double alpha : {0.0, -1.0}) {
    try {
      sample_lambda(alpha, rng);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::NonPositiveAlpha);
    }
  }
}

TEST(Mixup, IdentityMidpointAndEnvelope) {
  Rng rng(5);
  const auto a = random_grid(rng, 8, 8);
  const auto b = random_grid(rng, 8, 8);
  EXPECT_EQ(mixup(a, b, 1.0), a);
  const auto mid = mixup(PixelGrid(4, 4, 0.0), PixelGrid(4, 4, 1.0), 0.5);
  for (double v : mid.values) EXPECT_EQ(v, 0.5);
  const auto m = mixup(a, b, 0.3);
  for (std::size_t k = 0; k < m.values.size(); ++k) {
    EXPECT_GE(m.values[k], std::min(a.values[k], b.values[k]));
    EXPECT_LE(m.values[k], std::max(a.values[k], b.values[k]));
  }
}

TEST(Mixup, ShapeMismatch) {
  try {
    mixup(PixelGrid(4, 4), PixelGrid(4, 5), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Cutmix, LambdaOneIsIdentity) {
  Rng rng(6);
  const auto a = random_grid(rng, 8, 8);
  const auto b = random_grid(rng, 8, 8);
  const auto out = cutmix(a, b, 1.0, rng);
  EXPECT_EQ(out.pixels, a);
  EXPECT_EQ(out.lambda_adjusted, 1.0);
}

TEST(Cutmix, FullBoxIsTotalReplacement) {
  Rng rng(7);
  const auto a = random_grid(rng, 8, 8);
  const auto b = random_grid(rng, 8, 8);
  const auto out = cutmix_with_box(a, b, Box{0, 8, 0, 8});
  EXPECT_EQ(out.pixels, b);
  EXPECT_EQ(out.lambda_adjusted, 0.0);
}

TEST(Cutmix, ProvenanceRecount) {
  Rng rng(8);
  const PixelGrid a(32, 32, 0.25);
  const PixelGrid b(32, 32, 0.75);
  for (int k = 0; k < 200; ++k) {
    const auto out = cutmix(a, b, 0.6, rng);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < out.pixels.values.size(); ++i) changed += out.pixels.values[i] != a.values[i];
    EXPECT_EQ(out.lambda_adjusted, 1.0 - static_cast<double>(changed) / 1024.0);
  }
}

TEST(Cutmix, BoxSideAndClipping) {
  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    const double lambda = uniform01(rng);
    const Box box = cutmix_box(32, 20, lambda, rng);
    const auto h = static_cast<std::size_t>(std::floor(std::sqrt(1.0 - lambda) * 32.0));
    const auto w = static_cast<std::size_t>(std::floor(std::sqrt(1.0 - lambda) * 20.0));
    EXPECT_LE(box.row1, 32u);
    EXPECT_LE(box.col1, 20u);
    EXPECT_LE(box.row1 - box.row0, h);
    EXPECT_LE(box.col1 - box.col0, w);
  }
}

TEST(Cutmix, ClippingOnlyShrinks) {
  Rng rng(10);
  const double lambda = 0.4;
  double pasted = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) pasted += 1.0 - cutmix(PixelGrid(16, 16), PixelGrid(16, 16), lambda, rng).lambda_adjusted;
  EXPECT_LE(pasted / n, 1.0 - lambda);
}

TEST(ApplyMsda, SupervisionByPairKind) {
  const auto index = make_cohort({PatientSpec{{0, 12}, {2, 1}, {1, 0}}, PatientSpec{{0}, {1}, {0}}});
  Rng rng(11);
  AugConfig config;
  // same exam
  auto s = apply_msda(classify_pair(index, 0, 1), index, config, CrossExamSupervision::ranking, rng);
  ASSERT_TRUE(std::holds_alternative<HardLabel>(s.supervision));
  EXPECT_EQ(std::get<HardLabel>(s.supervision).label, 1);
  // cross exam, anchor at t=0, partner at t=12
  s = apply_msda(classify_pair(index, 0, 2), index, config, CrossExamSupervision::ranking, rng);
  ASSERT_TRUE(std::holds_alternative<RankingRef>(s.supervision));
  EXPECT_EQ(std::get<RankingRef>(s.supervision).temporal_order, 1);
  EXPECT_EQ(std::get<RankingRef>(s.supervision).anchor_exam, 0u);
  // same pair, blended label mode
  s = apply_msda(classify_pair(index, 0, 2), index, config, CrossExamSupervision::soft_label, rng);
  ASSERT_TRUE(std::holds_alternative<SoftLabel>(s.supervision));
  EXPECT_DOUBLE_EQ(std::get<SoftLabel>(s.supervision).target, s.lambda_adjusted);
  // cross patient
  s = apply_msda(classify_pair(index, 0, 3), index, config, CrossExamSupervision::ranking, rng);
  ASSERT_TRUE(std::holds_alternative<SoftLabel>(s.supervision));
}

TEST(ApplyMsda, SoftLabelFormula) {
  EXPECT_DOUBLE_EQ(make_soft_label(1, 0, 0.7).target, 0.7);
  EXPECT_DOUBLE_EQ(make_soft_label(0, 1, 0.25).target, 0.75);
  EXPECT_DOUBLE_EQ(make_soft_label(1, 1, 0.31).target, 1.0);
}

TEST(ApplyMsda, NoneAndDegenerateReturnAnchor) {
  const auto index = make_cohort({PatientSpec{{0}, {1}, {1}}, PatientSpec{{0}, {1}, {0}}});
  Rng rng(12);
  AugConfig none{AugMode::none};
  auto s = apply_msda(classify_pair(index, 0, 1), index, none, CrossExamSupervision::ranking, rng);
  EXPECT_EQ(s.pixels, index.images()[0].pixels);
  EXPECT_EQ(std::get<HardLabel>(s.supervision).label, 1);
  s = apply_msda(MixPair{1, 1, PairKind::same_exam, std::nullopt}, index, AugConfig{}, CrossExamSupervision::ranking,
                 rng);
  EXPECT_EQ(s.pixels, index.images()[1].pixels);
  EXPECT_EQ(std::get<HardLabel>(s.supervision).label, 0);
}

TEST(ApplyMsda, InvalidConfig) {
  const auto index = make_cohort({PatientSpec{{0}, {2}, {}}});
  Rng rng(13);
  AugConfig bad;
  bad.alpha_mixup = 0.0;
  EXPECT_THROW(apply_msda(classify_pair(index, 0, 1), index, bad, CrossExamSupervision::ranking, rng), Error);
  bad = AugConfig{};
  bad.switch_prob = 2.0;
  EXPECT_THROW(apply_msda(classify_pair(index, 0, 1), index, bad, CrossExamSupervision::ranking, rng), Error);
  EXPECT_THROW(parse_aug_mode("cutout"), Error);
  EXPECT_EQ(parse_aug_mode(to_string(AugMode::mixup)), AugMode::mixup);
}

TEST(ApplyMsda, FuzzedInvariants) {
  Rng rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    const auto index = testing::random_cohort(rng, 5, 8);
    const SamplingStrategy strategy = trial % 2 ? SamplingStrategy::image_level()
                                                : SamplingStrategy::patient_exam_level();
    AugConfig config;
    config.mode = static_cast<AugMode>(1 + uniform_index(rng, 3));
    for (const auto& pair : sample_batch(index, strategy, 8, rng)) {
      const auto s = apply_msda(pair, index, config, CrossExamSupervision::ranking, rng);
      const auto& a = index.images()[pair.anchor].pixels;
      const auto& b = index.images()[pair.partner].pixels;
      for (std::size_t k = 0; k < a.values.size(); ++k) {
        ASSERT_GE(s.pixels.values[k], std::min(a.values[k], b.values[k]));
        ASSERT_LE(s.pixels.values[k], std::max(a.values[k], b.values[k]));
      }
      if (pair.kind == PairKind::same_exam) {
        ASSERT_TRUE(std::holds_alternative<HardLabel>(s.supervision));
        ASSERT_EQ(index.label_of_image(pair.anchor), index.label_of_image(pair.partner));
      }
      if (const auto* soft = std::get_if<SoftLabel>(&s.supervision)) {
        ASSERT_GE(soft->target, 0.0);
        ASSERT_LE(soft->target, 1.0);
      }
    }
  }
}

}  // namespace
}  // namespace oculomix
