#include <gtest/gtest.h>

#include <map>
#include <set>

#include "support.hpp"

namespace oculomix {
namespace {

using testing::make_cohort;
using testing::PatientSpec;

TEST(SampleBatch, ExamLevelSingletonExamsAreDegenerate) {
  const auto index = make_cohort({PatientSpec{{0, 6}, {1, 1}, {}}, PatientSpec{{0}, {1}, {}}});
  Rng rng(1);
  for (const auto& pair : sample_batch(index, SamplingStrategy::exam_level(), 200, rng)) {
    EXPECT_TRUE(pair.degenerate());
    EXPECT_EQ(pair.kind, PairKind::same_exam);
  }
}

TEST(SampleBatch, CrossExamOrderSign) {
  const auto index = make_cohort({PatientSpec{{0, 12}, {1, 1}, {}}});
  Rng rng(2);
  const MixPair from_first = pair_for_anchor(index, SamplingStrategy::patient_exam_level(1.0), 0, rng);
  EXPECT_EQ(from_first.kind, PairKind::cross_exam);
  EXPECT_EQ(from_first.partner, 1u);
  EXPECT_EQ(from_first.temporal_order, 1);
  const MixPair from_second = pair_for_anchor(index, SamplingStrategy::patient_exam_level(1.0), 1, rng);
  EXPECT_EQ(from_second.temporal_order, -1);
}

TEST(SampleBatch, ImageLevelCrossPatientFrequency) {
  const auto index = make_cohort({PatientSpec{{0, 5}, {2, 1}, {}}, PatientSpec{{0}, {3}, {}},
                                  PatientSpec{{1, 4, 9}, {1, 2, 1}, {}}});
  // Anchor uniform over n images, partner uniform over the other n - 1.
  const double n = static_cast<double>(index.image_count());
  std::map<std::string, double> per_patient;
  for (const auto& img : index.images()) per_patient[img.patient_id] += 1.0;
  double same_patient = 0.0;
  for (const auto& [_, k] : per_patient) same_patient += k * (k - 1.0);
  const double expected = 1.0 - same_patient / (n * (n - 1.0));

  Rng rng(3);
  const auto pairs = sample_batch(index, SamplingStrategy::image_level(), 100000, rng);
  double cross = 0.0;
  for (const auto& p : pairs) cross += p.kind == PairKind::cross_patient;
  EXPECT_NEAR(cross / static_cast<double>(pairs.size()), expected, 0.02);
}

TEST(SampleBatch, ImageLevelSingleImageSelfPair) {
  const auto index = make_cohort({PatientSpec{{0}, {1}, {}}});
  Rng rng(4);
  const auto pairs = sample_batch(index, SamplingStrategy::image_level(), 5, rng);
  for (const auto& p : pairs) EXPECT_TRUE(p.degenerate());
  EXPECT_EQ(verify_pairs(pairs, index, SamplingStrategy::image_level()), 0u);
}

TEST(SampleBatch, EmptyIndex) {
  Rng rng(5);
  try {
    sample_batch(CohortIndex{}, SamplingStrategy::image_level(), 4, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyIndex);
  }
}

TEST(SampleBatch, Deterministic) {
  Rng cohort_rng(6);
  const auto index = testing::random_cohort(cohort_rng, 10);
  for (auto strategy : {SamplingStrategy::image_level(), SamplingStrategy::exam_level(),
                        SamplingStrategy::patient_exam_level()}) {
    Rng a = batch_rng(42, 7);
    Rng b = batch_rng(42, 7);
    EXPECT_EQ(sample_batch(index, strategy, 64, a), sample_batch(index, strategy, 64, b));
  }
}

TEST(SampleBatch, ExamLevelPairsShareLabels) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto index = testing::random_cohort(rng, 6);
    for (const auto& p : sample_batch(index, SamplingStrategy::patient_exam_level(), 64, rng)) {
      if (p.kind == PairKind::same_exam) EXPECT_EQ(index.label_of_image(p.anchor), index.label_of_image(p.partner));
    }
  }
}

TEST(SampleBatch, CrossExamCoverage) {
  const auto index = make_cohort({PatientSpec{{0, 4, 9, 30}, {1, 2, 1, 3}, {}}});
  Rng rng(8);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& p : sample_batch(index, SamplingStrategy::patient_exam_level(1.0), 10000, rng)) {
    ASSERT_EQ(p.kind, PairKind::cross_exam);
    seen.emplace(index.exam_of_image(p.anchor), index.exam_of_image(p.partner));
  }
  EXPECT_EQ(seen.size(), 4u * 3u);
}

TEST(SampleBatch, CrossExamPartnerUniformOverExams) {
  // Exam 1 has four images, exam 2 has one; from exam 0 both are picked equally often.
  const auto index = make_cohort({PatientSpec{{0, 5, 10}, {1, 4, 1}, {}}});
  Rng rng(9);
  double to_big = 0.0, total = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const auto p = pair_for_anchor(index, SamplingStrategy::patient_exam_level(1.0), 0, rng);
    to_big += index.exam_of_image(p.partner) == 1;
    total += 1.0;
  }
  EXPECT_NEAR(to_big / total, 0.5, 0.02);
}

TEST(VerifyPairs, CountsInjectedViolation) {
  const auto index = make_cohort({PatientSpec{{0}, {2}, {}}, PatientSpec{{0}, {2}, {}}});
  Rng rng(10);
  auto pairs = sample_batch(index, SamplingStrategy::exam_level(), 20, rng);
  EXPECT_EQ(verify_pairs(pairs, index, SamplingStrategy::exam_level()), 0u);
  pairs.push_back(classify_pair(index, 0, 2));
  ASSERT_EQ(pairs.back().kind, PairKind::cross_patient);
  EXPECT_EQ(verify_pairs(pairs, index, SamplingStrategy::exam_level()), 1u);
}

TEST(VerifyPairs, BookkeepingErrorsAreViolations) {
  const auto index = make_cohort({PatientSpec{{0, 3}, {2, 1}, {}}});
  const auto strategy = SamplingStrategy::patient_exam_level();
  MixPair wrong_order = classify_pair(index, 0, 2);
  ASSERT_EQ(wrong_order.temporal_order, 1);
  wrong_order.temporal_order = -1;
  MixPair missing_order = classify_pair(index, 0, 2);
  missing_order.temporal_order.reset();
  MixPair wrong_kind = classify_pair(index, 0, 1);
  wrong_kind.kind = PairKind::cross_exam;
  MixPair lazy_self{0, 0, PairKind::same_exam, std::nullopt};  // exam 0 has another image
  const std::vector<MixPair> pairs{wrong_order, missing_order, wrong_kind, lazy_self};
  EXPECT_EQ(verify_pairs(pairs, index, strategy), 4u);
}

TEST(VerifyPairs, FuzzedSamplerOutputIsClean) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto index = testing::random_cohort(rng, 8);
    for (auto strategy : {SamplingStrategy::image_level(), SamplingStrategy::exam_level(),
                          SamplingStrategy::patient_exam_level(uniform01(rng))}) {
      const auto pairs = sample_batch(index, strategy, 500, rng);
      ASSERT_EQ(verify_pairs(pairs, index, strategy), 0u);
      for (const auto& p : pairs) {
        if (strategy.kind == StrategyKind::ExamLevel) EXPECT_EQ(p.kind, PairKind::same_exam);
        if (strategy.kind == StrategyKind::PatientExamLevel) EXPECT_NE(p.kind, PairKind::cross_patient);
      }
    }
  }
}

TEST(SamplingStrategy, Validation) {
  SamplingStrategy s = SamplingStrategy::patient_exam_level(1.5);
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(parse_strategy_kind("patient_exam"), StrategyKind::PatientExamLevel);
  EXPECT_EQ(to_string(parse_strategy_kind("image")), "image");
  EXPECT_THROW(parse_strategy_kind("patient"), Error);
}

}  // namespace
}  // namespace oculomix
