#pragma once

// Mix-partner selection under the three pairing strategies: image-level
// (unconstrained), exam-level (same exam only) and patient+exam-level (same
// exam, or with probability p_cross a different exam of the same patient).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oculomix/cohort.hpp"
#include "oculomix/error.hpp"
#include "oculomix/rng.hpp"

namespace oculomix {

enum class StrategyKind { ImageLevel, ExamLevel, PatientExamLevel };

struct SamplingStrategy {
  StrategyKind kind = StrategyKind::PatientExamLevel;
  double p_cross = 0.5;  // PatientExamLevel only

  void validate() const {
    if (!(p_cross >= 0.0 && p_cross <= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "p_cross must be in [0,1]");
    }
  }

  static SamplingStrategy image_level() { return {StrategyKind::ImageLevel, 0.0}; }
  static SamplingStrategy exam_level() { return {StrategyKind::ExamLevel, 0.0}; }
  static SamplingStrategy patient_exam_level(double p_cross = 0.5) {
    return {StrategyKind::PatientExamLevel, p_cross};
  }
};

enum class PairKind { same_exam, cross_exam, cross_patient };

struct MixPair {
  std::size_t anchor = 0;   // image position in the index
  std::size_t partner = 0;  // image position in the index
  PairKind kind = PairKind::same_exam;
  std::optional<int> temporal_order;  // sign(t_partner - t_anchor); cross_exam only

  bool degenerate() const noexcept { return anchor == partner; }
  friend bool operator==(const MixPair&, const MixPair&) = default;
};

inline int sign_of(int v) noexcept { return (v > 0) - (v < 0); }

/// Pair kind and temporal order implied by the ids of two images.
inline MixPair classify_pair(const CohortIndex& index, std::size_t anchor, std::size_t partner) {
  MixPair pair{anchor, partner, PairKind::same_exam, std::nullopt};
  const std::size_t ea = index.exam_of_image(anchor);
  const std::size_t eb = index.exam_of_image(partner);
  if (ea == eb) return pair;
  if (index.patient_of_exam(ea) != index.patient_of_exam(eb)) {
    pair.kind = PairKind::cross_patient;
    return pair;
  }
  pair.kind = PairKind::cross_exam;
  pair.temporal_order = sign_of(index.exams()[eb].time_point - index.exams()[ea].time_point);
  return pair;
}

/// Uniform partner among the other images of the anchor's exam; the anchor
/// itself when the exam holds a single image.
inline MixPair exam_level_pair(const CohortIndex& index, std::size_t anchor, Rng& rng) {
  const auto members = index.images_of_exam(index.exam_of_image(anchor));
  if (members.size() <= 1) return MixPair{anchor, anchor, PairKind::same_exam, std::nullopt};
  std::size_t pick = uniform_index(rng, members.size() - 1);
  std::size_t slot = 0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k] == anchor) continue;
    if (slot++ == pick) return MixPair{anchor, members[k], PairKind::same_exam, std::nullopt};
  }
  return MixPair{anchor, anchor, PairKind::same_exam, std::nullopt};
}

/// Partner for a given anchor under `strategy`.
inline MixPair pair_for_anchor(const CohortIndex& index, const SamplingStrategy& strategy, std::size_t anchor,
                               Rng& rng) {
  switch (strategy.kind) {
    case StrategyKind::ImageLevel: {
      const std::size_t n = index.image_count();
      if (n == 1) return MixPair{anchor, anchor, PairKind::same_exam, std::nullopt};
      std::size_t partner = uniform_index(rng, n - 1);
      if (partner >= anchor) ++partner;
      return classify_pair(index, anchor, partner);
    }
    case StrategyKind::ExamLevel:
      return exam_level_pair(index, anchor, rng);
    case StrategyKind::PatientExamLevel: {
      const std::size_t exam = index.exam_of_image(anchor);
      const auto exams = index.exams_of_patient(index.patient_of_exam(exam));
      // The Bernoulli draw is consumed unconditionally so that streams stay
      // aligned across patients with and without follow-up exams.
      const bool cross = uniform01(rng) < strategy.p_cross;
      if (cross && exams.size() >= 2) {
        std::size_t pick = uniform_index(rng, exams.size() - 1);
        std::size_t other = 0;
        for (std::size_t k = 0, slot = 0; k < exams.size(); ++k) {
          if (exams[k] == exam) continue;
          if (slot++ == pick) {
            other = exams[k];
            break;
          }
        }
        const auto members = index.images_of_exam(other);
        const std::size_t partner = members[uniform_index(rng, members.size())];
        return MixPair{anchor, partner, PairKind::cross_exam,
                       sign_of(index.exams()[other].time_point - index.exams()[exam].time_point)};
      }
      return exam_level_pair(index, anchor, rng);
    }
  }
  return MixPair{anchor, anchor, PairKind::same_exam, std::nullopt};
}

/// `batch_size` pairs with anchors drawn uniformly over images.
inline std::vector<MixPair> sample_batch(const CohortIndex& index, const SamplingStrategy& strategy,
                                         std::size_t batch_size, Rng& rng) {
  if (index.image_count() == 0) throw Error(ErrorKind::EmptyIndex, "sample_batch on an empty index");
  if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  strategy.validate();
  std::vector<MixPair> pairs;
  pairs.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t anchor = uniform_index(rng, index.image_count());
    pairs.push_back(pair_for_anchor(index, strategy, anchor, rng));
  }
  return pairs;
}

/// Rng for the `ordinal`-th batch of a run, independent of draw order.
inline Rng batch_rng(std::uint64_t seed, std::uint64_t ordinal) { return make_rng(seed, Stream::sampling, ordinal); }

/// Number of pairs violating the strategy's constraints or carrying
/// inconsistent bookkeeping (kind or temporal order disagreeing with ids).
inline std::size_t verify_pairs(std::span<const MixPair> pairs, const CohortIndex& index,
                                const SamplingStrategy& strategy) {
  std::size_t violations = 0;
  for (const MixPair& pair : pairs) {
    if (pair.anchor >= index.image_count() || pair.partner >= index.image_count()) {
      ++violations;
      continue;
    }
    const MixPair expected = classify_pair(index, pair.anchor, pair.partner);
    bool ok = expected.kind == pair.kind && expected.temporal_order == pair.temporal_order;
    if (pair.temporal_order && *pair.temporal_order == 0) ok = false;
    const std::size_t exam_size = index.images_of_exam(index.exam_of_image(pair.anchor)).size();
    switch (strategy.kind) {
      case StrategyKind::ImageLevel:
        if (pair.degenerate() && index.image_count() > 1) ok = false;
        break;
      case StrategyKind::ExamLevel:
        if (pair.kind != PairKind::same_exam) ok = false;
        if (pair.degenerate() && exam_size > 1) ok = false;
        break;
      case StrategyKind::PatientExamLevel:
        if (pair.kind == PairKind::cross_patient) ok = false;
        if (pair.kind == PairKind::same_exam && pair.degenerate() && exam_size > 1) ok = false;
        break;
    }
    violations += ok ? 0 : 1;
  }
  return violations;
}

inline std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::ImageLevel: return "image";
    case StrategyKind::ExamLevel: return "exam";
    case StrategyKind::PatientExamLevel: return "patient_exam";
  }
  return "unknown";
}

inline StrategyKind parse_strategy_kind(const std::string& s) {
  if (s == "image") return StrategyKind::ImageLevel;
  if (s == "exam") return StrategyKind::ExamLevel;
  if (s == "patient_exam") return StrategyKind::PatientExamLevel;
  throw Error(ErrorKind::Parse, "unknown strategy '" + s + "' (expected image, exam or patient_exam)");
}

inline std::string to_string(PairKind kind) {
  switch (kind) {
    case PairKind::same_exam: return "same_exam";
    case PairKind::cross_exam: return "cross_exam";
    case PairKind::cross_patient: return "cross_patient";
  }
  return "unknown";
}

}  // namespace oculomix
