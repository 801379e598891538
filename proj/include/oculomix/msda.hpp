#pragma once

// CutMix / MixUp kernels and per-pair supervision bookkeeping.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <variant>

#include "oculomix/cohort.hpp"
#include "oculomix/error.hpp"
#include "oculomix/rng.hpp"
#include "oculomix/sampler.hpp"

namespace oculomix {

enum class AugMode { none, mixup, cutmix, cutmix_plus_mixup };

struct AugConfig {
  AugMode mode = AugMode::cutmix_plus_mixup;
  double alpha_mixup = 0.8;
  double alpha_cutmix = 1.0;
  double switch_prob = 0.5;  // probability of cutmix in the combined mode

  void validate() const {
    if (!(alpha_mixup > 0.0) || !(alpha_cutmix > 0.0)) {
      throw Error(ErrorKind::NonPositiveAlpha, "mixing alphas must be positive");
    }
    if (!(switch_prob >= 0.0 && switch_prob <= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "switch_prob must be in [0,1]");
    }
  }
};

/// Lambda ~ Beta(alpha, alpha), drawn as a ratio of two gammas.
inline double sample_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::NonPositiveAlpha, "alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y <= 0.0) return 0.5;  // both underflowed; only reachable for tiny alpha
  return std::clamp(x / (x + y), 0.0, 1.0);
}

inline void check_same_shape(const PixelGrid& a, const PixelGrid& b) {
  if (!a.same_shape(b) || a.values.size() != b.values.size()) {
    throw Error(ErrorKind::ShapeMismatch, "grids are " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                              " and " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::InvalidConfig, "lambda must be in [0,1]");
}

inline PixelGrid mixup(const PixelGrid& a, const PixelGrid& b, double lambda) {
  check_same_shape(a, b);
  check_lambda(lambda);
  PixelGrid out(a.height, a.width);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    out.values[k] = lambda * a.values[k] + (1.0 - lambda) * b.values[k];
  }
  return out;
}

/// Half-open pasted region [row0,row1) x [col0,col1).
struct Box {
  std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;

  std::size_t area() const noexcept { return (row1 - row0) * (col1 - col0); }
  bool contains(std::size_t r, std::size_t c) const noexcept {
    return r >= row0 && r < row1 && c >= col0 && c < col1;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Box with side fractions sqrt(1 - lambda) centred uniformly on the grid and
/// clipped to its bounds.
inline Box cutmix_box(std::size_t height, std::size_t width, double lambda, Rng& rng) {
  check_lambda(lambda);
  const double ratio = std::sqrt(1.0 - lambda);
  const auto cut_h = static_cast<long>(std::floor(ratio * static_cast<double>(height)));
  const auto cut_w = static_cast<long>(std::floor(ratio * static_cast<double>(width)));
  const auto cy = static_cast<long>(uniform_index(rng, height));
  const auto cx = static_cast<long>(uniform_index(rng, width));
  auto clip = [](long v, std::size_t hi) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(hi))); };
  const long r0 = cy - cut_h / 2;
  const long c0 = cx - cut_w / 2;
  return Box{clip(r0, height), clip(r0 + cut_h, height), clip(c0, width), clip(c0 + cut_w, width)};
}

struct CutMixResult {
  PixelGrid pixels;
  double lambda_adjusted = 1.0;
  Box box;
};

/// x_a with `box` replaced by x_b; lambda_adjusted is the surviving area fraction.
inline CutMixResult cutmix_with_box(const PixelGrid& a, const PixelGrid& b, const Box& box) {
  check_same_shape(a, b);
  if (box.row0 > box.row1 || box.col0 > box.col1 || box.row1 > a.height || box.col1 > a.width) {
    throw Error(ErrorKind::ShapeMismatch, "cutmix box outside the grid");
  }
  CutMixResult out{a, 1.0, box};
  for (std::size_t r = box.row0; r < box.row1; ++r) {
    for (std::size_t c = box.col0; c < box.col1; ++c) out.pixels.at(r, c) = b.at(r, c);
  }
  out.lambda_adjusted = 1.0 - static_cast<double>(box.area()) / static_cast<double>(a.height * a.width);
  return out;
}

inline CutMixResult cutmix(const PixelGrid& a, const PixelGrid& b, double lambda, Rng& rng) {
  check_same_shape(a, b);
  return cutmix_with_box(a, b, cutmix_box(a.height, a.width, lambda, rng));
}

/// Same-exam mixes keep the exam's label.
struct HardLabel {
  int label = 0;
  friend bool operator==(const HardLabel&, const HardLabel&) = default;
};

/// Blended target lambda_adj * y_anchor + (1 - lambda_adj) * y_partner.
struct SoftLabel {
  double target = 0.0;
  double lambda_adjusted = 1.0;
  int anchor_label = 0;
  int partner_label = 0;
  friend bool operator==(const SoftLabel&, const SoftLabel&) = default;
};

/// Cross-exam mixes are supervised only relative to the anchor's prediction.
struct RankingRef {
  std::size_t anchor_exam = 0;
  int temporal_order = 0;
  double lambda_adjusted = 1.0;
  friend bool operator==(const RankingRef&, const RankingRef&) = default;
};

using Supervision = std::variant<HardLabel, SoftLabel, RankingRef>;

/// How cross_exam pairs are supervised: relative ordering, or a blended
/// label (image-level baseline and the direct-label ablation).
enum class CrossExamSupervision { ranking, soft_label };

struct MixedSample {
  PixelGrid pixels;
  Supervision supervision;
  std::size_t anchor_image = 0;
  PairKind kind = PairKind::same_exam;
  double lambda_adjusted = 1.0;
};

inline SoftLabel make_soft_label(int y_anchor, int y_partner, double lambda_adjusted) {
  return SoftLabel{lambda_adjusted * y_anchor + (1.0 - lambda_adjusted) * y_partner, lambda_adjusted, y_anchor,
                   y_partner};
}

/// Supervision for a mixed pair; a pure function of the pair kind and the
/// cross-exam supervision mode.
inline Supervision supervision_for(const MixPair& pair, const CohortIndex& index, double lambda_adjusted,
                                   CrossExamSupervision cross_mode) {
  const int ya = index.label_of_image(pair.anchor);
  const int yb = index.label_of_image(pair.partner);
  switch (pair.kind) {
    case PairKind::same_exam:
      return HardLabel{ya};
    case PairKind::cross_patient:
      return make_soft_label(ya, yb, lambda_adjusted);
    case PairKind::cross_exam:
      if (cross_mode == CrossExamSupervision::soft_label) return make_soft_label(ya, yb, lambda_adjusted);
      if (!pair.temporal_order || *pair.temporal_order == 0) {
        throw Error(ErrorKind::InvalidSupervision, "cross_exam pair without temporal order");
      }
      return RankingRef{index.exam_of_image(pair.anchor), *pair.temporal_order, lambda_adjusted};
  }
  return HardLabel{ya};
}

inline MixedSample apply_msda(const MixPair& pair, const CohortIndex& index, const AugConfig& config,
                              CrossExamSupervision cross_mode, Rng& rng) {
  config.validate();
  const PixelGrid& a = index.images()[pair.anchor].pixels;
  const PixelGrid& b = index.images()[pair.partner].pixels;
  if (config.mode == AugMode::none || pair.degenerate()) {
    return MixedSample{a, HardLabel{index.label_of_image(pair.anchor)}, pair.anchor, pair.kind, 1.0};
  }

  bool use_cutmix = config.mode == AugMode::cutmix;
  if (config.mode == AugMode::cutmix_plus_mixup) use_cutmix = uniform01(rng) < config.switch_prob;

  MixedSample out;
  out.anchor_image = pair.anchor;
  out.kind = pair.kind;
  if (use_cutmix) {
    auto mixed = cutmix(a, b, sample_lambda(config.alpha_cutmix, rng), rng);
    out.pixels = std::move(mixed.pixels);
    out.lambda_adjusted = mixed.lambda_adjusted;
  } else {
    const double lambda = sample_lambda(config.alpha_mixup, rng);
    out.pixels = mixup(a, b, lambda);
    out.lambda_adjusted = lambda;
  }
  out.supervision = supervision_for(pair, index, out.lambda_adjusted, cross_mode);
  return out;
}

inline std::string to_string(AugMode mode) {
  switch (mode) {
    case AugMode::none: return "none";
    case AugMode::mixup: return "mixup";
    case AugMode::cutmix: return "cutmix";
    case AugMode::cutmix_plus_mixup: return "cutmix_plus_mixup";
  }
  return "unknown";
}

inline AugMode parse_aug_mode(const std::string& s) {
  if (s == "none") return AugMode::none;
  if (s == "mixup") return AugMode::mixup;
  if (s == "cutmix") return AugMode::cutmix;
  if (s == "cutmix_plus_mixup") return AugMode::cutmix_plus_mixup;
  throw Error(ErrorKind::Parse, "unknown aug mode '" + s + "'");
}

}  // namespace oculomix
