#pragma once

// Smoothed cross-entropy, the temporal pairwise ranking loss and the two
// batch objectives (ranking-supervised and direct-label ablation). Every loss
// returns gradients with respect to the 2-way logits it consumed.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "oculomix/error.hpp"
#include "oculomix/msda.hpp"

namespace oculomix {

/// (negative-class, positive-class) logits of the two-way head.
using Logits = std::array<double, 2>;

struct RankingLossConfig {
  double margin = 0.1;
  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw Error(ErrorKind::InvalidConfig, "margin must be >= 0");
  }
};

struct SupervisedLossConfig {
  double smoothing = 0.1;
  void validate() const {
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw Error(ErrorKind::InvalidConfig, "smoothing must be in [0,1)");
  }
};

/// Scalar logit used by the ranking loss: logit(positive) - logit(negative).
inline double scalar_logit(const Logits& z) noexcept { return z[1] - z[0]; }

struct LossWithGrad {
  double loss = 0.0;
  Logits grad{0.0, 0.0};
};

inline LossWithGrad cross_entropy_smoothed(const Logits& logits, double target, double smoothing) {
  if (!std::isfinite(logits[0]) || !std::isfinite(logits[1]) || !std::isfinite(target)) {
    throw Error(ErrorKind::NonFiniteInput, "cross_entropy_smoothed input");
  }
  if (!(target >= 0.0 && target <= 1.0)) throw Error(ErrorKind::InvalidConfig, "target must be in [0,1]");
  const double t = target * (1.0 - smoothing) + 0.5 * smoothing;
  const double hi = std::max(logits[0], logits[1]);
  const double lse = hi + std::log(std::exp(logits[0] - hi) + std::exp(logits[1] - hi));
  const double log_p0 = logits[0] - lse;
  const double log_p1 = logits[1] - lse;
  LossWithGrad out;
  out.loss = -(t * log_p1 + (1.0 - t) * log_p0);
  out.grad = {std::exp(log_p0) - (1.0 - t), std::exp(log_p1) - t};
  return out;
}

struct RankingLossResult {
  double loss = 0.0;
  double grad_first = 0.0;   // d loss / d l_t1
  double grad_second = 0.0;  // d loss / d l_t2
};

/// Hinge on the ordered gap: order = sign(t2 - t1). For order +1 the later
/// logit l_t2 must exceed l_t1 by the margin, and vice versa.
inline RankingLossResult ranking_loss(double l_t1, double l_t2, int order, double margin) {
  if (!std::isfinite(l_t1) || !std::isfinite(l_t2)) throw Error(ErrorKind::NonFiniteInput, "ranking_loss input");
  if (order != 1 && order != -1) throw Error(ErrorKind::InvalidConfig, "order must be +1 or -1");
  const double gap = order == 1 ? l_t2 - l_t1 : l_t1 - l_t2;
  const double slack = margin - gap;
  if (slack <= 0.0) return {};
  const double s = static_cast<double>(order);
  return {slack, s, -s};
}

enum class SampleRole { anchor, cross_exam };

/// One forward-passed mixed sample inside a batch objective. Cross-exam
/// samples point at the anchor image whose same-exam prediction they are
/// ranked against.
struct ScoredSample {
  SampleRole role = SampleRole::anchor;
  std::size_t anchor_image = 0;
  Supervision supervision;
  Logits logits{0.0, 0.0};
};

struct ObjectiveResult {
  double total = 0.0;
  double supervised_term = 0.0;  // mean CE over anchors
  double cross_term = 0.0;       // mean ranking (or direct CE) over cross-exam samples
  std::size_t n_anchor = 0;
  std::size_t n_cross = 0;
  std::vector<Logits> grads;  // d total / d logits, aligned with the input samples
};

namespace detail {

inline double supervised_target(const Supervision& s) {
  if (const auto* hard = std::get_if<HardLabel>(&s)) return static_cast<double>(hard->label);
  if (const auto* soft = std::get_if<SoftLabel>(&s)) return soft->target;
  throw Error(ErrorKind::InvalidSupervision, "anchor sample needs a hard or soft label");
}

enum class CrossTerm { ranking, direct_label };

inline ObjectiveResult batch_objective(std::span<const ScoredSample> samples, CrossTerm mode,
                                       const RankingLossConfig& ranking, const SupervisedLossConfig& sup) {
  ranking.validate();
  sup.validate();
  ObjectiveResult out;
  out.grads.assign(samples.size(), Logits{0.0, 0.0});

  std::unordered_map<std::size_t, std::size_t> anchor_slot;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].role == SampleRole::anchor) {
      anchor_slot.emplace(samples[k].anchor_image, k);
      ++out.n_anchor;
    } else {
      ++out.n_cross;
    }
  }
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].role == SampleRole::cross_exam && !anchor_slot.contains(samples[k].anchor_image)) {
      throw Error(ErrorKind::DanglingAnchor,
                  "cross-exam sample for image " + std::to_string(samples[k].anchor_image) + " has no anchor");
    }
  }

  const double w_anchor = out.n_anchor ? 1.0 / static_cast<double>(out.n_anchor) : 0.0;
  const double w_cross = out.n_cross ? 1.0 / static_cast<double>(out.n_cross) : 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const ScoredSample& s = samples[k];
    if (s.role == SampleRole::anchor) {
      const auto ce = cross_entropy_smoothed(s.logits, supervised_target(s.supervision), sup.smoothing);
      out.supervised_term += w_anchor * ce.loss;
      out.grads[k][0] += w_anchor * ce.grad[0];
      out.grads[k][1] += w_anchor * ce.grad[1];
      continue;
    }
    if (mode == CrossTerm::ranking) {
      const auto* ref = std::get_if<RankingRef>(&s.supervision);
      if (!ref) throw Error(ErrorKind::InvalidSupervision, "ranking objective needs RankingRef cross samples");
      const std::size_t a = anchor_slot.at(s.anchor_image);
      const auto r = ranking_loss(scalar_logit(samples[a].logits), scalar_logit(s.logits), ref->temporal_order,
                                  ranking.margin);
      out.cross_term += w_cross * r.loss;
      // d l / d logits = (-1, +1)
      out.grads[a][0] -= w_cross * r.grad_first;
      out.grads[a][1] += w_cross * r.grad_first;
      out.grads[k][0] -= w_cross * r.grad_second;
      out.grads[k][1] += w_cross * r.grad_second;
    } else {
      const auto* soft = std::get_if<SoftLabel>(&s.supervision);
      if (!soft) throw Error(ErrorKind::InvalidSupervision, "direct-label objective needs SoftLabel cross samples");
      const auto ce = cross_entropy_smoothed(s.logits, soft->target, sup.smoothing);
      out.cross_term += w_cross * ce.loss;
      out.grads[k][0] += w_cross * ce.grad[0];
      out.grads[k][1] += w_cross * ce.grad[1];
    }
  }
  out.total = out.supervised_term + out.cross_term;
  return out;
}

}  // namespace detail

/// Mean CE over anchor samples plus mean ranking loss of each cross-exam
/// mixture against its anchor's same-exam prediction.
inline ObjectiveResult oculomix_objective(std::span<const ScoredSample> samples,
                                          const RankingLossConfig& ranking = {},
                                          const SupervisedLossConfig& sup = {}) {
  return detail::batch_objective(samples, detail::CrossTerm::ranking, ranking, sup);
}

/// Ablation: cross-exam mixtures are trained with CE against the blended
/// label instead of the ranking constraint.
inline ObjectiveResult direct_label_objective(std::span<const ScoredSample> samples,
                                              const SupervisedLossConfig& sup = {}) {
  return detail::batch_objective(samples, detail::CrossTerm::direct_label, RankingLossConfig{}, sup);
}

}  // namespace oculomix
