#pragma once

// Test fixtures and independent oracles. Nothing here calls into the code
// paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oculomix/oculomix.hpp"

namespace oculomix::testing {

struct PatientSpec {
  std::vector<int> times;
  std::vector<int> images_per_exam;
  std::vector<int> labels;  // empty: all zero
};

/// Cohort from explicit per-patient specs, random pixel content.
inline CohortIndex make_cohort(const std::vector<PatientSpec>& patients, std::size_t size = 8,
                               std::uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<Exam> exams;
  std::vector<ImageRecord> images;
  for (std::size_t p = 0; p < patients.size(); ++p) {
    const std::string pid = "p" + std::to_string(p);
    const auto& spec = patients[p];
    for (std::size_t e = 0; e < spec.times.size(); ++e) {
      const std::string eid = pid + "e" + std::to_string(e);
      const int label = spec.labels.empty() ? 0 : spec.labels[e];
      exams.push_back(Exam{eid, pid, spec.times[e], label, 12.0 + static_cast<double>(e), e % 2 == 0});
      for (int k = 0; k < spec.images_per_exam[e]; ++k) {
        PixelGrid px(size, size);
        for (double& v : px.values) v = uniform01(rng);
        images.push_back(ImageRecord{eid + "i" + std::to_string(k), eid, pid, std::move(px),
                                     k % 2 ? View::disc : View::macula, Laterality::left});
      }
    }
  }
  return build_index(std::move(images), std::move(exams));
}

/// Random small cohort: 1..max_patients patients, 1..4 exams at distinct
/// times, 1..4 images per exam, random labels.
inline CohortIndex random_cohort(Rng& rng, std::size_t max_patients = 8, std::size_t size = 8) {
  const std::size_t n = 1 + uniform_index(rng, max_patients);
  std::vector<PatientSpec> specs;
  for (std::size_t p = 0; p < n; ++p) {
    PatientSpec spec;
    const std::size_t n_exams = 1 + uniform_index(rng, 4);
    int t = static_cast<int>(uniform_index(rng, 6));
    for (std::size_t e = 0; e < n_exams; ++e) {
      spec.times.push_back(t);
      t += 1 + static_cast<int>(uniform_index(rng, 24));
      spec.images_per_exam.push_back(1 + static_cast<int>(uniform_index(rng, 4)));
      spec.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
    }
    // Shuffle exam input order so the index has to sort by time.
    for (std::size_t k = spec.times.size(); k > 1; --k) {
      const std::size_t j = uniform_index(rng, k);
      std::swap(spec.times[k - 1], spec.times[j]);
      std::swap(spec.images_per_exam[k - 1], spec.images_per_exam[j]);
      std::swap(spec.labels[k - 1], spec.labels[j]);
    }
    specs.push_back(std::move(spec));
  }
  return make_cohort(specs, size, rng());
}

inline PixelGrid random_grid(Rng& rng, std::size_t h, std::size_t w) {
  PixelGrid g(h, w);
  for (double& v : g.values) v = uniform01(rng);
  return g;
}

// --- metric oracles -------------------------------------------------------

inline double brute_auroc(std::span<const ScoredOutcome> xs) {
  double credit = 0.0, pairs = 0.0;
  for (const auto& p : xs) {
    if (p.label != 1) continue;
    for (const auto& q : xs) {
      if (q.label != 0) continue;
      pairs += 1.0;
      credit += p.score > q.score ? 1.0 : (p.score == q.score ? 0.5 : 0.0);
    }
  }
  return credit / pairs;
}

/// Average precision by definition: item i is ranked after every item with a
/// higher score and after tied items that come earlier in input order.
inline double brute_auprc(std::span<const ScoredOutcome> xs) {
  double sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].label != 1) continue;
    ++n_pos;
    std::size_t rank = 1, hits = 1;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (j == i) continue;
      const bool ahead = xs[j].score > xs[i].score || (xs[j].score == xs[i].score && j < i);
      if (ahead) {
        ++rank;
        hits += xs[j].label == 1;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return sum / static_cast<double>(n_pos);
}

/// AP when ties are broken in favour of (optimistic) or against positives.
inline double tie_bound_auprc(std::span<const ScoredOutcome> xs, bool optimistic) {
  double sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].label != 1) continue;
    ++n_pos;
    std::size_t rank = 1, hits = 1;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (j == i) continue;
      bool ahead = xs[j].score > xs[i].score;
      if (xs[j].score == xs[i].score) ahead = optimistic ? (xs[j].label == 1 && j < i) : (xs[j].label == 0 || j < i);
      if (ahead) {
        ++rank;
        hits += xs[j].label == 1;
      }
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return sum / static_cast<double>(n_pos);
}

inline double brute_c_index(std::span<const ScoredOutcome> xs) {
  double credit = 0.0, comparable = 0.0;
  for (const auto& a : xs) {
    if (!a.event_observed) continue;
    for (const auto& b : xs) {
      if (!(a.event_time < b.event_time)) continue;
      comparable += 1.0;
      credit += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
    }
  }
  return credit / comparable;
}

// --- finite differences ---------------------------------------------------

/// Central differences of f at x (x is restored afterwards).
inline std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x,
                                              double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + step;
    const double up = f();
    x[k] = saved - step;
    const double down = f();
    x[k] = saved;
    g[k] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// --- end-to-end objective -------------------------------------------------

/// Total objective of `batch` under `params`; adds d total / d params to
/// `grad` when it is non-empty.
inline double batch_objective_value(const Params& params, detail::TrainingBatch& batch, SupervisionMode mode,
                                    std::span<double> grad = {}) {
  std::vector<ForwardCache> caches(batch.mixed.size());
  for (std::size_t k = 0; k < batch.mixed.size(); ++k) {
    batch.scored[k].logits = forward(params, batch.mixed[k].pixels, caches[k]);
  }
  const ObjectiveResult r =
      mode == SupervisionMode::ranking ? oculomix_objective(batch.scored) : direct_label_objective(batch.scored);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < batch.mixed.size(); ++k) backward(params, caches[k], r.grads[k], grad);
  }
  return r.total;
}

/// Mini-batch over a random cohort that contains hard, soft and (in ranking
/// mode) ranking supervision: patient+exam pairs with p_cross = 1 plus an
/// image-level blended sample attached to one anchor.
inline detail::TrainingBatch mixed_variant_batch(Rng& rng, const PredictorConfig& pc, SupervisionMode mode) {
  for (;;) {
    std::vector<PatientSpec> specs;
    for (int p = 0; p < 3; ++p) {
      specs.push_back(PatientSpec{{0, 7 + p}, {2, 1}, {static_cast<int>(uniform_index(rng, 2)), 1}});
    }
    const CohortIndex index = make_cohort(specs, pc.image_height, rng());
    ExperimentConfig config;
    config.strategy = SamplingStrategy::patient_exam_level(1.0);
    config.supervision = mode;
    std::vector<std::size_t> anchors(index.image_count());
    for (std::size_t k = 0; k < anchors.size(); ++k) anchors[k] = k;
    detail::TrainingBatch batch;
    Rng sampling(rng()), augmentation(rng());
    detail::build_batch(index, config, anchors, sampling, augmentation, batch);
    // Swap one anchor's supervision for a cross-patient blended label.
    for (std::size_t k = 0; k < batch.scored.size(); ++k) {
      if (batch.scored[k].role != SampleRole::anchor) continue;
      const MixPair pair = classify_pair(index, batch.scored[k].anchor_image, index.image_count() - 1);
      if (pair.kind != PairKind::cross_patient) continue;
      MixedSample m = apply_msda(pair, index, AugConfig{}, CrossExamSupervision::soft_label, augmentation);
      batch.scored[k].supervision = m.supervision;
      batch.mixed[k].pixels = std::move(m.pixels);
      break;
    }
    bool hard = false, soft = false, cross = false;
    for (const auto& s : batch.scored) {
      hard |= std::holds_alternative<HardLabel>(s.supervision);
      soft |= std::holds_alternative<SoftLabel>(s.supervision) && s.role == SampleRole::anchor;
      cross |= s.role == SampleRole::cross_exam;
    }
    if (hard && soft && cross) return batch;
  }
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("oculomix_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Tiny, fast experiment for harness tests.
inline ExperimentConfig tiny_experiment(const std::string& output_dir = {}) {
  ExperimentConfig c;
  c.synth.n_patients = 40;
  c.synth.image_height = 16;
  c.synth.image_width = 16;
  c.synth.p_multi_exam = 0.6;
  c.synth.seed = 11;
  c.predictor.image_height = 16;
  c.predictor.image_width = 16;
  c.predictor.embed_dim = 8;
  c.predictor.hidden_dim = 8;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.train.warmup_epochs = 1;
  c.train.learning_rate = 1e-3;
  c.split_ratios = {0.5, 0.25, 0.25};
  c.output_dir = output_dir;
  return c;
}

}  // namespace oculomix::testing
