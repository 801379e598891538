#pragma once

// Synthetic longitudinal cohorts. Each patient carries a latent morbidity
// z(t) = base + rate * t that never decreases, every image of an exam is
// rendered from the same z, and each patient owns a fixed low-frequency
// background ("nuisance") field that only within-patient mixing preserves.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "oculomix/cohort.hpp"
#include "oculomix/error.hpp"
#include "oculomix/rng.hpp"

namespace oculomix {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct SynthConfig {
  std::size_t n_patients = 1000;
  double p_multi_exam = 0.365;
  double p_multi_image = 0.4446;
  int max_exams_per_patient = 4;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  Interval morbidity_base_range{-2.5, 1.0};
  Interval morbidity_rate_range{0.0, 0.05};  // per month
  double label_threshold = 0.0;
  double label_noise = 0.5;  // logistic scale
  double nuisance_strength = 0.15;
  double pixel_noise_sd = 0.05;
  double signal_gain = 0.35;
  double disc_radius = 0.2;  // fraction of min(H, W)
  Interval exam_gap_months{6.0, 24.0};
  int censor_months = 120;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "synth: " + what); };
    if (n_patients == 0) fail("n_patients must be positive");
    if (!(p_multi_exam >= 0.0 && p_multi_exam <= 1.0)) fail("p_multi_exam outside [0,1]");
    if (!(p_multi_image >= 0.0 && p_multi_image <= 1.0)) fail("p_multi_image outside [0,1]");
    if (max_exams_per_patient < 2) fail("max_exams_per_patient must be >= 2");
    if (image_height < 8 || image_width < 8) fail("image_size must be at least 8x8");
    if (!(morbidity_base_range.lo <= morbidity_base_range.hi)) fail("empty morbidity_base_range");
    if (!(morbidity_rate_range.lo >= 0.0 && morbidity_rate_range.lo <= morbidity_rate_range.hi)) {
      fail("morbidity_rate_range must be a non-negative interval");
    }
    if (!(label_noise >= 0.0)) fail("label_noise must be non-negative");
    if (!(nuisance_strength >= 0.0)) fail("nuisance_strength must be non-negative");
    if (!(pixel_noise_sd >= 0.0)) fail("pixel_noise_sd must be non-negative");
    if (!(signal_gain >= 0.0)) fail("signal_gain must be non-negative");
    if (!(disc_radius > 0.0 && disc_radius <= 0.5)) fail("disc_radius must be in (0, 0.5]");
    if (!(exam_gap_months.lo >= 1.0 && exam_gap_months.lo <= exam_gap_months.hi)) {
      fail("exam_gap_months must be an interval with lo >= 1");
    }
    if (censor_months < 1) fail("censor_months must be positive");
  }

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Per-patient latent state.
struct LatentState {
  double base = 0.0;
  double rate = 0.0;
  std::uint64_t nuisance_seed = 0;

  double morbidity(double t) const noexcept { return base + rate * t; }
};

inline double sigmoid(double x) noexcept {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Central disc carrying the disease signal.
inline bool in_disc(std::size_t row, std::size_t col, std::size_t height, std::size_t width,
                    double radius_fraction) noexcept {
  const double cr = 0.5 * static_cast<double>(height) - 0.5;
  const double cc = 0.5 * static_cast<double>(width) - 0.5;
  const double radius = radius_fraction * static_cast<double>(std::min(height, width));
  const double dr = static_cast<double>(row) - cr;
  const double dc = static_cast<double>(col) - cc;
  return dr * dr + dc * dc <= radius * radius;
}

/// Low-frequency background field, a pure function of the nuisance seed.
/// The disc view sees the field mirrored left to right.
inline PixelGrid nuisance_field(std::uint64_t nuisance_seed, std::size_t height, std::size_t width,
                                double strength, View view) {
  Rng rng(nuisance_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<int> freq(0, 2);
  const double offset = unit(rng);
  struct Wave {
    double amplitude, fr, fc, phase;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    int fr = freq(rng);
    int fc = freq(rng);
    if (fr == 0 && fc == 0) fc = 1;
    w = Wave{0.5 * (unit(rng) + 1.0) / 3.0, static_cast<double>(fr), static_cast<double>(fc),
             std::numbers::pi * unit(rng)};
  }
  PixelGrid field(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t cc = view == View::disc ? width - 1 - c : c;
      double v = offset;
      for (const auto& w : waves) {
        v += w.amplitude * std::sin(2.0 * std::numbers::pi *
                                        (w.fr * static_cast<double>(r) / static_cast<double>(height) +
                                         w.fc * static_cast<double>(cc) / static_cast<double>(width)) +
                                    w.phase);
      }
      field.at(r, c) = strength * v;
    }
  }
  return field;
}

/// Months from an exam at `t` until noiseless morbidity first exceeds the
/// threshold (at least 1), censored at `censor_months`.
inline std::pair<double, bool> event_time_from(const LatentState& latent, int t, double threshold,
                                               int censor_months) {
  const double z = latent.morbidity(t);
  double months;
  if (z > threshold) {
    months = 1.0;
  } else if (latent.rate <= 0.0) {
    return {static_cast<double>(censor_months), false};
  } else {
    months = std::max(1.0, std::floor((threshold - z) / latent.rate) + 1.0);
  }
  if (months > censor_months) return {static_cast<double>(censor_months), false};
  return {months, true};
}

struct SynthCohort {
  CohortIndex index;
  std::vector<LatentState> latents;  // aligned with index.patients()
};

inline SynthCohort generate_cohort_with_latents(const SynthConfig& config) {
  config.validate();
  const std::size_t H = config.image_height;
  const std::size_t W = config.image_width;
  const int pw = static_cast<int>(std::to_string(config.n_patients).size());

  std::vector<Exam> exams;
  std::vector<ImageRecord> images;
  std::vector<LatentState> latents;
  latents.reserve(config.n_patients);

  PixelGrid disc(H, W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) disc.at(r, c) = in_disc(r, c, H, W, config.disc_radius) ? 1.0 : 0.0;

  for (std::size_t p = 0; p < config.n_patients; ++p) {
    Rng rng = make_rng(config.seed, Stream::synth_patient, p);
    std::uniform_real_distribution<double> base_dist(config.morbidity_base_range.lo, config.morbidity_base_range.hi);
    std::uniform_real_distribution<double> rate_dist(config.morbidity_rate_range.lo, config.morbidity_rate_range.hi);
    LatentState latent{base_dist(rng), rate_dist(rng), rng()};
    latents.push_back(latent);

    std::string pid = std::to_string(p);
    pid = "P" + std::string(static_cast<std::size_t>(pw) - pid.size(), '0') + pid;

    int n_exams = 1;
    if (uniform01(rng) < config.p_multi_exam) {
      n_exams = std::uniform_int_distribution<int>(2, config.max_exams_per_patient)(rng);
    }
    const std::array<PixelGrid, 2> background{
        nuisance_field(latent.nuisance_seed, H, W, config.nuisance_strength, View::macula),
        nuisance_field(latent.nuisance_seed, H, W, config.nuisance_strength, View::disc)};

    int t = 0;
    for (int e = 0; e < n_exams; ++e) {
      if (e > 0) {
        t += static_cast<int>(std::round(
            std::uniform_real_distribution<double>(config.exam_gap_months.lo, config.exam_gap_months.hi)(rng)));
      }
      const double z = latent.morbidity(t);
      double noise = 0.0;
      if (config.label_noise > 0.0) {
        const double u = std::uniform_real_distribution<double>(1e-12, 1.0 - 1e-12)(rng);
        noise = config.label_noise * std::log(u / (1.0 - u));
      }
      const auto [event_time, observed] = event_time_from(latent, t, config.label_threshold, config.censor_months);
      const std::string eid = pid + "-E" + std::to_string(e);
      exams.push_back(Exam{eid, pid, t, z + noise > config.label_threshold ? 1 : 0, event_time, observed});

      int n_images = 1;
      if (uniform01(rng) < config.p_multi_image) n_images = std::uniform_int_distribution<int>(2, 4)(rng);
      const double amplitude = config.signal_gain * sigmoid(z);
      std::normal_distribution<double> pixel_noise(0.0, 1.0);
      for (int k = 0; k < n_images; ++k) {
        const View view = k % 2 == 0 ? View::macula : View::disc;
        const Laterality side = (k / 2) % 2 == 0 ? Laterality::left : Laterality::right;
        const PixelGrid& bg = background[view == View::macula ? 0 : 1];
        PixelGrid px(H, W);
        for (std::size_t q = 0; q < H * W; ++q) {
          double v = 0.35 + bg.values[q] + amplitude * disc.values[q];
          if (config.pixel_noise_sd > 0.0) v += config.pixel_noise_sd * pixel_noise(rng);
          px.values[q] = std::clamp(v, 0.0, 1.0);
        }
        images.push_back(ImageRecord{eid + "-I" + std::to_string(k), eid, pid, std::move(px), view, side});
      }
    }
  }
  return SynthCohort{build_index(std::move(images), std::move(exams)), std::move(latents)};
}

inline CohortIndex generate_cohort(const SynthConfig& config) {
  return generate_cohort_with_latents(config).index;
}

struct CohortSummary {
  std::size_t n_patients = 0;
  std::size_t n_exams = 0;
  std::size_t n_images = 0;
  double multi_exam_fraction = 0.0;
  double multi_image_fraction = 0.0;
  double label_prevalence = 0.0;  // over exams
};

inline CohortSummary cohort_summary(const CohortIndex& index) {
  if (index.patient_count() == 0 || index.exam_count() == 0 || index.image_count() == 0) {
    throw Error(ErrorKind::EmptyCohort, "cohort_summary of an empty cohort");
  }
  CohortSummary s;
  s.n_patients = index.patient_count();
  s.n_exams = index.exam_count();
  s.n_images = index.image_count();
  std::size_t multi_exam = 0, multi_image = 0, positive = 0;
  for (const Patient& p : index.patients()) multi_exam += p.exams.size() >= 2;
  for (std::size_t e = 0; e < index.exam_count(); ++e) {
    multi_image += index.images_of_exam(e).size() >= 2;
    positive += index.exams()[e].label == 1;
  }
  s.multi_exam_fraction = static_cast<double>(multi_exam) / static_cast<double>(s.n_patients);
  s.multi_image_fraction = static_cast<double>(multi_image) / static_cast<double>(s.n_exams);
  s.label_prevalence = static_cast<double>(positive) / static_cast<double>(s.n_exams);
  return s;
}

inline nlohmann::json to_json(const CohortSummary& s) {
  return {{"n_patients", s.n_patients},
          {"n_exams", s.n_exams},
          {"n_images", s.n_images},
          {"multi_exam_fraction", s.multi_exam_fraction},
          {"multi_image_fraction", s.multi_image_fraction},
          {"label_prevalence", s.label_prevalence}};
}

}  // namespace oculomix
