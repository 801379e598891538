#pragma once

// Experiment configuration and its JSON mapping. Field names in JSON mirror
// the struct members; every section is optional and falls back to defaults,
// but unknown keys are rejected.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "oculomix/error.hpp"
#include "oculomix/losses.hpp"
#include "oculomix/msda.hpp"
#include "oculomix/predictor.hpp"
#include "oculomix/sampler.hpp"
#include "oculomix/synth.hpp"

namespace oculomix {

using Json = nlohmann::json;

enum class SupervisionMode { ranking, direct_label };

inline std::string to_string(SupervisionMode m) { return m == SupervisionMode::ranking ? "ranking" : "direct_label"; }

inline SupervisionMode parse_supervision(const std::string& s) {
  if (s == "ranking") return SupervisionMode::ranking;
  if (s == "direct_label") return SupervisionMode::direct_label;
  throw Error(ErrorKind::Parse, "unknown supervision '" + s + "' (expected ranking or direct_label)");
}

struct ExperimentConfig {
  std::optional<std::string> cohort_path;  // when unset the cohort is generated from `synth`
  SynthConfig synth;
  bool vary_cohort_with_seed = true;  // mix the experiment seed into synth.seed
  std::optional<SynthConfig> external_synth;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  SamplingStrategy strategy;
  AugConfig aug;
  SupervisionMode supervision = SupervisionMode::ranking;
  RankingLossConfig ranking;
  SupervisedLossConfig sup;
  PredictorConfig predictor;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string output_dir;

  void validate() const {
    if (!cohort_path) synth.validate();
    if (external_synth) external_synth->validate();
    split_sizes(3, split_ratios);
    strategy.validate();
    aug.validate();
    ranking.validate();
    sup.validate();
    predictor.validate();
    train.validate();
    if (supervision == SupervisionMode::direct_label && strategy.kind != StrategyKind::PatientExamLevel) {
      throw Error(ErrorKind::InvalidConfig, "direct_label supervision requires the patient_exam strategy");
    }
  }

  /// Synthetic cohort actually generated for this run.
  SynthConfig effective_synth() const {
    SynthConfig s = synth;
    if (vary_cohort_with_seed) s.seed = derive_seed(synth.seed, Stream::cohort, seed);
    return s;
  }

  PredictorConfig effective_predictor() const {
    PredictorConfig p = predictor;
    p.seed = derive_seed(seed, Stream::init, predictor.seed);
    return p;
  }
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, std::string(where) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto key : allowed) known = known || it.key() == key;
    if (!known) throw Error(ErrorKind::Parse, "unknown key '" + it.key() + "' in " + std::string(where));
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_interval(const Json& j, const char* key, Interval& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::array<double, 2>>();
  out = Interval{v[0], v[1]};
}

}  // namespace detail

inline Json to_json(const SynthConfig& s) {
  return {{"n_patients", s.n_patients},
          {"p_multi_exam", s.p_multi_exam},
          {"p_multi_image", s.p_multi_image},
          {"max_exams_per_patient", s.max_exams_per_patient},
          {"image_size", {s.image_height, s.image_width}},
          {"morbidity_base_range", {s.morbidity_base_range.lo, s.morbidity_base_range.hi}},
          {"morbidity_rate_range", {s.morbidity_rate_range.lo, s.morbidity_rate_range.hi}},
          {"label_threshold", s.label_threshold},
          {"label_noise", s.label_noise},
          {"nuisance_strength", s.nuisance_strength},
          {"pixel_noise_sd", s.pixel_noise_sd},
          {"signal_gain", s.signal_gain},
          {"disc_radius", s.disc_radius},
          {"exam_gap_months", {s.exam_gap_months.lo, s.exam_gap_months.hi}},
          {"censor_months", s.censor_months},
          {"seed", s.seed}};
}

inline SynthConfig synth_config_from_json(const Json& j) {
  detail::check_keys(j,
                     {"n_patients", "p_multi_exam", "p_multi_image", "max_exams_per_patient", "image_size",
                      "morbidity_base_range", "morbidity_rate_range", "label_threshold", "label_noise",
                      "nuisance_strength", "pixel_noise_sd", "signal_gain", "disc_radius", "exam_gap_months",
                      "censor_months", "seed"},
                     "synth config");
  SynthConfig s;
  detail::read(j, "n_patients", s.n_patients);
  detail::read(j, "p_multi_exam", s.p_multi_exam);
  detail::read(j, "p_multi_image", s.p_multi_image);
  detail::read(j, "max_exams_per_patient", s.max_exams_per_patient);
  if (j.contains("image_size")) {
    const auto hw = j.at("image_size").get<std::array<std::size_t, 2>>();
    s.image_height = hw[0];
    s.image_width = hw[1];
  }
  detail::read_interval(j, "morbidity_base_range", s.morbidity_base_range);
  detail::read_interval(j, "morbidity_rate_range", s.morbidity_rate_range);
  detail::read(j, "label_threshold", s.label_threshold);
  detail::read(j, "label_noise", s.label_noise);
  detail::read(j, "nuisance_strength", s.nuisance_strength);
  detail::read(j, "pixel_noise_sd", s.pixel_noise_sd);
  detail::read(j, "signal_gain", s.signal_gain);
  detail::read(j, "disc_radius", s.disc_radius);
  detail::read_interval(j, "exam_gap_months", s.exam_gap_months);
  detail::read(j, "censor_months", s.censor_months);
  detail::read(j, "seed", s.seed);
  return s;
}

inline Json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},       {"epochs", t.epochs},
          {"weight_decay", t.weight_decay},   {"warmup_epochs", t.warmup_epochs}, {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"eps", t.eps}};
}

inline Json to_json(const ExperimentConfig& c) {
  Json j = {{"synth", to_json(c.synth)},
            {"vary_cohort_with_seed", c.vary_cohort_with_seed},
            {"split_ratios", c.split_ratios},
            {"strategy", {{"kind", to_string(c.strategy.kind)}, {"p_cross", c.strategy.p_cross}}},
            {"aug",
             {{"mode", to_string(c.aug.mode)},
              {"alpha_mixup", c.aug.alpha_mixup},
              {"alpha_cutmix", c.aug.alpha_cutmix},
              {"switch_prob", c.aug.switch_prob}}},
            {"supervision", to_string(c.supervision)},
            {"ranking", {{"margin", c.ranking.margin}}},
            {"sup", {{"smoothing", c.sup.smoothing}}},
            {"predictor", to_json(c.predictor)},
            {"train", to_json(c.train)},
            {"seed", c.seed},
            {"output_dir", c.output_dir}};
  if (c.cohort_path) j["cohort_path"] = *c.cohort_path;
  if (c.external_synth) j["external_synth"] = to_json(*c.external_synth);
  return j;
}

inline ExperimentConfig experiment_config_from_json(const Json& j) {
  try {
    detail::check_keys(j,
                       {"cohort_path", "synth", "vary_cohort_with_seed", "external_synth", "split_ratios", "strategy",
                        "aug", "supervision", "ranking", "sup", "predictor", "train", "seed", "output_dir"},
                       "experiment config");
    ExperimentConfig c;
    if (j.contains("cohort_path") && !j.at("cohort_path").is_null()) c.cohort_path = j.at("cohort_path").get<std::string>();
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
    detail::read(j, "vary_cohort_with_seed", c.vary_cohort_with_seed);
    if (j.contains("external_synth") && !j.at("external_synth").is_null()) {
      c.external_synth = synth_config_from_json(j.at("external_synth"));
    }
    detail::read(j, "split_ratios", c.split_ratios);
    if (j.contains("strategy")) {
      const Json& s = j.at("strategy");
      detail::check_keys(s, {"kind", "p_cross"}, "strategy");
      if (s.contains("kind")) c.strategy.kind = parse_strategy_kind(s.at("kind").get<std::string>());
      detail::read(s, "p_cross", c.strategy.p_cross);
    }
    if (j.contains("aug")) {
      const Json& a = j.at("aug");
      detail::check_keys(a, {"mode", "alpha_mixup", "alpha_cutmix", "switch_prob"}, "aug");
      if (a.contains("mode")) c.aug.mode = parse_aug_mode(a.at("mode").get<std::string>());
      detail::read(a, "alpha_mixup", c.aug.alpha_mixup);
      detail::read(a, "alpha_cutmix", c.aug.alpha_cutmix);
      detail::read(a, "switch_prob", c.aug.switch_prob);
    }
    if (j.contains("supervision")) c.supervision = parse_supervision(j.at("supervision").get<std::string>());
    if (j.contains("ranking")) {
      detail::check_keys(j.at("ranking"), {"margin"}, "ranking");
      detail::read(j.at("ranking"), "margin", c.ranking.margin);
    }
    if (j.contains("sup")) {
      detail::check_keys(j.at("sup"), {"smoothing"}, "sup");
      detail::read(j.at("sup"), "smoothing", c.sup.smoothing);
    }
    if (j.contains("predictor")) {
      detail::check_keys(j.at("predictor"),
                         {"image_size", "patch_size", "embed_dim", "hidden_dim", "init_scale", "seed"},
                         "predictor");
      c.predictor = predictor_config_from_json(j.at("predictor"));
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      detail::check_keys(t,
                         {"learning_rate", "batch_size", "epochs", "weight_decay", "warmup_epochs", "beta1", "beta2",
                          "eps"},
                         "train");
      detail::read(t, "learning_rate", c.train.learning_rate);
      detail::read(t, "batch_size", c.train.batch_size);
      detail::read(t, "epochs", c.train.epochs);
      detail::read(t, "weight_decay", c.train.weight_decay);
      detail::read(t, "warmup_epochs", c.train.warmup_epochs);
      detail::read(t, "beta1", c.train.beta1);
      detail::read(t, "beta2", c.train.beta2);
      detail::read(t, "eps", c.train.eps);
    }
    detail::read(j, "seed", c.seed);
    detail::read(j, "output_dir", c.output_dir);
    return c;
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::Parse, ex.what());
  }
}

/// FNV-1a over the canonical JSON of the config. output_dir is excluded: it
/// names where results go, not what was run.
inline std::string config_hash(const ExperimentConfig& config) {
  Json j = to_json(config);
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Applies OCULOMIX_SEED when set. Returns true if the seed was overridden.
inline bool apply_seed_override(ExperimentConfig& config) {
  const char* env = std::getenv("OCULOMIX_SEED");
  if (!env || !*env) return false;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') throw Error(ErrorKind::Parse, "OCULOMIX_SEED must be a non-negative integer");
  config.seed = v;
  return true;
}

}  // namespace oculomix
