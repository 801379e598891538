#pragma once

// Experiment runner: data preparation, training under a sampling strategy,
// per-epoch validation, test/external evaluation and multi-cell sweeps.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oculomix/cohort.hpp"
#include "oculomix/cohort_io.hpp"
#include "oculomix/config.hpp"
#include "oculomix/losses.hpp"
#include "oculomix/metrics.hpp"
#include "oculomix/msda.hpp"
#include "oculomix/predictor.hpp"
#include "oculomix/sampler.hpp"
#include "oculomix/synth.hpp"

namespace oculomix {

struct EvaluationMetrics {
  double auroc = 0.0;
  double auprc = 0.0;
  double c_index = 0.0;
  std::size_t n_exams = 0;
};

/// Exam-level scores: mean scalar logit over the exam's images.
inline std::vector<ScoredOutcome> score_exams(const Params& params, const CohortIndex& index) {
  std::vector<ScoredOutcome> out;
  out.reserve(index.exam_count());
  ForwardCache cache;
  for (std::size_t e = 0; e < index.exam_count(); ++e) {
    const auto members = index.images_of_exam(e);
    if (members.empty()) continue;
    double sum = 0.0;
    for (std::size_t i : members) sum += scalar_logit(forward(params, index.images()[i].pixels, cache));
    const Exam& exam = index.exams()[e];
    out.push_back(ScoredOutcome{sum / static_cast<double>(members.size()), exam.label, exam.event_time,
                                exam.event_observed});
  }
  return out;
}

inline EvaluationMetrics evaluate_params(const Params& params, const CohortIndex& index) {
  const PredictorConfig& pc = params.config();
  for (const ImageRecord& r : index.images()) {
    if (r.pixels.height != pc.image_height || r.pixels.width != pc.image_width) {
      throw Error(ErrorKind::IncompatibleShapes, "cohort image " + r.image_id + " does not match the checkpoint");
    }
  }
  const auto scored = score_exams(params, index);
  return EvaluationMetrics{auroc(scored), auprc(scored), c_index(scored), scored.size()};
}

inline Json to_json(const EvaluationMetrics& m) {
  return {{"auroc", m.auroc}, {"auprc", m.auprc}, {"c_index", m.c_index}, {"n_exams", m.n_exams}};
}

struct PreparedData {
  CohortSplits splits;
  std::optional<CohortIndex> external;
};

inline CohortIndex load_or_generate_cohort(const ExperimentConfig& config) {
  if (config.cohort_path) return load_cohort(*config.cohort_path);
  return generate_cohort(config.effective_synth());
}

inline PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData data{split_cohort(load_or_generate_cohort(config), config.split_ratios, config.seed), std::nullopt};
  if (config.external_synth) {
    SynthConfig ext = *config.external_synth;
    if (config.vary_cohort_with_seed) ext.seed = derive_seed(ext.seed, Stream::cohort, config.seed);
    data.external = generate_cohort(ext);
  }
  return data;
}

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
  double val_auprc = 0.0;
  double learning_rate = 0.0;
};

struct RunSummary {
  std::string config_hash;
  std::size_t epochs = 0;
  double final_train_loss = 0.0;
  std::size_t peak_val_epoch = 0;
  double peak_val_auroc = 0.0;
  EvaluationMetrics test;
  std::optional<EvaluationMetrics> external;
};

struct MetricsLog {
  std::vector<EpochRow> epochs;
  RunSummary summary;
  double wall_seconds = 0.0;
};

inline Json to_json(const RunSummary& s) {
  Json j = {{"config_hash", s.config_hash},
            {"epochs", s.epochs},
            {"final_train_loss", s.final_train_loss},
            {"peak_val_epoch", s.peak_val_epoch},
            {"peak_val_auroc", s.peak_val_auroc},
            {"test_auroc", s.test.auroc},
            {"test_auprc", s.test.auprc},
            {"test_c_index", s.test.c_index},
            {"test_exams", s.test.n_exams}};
  if (s.external) {
    j["external_auroc"] = s.external->auroc;
    j["external_auprc"] = s.external->auprc;
    j["external_c_index"] = s.external->c_index;
    j["external_exams"] = s.external->n_exams;
  }
  return j;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<EpochRow>& rows) {
  std::string out = "epoch,train_loss,val_auroc,val_auprc,learning_rate\n";
  for (const EpochRow& r : rows) {
    out += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," + format_number(r.val_auroc) + "," +
           format_number(r.val_auprc) + "," + format_number(r.learning_rate) + "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

struct RunOptions {
  bool write_outputs = true;
  std::function<void(const EpochRow&)> on_epoch;
};

namespace detail {

struct TrainingBatch {
  std::vector<MixedSample> mixed;
  std::vector<ScoredSample> scored;
};

/// Builds the mixed samples for one batch of anchors. Patient+exam-level
/// anchors that draw a cross-exam partner also get a same-exam mixture, so
/// the cross-exam prediction has an anchor prediction to be compared with.
inline void build_batch(const CohortIndex& train, const ExperimentConfig& config, std::span<const std::size_t> anchors,
                        Rng& sampling, Rng& augmentation, TrainingBatch& batch) {
  batch.mixed.clear();
  batch.scored.clear();
  const CrossExamSupervision cross_mode = config.supervision == SupervisionMode::ranking
                                              ? CrossExamSupervision::ranking
                                              : CrossExamSupervision::soft_label;
  auto push = [&](MixedSample&& m, SampleRole role) {
    batch.scored.push_back(ScoredSample{role, m.anchor_image, m.supervision, {0.0, 0.0}});
    batch.mixed.push_back(std::move(m));
  };
  for (std::size_t anchor : anchors) {
    if (config.aug.mode == AugMode::none) {
      push(MixedSample{train.images()[anchor].pixels, HardLabel{train.label_of_image(anchor)}, anchor,
                       PairKind::same_exam, 1.0},
           SampleRole::anchor);
      continue;
    }
    const MixPair pair = pair_for_anchor(train, config.strategy, anchor, sampling);
    switch (config.strategy.kind) {
      case StrategyKind::ImageLevel:
      case StrategyKind::ExamLevel:
        push(apply_msda(pair, train, config.aug, CrossExamSupervision::soft_label, augmentation), SampleRole::anchor);
        break;
      case StrategyKind::PatientExamLevel:
        if (pair.kind == PairKind::cross_exam) {
          const MixPair same = exam_level_pair(train, anchor, sampling);
          push(apply_msda(same, train, config.aug, cross_mode, augmentation), SampleRole::anchor);
          push(apply_msda(pair, train, config.aug, cross_mode, augmentation), SampleRole::cross_exam);
        } else {
          push(apply_msda(pair, train, config.aug, cross_mode, augmentation), SampleRole::anchor);
        }
        break;
    }
  }
}

}  // namespace detail

/// Trains under `config` and returns the per-epoch log and final summary.
/// When `config.output_dir` is set, writes metrics.csv, summary.json,
/// config.json, timing.json and checkpoint.bin there.
inline MetricsLog run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(config);
  const CohortIndex& train = data.splits.train;
  if (train.image_count() == 0) throw Error(ErrorKind::EmptyIndex, "training split has no images");

  Params params = init_params(config.effective_predictor());
  OptimizerState opt;
  std::vector<double> grad(params.size(), 0.0);

  const std::size_t n_train = train.image_count();
  const std::size_t batch_size = config.train.batch_size;
  const std::size_t steps_per_epoch = (n_train + batch_size - 1) / batch_size;
  const LrSchedule schedule{steps_per_epoch * config.train.epochs, steps_per_epoch * config.train.warmup_epochs};

  MetricsLog log;
  log.summary.config_hash = config_hash(config);
  detail::TrainingBatch batch;
  std::vector<ForwardCache> caches;
  std::vector<std::size_t> order(n_train);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = make_rng(config.seed, Stream::shuffle, epoch);
    for (std::size_t k = n_train; k > 1; --k) std::swap(order[k - 1], order[uniform_index(shuffle, k)]);

    EpochRow row;
    row.epoch = epoch;
    row.learning_rate = scheduled_learning_rate(config.train.learning_rate, step, schedule);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * batch_size;
      const std::size_t hi = std::min(n_train, lo + batch_size);
      Rng sampling = batch_rng(config.seed, step);
      Rng augmentation = make_rng(config.seed, Stream::augmentation, step);
      detail::build_batch(train, config, std::span<const std::size_t>(order).subspan(lo, hi - lo), sampling,
                          augmentation, batch);

      if (caches.size() < batch.mixed.size()) caches.resize(batch.mixed.size());
      for (std::size_t k = 0; k < batch.mixed.size(); ++k) {
        batch.scored[k].logits = forward(params, batch.mixed[k].pixels, caches[k]);
      }
      const ObjectiveResult objective = config.supervision == SupervisionMode::ranking
                                            ? oculomix_objective(batch.scored, config.ranking, config.sup)
                                            : direct_label_objective(batch.scored, config.sup);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = 0; k < batch.mixed.size(); ++k) backward(params, caches[k], objective.grads[k], grad);
      train_step(params, opt, grad, step, schedule, config.train);
      loss_sum += objective.total;
    }
    row.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    const auto val_scores = score_exams(params, data.splits.validation);
    row.val_auroc = auroc(val_scores);
    row.val_auprc = auprc(val_scores);
    if (row.val_auroc > log.summary.peak_val_auroc || log.summary.peak_val_epoch == 0) {
      log.summary.peak_val_auroc = row.val_auroc;
      log.summary.peak_val_epoch = epoch;
    }
    log.epochs.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  }

  log.summary.epochs = config.train.epochs;
  log.summary.final_train_loss = log.epochs.back().train_loss;
  log.summary.test = evaluate_params(params, data.splits.test);
  if (data.external) log.summary.external = evaluate_params(params, *data.external);
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.write_outputs && !config.output_dir.empty()) {
    const std::filesystem::path dir = config.output_dir;
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.csv", metrics_csv(log.epochs));
    write_text(dir / "summary.json", to_json(log.summary).dump(2) + "\n");
    write_text(dir / "config.json", to_json(config).dump(2) + "\n");
    write_text(dir / "timing.json", Json{{"wall_seconds", log.wall_seconds}}.dump(2) + "\n");
    Json extra = to_json(config);
    extra.erase("output_dir");
    save_checkpoint(dir / "checkpoint.bin", Checkpoint{params, step, "", extra});
  }
  return log;
}

/// Evaluates a saved checkpoint on `split` ("train", "val", "test" or
/// "all") of the cohort at `cohort_path`, re-deriving the split from the
/// ratios and seed recorded in the checkpoint.
inline EvaluationMetrics evaluate_checkpoint(const std::filesystem::path& checkpoint_path,
                                             const std::filesystem::path& cohort_path, const std::string& split) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const CohortIndex cohort = load_cohort(cohort_path);
  if (split == "all") return evaluate_params(ckpt.params, cohort);
  const ExperimentConfig config = experiment_config_from_json(ckpt.extra);
  CohortSplits splits = split_cohort(cohort, config.split_ratios, config.seed);
  if (split == "train") return evaluate_params(ckpt.params, splits.train);
  if (split == "val" || split == "validation") return evaluate_params(ckpt.params, splits.validation);
  if (split == "test") return evaluate_params(ckpt.params, splits.test);
  throw Error(ErrorKind::InvalidConfig, "unknown split '" + split + "' (expected train, val, test or all)");
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  ExperimentConfig base;
  std::vector<StrategyKind> strategies{StrategyKind::PatientExamLevel, StrategyKind::ExamLevel,
                                       StrategyKind::ImageLevel};
  std::vector<AugMode> aug_modes{AugMode::cutmix_plus_mixup};
  std::vector<SupervisionMode> supervision{SupervisionMode::ranking};
  std::vector<std::uint64_t> seeds{0};
  bool relative_vs_direct = false;
  std::size_t jobs = 1;
};

inline SweepSpec sweep_spec_from_json(const Json& j) {
  try {
    detail::check_keys(j, {"base", "strategies", "aug_modes", "supervision", "seeds", "relative_vs_direct", "jobs"},
                       "sweep");
    SweepSpec spec;
    if (j.contains("base")) spec.base = experiment_config_from_json(j.at("base"));
    if (j.contains("strategies")) {
      spec.strategies.clear();
      for (const auto& s : j.at("strategies")) spec.strategies.push_back(parse_strategy_kind(s.get<std::string>()));
    }
    if (j.contains("aug_modes")) {
      spec.aug_modes.clear();
      for (const auto& s : j.at("aug_modes")) spec.aug_modes.push_back(parse_aug_mode(s.get<std::string>()));
    }
    if (j.contains("supervision")) {
      spec.supervision.clear();
      for (const auto& s : j.at("supervision")) spec.supervision.push_back(parse_supervision(s.get<std::string>()));
    }
    detail::read(j, "seeds", spec.seeds);
    detail::read(j, "relative_vs_direct", spec.relative_vs_direct);
    detail::read(j, "jobs", spec.jobs);
    if (spec.strategies.empty() || spec.aug_modes.empty() || spec.supervision.empty() || spec.seeds.empty()) {
      throw Error(ErrorKind::InvalidConfig, "sweep needs at least one cell");
    }
    return spec;
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::Parse, ex.what());
  }
}

struct CellKey {
  StrategyKind strategy = StrategyKind::PatientExamLevel;
  AugMode aug = AugMode::cutmix_plus_mixup;
  SupervisionMode supervision = SupervisionMode::ranking;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

inline std::string cell_name(const CellKey& key) {
  return to_string(key.strategy) + "__" + to_string(key.aug) + "__" + to_string(key.supervision);
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

struct TableRow {
  CellKey key;
  std::vector<std::uint64_t> seeds;
  std::vector<RunSummary> runs;  // aligned with seeds
  MeanSd auroc, auprc, c_index;
  std::optional<MeanSd> external_c_index;
};

struct ComparisonTable {
  std::vector<TableRow> rows;  // patient_exam, exam, image; aug in Table-2 column order
  bool relative_vs_direct = false;
};

namespace detail {

inline int strategy_rank(StrategyKind k) {
  switch (k) {
    case StrategyKind::PatientExamLevel: return 0;
    case StrategyKind::ExamLevel: return 1;
    case StrategyKind::ImageLevel: return 2;
  }
  return 3;
}

}  // namespace detail

/// Distinct cells of a sweep in display order.
inline std::vector<CellKey> sweep_cells(const SweepSpec& spec) {
  std::vector<CellKey> cells;
  auto add = [&](CellKey key) {
    if (std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
  };
  for (StrategyKind s : spec.strategies) {
    for (AugMode a : spec.aug_modes) {
      if (s != StrategyKind::PatientExamLevel) {
        add(CellKey{s, a, SupervisionMode::ranking});
        continue;
      }
      for (SupervisionMode m : spec.supervision) add(CellKey{s, a, m});
      if (spec.relative_vs_direct) {
        add(CellKey{s, a, SupervisionMode::ranking});
        add(CellKey{s, a, SupervisionMode::direct_label});
      }
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [](const CellKey& x, const CellKey& y) {
    const int sx = detail::strategy_rank(x.strategy), sy = detail::strategy_rank(y.strategy);
    if (sx != sy) return sx < sy;
    if (x.aug != y.aug) return static_cast<int>(x.aug) < static_cast<int>(y.aug);
    return static_cast<int>(x.supervision) < static_cast<int>(y.supervision);
  });
  return cells;
}

inline ExperimentConfig cell_config(const SweepSpec& spec, const CellKey& key, std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  ExperimentConfig c = spec.base;
  c.strategy.kind = key.strategy;
  c.aug.mode = key.aug;
  c.supervision = key.supervision;
  c.seed = seed;
  c.output_dir = out_dir.empty() ? std::string{}
                                 : (out_dir / "cells" / (cell_name(key) + "__seed" + std::to_string(seed))).string();
  return c;
}

inline std::string render_table_csv(const ComparisonTable& table) {
  std::string out =
      "strategy,aug,supervision,n_seeds,test_auroc_mean,test_auroc_sd,test_auprc_mean,test_auprc_sd,"
      "test_c_index_mean,test_c_index_sd,external_c_index_mean,external_c_index_sd\n";
  for (const TableRow& r : table.rows) {
    out += to_string(r.key.strategy) + "," + to_string(r.key.aug) + "," + to_string(r.key.supervision) + "," +
           std::to_string(r.runs.size()) + "," + format_number(r.auroc.mean) + "," + format_number(r.auroc.sd) + "," +
           format_number(r.auprc.mean) + "," + format_number(r.auprc.sd) + "," + format_number(r.c_index.mean) +
           "," + format_number(r.c_index.sd) + ",";
    if (r.external_c_index) {
      out += format_number(r.external_c_index->mean) + "," + format_number(r.external_c_index->sd);
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

namespace detail {

inline std::string percent(const MeanSd& v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * v.mean, 100.0 * v.sd);
  return buf;
}

inline std::string strategy_label(StrategyKind k) {
  switch (k) {
    case StrategyKind::PatientExamLevel: return "Patient+Exam";
    case StrategyKind::ExamLevel: return "Exam";
    case StrategyKind::ImageLevel: return "Image";
  }
  return "?";
}

// Column padding counting UTF-8 code points, so "±" occupies one column.
inline std::string pad(const std::string& s, std::size_t width) {
  std::size_t cols = 0;
  for (unsigned char ch : s) cols += (ch & 0xC0) != 0x80;
  return s + std::string(width > cols ? width - cols : 0, ' ');
}

inline std::string render_grid(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::size_t cols = 0;
      for (unsigned char ch : row[c]) cols += (ch & 0xC0) != 0x80;
      widths[c] = std::max(widths[c], cols);
    }
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      line += (c ? "  " : "") + (c + 1 == cells[r].size() ? cells[r][c] : pad(cells[r][c], widths[c]));
    }
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
    }
  }
  return out;
}

}  // namespace detail

/// Aligned text rendering (values in percent, mean ± sd over seeds).
inline std::string render_table_text(const ComparisonTable& table) {
  std::vector<std::vector<std::string>> grid{{"Sampling", "Aug", "Supervision", "Seeds", "AUROC", "AUPRC", "C-index"}};
  bool any_external = false;
  for (const TableRow& r : table.rows) any_external = any_external || r.external_c_index.has_value();
  if (any_external) grid[0].push_back("External C-index");
  for (const TableRow& r : table.rows) {
    std::vector<std::string> line{detail::strategy_label(r.key.strategy), to_string(r.key.aug),
                                  r.key.strategy == StrategyKind::PatientExamLevel ? to_string(r.key.supervision) : "-",
                                  std::to_string(r.runs.size()), detail::percent(r.auroc), detail::percent(r.auprc),
                                  detail::percent(r.c_index)};
    if (any_external) line.push_back(r.external_c_index ? detail::percent(*r.external_c_index) : "-");
    grid.push_back(std::move(line));
  }
  std::string out = detail::render_grid(grid);

  if (table.relative_vs_direct) {
    std::vector<std::vector<std::string>> block{{"Aug", "Method", "AUROC", "AUPRC"}};
    for (const TableRow& r : table.rows) {
      if (r.key.strategy != StrategyKind::PatientExamLevel) continue;
      block.push_back({to_string(r.key.aug),
                       r.key.supervision == SupervisionMode::ranking ? "Relative Sup" : "Direct label Sup",
                       detail::percent(r.auroc), detail::percent(r.auprc)});
    }
    out += "\nRelative vs direct supervision (Patient+Exam)\n" + detail::render_grid(block);
  }
  return out;
}

/// Runs every (cell, seed) of the sweep, in lexicographic order of run name
/// (optionally on `spec.jobs` threads), and aggregates mean ± sd per cell.
/// With a non-empty `out_dir`, writes per-run outputs under cells/ plus
/// table.csv and table.txt.
inline ComparisonTable compare(const SweepSpec& spec, const std::filesystem::path& out_dir,
                               const std::function<void(const std::string&, const RunSummary&)>& on_run = {}) {
  const std::vector<CellKey> cells = sweep_cells(spec);
  if (cells.empty() || spec.seeds.empty()) throw Error(ErrorKind::InvalidConfig, "sweep needs at least one cell");

  struct Job {
    std::size_t cell;
    std::size_t seed_slot;
    std::string name;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
      jobs.push_back(Job{c, s, cell_name(cells[c]) + "__seed" + std::to_string(spec.seeds[s])});
    }
  }
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.name < b.name; });

  std::vector<std::vector<RunSummary>> results(cells.size(), std::vector<RunSummary>(spec.seeds.size()));
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      {
        std::lock_guard lock(report_mutex);
        if (failure) return;
      }
      try {
        const Job& job = jobs[k];
        const ExperimentConfig config = cell_config(spec, cells[job.cell], spec.seeds[job.seed_slot], out_dir);
        RunSummary summary = run_experiment(config).summary;
        std::lock_guard lock(report_mutex);
        results[job.cell][job.seed_slot] = summary;
        if (on_run) on_run(job.name, summary);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(spec.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ComparisonTable table;
  table.relative_vs_direct = spec.relative_vs_direct;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    TableRow row;
    row.key = cells[c];
    row.seeds = spec.seeds;
    row.runs = results[c];
    std::vector<double> a, p, ci, ext;
    for (const RunSummary& r : row.runs) {
      a.push_back(r.test.auroc);
      p.push_back(r.test.auprc);
      ci.push_back(r.test.c_index);
      if (r.external) ext.push_back(r.external->c_index);
    }
    row.auroc = mean_sd(a);
    row.auprc = mean_sd(p);
    row.c_index = mean_sd(ci);
    if (ext.size() == row.runs.size()) row.external_c_index = mean_sd(ext);
    table.rows.push_back(std::move(row));
  }

  if (!out_dir.empty()) {
    write_text(out_dir / "table.csv", render_table_csv(table));
    write_text(out_dir / "table.txt", render_table_text(table));
  }
  return table;
}

}  // namespace oculomix
