// Command-line front end: generate, train, evaluate, compare.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "oculomix/oculomix.hpp"

namespace fs = std::filesystem;
using oculomix::Json;

namespace {

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw oculomix::Error(oculomix::ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& ex) {
    throw oculomix::Error(oculomix::ErrorKind::Parse, path.string() + ": " + ex.what());
  }
}

// Accepts either a bare synth config or an experiment config with a "synth" section.
oculomix::SynthConfig synth_from_file(const fs::path& path) {
  const Json j = read_json(path);
  if (j.contains("synth") || j.contains("strategy") || j.contains("train")) {
    oculomix::ExperimentConfig config = oculomix::experiment_config_from_json(j);
    oculomix::apply_seed_override(config);
    return config.effective_synth();
  }
  oculomix::SynthConfig synth = oculomix::synth_config_from_json(j);
  if (const char* env = std::getenv("OCULOMIX_SEED"); env && *env) synth.seed = std::stoull(env);
  return synth;
}

int run_generate(const fs::path& config_path, const fs::path& out_dir) {
  const oculomix::SynthConfig synth = synth_from_file(config_path);
  const oculomix::CohortIndex cohort = oculomix::generate_cohort(synth);
  oculomix::save_cohort(cohort, out_dir / "cohort.json");
  const Json summary = oculomix::to_json(oculomix::cohort_summary(cohort));
  oculomix::write_text(out_dir / "cohort_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_train(const fs::path& config_path, const std::string& output_override, bool quiet) {
  oculomix::ExperimentConfig config = oculomix::experiment_config_from_json(read_json(config_path));
  oculomix::apply_seed_override(config);
  if (!output_override.empty()) config.output_dir = output_override;
  if (config.output_dir.empty()) config.output_dir = "runs/" + oculomix::config_hash(config);

  oculomix::RunOptions options;
  if (!quiet) {
    options.on_epoch = [](const oculomix::EpochRow& r) {
      std::fprintf(stderr, "epoch %4zu  loss %.5f  val_auroc %.4f  val_auprc %.4f  lr %.3g\n", r.epoch, r.train_loss,
                   r.val_auroc, r.val_auprc, r.learning_rate);
    };
  }
  const oculomix::MetricsLog log = oculomix::run_experiment(config, options);
  std::cout << oculomix::to_json(log.summary).dump(2) << "\n";
  std::fprintf(stderr, "wrote %s (%.1f s)\n", config.output_dir.c_str(), log.wall_seconds);
  return 0;
}

int run_evaluate(const fs::path& checkpoint, const fs::path& cohort, const std::string& split) {
  const oculomix::EvaluationMetrics m = oculomix::evaluate_checkpoint(checkpoint, cohort, split);
  std::cout << oculomix::to_json(m).dump(2) << "\n";
  return 0;
}

int run_compare(const fs::path& sweep_path, const fs::path& out_dir, std::size_t jobs) {
  oculomix::SweepSpec spec = oculomix::sweep_spec_from_json(read_json(sweep_path));
  if (jobs > 0) spec.jobs = jobs;
  const auto table = oculomix::compare(spec, out_dir, [](const std::string& name, const oculomix::RunSummary& s) {
    std::fprintf(stderr, "%-60s test_auroc %.4f  test_auprc %.4f  c_index %.4f\n", name.c_str(), s.test.auroc,
                 s.test.auprc, s.test.c_index);
  });
  std::cout << oculomix::render_table_text(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchy-constrained mixed-sample augmentation toolkit"};
  app.require_subcommand(1);

  fs::path gen_config, gen_out;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic longitudinal cohort");
  generate->add_option("--config", gen_config, "Synth or experiment config (JSON)")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", gen_out, "Output directory")->required();

  fs::path train_config;
  std::string train_out;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train one experiment");
  train->add_option("--config", train_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Override output_dir");
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  fs::path eval_ckpt, eval_cohort;
  std::string eval_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a cohort split");
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint.bin from train")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--cohort", eval_cohort, "cohort.json")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", eval_split, "train | val | test | all")
      ->check(CLI::IsMember({"train", "val", "validation", "test", "all"}));

  fs::path sweep_path, compare_out;
  std::size_t jobs = 0;
  auto* cmp = app.add_subcommand("compare", "Run a sweep and emit a comparison table");
  cmp->add_option("--sweep", sweep_path, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", compare_out, "Output directory")->required();
  cmp->add_option("--jobs", jobs, "Concurrent runs (overrides the sweep's jobs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return run_generate(gen_config, gen_out);
    if (*train) return run_train(train_config, train_out, quiet);
    if (*evaluate) return run_evaluate(eval_ckpt, eval_cohort, eval_split);
    if (*cmp) return run_compare(sweep_path, compare_out, jobs);
  } catch (const oculomix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
