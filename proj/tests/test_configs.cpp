#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

namespace oculomix {
namespace {

Json read(const std::string& name) {
  std::ifstream in(std::filesystem::path(OCULOMIX_SOURCE_DIR) / "configs" / name);
  EXPECT_TRUE(in) << name;
  return Json::parse(in);
}

TEST(Configs, TinyMatchesFixture) {
  const ExperimentConfig c = experiment_config_from_json(read("tiny.json"));
  EXPECT_EQ(config_hash(c), config_hash(testing::tiny_experiment()));
}

TEST(Configs, BenchmarkMatchesSweepBase) {
  const ExperimentConfig single = experiment_config_from_json(read("benchmark.json"));
  const SweepSpec spec = sweep_spec_from_json(read("benchmark_sweep.json"));
  const ExperimentConfig cell =
      cell_config(spec, CellKey{StrategyKind::PatientExamLevel, AugMode::cutmix_plus_mixup, SupervisionMode::ranking},
                  0, "unused");
  EXPECT_EQ(config_hash(single), config_hash(cell));
  EXPECT_EQ(spec.seeds.size(), 5u);
  EXPECT_TRUE(spec.relative_vs_direct);
  EXPECT_EQ(sweep_cells(spec).size(), 4u);
}

TEST(Configs, BenchmarkSplitSizes) {
  const ExperimentConfig c = experiment_config_from_json(read("benchmark.json"));
  const auto sizes = split_sizes(c.synth.n_patients, c.split_ratios);
  EXPECT_EQ(sizes[0], 1000u);
  EXPECT_EQ(sizes[2], 300u);
}

}  // namespace
}  // namespace oculomix
