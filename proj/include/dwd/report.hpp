#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dwd/metrics.hpp"
#include "dwd/trainer.hpp"

namespace dwd::eval {

struct Setting {
  std::string name;
  std::size_t pool_size = 2;
  world::Sampling sampling = world::Sampling::kRandom;
  std::size_t rounds = 5;
  world::DomainTag domain = world::DomainTag::kBase;
};

/// The six settings: 2-contrast-1R, 2-contrast-5R, 2-random-5R and
/// 9-random-9R on each of the three domains.
std::vector<Setting> default_grid();
std::string setting_name(std::size_t P, world::Sampling s, std::size_t R, world::DomainTag d);

/// Evaluation pools for a setting; a pure function of (setting, n, seed).
std::vector<world::Pool> setting_pools(const Setting& s, std::size_t n, std::uint64_t seed);

struct NamedModel {
  std::string name;
  const train::Model* model = nullptr;
};

struct ReportRow {
  std::string setting;
  std::string model;
  MetricReport metrics;
};

std::vector<ReportRow> build_report(const std::vector<NamedModel>& models,
                                    const std::vector<Setting>& grid, const LanguageModel& lm,
                                    std::size_t pools_per_setting, std::uint64_t seed);

/// Tab-separated, one header line; empty cells are written as "NA".
std::string to_tsv(const std::vector<ReportRow>& rows);
/// Aligned columns for reading.
std::string to_text(const std::vector<ReportRow>& rows);

struct AblationRow {
  train::Variant variant;
  MetricReport mean;  // averaged over the grid's settings
};

/// Trains every variant (sharing stage-1 runs by pre-training flavor) and
/// averages its metrics over `grid`.
std::vector<AblationRow> run_ablation_grid(const train::TrainConfig& base,
                                           const std::vector<world::Stage1Example>& train,
                                           const std::vector<world::Stage1Example>& val,
                                           const LanguageModel& lm, const std::vector<Setting>& grid,
                                           std::size_t pools_per_setting,
                                           const train::LogSink& log = {});
std::string ablation_tsv(const std::vector<AblationRow>& rows);

}  // namespace dwd::eval
