#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scfl/analysis.hpp"
#include "scfl/config.hpp"
#include "scfl/engine.hpp"
#include "scfl/lemmas.hpp"

namespace scfl {

// Everything assembled from a config before (or without) training: the
// dataset, delay profile, one-shot coded composite, oracle solution, bounds,
// privacy accounting, and the resolved engine strategy.
struct BuiltExperiment {
  std::optional<FederatedDataset> dataset;
  DelayProfile profile;
  std::optional<CodedDataset> coded;
  std::optional<LeastSquaresSolution> oracle;
  BoundEstimates bounds;
  PrivacyReport privacy;
  double resolved_sigma = 0.0;
  double rho = 0.0;
  StrategyConfig strategy;
  bool strategy_present = false;
};

BuiltExperiment build_experiment(const ExperimentConfig& config);

// Exact epoch log format: epoch,clock_s,n_arrived,loss,gap,grad_norm with
// reals at 17 significant digits.
std::string run_record_csv(const RunRecord& record);

std::string summary_json(const ExperimentConfig& config, const BuiltExperiment& built,
                         const RunRecord& record);

void write_error_json(const std::filesystem::path& out_dir, const std::string& kind,
                      const std::string& message, std::size_t epoch = 0);

int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

int run_sweep(const ExperimentConfig& config, const std::string& axis,
              const std::vector<double>& values, const std::filesystem::path& out_dir,
              std::size_t jobs);

int run_privacy(const ExperimentConfig& config, const std::filesystem::path& out_dir);

int run_verify(const ExperimentConfig& config, const std::string& suite,
               const std::filesystem::path& out_dir, std::size_t trials);

}  // namespace scfl
