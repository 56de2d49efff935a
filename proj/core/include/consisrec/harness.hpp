// Copyright 2026 The ConsisRec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "consisrec/dataio.hpp"
#include "consisrec/hetgraph.hpp"
#include "consisrec/model.hpp"
#include "consisrec/trainer.hpp"

namespace consisrec {

// Hyper-parameter search space. The defaults form the full 900-point grid.
struct GridSpec {
  std::vector<double> gamma_values{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<int> embedding_sizes{8, 16, 32, 64, 128, 256};
  std::vector<double> learning_rates{0.0005, 0.001, 0.005, 0.01, 0.05, 0.1};
  std::vector<int> batch_sizes{32, 64, 128, 256, 512};
  std::vector<int> layers{1};

  void Validate() const;
  std::size_t size() const;
};

struct TrialConfig {
  ModelConfig model;
  TrainConfig train;
};

struct TrialResult {
  TrialConfig config;
  std::uint64_t seed = 0;
  EvalReport val;
  // From the best-validation checkpoint; count == 0 when the split is empty.
  EvalReport test;
  int epochs_run = 0;
  int best_epoch = 0;
  double wall_time = 0.0;
  bool ok = true;
  std::string error;
};

struct HarnessOptions {
  std::uint64_t seed = 1;
  int workers = 1;
  // Uniformly subsample the grid down to this many trials.
  std::optional<std::size_t> budget;
};

struct GridResult {
  // Sorted: successful trials by validation RMSE (ties: smaller d, then lower
  // learning rate), failed trials last.
  std::vector<TrialResult> trials;
  std::size_t grid_size = 0;
  std::optional<std::size_t> budget;

  const TrialResult* winner() const;
};

// Stable per-trial seed from the global seed and the hyper-parameters.
std::uint64_t TrialSeed(std::uint64_t seed, const TrialConfig& cfg);

// Trains from InitParams(seed) and scores val/test with the best snapshot.
// Exceptions are captured in the result.
TrialResult RunTrial(const Dataset& ds, const HetGraph& g, const TrialConfig& cfg, std::uint64_t seed);

// Every grid point, or a budget-capped uniform subset, seeded by TrialSeed.
// `base` supplies all fields that the grid does not vary.
GridResult RunGrid(const GridSpec& spec, const Dataset& ds, const HetGraph& g, const TrialConfig& base,
                   const HarnessOptions& opts);

struct AblationRow {
  std::string variant;  // "full", "A", "B", "C"
  TrialResult result;
};

// Four trainings differing only in the ablation flags, all with `opts.seed`.
std::vector<AblationRow> RunAblation(const Dataset& ds, const HetGraph& g, const TrialConfig& best,
                                     const HarnessOptions& opts);

enum class SensitivityAxis { kGamma, kDim, kLearningRate };

const char* AxisName(SensitivityAxis axis);
// "gamma", "d" or "lr".
SensitivityAxis ParseAxis(const std::string& name);

// One trial per distinct value (first-occurrence order), all with `opts.seed`.
std::vector<TrialResult> RunSensitivity(const Dataset& ds, const HetGraph& g, const TrialConfig& base,
                                        SensitivityAxis axis, const std::vector<double>& values,
                                        const HarnessOptions& opts);

void WriteGridResults(const GridResult& result, const std::filesystem::path& path);
void WriteAblation(const std::vector<AblationRow>& rows, const std::filesystem::path& path);
void WriteSensitivity(const std::vector<TrialResult>& results, SensitivityAxis axis,
                      const std::filesystem::path& path);

}  // namespace consisrec
