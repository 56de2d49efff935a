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
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "consisrec/dataio.hpp"
#include "consisrec/hetgraph.hpp"
#include "consisrec/model.hpp"

namespace consisrec {

struct TrainConfig {
  double learning_rate = 0.005;
  int batch_size = 128;
  double weight_decay = 1e-4;
  int patience = 5;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Per-example forward/backward workers. Results do not depend on it.
  int workers = 1;

  // Throws ConfigError.
  void Validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  ModelParams m;  // first moments, same shapes as the parameters
  ModelParams v;  // second moments
  std::int64_t step = 0;
};

AdamState InitAdamState(const ModelParams& params);

struct EvalReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;
};

// Optional clipping of predictions to [lo, hi] before scoring.
struct ClipRange {
  double lo = 0.0;
  double hi = 0.0;
};

// sqrt(sum (target - prediction)^2 / B). Throws ContractError on empty or
// mismatched input.
double BatchLoss(std::span<const double> predictions, std::span<const double> targets);

// d/dprediction_i of (1/B) sum (prediction - target)^2, i.e. 2 (p_i - t_i) / B.
std::vector<double> LossGradient(std::span<const double> predictions, std::span<const double> targets);

// RMSE and MAE over the residuals.
EvalReport ComputeReport(std::span<const double> predictions, std::span<const double> targets);

// One Adam update with bias correction and decoupled weight decay
// theta -= lr * wd * theta. Only tensors (and embedding columns) present in
// `grads` are touched. Throws NonFiniteGradientError before any write.
void AdamStep(ModelParams& params, const GradAccumulator& grads, AdamState& state, const TrainConfig& cfg);

// Scores every pair with PredictRating.
EvalReport Evaluate(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                    std::span<const RatingEdge> pairs, std::optional<ClipRange> clip = std::nullopt);

// Patience counter over validation RMSE. Only a strictly lower value counts
// as an improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when `value` is a new best.
  bool Update(double value);
  bool ShouldStop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int bad_epochs_ = 0;
  int best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // RMSE of the training-time predictions
  double val_rmse = 0.0;
  double val_mae = 0.0;
  double elapsed_seconds = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

// Called after each epoch; a false return stops training.
using EpochCallback = std::function<bool(const EpochStats&)>;

// Minibatch Adam over the train split with early stopping on the validation
// split (the train split stands in when validation is empty). Returns the
// best-validation snapshot.
TrainResult Train(const ModelParams& init, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const HetGraph& g, const Dataset& ds, const EpochCallback& on_epoch = {});

// Gradient of the batch mean squared error: forward + Backward per example
// with upstream 2 (p_i - t_i) / B, summed in example order whatever the
// worker count. `seeds` gives each example its own sampling stream.
GradAccumulator BatchGradient(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                              std::span<const RatingEdge> batch, std::span<const std::uint64_t> seeds,
                              int workers, std::vector<double>* predictions);

// history.tsv: epoch, train_loss, val_rmse, val_mae, elapsed_seconds. With
// `with_elapsed` false the last column is written as 0 so that reruns are
// byte-identical.
void WriteHistory(const std::vector<EpochStats>& history, const std::filesystem::path& path,
                  bool with_elapsed = true);

}  // namespace consisrec
