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

#include "consisrec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "consisrec/errors.hpp"
#include "consisrec/random.hpp"

namespace consisrec {
namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void ParallelFor(std::size_t n, int workers, Fn&& fn) {
  const std::size_t pool_size = std::min<std::size_t>(std::max(workers, 1), n);
  if (pool_size <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < pool_size; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

EvalReport EvaluateOrEmpty(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                           const std::vector<RatingEdge>& pairs) {
  if (pairs.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, 0};
  }
  return Evaluate(params, cfg, g, pairs);
}

bool TrialLess(const TrialResult& a, const TrialResult& b) {
  if (a.ok != b.ok) return a.ok;
  if (a.ok && a.val.rmse != b.val.rmse) return a.val.rmse < b.val.rmse;
  const auto& ma = a.config.model;
  const auto& mb = b.config.model;
  const auto& ta = a.config.train;
  const auto& tb = b.config.train;
  if (ma.dim != mb.dim) return ma.dim < mb.dim;
  if (ta.learning_rate != tb.learning_rate) return ta.learning_rate < tb.learning_rate;
  if (ma.gamma != mb.gamma) return ma.gamma < mb.gamma;
  if (ta.batch_size != tb.batch_size) return ta.batch_size < tb.batch_size;
  return ma.layers < mb.layers;
}

void WriteTrialHeader(std::ostream& out) {
  out << "gamma\td\tlayers\tlearning_rate\tbatch_size\tablate_query\tablate_sampling\tablate_attention"
         "\tseed\tval_rmse\tval_mae\ttest_rmse\ttest_mae\tepochs_run\tbest_epoch\twall_time\tstatus";
}

void WriteTrialRow(std::ostream& out, const TrialResult& r) {
  const auto& m = r.config.model;
  const auto& t = r.config.train;
  out << m.gamma << '\t' << m.dim << '\t' << m.layers << '\t' << t.learning_rate << '\t' << t.batch_size << '\t'
      << m.ablate_query << '\t' << m.ablate_sampling << '\t' << m.ablate_attention << '\t' << r.seed << '\t'
      << r.val.rmse << '\t' << r.val.mae << '\t' << r.test.rmse << '\t' << r.test.mae << '\t' << r.epochs_run
      << '\t' << r.best_epoch << '\t' << r.wall_time << '\t';
  if (r.ok) {
    out << "ok";
  } else {
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), '\t', ' ');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << "failed: " << msg;
  }
}

std::ofstream OpenTsv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

}  // namespace

void GridSpec::Validate() const {
  if (gamma_values.empty() || embedding_sizes.empty() || learning_rates.empty() || batch_sizes.empty() ||
      layers.empty()) {
    throw ConfigError("every grid axis needs at least one value");
  }
  for (double g : gamma_values) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma must be in [0,1]");
  }
  for (int d : embedding_sizes) {
    if (d < 1) throw ConfigError("d must be >= 1");
  }
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  }
  for (int b : batch_sizes) {
    if (b < 1) throw ConfigError("batch size must be >= 1");
  }
  for (int l : layers) {
    if (l < 1) throw ConfigError("layers must be >= 1");
  }
}

std::size_t GridSpec::size() const {
  return gamma_values.size() * embedding_sizes.size() * learning_rates.size() * batch_sizes.size() *
         layers.size();
}

const TrialResult* GridResult::winner() const {
  if (trials.empty() || !trials.front().ok) return nullptr;
  return &trials.front();
}

std::uint64_t TrialSeed(std::uint64_t seed, const TrialConfig& cfg) {
  std::ostringstream key;
  key << std::setprecision(17) << cfg.model.gamma << '|' << cfg.model.dim << '|' << cfg.model.layers << '|'
      << cfg.model.ablate_query << cfg.model.ablate_sampling << cfg.model.ablate_attention << '|'
      << cfg.train.learning_rate << '|' << cfg.train.batch_size << '|' << cfg.train.weight_decay << '|'
      << cfg.train.max_epochs << '|' << cfg.train.patience;
  return DeriveSeed(seed, {Fnv1a64(key.str())});
}

TrialResult RunTrial(const Dataset& ds, const HetGraph& g, const TrialConfig& cfg, std::uint64_t seed) {
  TrialResult r;
  r.config = cfg;
  r.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = DeriveSeed(seed, {2});
    const ModelParams init =
        InitParams(cfg.model, g.num_users(), g.num_items(), g.num_relations(), DeriveSeed(seed, {1}));
    TrainResult trained = Train(init, cfg.model, train_cfg, g, ds);
    r.epochs_run = static_cast<int>(trained.history.size());
    r.best_epoch = trained.best_epoch;
    std::vector<RatingEdge> val = ds.EdgesIn(Split::kValidation);
    if (val.empty()) val = ds.EdgesIn(Split::kTrain);
    r.val = EvaluateOrEmpty(trained.best_params, cfg.model, g, val);
    r.test = EvaluateOrEmpty(trained.best_params, cfg.model, g, ds.EdgesIn(Split::kTest));
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

GridResult RunGrid(const GridSpec& spec, const Dataset& ds, const HetGraph& g, const TrialConfig& base,
                   const HarnessOptions& opts) {
  spec.Validate();
  std::vector<TrialConfig> configs;
  configs.reserve(spec.size());
  for (double gamma : spec.gamma_values) {
    for (int d : spec.embedding_sizes) {
      for (double lr : spec.learning_rates) {
        for (int b : spec.batch_sizes) {
          for (int l : spec.layers) {
            TrialConfig c = base;
            c.model.gamma = gamma;
            c.model.dim = d;
            c.model.layers = l;
            c.train.learning_rate = lr;
            c.train.batch_size = b;
            configs.push_back(c);
          }
        }
      }
    }
  }

  GridResult result;
  result.grid_size = configs.size();
  result.budget = opts.budget;
  if (opts.budget && *opts.budget < configs.size()) {
    std::vector<std::size_t> pick(configs.size());
    std::iota(pick.begin(), pick.end(), 0);
    Rng rng(DeriveSeed(opts.seed, {0xb0d6e7}));
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(*opts.budget);
    std::sort(pick.begin(), pick.end());
    std::vector<TrialConfig> kept;
    for (std::size_t i : pick) kept.push_back(configs[i]);
    configs = std::move(kept);
  }

  result.trials.resize(configs.size());
  ParallelFor(configs.size(), opts.workers, [&](std::size_t i) {
    result.trials[i] = RunTrial(ds, g, configs[i], TrialSeed(opts.seed, configs[i]));
  });
  std::stable_sort(result.trials.begin(), result.trials.end(), TrialLess);
  return result;
}

std::vector<AblationRow> RunAblation(const Dataset& ds, const HetGraph& g, const TrialConfig& best,
                                     const HarnessOptions& opts) {
  std::vector<AblationRow> rows(4);
  const char* names[] = {"full", "A", "B", "C"};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].variant = names[k];
    TrialConfig c = best;
    c.model.ablate_query = k == 1;
    c.model.ablate_sampling = k == 2;
    c.model.ablate_attention = k == 3;
    rows[k].result.config = c;
  }
  ParallelFor(rows.size(), opts.workers, [&](std::size_t k) {
    rows[k].result = RunTrial(ds, g, rows[k].result.config, opts.seed);
  });
  return rows;
}

const char* AxisName(SensitivityAxis axis) {
  switch (axis) {
    case SensitivityAxis::kGamma:
      return "gamma";
    case SensitivityAxis::kDim:
      return "d";
    case SensitivityAxis::kLearningRate:
      return "lr";
  }
  return "?";
}

SensitivityAxis ParseAxis(const std::string& name) {
  if (name == "gamma") return SensitivityAxis::kGamma;
  if (name == "d") return SensitivityAxis::kDim;
  if (name == "lr") return SensitivityAxis::kLearningRate;
  throw ConfigError("unknown axis '" + name + "' (expected gamma|d|lr)");
}

std::vector<TrialResult> RunSensitivity(const Dataset& ds, const HetGraph& g, const TrialConfig& base,
                                        SensitivityAxis axis, const std::vector<double>& values,
                                        const HarnessOptions& opts) {
  std::vector<double> distinct;
  for (double v : values) {
    if (std::find(distinct.begin(), distinct.end(), v) == distinct.end()) distinct.push_back(v);
  }
  std::vector<TrialResult> results(distinct.size());
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    TrialConfig c = base;
    switch (axis) {
      case SensitivityAxis::kGamma:
        c.model.gamma = distinct[i];
        break;
      case SensitivityAxis::kDim:
        if (distinct[i] != std::floor(distinct[i])) throw ConfigError("d values must be integers");
        c.model.dim = static_cast<int>(distinct[i]);
        break;
      case SensitivityAxis::kLearningRate:
        c.train.learning_rate = distinct[i];
        break;
    }
    c.model.Validate();
    c.train.Validate();
    results[i].config = c;
  }
  ParallelFor(results.size(), opts.workers, [&](std::size_t i) {
    results[i] = RunTrial(ds, g, results[i].config, opts.seed);
  });
  return results;
}

void WriteGridResults(const GridResult& result, const std::filesystem::path& path) {
  std::ofstream out = OpenTsv(path);
  out << "# grid_size=" << result.grid_size << " trials=" << result.trials.size();
  if (result.budget) out << " budget=" << *result.budget;
  out << '\n';
  out << "rank\t";
  WriteTrialHeader(out);
  out << '\n';
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    out << i + 1 << '\t';
    WriteTrialRow(out, result.trials[i]);
    out << '\n';
  }
}

void WriteAblation(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = OpenTsv(path);
  out << "variant\t";
  WriteTrialHeader(out);
  out << '\n';
  for (const AblationRow& row : rows) {
    out << row.variant << '\t';
    WriteTrialRow(out, row.result);
    out << '\n';
  }
}

void WriteSensitivity(const std::vector<TrialResult>& results, SensitivityAxis axis,
                      const std::filesystem::path& path) {
  std::ofstream out = OpenTsv(path);
  out << "axis_value\t";
  WriteTrialHeader(out);
  out << '\n';
  for (const TrialResult& r : results) {
    switch (axis) {
      case SensitivityAxis::kGamma:
        out << r.config.model.gamma;
        break;
      case SensitivityAxis::kDim:
        out << r.config.model.dim;
        break;
      case SensitivityAxis::kLearningRate:
        out << r.config.train.learning_rate;
        break;
    }
    out << '\t';
    WriteTrialRow(out, r);
    out << '\n';
  }
}

}  // namespace consisrec
