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

#include "consisrec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <thread>

#include "consisrec/errors.hpp"

namespace consisrec {
namespace {

void CheckLossInputs(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ContractError("empty batch");
  if (predictions.size() != targets.size()) throw ContractError("prediction/target length mismatch");
}

struct AdamCoefficients {
  double lr;
  double wd;
  double beta1;
  double beta2;
  double eps;
  double bias1;
  double bias2;
};

// Arguments are Eigen blocks or plain objects of identical shape; blocks are
// taken by forwarding reference so writes go through to the parent.
template <typename P, typename M, typename V, typename G>
void AdamUpdate(P&& theta, M&& m, V&& v, const G& g, const AdamCoefficients& c) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v.array() = c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square();
  const auto m_hat = m.array() / c.bias1;
  const auto v_hat = v.array() / c.bias2;
  theta.array() -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.wd * theta.array());
}

GradAccumulator ExampleGradient(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                                const RatingEdge& e, std::uint64_t seed, double batch_size,
                                double& prediction) {
  Rng rng(seed);
  ForwardTrace trace = Forward(params, cfg, g, g.user_node(e.user), g.item_node(e.item), rng);
  prediction = trace.prediction;
  const double upstream = 2.0 * (trace.prediction - e.rating) / batch_size;
  return Backward(params, cfg, trace, upstream);
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam beta1 must be in (0,1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam beta2 must be in (0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

AdamState InitAdamState(const ModelParams& params) {
  AdamState s{params, params, 0};
  s.m.SetZero();
  s.v.SetZero();
  return s;
}

double BatchLoss(std::span<const double> predictions, std::span<const double> targets) {
  CheckLossInputs(predictions, targets);
  double sq = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = targets[i] - predictions[i];
    sq += r * r;
  }
  return std::sqrt(sq / static_cast<double>(predictions.size()));
}

std::vector<double> LossGradient(std::span<const double> predictions, std::span<const double> targets) {
  CheckLossInputs(predictions, targets);
  const auto b = static_cast<double>(predictions.size());
  std::vector<double> g(predictions.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (predictions[i] - targets[i]) / b;
  return g;
}

EvalReport ComputeReport(std::span<const double> predictions, std::span<const double> targets) {
  CheckLossInputs(predictions, targets);
  double sq = 0.0;
  double abs = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = targets[i] - predictions[i];
    sq += r * r;
    abs += std::abs(r);
  }
  const auto n = static_cast<double>(predictions.size());
  return {std::sqrt(sq / n), abs / n, predictions.size()};
}

void AdamStep(ModelParams& params, const GradAccumulator& grads, AdamState& state, const TrainConfig& cfg) {
  if (auto bad = grads.FirstNonFinite()) throw NonFiniteGradientError(*bad);
  for (const auto& [k, g] : grads.node_emb) {
    if (k < 0 || k >= params.num_nodes()) throw ContractError("gradient for unknown node");
  }
  for (const auto& [k, g] : grads.rel_emb) {
    if (k < 0 || k >= params.num_relations) throw ContractError("gradient for unknown relation");
  }
  if (grads.w_layer.size() > params.w_layer.size()) throw ContractError("gradient for unknown layer");

  ++state.step;
  const auto t = static_cast<double>(state.step);
  const AdamCoefficients c{cfg.learning_rate,
                           cfg.weight_decay,
                           cfg.adam_beta1,
                           cfg.adam_beta2,
                           cfg.adam_eps,
                           1.0 - std::pow(cfg.adam_beta1, t),
                           1.0 - std::pow(cfg.adam_beta2, t)};

  for (const auto& [k, g] : grads.node_emb) {
    AdamUpdate(params.node_emb.col(k), state.m.node_emb.col(k), state.v.node_emb.col(k), g, c);
  }
  for (const auto& [k, g] : grads.rel_emb) {
    AdamUpdate(params.rel_emb.col(k), state.m.rel_emb.col(k), state.v.rel_emb.col(k), g, c);
  }
  if (grads.w_query) AdamUpdate(params.w_query, state.m.w_query, state.v.w_query, *grads.w_query, c);
  for (std::size_t l = 0; l < grads.w_layer.size(); ++l) {
    if (grads.w_layer[l]) {
      AdamUpdate(params.w_layer[l], state.m.w_layer[l], state.v.w_layer[l], *grads.w_layer[l], c);
    }
  }
  if (grads.w_att) {
    AdamUpdate(params.w_att, state.m.w_att, state.v.w_att, *grads.w_att, c);
  }
}

EvalReport Evaluate(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                    std::span<const RatingEdge> pairs, std::optional<ClipRange> clip) {
  if (pairs.empty()) throw ContractError("no pairs to evaluate");
  std::vector<double> predictions(pairs.size());
  std::vector<double> targets(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double p = PredictRating(params, cfg, g, g.user_node(pairs[i].user), g.item_node(pairs[i].item));
    if (clip) p = std::clamp(p, clip->lo, clip->hi);
    predictions[i] = p;
    targets[i] = pairs[i].rating;
  }
  return ComputeReport(predictions, targets);
}

bool EarlyStopper::Update(double value) {
  ++epoch_;
  if (value < best_) {
    best_ = value;
    best_epoch_ = epoch_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

GradAccumulator BatchGradient(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                              std::span<const RatingEdge> batch, std::span<const std::uint64_t> seeds,
                              int workers, std::vector<double>* predictions) {
  if (batch.empty()) throw ContractError("empty batch");
  if (seeds.size() != batch.size()) throw ContractError("one seed per example required");
  const auto b = static_cast<double>(batch.size());
  std::vector<double> preds(batch.size());
  GradAccumulator total;

  const auto n_workers = static_cast<std::size_t>(std::clamp<std::size_t>(workers, 1, batch.size()));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      total.Add(ExampleGradient(params, cfg, g, batch[i], seeds[i], b, preds[i]));
    }
  } else {
    std::vector<GradAccumulator> per_example(batch.size());
    std::vector<std::exception_ptr> errors(n_workers);
    {
      std::vector<std::jthread> pool;
      pool.reserve(n_workers);
      for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < batch.size(); i += n_workers) {
              per_example[i] = ExampleGradient(params, cfg, g, batch[i], seeds[i], b, preds[i]);
            }
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& ex : per_example) total.Add(ex);
  }
  if (predictions) *predictions = std::move(preds);
  return total;
}

TrainResult Train(const ModelParams& init, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const HetGraph& g, const Dataset& ds, const EpochCallback& on_epoch) {
  model_cfg.Validate();
  train_cfg.Validate();
  if (!ds.has_splits()) throw ConfigError("dataset has no split assignment");
  const std::vector<RatingEdge> train = ds.EdgesIn(Split::kTrain);
  if (train.empty()) throw ConfigError("empty train split");
  std::vector<RatingEdge> val = ds.EdgesIn(Split::kValidation);
  if (val.empty()) val = train;

  ModelConfig cfg = model_cfg;
  cfg.eval_deterministic = false;

  TrainResult result;
  result.best_params = init;
  ModelParams params = init;
  AdamState adam = InitAdamState(params);
  EarlyStopper stopper(train_cfg.patience);

  std::vector<std::size_t> order(train.size());
  std::vector<RatingEdge> batch;
  std::vector<std::uint64_t> seeds;
  std::vector<double> preds;
  for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(DeriveSeed(train_cfg.seed, {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sq_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(train_cfg.batch_size));
      batch.clear();
      seeds.clear();
      for (std::size_t pos = begin; pos < end; ++pos) {
        batch.push_back(train[order[pos]]);
        seeds.push_back(DeriveSeed(train_cfg.seed, {static_cast<std::uint64_t>(epoch), pos}));
      }
      GradAccumulator grads = BatchGradient(params, cfg, g, batch, seeds, train_cfg.workers, &preds);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const double r = preds[i] - batch[i].rating;
        sq_sum += r * r;
      }
      AdamStep(params, grads, adam, train_cfg);
    }

    const EvalReport report = Evaluate(params, cfg, g, val);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = std::sqrt(sq_sum / static_cast<double>(train.size()));
    stats.val_rmse = report.rmse;
    stats.val_mae = report.mae;
    stats.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(stats);

    if (stopper.Update(report.rmse)) {
      result.best_params = params;
      result.best_epoch = epoch;
    }
    if (on_epoch && !on_epoch(stats)) break;
    if (stopper.ShouldStop()) break;
  }
  return result;
}

void WriteHistory(const std::vector<EpochStats>& history, const std::filesystem::path& path,
                  bool with_elapsed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch\ttrain_loss\tval_rmse\tval_mae\telapsed_seconds\n";
  out << std::setprecision(17);
  for (const EpochStats& s : history) {
    out << s.epoch << '\t' << s.train_loss << '\t' << s.val_rmse << '\t' << s.val_mae << '\t'
        << (with_elapsed ? s.elapsed_seconds : 0.0) << '\n';
  }
}

}  // namespace consisrec
