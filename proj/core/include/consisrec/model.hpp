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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "consisrec/hetgraph.hpp"
#include "consisrec/random.hpp"

namespace consisrec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct ModelConfig {
  int dim = 16;
  int layers = 1;
  // Fraction of a node's neighbors sampled at each layer.
  double gamma = 0.8;
  // Variant A: the user embedding replaces the query embedding.
  bool ablate_query = false;
  // Variant B: every neighbor is aggregated.
  bool ablate_sampling = false;
  // Variant C: uniform attention weights.
  bool ablate_attention = false;
  // Top-Q selection by consistency score instead of random draws.
  bool eval_deterministic = false;

  // Throws ConfigError.
  void Validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// All trainable tensors. Node and relation embeddings are stored one per
// column; the mapping matrices are (2d x d) and applied transposed.
struct ModelParams {
  int dim = 0;
  int layers = 0;
  std::int32_t num_users = 0;
  std::int32_t num_items = 0;
  std::int32_t num_relations = 0;

  Matrix node_emb;              // d x (m + n)
  Matrix rel_emb;               // d x R
  Matrix w_query;               // 2d x d
  std::vector<Matrix> w_layer;  // L entries, 2d x d
  Vector w_att;                 // 2d

  std::int32_t num_nodes() const { return num_users + num_items; }
  // Throws ContractError on any mismatch with the header fields.
  void CheckShapes() const;
  bool AllFinite() const;
  void SetZero();

  bool operator==(const ModelParams& o) const;
};

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double InitBound(int fan_in, int fan_out);

// Uniform in [-a, a] per tensor: node_emb and rel_emb use fan_in = fan_out = d,
// the mapping matrices (2d, d) and the attention vector (2d, 1).
ModelParams InitParams(const ModelConfig& cfg, std::int32_t num_users, std::int32_t num_items,
                       std::int32_t num_relations, std::uint64_t seed);

// ReLU(W_q^T (e_u ++ e_t)), or e_u under ablate_query.
Vector BuildQuery(const ModelParams& params, const ModelConfig& cfg, NodeId user, NodeId item);

// Squared distances to the query and the max-shifted scores
// exp(-(D_i - min D)). Shifting leaves the normalized probabilities
// unchanged and keeps them representable when every raw exp(-D_i) underflows.
struct Consistency {
  std::vector<double> sq_dist;
  std::vector<double> score;

  // Unshifted exp(-D_i).
  double raw_score(std::size_t i) const;
  // score_i / sum_j score_j.
  std::vector<double> Probabilities() const;
};

// `candidates` holds one embedding per column.
Consistency ConsistencyScores(const Vector& query, const Matrix& candidates);

// max(1, ceil(gamma * degree)) capped at degree; zero for isolated nodes.
std::size_t SampleSize(std::size_t degree, double gamma);

struct NeighborSample {
  // Probabilities over the full candidate list (sums to 1 when non-empty).
  std::vector<double> probs;
  // Positions into the candidate list, ascending.
  std::vector<std::size_t> chosen;
};

// Picks SampleSize(deg, gamma) candidates without replacement by sequential
// weighted draws, or all of them under ablate_sampling, or the top-Q by score
// (ties to the lower node index) under eval_deterministic.
NeighborSample SampleNeighbors(std::span<const Edge> candidates, const Matrix& candidate_h,
                               const Vector& query, const ModelConfig& cfg, Rng& rng);

// Softmax over w_att^T (h_i ++ e_{r_i}); uniform under ablate_attention.
std::vector<double> RelationAttention(const ModelParams& params, const ModelConfig& cfg,
                                      const Matrix& neigh_h, std::span<const RelationId> rels);

struct LayerOutput {
  Vector agg;
  Vector pre_activation;
  Vector hidden;
};

// h^(layer) = ReLU(W^(layer)^T (h_self ++ sum_i alpha_i h_i)); `layer` is
// 1-based. An empty neighbor set aggregates the zero vector.
LayerOutput AggregateLayer(const ModelParams& params, int layer, const Vector& h_self,
                           const Matrix& neigh_h, std::span<const double> alphas);

// One computed hidden state h^(layer)(node). Layer-0 states are embedding
// lookups and carry no inputs.
struct HiddenState {
  NodeId node;
  int layer = 0;
  Vector hidden;

  int self_input = -1;
  std::vector<Edge> candidates;
  std::vector<double> probs;
  std::vector<Edge> sampled;
  std::vector<int> sampled_inputs;
  std::vector<double> alphas;
  Vector agg;
  Vector pre_activation;
};

struct ForwardTrace {
  NodeId user;
  NodeId item;
  Vector query;
  // Topologically ordered: every input precedes the state that reads it.
  std::vector<HiddenState> states;
  int user_state = -1;
  int item_state = -1;
  double prediction = 0.0;
};

// Full forward pass for the pair (user, item). Both sides share one query and
// one (node, layer) memo table; every random draw comes from `rng`.
ForwardTrace Forward(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                     NodeId user, NodeId item, Rng& rng);

// Recomputes every value of `frozen` under `params`, keeping its sampled
// neighbor sets (and probabilities) fixed.
ForwardTrace Replay(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& frozen);

// Deterministic-mode forward; returns the raw inner product.
double PredictRating(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g,
                     NodeId user, NodeId item);

// Sparse gradients keyed like ModelParams. A present entry means the tensor
// (or column) took part in the forward pass, even if its gradient is zero.
struct GradAccumulator {
  std::map<std::int32_t, Vector> node_emb;
  std::map<std::int32_t, Vector> rel_emb;
  std::optional<Matrix> w_query;
  std::vector<std::optional<Matrix>> w_layer;
  std::optional<Vector> w_att;

  Vector& NodeGrad(std::int32_t node, int dim);
  Vector& RelGrad(std::int32_t rel, int dim);
  Matrix& LayerGrad(int layer, int dim);  // 1-based

  void Add(const GradAccumulator& other, double scale = 1.0);
  void Scale(double s);
  // Name of the first tensor holding a NaN or infinity, if any.
  std::optional<std::string> FirstNonFinite() const;
  double MaxAbs() const;
};

// Backpropagates `upstream` = dLoss/dprediction through `trace`. Sampled sets
// and sampling probabilities are treated as constants, so W_q always gets a
// zero gradient.
GradAccumulator Backward(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                         double upstream);

}  // namespace consisrec
