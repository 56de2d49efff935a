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

#include "consisrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "consisrec/errors.hpp"

namespace consisrec {
namespace {

void FillUniform(double* data, Eigen::Index size, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < size; ++i) data[i] = dist(rng);
}

Vector Relu(const Vector& x) { return x.cwiseMax(0.0); }

void CheckShape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ContractError(std::string(name) + " has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
}

class ForwardBuilder {
 public:
  ForwardBuilder(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g, Rng& rng,
                 ForwardTrace& trace)
      : params_(params), cfg_(cfg), g_(g), rng_(rng), trace_(trace) {}

  int Hidden(NodeId v, int layer) {
    const std::int64_t key = static_cast<std::int64_t>(v.value) * (cfg_.layers + 1) + layer;
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    HiddenState state;
    state.node = v;
    state.layer = layer;
    if (layer == 0) {
      state.hidden = params_.node_emb.col(v.value);
      return Push(key, std::move(state));
    }

    state.self_input = Hidden(v, layer - 1);
    const auto candidates = g_.neighbors(v);
    std::vector<int> inputs(candidates.size());
    Matrix cand_h(params_.dim, static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      inputs[j] = Hidden(candidates[j].node, layer - 1);
      cand_h.col(j) = trace_.states[inputs[j]].hidden;
    }

    NeighborSample sample = SampleNeighbors(candidates, cand_h, trace_.query, cfg_, rng_);
    Matrix neigh_h(params_.dim, static_cast<Eigen::Index>(sample.chosen.size()));
    std::vector<RelationId> rels;
    rels.reserve(sample.chosen.size());
    for (std::size_t k = 0; k < sample.chosen.size(); ++k) {
      const std::size_t j = sample.chosen[k];
      neigh_h.col(k) = cand_h.col(j);
      state.sampled.push_back(candidates[j]);
      state.sampled_inputs.push_back(inputs[j]);
      rels.push_back(candidates[j].relation);
    }
    state.candidates.assign(candidates.begin(), candidates.end());
    state.probs = std::move(sample.probs);
    state.alphas = RelationAttention(params_, cfg_, neigh_h, rels);

    LayerOutput out =
        AggregateLayer(params_, layer, trace_.states[state.self_input].hidden, neigh_h, state.alphas);
    state.agg = std::move(out.agg);
    state.pre_activation = std::move(out.pre_activation);
    state.hidden = std::move(out.hidden);
    return Push(key, std::move(state));
  }

 private:
  int Push(std::int64_t key, HiddenState state) {
    const int id = static_cast<int>(trace_.states.size());
    trace_.states.push_back(std::move(state));
    memo_.emplace(key, id);
    return id;
  }

  const ModelParams& params_;
  const ModelConfig& cfg_;
  const HetGraph& g_;
  Rng& rng_;
  ForwardTrace& trace_;
  std::unordered_map<std::int64_t, int> memo_;
};

void CheckPair(const ModelParams& params, NodeId user, NodeId item) {
  if (user.value < 0 || user.value >= params.num_nodes() || item.value < 0 ||
      item.value >= params.num_nodes()) {
    throw LookupError("node index out of range");
  }
  if (user.value >= params.num_users) throw ContractError("first node of a pair must be a user");
  if (item.value < params.num_users) throw ContractError("second node of a pair must be an item");
}

}  // namespace

void ModelConfig::Validate() const {
  if (dim < 1) throw ConfigError("d must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0,1]");
}

void ModelParams::CheckShapes() const {
  if (dim < 1 || layers < 1 || num_users < 0 || num_items < 0 || num_relations < 0) {
    throw ContractError("invalid parameter header");
  }
  CheckShape(node_emb, dim, num_nodes(), "node_emb");
  CheckShape(rel_emb, dim, num_relations, "rel_emb");
  CheckShape(w_query, 2 * dim, dim, "w_query");
  if (static_cast<int>(w_layer.size()) != layers) throw ContractError("w_layer count mismatch");
  for (const Matrix& w : w_layer) CheckShape(w, 2 * dim, dim, "w_layer");
  if (w_att.size() != 2 * dim) throw ContractError("w_att size mismatch");
}

bool ModelParams::AllFinite() const {
  if (!node_emb.allFinite() || !rel_emb.allFinite() || !w_query.allFinite() || !w_att.allFinite()) {
    return false;
  }
  return std::all_of(w_layer.begin(), w_layer.end(), [](const Matrix& w) { return w.allFinite(); });
}

void ModelParams::SetZero() {
  node_emb.setZero();
  rel_emb.setZero();
  w_query.setZero();
  for (Matrix& w : w_layer) w.setZero();
  w_att.setZero();
}

bool ModelParams::operator==(const ModelParams& o) const {
  return dim == o.dim && layers == o.layers && num_users == o.num_users &&
         num_items == o.num_items && num_relations == o.num_relations && node_emb == o.node_emb &&
         rel_emb == o.rel_emb && w_query == o.w_query && w_layer == o.w_layer && w_att == o.w_att;
}

double InitBound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

ModelParams InitParams(const ModelConfig& cfg, std::int32_t num_users, std::int32_t num_items,
                       std::int32_t num_relations, std::uint64_t seed) {
  cfg.Validate();
  if (num_users < 0 || num_items < 0 || num_relations < 0) throw ConfigError("negative size");
  const int d = cfg.dim;
  ModelParams p;
  p.dim = d;
  p.layers = cfg.layers;
  p.num_users = num_users;
  p.num_items = num_items;
  p.num_relations = num_relations;

  Rng rng(seed);
  p.node_emb.resize(d, p.num_nodes());
  FillUniform(p.node_emb.data(), p.node_emb.size(), InitBound(d, d), rng);
  p.rel_emb.resize(d, num_relations);
  FillUniform(p.rel_emb.data(), p.rel_emb.size(), InitBound(d, d), rng);
  p.w_query.resize(2 * d, d);
  FillUniform(p.w_query.data(), p.w_query.size(), InitBound(2 * d, d), rng);
  p.w_layer.assign(cfg.layers, Matrix(2 * d, d));
  for (Matrix& w : p.w_layer) FillUniform(w.data(), w.size(), InitBound(2 * d, d), rng);
  p.w_att.resize(2 * d);
  FillUniform(p.w_att.data(), p.w_att.size(), InitBound(2 * d, 1), rng);
  return p;
}

Vector BuildQuery(const ModelParams& params, const ModelConfig& cfg, NodeId user, NodeId item) {
  CheckPair(params, user, item);
  if (cfg.ablate_query) return params.node_emb.col(user.value);
  Vector concat(2 * params.dim);
  concat << params.node_emb.col(user.value), params.node_emb.col(item.value);
  return Relu(params.w_query.transpose() * concat);
}

double Consistency::raw_score(std::size_t i) const { return std::exp(-sq_dist.at(i)); }

std::vector<double> Consistency::Probabilities() const {
  const double total = std::accumulate(score.begin(), score.end(), 0.0);
  std::vector<double> p(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) p[i] = score[i] / total;
  return p;
}

Consistency ConsistencyScores(const Vector& query, const Matrix& candidates) {
  Consistency c;
  if (candidates.cols() == 0) return c;
  if (candidates.rows() != query.size()) throw ContractError("candidate/query dimension mismatch");
  c.sq_dist.resize(candidates.cols());
  for (Eigen::Index i = 0; i < candidates.cols(); ++i) {
    c.sq_dist[i] = (candidates.col(i) - query).squaredNorm();
  }
  const double shift = *std::min_element(c.sq_dist.begin(), c.sq_dist.end());
  c.score.resize(c.sq_dist.size());
  for (std::size_t i = 0; i < c.sq_dist.size(); ++i) c.score[i] = std::exp(-(c.sq_dist[i] - shift));
  return c;
}

std::size_t SampleSize(std::size_t degree, double gamma) {
  if (degree == 0) return 0;
  // The epsilon absorbs products such as 0.6 * 5 = 3.0000000000000004.
  const double raw = std::ceil(gamma * static_cast<double>(degree) - 1e-9);
  const auto q = static_cast<std::size_t>(std::max(1.0, raw));
  return std::min(q, degree);
}

NeighborSample SampleNeighbors(std::span<const Edge> candidates, const Matrix& candidate_h,
                               const Vector& query, const ModelConfig& cfg, Rng& rng) {
  if (static_cast<Eigen::Index>(candidates.size()) != candidate_h.cols()) {
    throw ContractError("candidate list and embedding matrix disagree");
  }
  NeighborSample out;
  const std::size_t deg = candidates.size();
  if (deg == 0) return out;

  const Consistency c = ConsistencyScores(query, candidate_h);
  out.probs = c.Probabilities();

  const std::size_t q = cfg.ablate_sampling ? deg : SampleSize(deg, cfg.gamma);
  if (q == deg) {
    out.chosen.resize(deg);
    std::iota(out.chosen.begin(), out.chosen.end(), 0);
    return out;
  }

  // Closer first, then lower node index.
  auto closer = [&](std::size_t a, std::size_t b) {
    if (c.sq_dist[a] != c.sq_dist[b]) return c.sq_dist[a] < c.sq_dist[b];
    return candidates[a].node < candidates[b].node;
  };

  if (cfg.eval_deterministic) {
    std::vector<std::size_t> order(deg);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + q, order.end(), closer);
    out.chosen.assign(order.begin(), order.begin() + q);
  } else {
    std::vector<std::size_t> remaining(deg);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<double> weight = out.probs;
    for (std::size_t draw = 0; draw < q; ++draw) {
      double total = 0.0;
      for (std::size_t idx : remaining) total += weight[idx];
      std::size_t pick = remaining.size();
      if (total > 0.0) {
        const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        double acc = 0.0;
        for (std::size_t k = 0; k < remaining.size(); ++k) {
          acc += weight[remaining[k]];
          if (r < acc) {
            pick = k;
            break;
          }
        }
        if (pick == remaining.size()) {
          // Rounding left r at the very top of the range.
          for (std::size_t k = remaining.size(); k-- > 0;) {
            if (weight[remaining[k]] > 0.0) {
              pick = k;
              break;
            }
          }
        }
      } else {
        // Every remaining weight underflowed; fall back to the nearest one.
        pick = static_cast<std::size_t>(
            std::min_element(remaining.begin(), remaining.end(), closer) - remaining.begin());
      }
      out.chosen.push_back(remaining[pick]);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  std::sort(out.chosen.begin(), out.chosen.end());
  return out;
}

std::vector<double> RelationAttention(const ModelParams& params, const ModelConfig& cfg,
                                      const Matrix& neigh_h, std::span<const RelationId> rels) {
  const auto q = static_cast<std::size_t>(neigh_h.cols());
  if (rels.size() != q) throw ContractError("neighbor/relation count mismatch");
  std::vector<double> alpha(q);
  if (q == 0) return alpha;
  if (cfg.ablate_attention) {
    std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(q));
    return alpha;
  }
  const int d = params.dim;
  const auto w_h = params.w_att.head(d);
  const auto w_r = params.w_att.tail(d);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q; ++i) {
    if (rels[i].value < 0 || rels[i].value >= params.num_relations) {
      throw LookupError("relation " + std::to_string(rels[i].value) + " out of range");
    }
    alpha[i] = w_h.dot(neigh_h.col(i)) + w_r.dot(params.rel_emb.col(rels[i].value));
    max_logit = std::max(max_logit, alpha[i]);
  }
  double total = 0.0;
  for (double& a : alpha) {
    a = std::exp(a - max_logit);
    total += a;
  }
  for (double& a : alpha) a /= total;
  return alpha;
}

LayerOutput AggregateLayer(const ModelParams& params, int layer, const Vector& h_self,
                           const Matrix& neigh_h, std::span<const double> alphas) {
  if (layer < 1 || layer > static_cast<int>(params.w_layer.size())) {
    throw ContractError("layer " + std::to_string(layer) + " out of range");
  }
  const int d = params.dim;
  if (h_self.size() != d || neigh_h.rows() != d ||
      static_cast<std::size_t>(neigh_h.cols()) != alphas.size()) {
    throw ContractError("aggregate input shape mismatch");
  }
  LayerOutput out;
  out.agg = Vector::Zero(d);
  for (std::size_t i = 0; i < alphas.size(); ++i) out.agg.noalias() += alphas[i] * neigh_h.col(i);
  Vector concat(2 * d);
  concat << h_self, out.agg;
  out.pre_activation = params.w_layer[layer - 1].transpose() * concat;
  out.hidden = Relu(out.pre_activation);
  return out;
}

ForwardTrace Forward(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g, NodeId user,
                     NodeId item, Rng& rng) {
  if (!g.contains(user) || !g.contains(item)) throw LookupError("node index out of range");
  if (g.num_nodes() != params.num_nodes() || g.num_relations() != params.num_relations) {
    throw ContractError("graph does not match parameter shapes");
  }
  if (cfg.layers != params.layers || cfg.dim != params.dim) {
    throw ContractError("config does not match parameter shapes");
  }
  ForwardTrace trace;
  trace.user = user;
  trace.item = item;
  trace.query = BuildQuery(params, cfg, user, item);
  ForwardBuilder builder(params, cfg, g, rng, trace);
  trace.user_state = builder.Hidden(user, cfg.layers);
  trace.item_state = builder.Hidden(item, cfg.layers);
  trace.prediction = trace.states[trace.user_state].hidden.dot(trace.states[trace.item_state].hidden);
  return trace;
}

ForwardTrace Replay(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& frozen) {
  ForwardTrace trace = frozen;
  trace.query = BuildQuery(params, cfg, frozen.user, frozen.item);
  for (HiddenState& s : trace.states) {
    if (s.layer == 0) {
      s.hidden = params.node_emb.col(s.node.value);
      continue;
    }
    Matrix neigh_h(params.dim, static_cast<Eigen::Index>(s.sampled_inputs.size()));
    std::vector<RelationId> rels;
    for (std::size_t k = 0; k < s.sampled_inputs.size(); ++k) {
      neigh_h.col(k) = trace.states[s.sampled_inputs[k]].hidden;
      rels.push_back(s.sampled[k].relation);
    }
    s.alphas = RelationAttention(params, cfg, neigh_h, rels);
    LayerOutput out = AggregateLayer(params, s.layer, trace.states[s.self_input].hidden, neigh_h, s.alphas);
    s.agg = std::move(out.agg);
    s.pre_activation = std::move(out.pre_activation);
    s.hidden = std::move(out.hidden);
  }
  trace.prediction = trace.states[trace.user_state].hidden.dot(trace.states[trace.item_state].hidden);
  return trace;
}

double PredictRating(const ModelParams& params, const ModelConfig& cfg, const HetGraph& g, NodeId user,
                     NodeId item) {
  ModelConfig eval_cfg = cfg;
  eval_cfg.eval_deterministic = true;
  Rng unused(0);
  return Forward(params, eval_cfg, g, user, item, unused).prediction;
}

Vector& GradAccumulator::NodeGrad(std::int32_t node, int dim) {
  auto [it, inserted] = node_emb.try_emplace(node);
  if (inserted) it->second = Vector::Zero(dim);
  return it->second;
}

Vector& GradAccumulator::RelGrad(std::int32_t rel, int dim) {
  auto [it, inserted] = rel_emb.try_emplace(rel);
  if (inserted) it->second = Vector::Zero(dim);
  return it->second;
}

Matrix& GradAccumulator::LayerGrad(int layer, int dim) {
  if (static_cast<int>(w_layer.size()) < layer) w_layer.resize(layer);
  auto& slot = w_layer[layer - 1];
  if (!slot) slot = Matrix::Zero(2 * dim, dim);
  return *slot;
}

void GradAccumulator::Add(const GradAccumulator& other, double scale) {
  for (const auto& [k, g] : other.node_emb) {
    auto [it, inserted] = node_emb.try_emplace(k, scale * g);
    if (!inserted) it->second += scale * g;
  }
  for (const auto& [k, g] : other.rel_emb) {
    auto [it, inserted] = rel_emb.try_emplace(k, scale * g);
    if (!inserted) it->second += scale * g;
  }
  auto add_opt = [scale](auto& dst, const auto& src) {
    if (!src) return;
    if (dst) {
      *dst += scale * *src;
    } else {
      dst = scale * *src;
    }
  };
  add_opt(w_query, other.w_query);
  if (w_layer.size() < other.w_layer.size()) w_layer.resize(other.w_layer.size());
  for (std::size_t l = 0; l < other.w_layer.size(); ++l) add_opt(w_layer[l], other.w_layer[l]);
  add_opt(w_att, other.w_att);
}

void GradAccumulator::Scale(double s) {
  for (auto& [k, g] : node_emb) g *= s;
  for (auto& [k, g] : rel_emb) g *= s;
  if (w_query) *w_query *= s;
  for (auto& w : w_layer) {
    if (w) *w *= s;
  }
  if (w_att) *w_att *= s;
}

std::optional<std::string> GradAccumulator::FirstNonFinite() const {
  for (const auto& [k, g] : node_emb) {
    if (!g.allFinite()) return "node_emb[" + std::to_string(k) + "]";
  }
  for (const auto& [k, g] : rel_emb) {
    if (!g.allFinite()) return "rel_emb[" + std::to_string(k) + "]";
  }
  if (w_query && !w_query->allFinite()) return std::string("w_query");
  for (std::size_t l = 0; l < w_layer.size(); ++l) {
    if (w_layer[l] && !w_layer[l]->allFinite()) return "w_layer[" + std::to_string(l + 1) + "]";
  }
  if (w_att && !w_att->allFinite()) return std::string("w_att");
  return std::nullopt;
}

double GradAccumulator::MaxAbs() const {
  double m = 0.0;
  for (const auto& [k, g] : node_emb) m = std::max(m, g.cwiseAbs().maxCoeff());
  for (const auto& [k, g] : rel_emb) m = std::max(m, g.cwiseAbs().maxCoeff());
  if (w_query) m = std::max(m, w_query->cwiseAbs().maxCoeff());
  for (const auto& w : w_layer) {
    if (w) m = std::max(m, w->cwiseAbs().maxCoeff());
  }
  if (w_att) m = std::max(m, w_att->cwiseAbs().maxCoeff());
  return m;
}

GradAccumulator Backward(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                         double upstream) {
  const int d = params.dim;
  const auto num_states = static_cast<int>(trace.states.size());
  if (trace.user_state < 0 || trace.user_state >= num_states || trace.item_state < 0 ||
      trace.item_state >= num_states) {
    throw ContractError("trace has no output states");
  }
  if (cfg.dim != d || cfg.layers != params.layers) throw ContractError("config does not match params");

  GradAccumulator acc;
  acc.w_layer.resize(params.layers);
  if (!cfg.ablate_query) acc.w_query = Matrix::Zero(2 * d, d);

  std::vector<Vector> grad(num_states);
  std::vector<char> reached(num_states, 0);
  auto add_grad = [&](int id, const auto& g) {
    if (grad[id].size() == 0) grad[id] = Vector::Zero(d);
    grad[id] += g;
    reached[id] = 1;
  };
  const Vector& h_user = trace.states[trace.user_state].hidden;
  const Vector& h_item = trace.states[trace.item_state].hidden;
  if (h_user.size() != d || h_item.size() != d) throw ContractError("trace/params dimension mismatch");
  add_grad(trace.user_state, upstream * h_item);
  add_grad(trace.item_state, upstream * h_user);

  const auto w_h = params.w_att.head(d);
  const auto w_r = params.w_att.tail(d);

  for (int id = num_states - 1; id >= 0; --id) {
    if (!reached[id]) continue;
    const HiddenState& s = trace.states[id];
    const Vector& g = grad[id];
    if (s.layer == 0) {
      acc.NodeGrad(s.node.value, d) += g;
      continue;
    }
    const Matrix& w = params.w_layer[s.layer - 1];
    const Vector g_pre = g.cwiseProduct((s.pre_activation.array() > 0.0).cast<double>().matrix());
    Vector concat(2 * d);
    concat << trace.states[s.self_input].hidden, s.agg;
    acc.LayerGrad(s.layer, d).noalias() += concat * g_pre.transpose();
    const Vector g_concat = w * g_pre;
    add_grad(s.self_input, g_concat.head(d));
    const Vector g_agg = g_concat.tail(d);

    const std::size_t q = s.sampled_inputs.size();
    std::vector<double> g_alpha(q);
    for (std::size_t i = 0; i < q; ++i) {
      const Vector& h_i = trace.states[s.sampled_inputs[i]].hidden;
      add_grad(s.sampled_inputs[i], s.alphas[i] * g_agg);
      g_alpha[i] = h_i.dot(g_agg);
    }
    if (cfg.ablate_attention || q == 0) continue;

    if (!acc.w_att) acc.w_att = Vector::Zero(2 * d);
    double weighted = 0.0;
    for (std::size_t i = 0; i < q; ++i) weighted += s.alphas[i] * g_alpha[i];
    for (std::size_t i = 0; i < q; ++i) {
      const double g_logit = s.alphas[i] * (g_alpha[i] - weighted);
      const std::int32_t r = s.sampled[i].relation.value;
      const Vector& h_i = trace.states[s.sampled_inputs[i]].hidden;
      acc.w_att->head(d) += g_logit * h_i;
      acc.w_att->tail(d) += g_logit * params.rel_emb.col(r);
      add_grad(s.sampled_inputs[i], g_logit * w_h);
      acc.RelGrad(r, d) += g_logit * w_r;
    }
  }
  return acc;
}

}  // namespace consisrec
