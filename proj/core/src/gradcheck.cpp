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

#include "consisrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>

#include "consisrec/errors.hpp"
#include "consisrec/random.hpp"

namespace consisrec {
namespace {

// States that feed the prediction.
std::vector<char> ReachableStates(const ForwardTrace& trace) {
  std::vector<char> reached(trace.states.size(), 0);
  reached[trace.user_state] = 1;
  reached[trace.item_state] = 1;
  for (std::size_t id = trace.states.size(); id-- > 0;) {
    if (!reached[id]) continue;
    const HiddenState& s = trace.states[id];
    if (s.self_input >= 0) reached[s.self_input] = 1;
    for (int in : s.sampled_inputs) reached[in] = 1;
  }
  return reached;
}

std::vector<signed char> ActivationPattern(const ForwardTrace& trace, const std::vector<char>& reached) {
  std::vector<signed char> pattern;
  for (std::size_t id = 0; id < trace.states.size(); ++id) {
    if (!reached[id] || trace.states[id].layer == 0) continue;
    for (Eigen::Index k = 0; k < trace.states[id].pre_activation.size(); ++k) {
      pattern.push_back(trace.states[id].pre_activation[k] > 0.0 ? 1 : -1);
    }
  }
  return pattern;
}

double MinAbsPreActivation(const ForwardTrace& trace, const std::vector<char>& reached) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < trace.states.size(); ++id) {
    if (!reached[id] || trace.states[id].layer == 0) continue;
    m = std::min(m, trace.states[id].pre_activation.cwiseAbs().minCoeff());
  }
  return m;
}

// Runs the central-difference comparison over one parameter tensor.
// `analytic(k)` returns the analytic gradient for flat coordinate k.
template <typename Tensor, typename Analytic>
GroupCheck CheckTensor(const std::string& name, ModelParams& params, Tensor& tensor, const ModelConfig& cfg,
                       const ForwardTrace& trace, const std::vector<char>& reached,
                       const std::vector<signed char>& base_pattern, const GradCheckOptions& opts,
                       Analytic&& analytic) {
  GroupCheck out;
  out.name = name;
  for (Eigen::Index k = 0; k < tensor.size(); ++k) {
    const double original = tensor.data()[k];
    tensor.data()[k] = original + opts.step;
    const ForwardTrace plus = Replay(params, cfg, trace);
    tensor.data()[k] = original - opts.step;
    const ForwardTrace minus = Replay(params, cfg, trace);
    tensor.data()[k] = original;

    if (ActivationPattern(plus, reached) != base_pattern || ActivationPattern(minus, reached) != base_pattern ||
        MinAbsPreActivation(plus, reached) < opts.kink_margin ||
        MinAbsPreActivation(minus, reached) < opts.kink_margin) {
      ++out.skipped;
      continue;
    }
    const double numeric = (plus.prediction - minus.prediction) / (2.0 * opts.step);
    double a = analytic(k);
    if (opts.corrupt) a = a * 1.01 + 1e-3;
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(),
                     [this](const GroupCheck& g) { return g.max_rel_error <= tolerance; });
}

const GroupCheck* GradCheckReport::worst() const {
  const GroupCheck* w = nullptr;
  for (const GroupCheck& g : groups) {
    if (!w || g.max_rel_error > w->max_rel_error) w = &g;
  }
  return w;
}

TinyInstance MakeTinyInstance(const GradCheckOptions& opts) {
  if (opts.nodes < 3) throw ConfigError("gradcheck needs at least 3 nodes");
  if (opts.dim < 1) throw ConfigError("d must be >= 1");
  Rng rng(DeriveSeed(opts.seed, {0x7d}));
  const int users = (opts.nodes + 1) / 2;
  const int items = opts.nodes - users;

  std::vector<RatingRecord> ratings;
  std::vector<TrustRecord> trust;
  std::uniform_int_distribution<int> level(1, 3);
  std::bernoulli_distribution coin(0.6);
  for (int i = 0; i < items; ++i) {
    // Every item gets a rater so that none is filtered out.
    const int first = std::uniform_int_distribution<int>(0, users - 1)(rng);
    for (int u = 0; u < users; ++u) {
      if (u == first || coin(rng)) {
        ratings.push_back({"u" + std::to_string(u), "i" + std::to_string(i), level(rng)});
      }
    }
  }
  for (int u = 0; u < users; ++u) {
    const int v = (u + 1) % users;
    if (u != v) trust.push_back({"u" + std::to_string(u), "u" + std::to_string(v)});
  }
  for (int u = 0; u < users; ++u) {
    for (int v = u + 2; v < users; ++v) {
      if (coin(rng)) trust.push_back({"u" + std::to_string(u), "u" + std::to_string(v)});
    }
  }

  TinyInstance inst;
  inst.dataset = AssignSplits(FilterAndIndex(ratings, trust), {1.0, 0.0, 0.0}, opts.seed);
  inst.graph = BuildGraph(inst.dataset, 0.5);
  inst.config.dim = opts.dim;
  inst.config.layers = opts.layers;
  inst.config.gamma = opts.gamma;
  inst.config.ablate_query = opts.ablate_query;
  inst.config.ablate_sampling = opts.ablate_sampling;
  inst.config.ablate_attention = opts.ablate_attention;
  inst.config.Validate();
  inst.params = InitParams(inst.config, inst.graph.num_users(), inst.graph.num_items(),
                           inst.graph.num_relations(), DeriveSeed(opts.seed, {0x9a}));
  inst.user = inst.graph.user_node(std::uniform_int_distribution<int>(0, inst.graph.num_users() - 1)(rng));
  inst.item = inst.graph.item_node(std::uniform_int_distribution<int>(0, inst.graph.num_items() - 1)(rng));
  return inst;
}

GradCheckReport CheckGradients(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                               const GradCheckOptions& opts) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;
  const GradAccumulator grads = Backward(params, cfg, trace, 1.0);
  const std::vector<char> reached = ReachableStates(trace);
  const std::vector<signed char> base_pattern = ActivationPattern(trace, reached);
  ModelParams work = params;
  const int d = params.dim;

  report.groups.push_back(CheckTensor("node_emb", work, work.node_emb, cfg, trace, reached, base_pattern, opts,
                                      [&](Eigen::Index k) {
                                        const auto col = static_cast<std::int32_t>(k / d);
                                        auto it = grads.node_emb.find(col);
                                        return it == grads.node_emb.end() ? 0.0 : it->second[k % d];
                                      }));
  report.groups.push_back(CheckTensor("rel_emb", work, work.rel_emb, cfg, trace, reached, base_pattern, opts,
                                      [&](Eigen::Index k) {
                                        const auto col = static_cast<std::int32_t>(k / d);
                                        auto it = grads.rel_emb.find(col);
                                        return it == grads.rel_emb.end() ? 0.0 : it->second[k % d];
                                      }));
  report.groups.push_back(CheckTensor("w_query", work, work.w_query, cfg, trace, reached, base_pattern, opts,
                                      [&](Eigen::Index k) {
                                        return grads.w_query ? grads.w_query->data()[k] : 0.0;
                                      }));
  for (int l = 0; l < params.layers; ++l) {
    report.groups.push_back(CheckTensor(
        "w_layer[" + std::to_string(l + 1) + "]", work, work.w_layer[l], cfg, trace, reached, base_pattern, opts,
        [&](Eigen::Index k) {
          return l < static_cast<int>(grads.w_layer.size()) && grads.w_layer[l] ? grads.w_layer[l]->data()[k]
                                                                                 : 0.0;
        }));
  }
  report.groups.push_back(CheckTensor("w_att", work, work.w_att, cfg, trace, reached, base_pattern, opts,
                                      [&](Eigen::Index k) { return grads.w_att ? (*grads.w_att)[k] : 0.0; }));
  return report;
}

GradCheckReport RunGradientCheck(const GradCheckOptions& opts) {
  const TinyInstance inst = MakeTinyInstance(opts);
  // Small d often gives disjoint ReLU supports for h_u and h_t, so every
  // gradient is exactly zero. Walk the pairs (starting from the drawn one)
  // until the prediction path carries gradient.
  const int m = inst.graph.num_users();
  const int n = inst.graph.num_items();
  const int u0 = inst.user.value;
  const int i0 = inst.item.value - m;
  std::optional<ForwardTrace> chosen;
  for (int k = 0; k < m * n && !chosen; ++k) {
    const int u = (u0 + k / n) % m;
    const int i = (i0 + k % n) % n;
    Rng rng(DeriveSeed(opts.seed, {0x5a, static_cast<std::uint64_t>(k)}));
    ForwardTrace trace = Forward(inst.params, inst.config, inst.graph, inst.graph.user_node(u),
                                 inst.graph.item_node(i), rng);
    if (Backward(inst.params, inst.config, trace, 1.0).MaxAbs() > 0.0) chosen = std::move(trace);
  }
  if (!chosen) {
    Rng rng(DeriveSeed(opts.seed, {0x5a, 0}));
    chosen = Forward(inst.params, inst.config, inst.graph, inst.user, inst.item, rng);
  }
  return CheckGradients(inst.params, inst.config, *chosen, opts);
}

}  // namespace consisrec
