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

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "consisrec/errors.hpp"
#include "consisrec/gradcheck.hpp"
#include "consisrec/model.hpp"
#include "consisrec/synthetic.hpp"
#include "support/test_util.hpp"

namespace consisrec {
namespace {

using testing::ManualDataset;
using testing::PassThroughParams;

struct Instance {
  HetGraph g;
  ModelConfig cfg;
  ModelParams params;
  ForwardTrace trace;
};

// d <= 4, at most 6 nodes, everything in train.
Instance TinyInstance(std::uint64_t seed, int d, int layers, int flags) {
  std::mt19937_64 gen(seed);
  RandomDatasetSpec spec;
  spec.users = 3;
  spec.items = 3;
  spec.ratings = 3 + static_cast<int>(gen() % 5);
  spec.social = 2 + static_cast<int>(gen() % 2);
  spec.levels = {1, 2, 3};
  Instance inst;
  inst.g = BuildGraph(AssignSplits(GenerateRandomDataset(spec, seed), {1.0, 0.0, 0.0}, seed), 0.4);
  inst.cfg.dim = d;
  inst.cfg.layers = layers;
  inst.cfg.gamma = 0.5;
  inst.cfg.ablate_query = flags & 1;
  inst.cfg.ablate_sampling = flags & 2;
  inst.cfg.ablate_attention = flags & 4;
  inst.params = InitParams(inst.cfg, inst.g.num_users(), inst.g.num_items(), inst.g.num_relations(), seed);
  // Larger embeddings keep pre-activations away from zero more often.
  inst.params.node_emb *= 2.0;
  Rng rng(seed + 7);
  inst.trace = Forward(inst.params, inst.cfg, inst.g, inst.g.user_node(static_cast<std::int32_t>(gen() % 3)),
                       inst.g.item_node(static_cast<std::int32_t>(gen() % 3)), rng);
  return inst;
}

double MinAbsPre(const ForwardTrace& t) {
  double m = std::numeric_limits<double>::infinity();
  for (const HiddenState& s : t.states) {
    if (s.layer > 0) m = std::min(m, s.pre_activation.cwiseAbs().minCoeff());
  }
  return m;
}

// Central differences of the frozen-sample prediction with respect to one
// scalar, read through `slot`.
double Numeric(Instance& inst, double* slot, double step) {
  const double original = *slot;
  *slot = original + step;
  const double plus = Replay(inst.params, inst.cfg, inst.trace).prediction;
  *slot = original - step;
  const double minus = Replay(inst.params, inst.cfg, inst.trace).prediction;
  *slot = original;
  return (plus - minus) / (2.0 * step);
}

void ExpectClose(double analytic, double numeric, const std::string& where) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  EXPECT_LE(std::abs(analytic - numeric) / denom, 1e-4)
      << where << " analytic=" << analytic << " numeric=" << numeric;
}

TEST(Backward, MatchesFiniteDifferences) {
  int instances = 0;
  for (std::uint64_t seed = 1; instances < 60 && seed < 400; ++seed) {
    const int d = 2 + static_cast<int>(seed % 3);
    const int layers = 1 + static_cast<int>(seed % 2);
    Instance inst = TinyInstance(seed, d, layers, static_cast<int>(seed % 8));
    // A 1e-5 step could cross a kink this close to zero.
    if (MinAbsPre(inst.trace) < 1e-3) continue;
    ++instances;
    const GradAccumulator g = Backward(inst.params, inst.cfg, inst.trace, 1.0);
    const std::string tag = "seed " + std::to_string(seed);

    for (Eigen::Index col = 0; col < inst.params.node_emb.cols(); ++col) {
      for (int k = 0; k < d; ++k) {
        const auto it = g.node_emb.find(static_cast<std::int32_t>(col));
        const double a = it == g.node_emb.end() ? 0.0 : it->second[k];
        ExpectClose(a, Numeric(inst, &inst.params.node_emb(k, col), 1e-5), tag + " node_emb");
      }
    }
    for (Eigen::Index col = 0; col < inst.params.rel_emb.cols(); ++col) {
      for (int k = 0; k < d; ++k) {
        const auto it = g.rel_emb.find(static_cast<std::int32_t>(col));
        const double a = it == g.rel_emb.end() ? 0.0 : it->second[k];
        ExpectClose(a, Numeric(inst, &inst.params.rel_emb(k, col), 1e-5), tag + " rel_emb");
      }
    }
    for (int l = 0; l < layers; ++l) {
      for (Eigen::Index k = 0; k < inst.params.w_layer[l].size(); ++k) {
        const double a = g.w_layer[l] ? g.w_layer[l]->data()[k] : 0.0;
        ExpectClose(a, Numeric(inst, inst.params.w_layer[l].data() + k, 1e-5), tag + " w_layer");
      }
    }
    for (Eigen::Index k = 0; k < inst.params.w_att.size(); ++k) {
      const double a = g.w_att ? (*g.w_att)[k] : 0.0;
      ExpectClose(a, Numeric(inst, inst.params.w_att.data() + k, 1e-5), tag + " w_att");
    }
    for (Eigen::Index k = 0; k < inst.params.w_query.size(); ++k) {
      const double a = g.w_query ? g.w_query->data()[k] : 0.0;
      ExpectClose(a, Numeric(inst, inst.params.w_query.data() + k, 1e-5), tag + " w_query");
    }
  }
  EXPECT_EQ(instances, 60);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Instance inst = TinyInstance(3, 3, 2, 0);
  const GradAccumulator g = Backward(inst.params, inst.cfg, inst.trace, 0.0);
  EXPECT_EQ(g.MaxAbs(), 0.0);
}

TEST(Backward, LinearInUpstream) {
  Instance inst = TinyInstance(5, 3, 2, 0);
  const GradAccumulator one = Backward(inst.params, inst.cfg, inst.trace, 1.0);
  GradAccumulator scaled = Backward(inst.params, inst.cfg, inst.trace, -2.5);
  scaled.Add(one, 2.5);
  EXPECT_LT(scaled.MaxAbs(), 1e-12);
}

TEST(Backward, InnerProductDerivative) {
  const HetGraph g = BuildGraph(ManualDataset(1, 1, {{0, 0, 3}}, {Split::kTest}, {}), 0.5);
  ModelConfig c;
  c.dim = 3;
  ModelParams p = PassThroughParams(c, 1, 1, g.num_relations());
  p.node_emb.col(0) << 0.5, 1.0, 2.0;
  p.node_emb.col(1) << 3.0, 4.0, 0.25;
  Rng rng(1);
  const ForwardTrace t = Forward(p, c, g, NodeId{0}, NodeId{1}, rng);
  const GradAccumulator grad = Backward(p, c, t, 1.0);
  // All coordinates positive: the pass-through is the identity, so the
  // embedding gradient is the other side's hidden state.
  EXPECT_EQ(grad.node_emb.at(0), Vector(p.node_emb.col(1)));
  EXPECT_EQ(grad.node_emb.at(1), Vector(p.node_emb.col(0)));
}

TEST(Backward, ReluAtZeroHasZeroDerivative) {
  const HetGraph g = BuildGraph(ManualDataset(1, 1, {{0, 0, 3}}, {Split::kTest}, {}), 0.5);
  ModelConfig c;
  c.dim = 2;
  ModelParams p = PassThroughParams(c, 1, 1, g.num_relations());
  p.node_emb.col(0) << 0.0, 1.0;
  p.node_emb.col(1) << 5.0, 2.0;
  Rng rng(1);
  const GradAccumulator grad = Backward(p, c, Forward(p, c, g, NodeId{0}, NodeId{1}, rng), 1.0);
  EXPECT_EQ(grad.node_emb.at(0)[0], 0.0);
  EXPECT_EQ(grad.node_emb.at(0)[1], 2.0);
}

TEST(Backward, TouchedTensors) {
  for (int flags = 0; flags < 8; ++flags) {
    Instance inst = TinyInstance(11 + flags, 3, 2, flags);
    const GradAccumulator g = Backward(inst.params, inst.cfg, inst.trace, 1.0);
    EXPECT_EQ(g.w_query.has_value(), !inst.cfg.ablate_query);
    // The query only drives the discrete sampling choice, so it never
    // receives gradient.
    if (g.w_query) {
      EXPECT_EQ(g.w_query->cwiseAbs().maxCoeff(), 0.0);
    }

    // States reachable from the two outputs through self and sampled inputs.
    // Candidates that were only scored for sampling are not on that path.
    std::set<std::int32_t> visited;
    std::set<std::int32_t> attended;
    bool any_neighbors = false;
    std::vector<int> stack{inst.trace.user_state, inst.trace.item_state};
    std::set<int> seen;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      if (!seen.insert(id).second) continue;
      const HiddenState& s = inst.trace.states[id];
      if (s.layer == 0) {
        visited.insert(s.node.value);
        continue;
      }
      stack.push_back(s.self_input);
      for (int in : s.sampled_inputs) stack.push_back(in);
      for (const Edge& e : s.sampled) attended.insert(e.relation.value);
      any_neighbors = any_neighbors || !s.sampled.empty();
    }
    std::set<std::int32_t> got;
    for (const auto& [node, _] : g.node_emb) got.insert(node);
    EXPECT_EQ(got, visited);
    got.clear();
    for (const auto& [rel, _] : g.rel_emb) got.insert(rel);
    if (inst.cfg.ablate_attention) {
      EXPECT_TRUE(got.empty());
      EXPECT_FALSE(g.w_att.has_value());
    } else {
      EXPECT_EQ(got, attended);
      EXPECT_EQ(g.w_att.has_value(), any_neighbors);
    }
    for (int l = 0; l < inst.cfg.layers; ++l) EXPECT_TRUE(g.w_layer[l].has_value());
  }
}

TEST(Backward, ConfigMismatch) {
  Instance inst = TinyInstance(3, 3, 1, 0);
  ModelConfig wrong = inst.cfg;
  wrong.dim = 4;
  EXPECT_THROW(Backward(inst.params, wrong, inst.trace, 1.0), ContractError);
  ForwardTrace empty;
  EXPECT_THROW(Backward(inst.params, inst.cfg, empty, 1.0), ContractError);
}

TEST(GradAccumulator, AddScaleAndNonFinite) {
  GradAccumulator a;
  a.NodeGrad(2, 2) << 1.0, 2.0;
  a.w_att = Vector::Ones(4);
  GradAccumulator b;
  b.NodeGrad(2, 2) << 1.0, 1.0;
  b.NodeGrad(5, 2) << -3.0, 0.0;
  a.Add(b, 2.0);
  EXPECT_EQ(a.node_emb.at(2), (Vector(2) << 3.0, 4.0).finished());
  EXPECT_EQ(a.node_emb.at(5), (Vector(2) << -6.0, 0.0).finished());
  a.Scale(0.5);
  EXPECT_EQ(a.MaxAbs(), 3.0);
  EXPECT_FALSE(a.FirstNonFinite().has_value());
  a.LayerGrad(1, 2)(0, 0) = std::nan("");
  ASSERT_TRUE(a.FirstNonFinite().has_value());
  EXPECT_NE(a.FirstNonFinite()->find("w_layer"), std::string::npos);
}

// The library's own checker, driven over the acceptance sweep shape.
TEST(GradientCheck, PassesAcrossAblationsAndDepths) {
  for (int flags = 0; flags < 8; ++flags) {
    for (int layers = 1; layers <= 2; ++layers) {
      GradCheckOptions o;
      o.seed = 100 + flags * 2 + layers;
      o.dim = 2 + flags % 3;
      o.nodes = 6;
      o.layers = layers;
      o.ablate_query = flags & 1;
      o.ablate_sampling = flags & 2;
      o.ablate_attention = flags & 4;
      const GradCheckReport r = RunGradientCheck(o);
      EXPECT_TRUE(r.passed()) << "flags " << flags << " layers " << layers << " worst "
                              << r.worst()->name << " " << r.worst()->max_rel_error;
      std::size_t checked = 0;
      for (const GroupCheck& gc : r.groups) checked += gc.checked;
      EXPECT_GT(checked, 0u);
    }
  }
}

TEST(GradientCheck, CorruptedGradientFails) {
  GradCheckOptions o;
  o.corrupt = true;
  const GradCheckReport r = RunGradientCheck(o);
  EXPECT_FALSE(r.passed());
  ASSERT_NE(r.worst(), nullptr);
  EXPECT_GT(r.worst()->max_rel_error, 1e-4);
}

}  // namespace
}  // namespace consisrec
