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
#include <string>
#include <vector>

#include "consisrec/dataio.hpp"
#include "consisrec/hetgraph.hpp"
#include "consisrec/model.hpp"

namespace consisrec {

struct GradCheckOptions {
  std::uint64_t seed = 1;
  int dim = 3;
  int nodes = 6;  // users + items, at least 3
  int layers = 1;
  double gamma = 0.6;
  bool ablate_query = false;
  bool ablate_sampling = false;
  bool ablate_attention = false;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double denominator_floor = 1e-6;
  // A coordinate is skipped when perturbing it by +-step flips the sign of a
  // pre-activation on the prediction path, or one lies within this margin.
  double kink_margin = 1e-6;
  // Negative control: skews every analytic gradient before comparison.
  bool corrupt = false;
};

struct TinyInstance {
  Dataset dataset;
  HetGraph graph;
  ModelConfig config;
  ModelParams params;
  NodeId user;
  NodeId item;
};

TinyInstance MakeTinyInstance(const GradCheckOptions& opts);

struct GroupCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double tolerance = 0.0;

  bool passed() const;
  // Group with the largest error.
  const GroupCheck* worst() const;
};

// Compares Backward(trace, 1) with central differences of the frozen-sample
// prediction (Replay) for every coordinate of every parameter group.
GradCheckReport CheckGradients(const ModelParams& params, const ModelConfig& cfg, const ForwardTrace& trace,
                               const GradCheckOptions& opts);

// MakeTinyInstance + one stochastic Forward + CheckGradients.
GradCheckReport RunGradientCheck(const GradCheckOptions& opts);

}  // namespace consisrec
