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

#include <filesystem>

#include "consisrec/model.hpp"

namespace consisrec {

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  // Needed to rebuild the same graph at evaluation time.
  double item_link_threshold = 0.5;
};

// Writes `params.bin` and `config.json` into `dir` (created if missing).
//
// params.bin layout, all little-endian:
//   int64 d, int64 L, int64 R, int64 m, int64 n
//   float64 node_emb   [d][m + n]   row-major
//   float64 rel_emb    [d][R]
//   float64 w_query    [2d][d]
//   float64 w_layer[l] [2d][d]      for l = 1..L
//   float64 w_att      [2d]
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

// Validates the header against the file size and the config.
Checkpoint LoadCheckpoint(const std::filesystem::path& dir);

}  // namespace consisrec
