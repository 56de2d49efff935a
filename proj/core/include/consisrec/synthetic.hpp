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
#include <vector>

#include "consisrec/dataio.hpp"

namespace consisrec {

// Uniformly random ratings and trust edges. Every user gets at least one
// trust edge and every item at least one rating, so the social-link filter
// keeps everything.
struct RandomDatasetSpec {
  int users = 20;
  int items = 15;
  int ratings = 60;
  int social = 30;
  std::vector<int> levels{1, 2, 3, 4, 5};
};

// Raw records (not yet filtered or indexed).
ParsedEdges GenerateRandomEdges(const RandomDatasetSpec& spec, std::uint64_t seed);
Dataset GenerateRandomDataset(const RandomDatasetSpec& spec, std::uint64_t seed);

// Two communities with opposite tastes. Each community has its own item pool
// which it rates high and the other community rates low. Users befriend
// members of the other community (context-level inconsistency) and both
// communities rate a pool of shared items in opposite directions
// (relation-level inconsistency). A fraction of users is cold: they have
// few ratings and must rely on neighbors.
struct PlantedSpec {
  int users_per_community = 40;
  int items_per_community = 10;
  int shared_items = 4;
  int ratings_per_user = 12;
  int cold_ratings_per_user = 2;
  double cold_fraction = 0.3;
  int friends_same = 2;
  int friends_cross = 6;
  double shared_rating_prob = 0.3;
  int high = 5;
  int low = 1;
  // Probability of shifting a rating by one level toward the middle.
  double noise = 0.1;
};

ParsedEdges GeneratePlantedEdges(const PlantedSpec& spec, std::uint64_t seed);
Dataset GeneratePlantedDataset(const PlantedSpec& spec, std::uint64_t seed);

}  // namespace consisrec
