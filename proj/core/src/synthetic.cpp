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

#include "consisrec/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "consisrec/errors.hpp"
#include "consisrec/random.hpp"

namespace consisrec {
namespace {

std::string UserId(int u) { return "u" + std::to_string(u); }
std::string ItemId(int i) { return "i" + std::to_string(i); }

int UniformInt(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

ParsedEdges GenerateRandomEdges(const RandomDatasetSpec& spec, std::uint64_t seed) {
  if (spec.users < 2 || spec.items < 1 || spec.levels.empty()) throw ConfigError("random dataset too small");
  if (spec.ratings < spec.items || spec.ratings > spec.users * spec.items) {
    throw ConfigError("rating count must be in [items, users * items]");
  }
  const long max_social = static_cast<long>(spec.users) * (spec.users - 1) / 2;
  if (spec.social < (spec.users + 1) / 2 || spec.social > max_social) {
    throw ConfigError("social edge count cannot cover every user");
  }
  Rng rng(seed);
  ParsedEdges out;

  std::set<std::pair<int, int>> social;
  std::vector<int> perm(spec.users);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Pair users off so that nobody is isolated; an odd one out joins the first pair.
  for (int k = 0; k + 1 < spec.users; k += 2) social.insert(std::minmax(perm[k], perm[k + 1]));
  if (spec.users % 2 == 1) social.insert(std::minmax(perm[0], perm[spec.users - 1]));
  while (static_cast<int>(social.size()) < spec.social) {
    const int a = UniformInt(rng, 0, spec.users - 1);
    const int b = UniformInt(rng, 0, spec.users - 1);
    if (a != b) social.insert(std::minmax(a, b));
  }

  std::set<std::pair<int, int>> rated;
  auto level = [&] { return spec.levels[UniformInt(rng, 0, static_cast<int>(spec.levels.size()) - 1)]; };
  auto add_rating = [&](int u, int i) {
    if (rated.insert({u, i}).second) out.ratings.push_back({UserId(u), ItemId(i), level()});
  };
  for (int i = 0; i < spec.items; ++i) add_rating(UniformInt(rng, 0, spec.users - 1), i);
  while (static_cast<int>(rated.size()) < spec.ratings) {
    add_rating(UniformInt(rng, 0, spec.users - 1), UniformInt(rng, 0, spec.items - 1));
  }
  for (const auto& [a, b] : social) out.trust.push_back({UserId(a), UserId(b)});
  return out;
}

Dataset GenerateRandomDataset(const RandomDatasetSpec& spec, std::uint64_t seed) {
  ParsedEdges edges = GenerateRandomEdges(spec, seed);
  return FilterAndIndex(edges.ratings, edges.trust);
}

ParsedEdges GeneratePlantedEdges(const PlantedSpec& spec, std::uint64_t seed) {
  if (spec.users_per_community < 2 || spec.items_per_community < 1) throw ConfigError("planted spec too small");
  if (spec.friends_same >= spec.users_per_community || spec.friends_cross > spec.users_per_community) {
    throw ConfigError("too many friends per user");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int per = spec.users_per_community;
  const int total_users = 2 * per;
  auto community = [per](int u) { return u / per; };
  // Items: [0, ipc) community 0, [ipc, 2 ipc) community 1, then shared.
  const int ipc = spec.items_per_community;
  const int mid = (spec.high + spec.low) / 2;

  ParsedEdges out;
  std::set<std::pair<int, int>> social;
  for (int u = 0; u < total_users; ++u) {
    const int c = community(u);
    int added = 0;
    while (added < spec.friends_same) {
      const int v = c * per + UniformInt(rng, 0, per - 1);
      if (v != u && social.insert(std::minmax(u, v)).second) ++added;
    }
    added = 0;
    int attempts = 0;
    while (added < spec.friends_cross && attempts++ < 100 * per) {
      const int v = (1 - c) * per + UniformInt(rng, 0, per - 1);
      if (social.insert(std::minmax(u, v)).second) ++added;
    }
  }

  auto noisy = [&](int rating) {
    if (unit(rng) >= spec.noise) return rating;
    return rating > mid ? rating - 1 : rating + 1;
  };
  for (int u = 0; u < total_users; ++u) {
    const int c = community(u);
    const bool cold = unit(rng) < spec.cold_fraction;
    const int count = cold ? spec.cold_ratings_per_user : spec.ratings_per_user;
    std::set<int> items;
    int attempts = 0;
    while (static_cast<int>(items.size()) < count && attempts++ < 1000) {
      int item = 0;
      if (spec.shared_items > 0 && unit(rng) < spec.shared_rating_prob) {
        item = 2 * ipc + UniformInt(rng, 0, spec.shared_items - 1);
      } else {
        item = UniformInt(rng, 0, 2 * ipc - 1);
      }
      if (!items.insert(item).second) continue;
      int rating = 0;
      if (item >= 2 * ipc) {
        rating = c == 0 ? spec.high : spec.low;
      } else {
        rating = (item / ipc) == c ? spec.high : spec.low;
      }
      out.ratings.push_back({UserId(u), ItemId(item), noisy(rating)});
    }
  }
  for (const auto& [a, b] : social) out.trust.push_back({UserId(a), UserId(b)});
  return out;
}

Dataset GeneratePlantedDataset(const PlantedSpec& spec, std::uint64_t seed) {
  ParsedEdges edges = GeneratePlantedEdges(spec, seed);
  return FilterAndIndex(edges.ratings, edges.trust);
}

}  // namespace consisrec
