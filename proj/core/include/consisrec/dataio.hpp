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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace consisrec {

struct RatingRecord {
  std::string user;
  std::string item;
  int rating = 0;

  bool operator==(const RatingRecord&) const = default;
};

struct TrustRecord {
  std::string src;
  std::string dst;

  bool operator==(const TrustRecord&) const = default;
};

enum class EdgeFormat {
  // `<user>\t<item>\t<rating>` / `<user>\t<user>`, `#` comments.
  kTsv3,
};

struct ParsedEdges {
  std::vector<RatingRecord> ratings;
  std::vector<TrustRecord> trust;
};

enum class Split : std::uint8_t { kTrain, kValidation, kTest };

const char* SplitName(Split s);
// Accepts "train", "val"/"validation", "test".
Split ParseSplit(const std::string& name);

// A rating edge with dense indices. `item` is in [0, n).
struct RatingEdge {
  std::int32_t user = 0;
  std::int32_t item = 0;
  int rating = 0;

  bool operator==(const RatingEdge&) const = default;
};

struct SocialEdge {
  std::int32_t src = 0;
  std::int32_t dst = 0;

  bool operator==(const SocialEdge&) const = default;
};

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;

  bool operator==(const SplitFractions&) const = default;
};

struct Dataset {
  std::vector<std::string> user_ids;  // dense index -> external id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::int32_t> user_index;
  std::unordered_map<std::string, std::int32_t> item_index;
  std::vector<int> rating_levels;  // sorted, distinct
  std::vector<RatingEdge> ratings;
  std::vector<SocialEdge> social;
  // Empty until AssignSplits; otherwise parallel to `ratings`.
  std::vector<Split> split_assignment;
  std::uint64_t split_seed = 0;
  SplitFractions fractions;

  std::int32_t num_users() const { return static_cast<std::int32_t>(user_ids.size()); }
  std::int32_t num_items() const { return static_cast<std::int32_t>(item_ids.size()); }
  bool has_splits() const { return !ratings.empty() && split_assignment.size() == ratings.size(); }

  // Rating edges assigned to `s`, in dataset order.
  std::vector<RatingEdge> EdgesIn(Split s) const;
  std::array<std::size_t, 3> SplitSizes() const;

  bool operator==(const Dataset&) const = default;
};

// Reads both edge files. Duplicate (user, item) ratings keep the position of
// the first occurrence and the value of the last; duplicate and self trust
// edges are dropped.
ParsedEdges ParseEdges(const std::filesystem::path& rating_path,
                       const std::filesystem::path& trust_path,
                       EdgeFormat format = EdgeFormat::kTsv3);

// Drops users without any trust edge (and their ratings), then items left
// without ratings. Users that only appear in the trust graph are kept. Dense
// indices follow first appearance: filtered ratings first, then trust edges.
Dataset FilterAndIndex(const std::vector<RatingRecord>& ratings,
                       const std::vector<TrustRecord>& trust);

// Seeded shuffle then cumulative partition. Validation and test counts are
// floored; the remainder goes to train.
Dataset AssignSplits(Dataset ds, const SplitFractions& fractions, std::uint64_t seed);

// Canonical directory form: nodes.tsv, ratings.tsv, social.tsv, meta.json.
void WriteDataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset ReadDataset(const std::filesystem::path& dir);

// FNV-1a over the canonical files, hex encoded.
std::string DatasetFingerprint(const std::filesystem::path& dir);

}  // namespace consisrec
