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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "consisrec/dataio.hpp"

namespace consisrec {

enum class NodeKind : std::uint8_t { kUser, kItem };

// Global node index: users occupy [0, m), items [m, m + n).
struct NodeId {
  std::int32_t value = 0;

  auto operator<=>(const NodeId&) const = default;
};

enum class RelationKind : std::uint8_t { kRatingLevel, kSocial, kItemItem };

// Relations [0, |levels|) are the rating levels in ascending order, followed
// by the social relation and the item-item relation.
struct RelationId {
  std::int32_t value = 0;

  auto operator<=>(const RelationId&) const = default;
};

struct Edge {
  NodeId node;
  RelationId relation;

  auto operator<=>(const Edge&) const = default;
};

// Immutable multi-relation adjacency in CSR form. Every neighbor list is
// sorted by (relation, neighbor index).
class HetGraph {
 public:
  HetGraph() = default;

  std::int32_t num_users() const { return num_users_; }
  std::int32_t num_items() const { return num_items_; }
  std::int32_t num_nodes() const { return num_users_ + num_items_; }
  std::int32_t num_relations() const { return static_cast<std::int32_t>(rating_levels_.size()) + 2; }
  const std::vector<int>& rating_levels() const { return rating_levels_; }
  std::size_t num_edges() const { return edges_.size(); }

  RelationId social_relation() const { return {static_cast<std::int32_t>(rating_levels_.size())}; }
  RelationId item_item_relation() const { return {social_relation().value + 1}; }
  // Throws LookupError for a value that is not a rating level.
  RelationId rating_relation(int rating) const;

  RelationKind relation_kind(RelationId r) const;
  // Only meaningful for rating-level relations.
  int relation_rating(RelationId r) const;

  NodeId user_node(std::int32_t user) const;
  NodeId item_node(std::int32_t item) const;
  NodeKind kind(NodeId v) const;
  bool contains(NodeId v) const { return v.value >= 0 && v.value < num_nodes(); }

  // Throws LookupError when `v` is out of range.
  std::span<const Edge> neighbors(NodeId v) const;
  std::size_t degree(NodeId v) const { return neighbors(v).size(); }

  std::size_t CountRelation(RelationId r) const;

 private:
  friend HetGraph BuildGraph(const Dataset& ds, double item_link_threshold);

  std::int32_t num_users_ = 0;
  std::int32_t num_items_ = 0;
  std::vector<int> rating_levels_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Edge> edges_;
};

// Train-split rating edges (both directions, relation = rating level),
// symmetrized social edges and item-item edges between items whose train
// rater sets have Jaccard similarity strictly above `item_link_threshold`.
HetGraph BuildGraph(const Dataset& ds, double item_link_threshold = 0.5);

// Lines `src\tdst\trelation_index`, one per directed adjacency entry.
void WriteGraphTsv(const HetGraph& g, const std::filesystem::path& path);

}  // namespace consisrec
