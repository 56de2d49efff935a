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

#include "consisrec/hetgraph.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "consisrec/errors.hpp"

namespace consisrec {

RelationId HetGraph::rating_relation(int rating) const {
  auto it = std::lower_bound(rating_levels_.begin(), rating_levels_.end(), rating);
  if (it == rating_levels_.end() || *it != rating) {
    throw LookupError("rating " + std::to_string(rating) + " is not a known level");
  }
  return {static_cast<std::int32_t>(it - rating_levels_.begin())};
}

RelationKind HetGraph::relation_kind(RelationId r) const {
  if (r.value < 0 || r.value >= num_relations()) {
    throw LookupError("relation " + std::to_string(r.value) + " out of range");
  }
  if (r == social_relation()) return RelationKind::kSocial;
  if (r == item_item_relation()) return RelationKind::kItemItem;
  return RelationKind::kRatingLevel;
}

int HetGraph::relation_rating(RelationId r) const {
  if (relation_kind(r) != RelationKind::kRatingLevel) {
    throw ContractError("relation " + std::to_string(r.value) + " is not a rating level");
  }
  return rating_levels_[r.value];
}

NodeId HetGraph::user_node(std::int32_t user) const {
  if (user < 0 || user >= num_users_) throw LookupError("user " + std::to_string(user) + " out of range");
  return {user};
}

NodeId HetGraph::item_node(std::int32_t item) const {
  if (item < 0 || item >= num_items_) throw LookupError("item " + std::to_string(item) + " out of range");
  return {num_users_ + item};
}

NodeKind HetGraph::kind(NodeId v) const {
  if (!contains(v)) throw LookupError("node " + std::to_string(v.value) + " out of range");
  return v.value < num_users_ ? NodeKind::kUser : NodeKind::kItem;
}

std::span<const Edge> HetGraph::neighbors(NodeId v) const {
  if (!contains(v)) throw LookupError("node " + std::to_string(v.value) + " out of range");
  const auto begin = offsets_[v.value];
  const auto end = offsets_[v.value + 1];
  return std::span<const Edge>(edges_.data() + begin, end - begin);
}

std::size_t HetGraph::CountRelation(RelationId r) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [r](const Edge& e) { return e.relation == r; }));
}

HetGraph BuildGraph(const Dataset& ds, double item_link_threshold) {
  if (!(item_link_threshold >= 0.0 && item_link_threshold <= 1.0)) {
    throw ConfigError("item link threshold must be in [0,1]");
  }
  if (!ds.has_splits()) throw ContractError("dataset splits must be assigned before building the graph");

  HetGraph g;
  g.num_users_ = ds.num_users();
  g.num_items_ = ds.num_items();
  g.rating_levels_ = ds.rating_levels;
  const std::int32_t m = g.num_users_;
  const std::int32_t n = g.num_items_;

  std::vector<std::vector<Edge>> adj(static_cast<std::size_t>(m) + n);
  std::vector<std::vector<std::int32_t>> item_raters(n);
  std::vector<std::vector<std::int32_t>> user_items(m);

  for (std::size_t k = 0; k < ds.ratings.size(); ++k) {
    if (ds.split_assignment[k] != Split::kTrain) continue;
    const RatingEdge& r = ds.ratings[k];
    const RelationId rel = g.rating_relation(r.rating);
    adj[r.user].push_back({{m + r.item}, rel});
    adj[m + r.item].push_back({{r.user}, rel});
    item_raters[r.item].push_back(r.user);
    user_items[r.user].push_back(r.item);
  }

  for (const SocialEdge& s : ds.social) {
    if (s.src == s.dst) continue;
    adj[s.src].push_back({{s.dst}, g.social_relation()});
    adj[s.dst].push_back({{s.src}, g.social_relation()});
  }

  // Item-item links. Only pairs with a common rater can have positive
  // Jaccard, so candidates come from walking item -> rater -> item.
  std::vector<std::int32_t> overlap(n, 0);
  std::vector<std::int32_t> touched;
  for (std::int32_t i = 0; i < n; ++i) {
    touched.clear();
    for (std::int32_t u : item_raters[i]) {
      for (std::int32_t j : user_items[u]) {
        if (j <= i) continue;
        if (overlap[j]++ == 0) touched.push_back(j);
      }
    }
    for (std::int32_t j : touched) {
      const double inter = overlap[j];
      const double uni = static_cast<double>(item_raters[i].size() + item_raters[j].size()) - inter;
      if (inter / uni > item_link_threshold) {
        adj[m + i].push_back({{m + j}, g.item_item_relation()});
        adj[m + j].push_back({{m + i}, g.item_item_relation()});
      }
      overlap[j] = 0;
    }
  }

  g.offsets_.assign(adj.size() + 1, 0);
  for (std::size_t v = 0; v < adj.size(); ++v) {
    auto& list = adj[v];
    std::sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) {
      return a.relation != b.relation ? a.relation < b.relation : a.node < b.node;
    });
    // Reciprocal trust pairs collapse into one undirected edge.
    list.erase(std::unique(list.begin(), list.end()), list.end());
    g.offsets_[v + 1] = g.offsets_[v] + list.size();
  }
  g.edges_.reserve(g.offsets_.back());
  for (auto& list : adj) g.edges_.insert(g.edges_.end(), list.begin(), list.end());
  return g;
}

void WriteGraphTsv(const HetGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# src\tdst\trelation_index\n";
  for (std::int32_t v = 0; v < g.num_nodes(); ++v) {
    for (const Edge& e : g.neighbors({v})) {
      out << v << '\t' << e.node.value << '\t' << e.relation.value << '\n';
    }
  }
}

}  // namespace consisrec
