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

#include "consisrec/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "consisrec/errors.hpp"
#include "consisrec/random.hpp"
#include "json.hpp"

namespace consisrec {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool IsBlank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename T>
bool ParseNumber(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream OpenForRead(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream OpenForWrite(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Calls `fn(fields, line_no)` for every non-comment, non-blank line.
template <typename Fn>
void ForEachRecord(const fs::path& path, Fn&& fn) {
  std::ifstream in = OpenForRead(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty() || view.front() == '#' || IsBlank(view)) continue;
    fn(SplitTabs(view), line_no);
  }
}

std::string ReadFileBytes(const fs::path& path) {
  std::ifstream in = OpenForRead(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train|val|test)");
}

std::vector<RatingEdge> Dataset::EdgesIn(Split s) const {
  std::vector<RatingEdge> out;
  for (std::size_t i = 0; i < split_assignment.size(); ++i) {
    if (split_assignment[i] == s) out.push_back(ratings[i]);
  }
  return out;
}

std::array<std::size_t, 3> Dataset::SplitSizes() const {
  std::array<std::size_t, 3> sizes{0, 0, 0};
  for (Split s : split_assignment) ++sizes[static_cast<std::size_t>(s)];
  return sizes;
}

ParsedEdges ParseEdges(const fs::path& rating_path, const fs::path& trust_path,
                       EdgeFormat format) {
  if (format != EdgeFormat::kTsv3) throw ConfigError("unsupported edge format");
  ParsedEdges out;

  std::unordered_map<std::string, std::size_t> seen_pair;
  ForEachRecord(rating_path, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    if (f.size() != 3) {
      throw ParseError(rating_path.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) {
      throw ParseError(rating_path.string(), line_no, "empty user or item id");
    }
    int rating = 0;
    if (!ParseNumber(f[2], rating)) {
      throw ParseError(rating_path.string(), line_no,
                       "rating '" + std::string(f[2]) + "' is not an integer");
    }
    std::string key;
    key.reserve(f[0].size() + f[1].size() + 1);
    key.append(f[0]).push_back('\t');
    key.append(f[1]);
    auto [it, inserted] = seen_pair.emplace(std::move(key), out.ratings.size());
    if (inserted) {
      out.ratings.push_back({std::string(f[0]), std::string(f[1]), rating});
    } else {
      out.ratings[it->second].rating = rating;
    }
  });
  if (out.ratings.empty()) throw EmptyInputError("no rating records in " + rating_path.string());

  std::unordered_set<std::string> seen_trust;
  std::size_t trust_lines = 0;
  ForEachRecord(trust_path, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    if (f.size() != 2) {
      throw ParseError(trust_path.string(), line_no,
                       "expected 2 tab-separated fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) {
      throw ParseError(trust_path.string(), line_no, "empty user id");
    }
    ++trust_lines;
    if (f[0] == f[1]) return;
    std::string key = std::string(f[0]) + '\t' + std::string(f[1]);
    if (!seen_trust.insert(std::move(key)).second) return;
    out.trust.push_back({std::string(f[0]), std::string(f[1])});
  });
  if (trust_lines == 0) throw EmptyInputError("no trust records in " + trust_path.string());

  return out;
}

Dataset FilterAndIndex(const std::vector<RatingRecord>& ratings,
                       const std::vector<TrustRecord>& trust) {
  std::unordered_set<std::string> social_users;
  for (const auto& t : trust) {
    if (t.src == t.dst) continue;
    social_users.insert(t.src);
    social_users.insert(t.dst);
  }

  Dataset ds;
  auto user_idx = [&ds](const std::string& id) {
    auto [it, inserted] = ds.user_index.emplace(id, ds.num_users());
    if (inserted) ds.user_ids.push_back(id);
    return it->second;
  };
  auto item_idx = [&ds](const std::string& id) {
    auto [it, inserted] = ds.item_index.emplace(id, ds.num_items());
    if (inserted) ds.item_ids.push_back(id);
    return it->second;
  };

  // Repeated (user, item) pairs keep the first position and the last rating,
  // as in ParseEdges, so a pair can never land in two splits.
  std::unordered_map<std::uint64_t, std::size_t> pair_pos;
  for (const auto& r : ratings) {
    if (!social_users.contains(r.user)) continue;
    std::int32_t u = user_idx(r.user);
    std::int32_t i = item_idx(r.item);
    std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(i);
    auto [it, inserted] = pair_pos.emplace(key, ds.ratings.size());
    if (inserted) {
      ds.ratings.push_back({u, i, r.rating});
    } else {
      ds.ratings[it->second].rating = r.rating;
    }
  }
  std::set<int> levels;
  for (const auto& r : ds.ratings) levels.insert(r.rating);
  if (ds.ratings.empty()) {
    throw EmptyDatasetError("no ratings left after removing users without social links");
  }

  std::unordered_set<std::uint64_t> seen;
  for (const auto& t : trust) {
    if (t.src == t.dst) continue;
    std::int32_t a = user_idx(t.src);
    std::int32_t b = user_idx(t.dst);
    std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    if (seen.insert(key).second) ds.social.push_back({a, b});
  }
  ds.rating_levels.assign(levels.begin(), levels.end());
  return ds;
}

Dataset AssignSplits(Dataset ds, const SplitFractions& fractions, std::uint64_t seed) {
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0) {
    throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const std::size_t total = ds.ratings.size();
  // The small epsilon keeps products like 0.2 * 10 = 1.9999999999999998 from
  // flooring one short.
  auto floor_count = [total](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(total) + 1e-9));
  };
  const std::size_t n_val = floor_count(fractions.validation);
  const std::size_t n_test = floor_count(fractions.test);
  const std::size_t n_train = total - n_val - n_test;

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  ds.split_assignment.assign(total, Split::kTrain);
  for (std::size_t pos = 0; pos < total; ++pos) {
    Split s = pos < n_train ? Split::kTrain
              : pos < n_train + n_val ? Split::kValidation
                                      : Split::kTest;
    ds.split_assignment[order[pos]] = s;
  }
  ds.split_seed = seed;
  ds.fractions = fractions;
  return ds;
}

void WriteDataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream out = OpenForWrite(dir / "nodes.tsv");
    out << "# index\texternal_id\tkind\n";
    for (std::int32_t u = 0; u < ds.num_users(); ++u) {
      out << u << '\t' << ds.user_ids[u] << "\tuser\n";
    }
    for (std::int32_t i = 0; i < ds.num_items(); ++i) {
      out << ds.num_users() + i << '\t' << ds.item_ids[i] << "\titem\n";
    }
  }
  {
    std::ofstream out = OpenForWrite(dir / "ratings.tsv");
    out << "# user_idx\titem_idx\trating\tsplit\n";
    for (std::size_t k = 0; k < ds.ratings.size(); ++k) {
      const auto& r = ds.ratings[k];
      out << r.user << '\t' << r.item << '\t' << r.rating << '\t'
          << (ds.has_splits() ? SplitName(ds.split_assignment[k]) : "-") << '\n';
    }
  }
  {
    std::ofstream out = OpenForWrite(dir / "social.tsv");
    out << "# src_idx\tdst_idx\n";
    for (const auto& s : ds.social) out << s.src << '\t' << s.dst << '\n';
  }
  {
    json meta;
    meta["format_version"] = 1;
    meta["m"] = ds.num_users();
    meta["n"] = ds.num_items();
    meta["rating_levels"] = ds.rating_levels;
    meta["seed"] = ds.split_seed;
    meta["fractions"] = {ds.fractions.train, ds.fractions.validation, ds.fractions.test};
    meta["num_ratings"] = ds.ratings.size();
    meta["num_social"] = ds.social.size();
    std::ofstream out = OpenForWrite(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
}

Dataset ReadDataset(const fs::path& dir) {
  Dataset ds;
  json meta;
  {
    const fs::path path = dir / "meta.json";
    try {
      meta = json::parse(ReadFileBytes(path));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), 0, e.what());
    }
  }
  std::int32_t m = 0;
  std::int32_t n = 0;
  try {
    m = meta.at("m").get<std::int32_t>();
    n = meta.at("n").get<std::int32_t>();
    ds.rating_levels = meta.at("rating_levels").get<std::vector<int>>();
    ds.split_seed = meta.at("seed").get<std::uint64_t>();
    auto fr = meta.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ConfigError("fractions must have 3 entries");
    ds.fractions = {fr[0], fr[1], fr[2]};
  } catch (const json::exception& e) {
    throw ParseError((dir / "meta.json").string(), 0, e.what());
  }
  if (m < 0 || n < 0) throw ParseError((dir / "meta.json").string(), 0, "negative node count");

  ds.user_ids.resize(m);
  ds.item_ids.resize(n);
  const fs::path nodes_path = dir / "nodes.tsv";
  ForEachRecord(nodes_path, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    std::int64_t idx = 0;
    if (f.size() != 3 || !ParseNumber(f[0], idx)) {
      throw ParseError(nodes_path.string(), line_no, "malformed node line");
    }
    if (f[2] == "user" && idx >= 0 && idx < m) {
      ds.user_ids[idx] = std::string(f[1]);
      ds.user_index[ds.user_ids[idx]] = static_cast<std::int32_t>(idx);
    } else if (f[2] == "item" && idx >= m && idx < static_cast<std::int64_t>(m) + n) {
      const auto local = static_cast<std::int32_t>(idx - m);
      ds.item_ids[local] = std::string(f[1]);
      ds.item_index[ds.item_ids[local]] = local;
    } else {
      throw ParseError(nodes_path.string(), line_no, "node index/kind out of range");
    }
  });
  if (ds.user_index.size() != static_cast<std::size_t>(m) ||
      ds.item_index.size() != static_cast<std::size_t>(n)) {
    throw ParseError(nodes_path.string(), 0, "node table does not match meta counts");
  }

  const fs::path ratings_path = dir / "ratings.tsv";
  bool any_unassigned = false;
  ForEachRecord(ratings_path, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    RatingEdge e;
    if (f.size() != 4 || !ParseNumber(f[0], e.user) || !ParseNumber(f[1], e.item) ||
        !ParseNumber(f[2], e.rating)) {
      throw ParseError(ratings_path.string(), line_no, "malformed rating line");
    }
    if (e.user < 0 || e.user >= m || e.item < 0 || e.item >= n) {
      throw ParseError(ratings_path.string(), line_no, "index out of range");
    }
    ds.ratings.push_back(e);
    if (f[3] == "-") {
      any_unassigned = true;
    } else {
      try {
        ds.split_assignment.push_back(ParseSplit(std::string(f[3])));
      } catch (const ConfigError& err) {
        throw ParseError(ratings_path.string(), line_no, err.what());
      }
    }
  });
  if (any_unassigned) ds.split_assignment.clear();

  const fs::path social_path = dir / "social.tsv";
  ForEachRecord(social_path, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
    SocialEdge e;
    if (f.size() != 2 || !ParseNumber(f[0], e.src) || !ParseNumber(f[1], e.dst) || e.src < 0 ||
        e.src >= m || e.dst < 0 || e.dst >= m) {
      throw ParseError(social_path.string(), line_no, "malformed social line");
    }
    ds.social.push_back(e);
  });
  return ds;
}

std::string DatasetFingerprint(const fs::path& dir) {
  std::uint64_t h = Fnv1a64("");
  for (const char* name : {"nodes.tsv", "ratings.tsv", "social.tsv", "meta.json"}) {
    h = Fnv1a64(name, h);
    h = Fnv1a64(ReadFileBytes(dir / name), h);
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace consisrec
