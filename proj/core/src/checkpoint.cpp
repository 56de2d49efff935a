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

#include "consisrec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "consisrec/errors.hpp"
#include "json.hpp"

namespace consisrec {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(sizeof(double) == 8);

void PutU64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t GetU64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ParseError("params.bin", 0, "truncated file");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  pos += 8;
  return v;
}

void PutMatrix(std::string& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) PutU64(out, std::bit_cast<std::uint64_t>(m(r, c)));
  }
}

void GetMatrix(const std::string& in, std::size_t& pos, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = std::bit_cast<double>(GetU64(in, pos));
  }
}

json ConfigToJson(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  return {{"d", c.dim},
          {"layers", c.layers},
          {"gamma", c.gamma},
          {"ablate_query", c.ablate_query},
          {"ablate_sampling", c.ablate_sampling},
          {"ablate_attention", c.ablate_attention},
          {"item_link_threshold", ckpt.item_link_threshold}};
}

}  // namespace

void SaveCheckpoint(const Checkpoint& ckpt, const fs::path& dir) {
  const ModelParams& p = ckpt.params;
  p.CheckShapes();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string bytes;
  for (std::int64_t v : {std::int64_t{p.dim}, std::int64_t{p.layers}, std::int64_t{p.num_relations},
                         std::int64_t{p.num_users}, std::int64_t{p.num_items}}) {
    PutU64(bytes, static_cast<std::uint64_t>(v));
  }
  PutMatrix(bytes, p.node_emb);
  PutMatrix(bytes, p.rel_emb);
  PutMatrix(bytes, p.w_query);
  for (const Matrix& w : p.w_layer) PutMatrix(bytes, w);
  PutMatrix(bytes, p.w_att);

  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "params.bin").string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << ConfigToJson(ckpt).dump(2) << '\n';
}

Checkpoint LoadCheckpoint(const fs::path& dir) {
  Checkpoint ckpt;
  {
    std::ifstream in(dir / "config.json");
    if (!in) throw IoError("cannot open " + (dir / "config.json").string());
    try {
      json j = json::parse(in);
      ckpt.config.dim = j.at("d").get<int>();
      ckpt.config.layers = j.at("layers").get<int>();
      ckpt.config.gamma = j.at("gamma").get<double>();
      ckpt.config.ablate_query = j.at("ablate_query").get<bool>();
      ckpt.config.ablate_sampling = j.at("ablate_sampling").get<bool>();
      ckpt.config.ablate_attention = j.at("ablate_attention").get<bool>();
      ckpt.item_link_threshold = j.value("item_link_threshold", 0.5);
    } catch (const json::exception& e) {
      throw ParseError((dir / "config.json").string(), 0, e.what());
    }
    ckpt.config.Validate();
  }

  std::string bytes;
  {
    std::ifstream in(dir / "params.bin", std::ios::binary);
    if (!in) throw IoError("cannot open " + (dir / "params.bin").string());
    std::ostringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  std::size_t pos = 0;
  std::array<std::int64_t, 5> header{};
  for (auto& h : header) h = static_cast<std::int64_t>(GetU64(bytes, pos));
  const auto [d, layers, rels, m, n] = header;
  if (d < 1 || layers < 1 || rels < 0 || m < 0 || n < 0 || d > (1 << 20) || m + n > (1LL << 31)) {
    throw ParseError((dir / "params.bin").string(), 0, "invalid header");
  }
  const std::int64_t expected =
      8 * (5 + d * (m + n) + d * rels + 2 * d * d * (1 + layers) + 2 * d);
  if (static_cast<std::int64_t>(bytes.size()) != expected) {
    throw ParseError((dir / "params.bin").string(), 0,
                     "size " + std::to_string(bytes.size()) + " does not match header (expected " +
                         std::to_string(expected) + ")");
  }
  if (d != ckpt.config.dim || layers != ckpt.config.layers) {
    throw ContractError("params.bin header disagrees with config.json");
  }

  ModelParams& p = ckpt.params;
  p.dim = static_cast<int>(d);
  p.layers = static_cast<int>(layers);
  p.num_relations = static_cast<std::int32_t>(rels);
  p.num_users = static_cast<std::int32_t>(m);
  p.num_items = static_cast<std::int32_t>(n);
  p.node_emb.resize(d, m + n);
  GetMatrix(bytes, pos, p.node_emb);
  p.rel_emb.resize(d, rels);
  GetMatrix(bytes, pos, p.rel_emb);
  p.w_query.resize(2 * d, d);
  GetMatrix(bytes, pos, p.w_query);
  p.w_layer.assign(layers, Matrix(2 * d, d));
  for (Matrix& w : p.w_layer) GetMatrix(bytes, pos, w);
  p.w_att.resize(2 * d);
  Matrix att(2 * d, 1);
  GetMatrix(bytes, pos, att);
  p.w_att = att.col(0);
  p.CheckShapes();
  return ckpt;
}

}  // namespace consisrec
