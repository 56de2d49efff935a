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

#include "cli/commands.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "consisrec/synthetic.hpp"
#include "support/test_util.hpp"

namespace consisrec {
namespace {

using testing::ReadLines;
using testing::ReadText;
using testing::TempDir;
using testing::WriteText;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Invoke(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::Run(args, out, err);
  return {code, out.str(), err.str()};
}

// Writes random raw edge files and ingests them into dir/data.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const ParsedEdges e = GenerateRandomEdges({}, 3);
    std::string r;
    for (const RatingRecord& x : e.ratings) r += x.user + "\t" + x.item + "\t" + std::to_string(x.rating) + "\n";
    std::string t;
    for (const TrustRecord& x : e.trust) t += x.src + "\t" + x.dst + "\n";
    WriteText(dir_ / "ratings.tsv", r);
    WriteText(dir_ / "trust.tsv", t);
    const Outcome o = Invoke({"ingest", "--ratings", Path("ratings.tsv"), "--trust", Path("trust.tsv"), "--out",
                           Path("data")});
    ASSERT_EQ(o.code, 0) << o.err;
    ingest_out_ = o.out;
  }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  TempDir dir_;
  std::string ingest_out_;
};

TEST_F(CliTest, IngestPrintsCounts) {
  EXPECT_NE(ingest_out_.find("users=20\n"), std::string::npos) << ingest_out_;
  EXPECT_NE(ingest_out_.find("items=15\n"), std::string::npos);
  EXPECT_NE(ingest_out_.find("R=7\n"), std::string::npos);
  EXPECT_NE(ingest_out_.find("split_train="), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "data" / "manifest.json"));
}

TEST_F(CliTest, IngestSixLevelsGivesEightRelations) {
  std::string r;
  for (int k = 0; k <= 5; ++k) r += "a\tx" + std::to_string(k) + "\t" + std::to_string(k) + "\n";
  WriteText(dir_ / "r6.tsv", r);
  WriteText(dir_ / "t6.tsv", "a\tb\n");
  const Outcome o = Invoke({"ingest", "--ratings", Path("r6.tsv"), "--trust", Path("t6.tsv"), "--out", Path("d6")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("rating_levels=0,1,2,3,4,5\n"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("R=8\n"), std::string::npos);
}

TEST_F(CliTest, IngestMissingFile) {
  const Outcome o = Invoke({"ingest", "--ratings", Path("nope.tsv"), "--trust", Path("trust.tsv"), "--out",
                         Path("x")});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("nope.tsv"), std::string::npos) << o.err;
}

TEST_F(CliTest, TrainOneEpoch) {
  const Outcome o = Invoke({"train", "--data", Path("data"), "--out", Path("run"), "--max-epochs", "1", "--d", "4"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(ReadLines(dir_ / "run" / "history.tsv").size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "run" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir_ / "run" / "checkpoint"));
  EXPECT_NE(o.out.find("best_epoch=1\n"), std::string::npos);
  EXPECT_NE(o.out.find("test rmse="), std::string::npos);
}

TEST_F(CliTest, TrainRejectsBadGamma) {
  const Outcome o = Invoke({"train", "--data", Path("data"), "--out", Path("run"), "--gamma", "1.2"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("gamma must be in [0,1]"), std::string::npos) << o.err;
}

TEST_F(CliTest, TrainTwiceIsByteIdentical) {
  const std::vector<std::string> common{"--data", Path("data"), "--max-epochs", "3", "--d", "4", "--quiet"};
  auto with_out = [&](const std::string& out) {
    auto v = std::vector<std::string>{"train", "--out", Path(out)};
    v.insert(v.end(), common.begin(), common.end());
    return v;
  };
  ASSERT_EQ(Invoke(with_out("a")).code, 0);
  ASSERT_EQ(Invoke(with_out("b")).code, 0);
  EXPECT_EQ(ReadText(dir_ / "a" / "history.tsv"), ReadText(dir_ / "b" / "history.tsv"));
  EXPECT_EQ(ReadText(dir_ / "a" / "checkpoint" / "params.bin"), ReadText(dir_ / "b" / "checkpoint" / "params.bin"));
}

TEST_F(CliTest, ConfigFileSuppliesFlags) {
  WriteText(dir_ / "run.ini", "[train]\nmax-epochs=2\nd=3\n");
  const Outcome o = Invoke({"train", "--config", Path("run.ini"), "--data", Path("data"), "--out", Path("cfg"),
                         "--quiet"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(ReadLines(dir_ / "cfg" / "history.tsv").size(), 3u);
  EXPECT_NE(ReadText(dir_ / "cfg" / "manifest.json").find("\"d\": 3"), std::string::npos);
  // Flags override the file.
  ASSERT_EQ(Invoke({"train", "--config", Path("run.ini"), "--data", Path("data"), "--out", Path("cfg2"), "--quiet",
                    "--max-epochs", "1"})
                .code,
            0);
  EXPECT_EQ(ReadLines(dir_ / "cfg2" / "history.tsv").size(), 2u);
}

TEST_F(CliTest, EvaluateCheckpoint) {
  ASSERT_EQ(Invoke({"train", "--data", Path("data"), "--out", Path("run"), "--max-epochs", "2", "--quiet"}).code, 0);
  const Outcome o = Invoke({"evaluate", "--data", Path("data"), "--checkpoint", Path("run/checkpoint"), "--split",
                         "val"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.rfind("split=val rmse=", 0), 0u) << o.out;
  EXPECT_EQ(Invoke({"evaluate", "--data", Path("data"), "--checkpoint", Path("missing")}).code, 2);
}

TEST_F(CliTest, GridsearchBudget) {
  const Outcome o = Invoke({"gridsearch", "--data", Path("data"), "--out", Path("grid"), "--budget", "10",
                         "--max-epochs", "1", "--d-values", "2,4", "--batch-values", "64"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto lines = ReadLines(dir_ / "grid" / "grid_results.tsv");
  EXPECT_LE(lines.size(), 2u + 10u);
  EXPECT_GT(lines.size(), 2u);
}

TEST_F(CliTest, AblateAndSensitivity) {
  Outcome o = Invoke({"ablate", "--data", Path("data"), "--out", Path("abl"), "--max-epochs", "1", "--d", "4"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(ReadLines(dir_ / "abl" / "ablation.tsv").size(), 5u);
  o = Invoke({"sensitivity", "--axis", "gamma", "--values", "0.2,0.8", "--data", Path("data"), "--out", Path("sens"),
           "--max-epochs", "1", "--d", "4"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(ReadLines(dir_ / "sens" / "sensitivity_gamma.tsv").size(), 3u);
  EXPECT_EQ(Invoke({"sensitivity", "--axis", "beta", "--values", "1", "--data", Path("data")}).code, 2);
}

TEST(Cli, Gradcheck) {
  Outcome o = Invoke({"gradcheck"});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  EXPECT_NE(o.out.find("max_rel_error"), std::string::npos);
  o = Invoke({"gradcheck", "--d", "3", "--nodes", "5", "--layers", "2"});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  o = Invoke({"gradcheck", "--corrupt"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("gradient check failed"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(Invoke({"--help"}).code, 0);
  EXPECT_EQ(Invoke({"train", "--help"}).code, 0);
  EXPECT_EQ(Invoke({"--version"}).code, 0);
  EXPECT_EQ(Invoke({}).code, 2);
  EXPECT_EQ(Invoke({"gradcheck", "--bogus"}).code, 2);
  EXPECT_EQ(Invoke({"frobnicate"}).code, 2);
}

}  // namespace
}  // namespace consisrec
