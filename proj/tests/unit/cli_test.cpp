// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.h"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>

#include "fixtures.h"
#include "prefix_forest/forest_io.h"
#include "prefix_forest/packing_oracle.h"

namespace prefix_forest::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("prefix_forest_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& body) const {
    write_file_atomic(path(name), body);
    return path(name);
  }

  std::string write_tree(const std::string& name, const TrajectoryTree& t) const {
    return write(name, tree_to_json(t));
  }

  static int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "prefix-forest");
    return run(args);
  }

  json read_json(const std::string& name) const { return json::parse(read_text_file(path(name))); }

  fs::path dir_;
};

TEST_F(CliTest, AnalyzeHitsSyntheticPorTargets) {
  for (double target : {0.2, 0.28, 0.5, 0.705, 0.887, 0.92}) {
    ASSERT_EQ(cli({"analyze", "--synthetic-por", std::to_string(target), "--out", path("a.json")}), kExitOk);
    const json r = read_json("a.json");
    EXPECT_NEAR(r["por"].get<double>(), target, 1e-9) << target;
    EXPECT_EQ(r["generator"]["kind"], "por_target");
    EXPECT_EQ(r["generator"]["seed"], 7);
    EXPECT_EQ(r["leaves"], 16);
    EXPECT_TRUE(fs::exists(r["curves_csv"].get<std::string>()));
  }
}

TEST_F(CliTest, AnalyzeSingleTrajectoryHasNoReuse) {
  const std::string in = write("one.jsonl", "{\"id\": \"x\", \"tokens\": [5, 6, 7, 8]}\n");
  ASSERT_EQ(cli({"analyze", "--input", in, "--out", path("a.json")}), kExitOk);
  const json r = read_json("a.json");
  EXPECT_EQ(r["por"].get<double>(), 0.0);
  EXPECT_EQ(r["curve_areas"]["baseline_active"], 4);
  EXPECT_EQ(r["curve_areas"]["tree_active"], 4);
}

TEST_F(CliTest, AnalyzeCurveAreasEqualTokenTotals) {
  const std::string in = write_tree("fig4.json", testing::fig4_tree());
  ASSERT_EQ(cli({"analyze", "--input", in, "--kind", "tree", "--out", path("a.json"), "--curves", path("c.csv")}),
            kExitOk);
  const json r = read_json("a.json");
  EXPECT_EQ(r["curve_areas"]["baseline_active"], r["linear_tokens"]);
  EXPECT_EQ(r["curve_areas"]["tree_active"], r["tree_tokens"]);
  EXPECT_EQ(read_text_file(path("c.csv")).rfind("position,baseline_active,tree_active\n", 0), 0u);
}

TEST_F(CliTest, PackWholeTreeGivesErrEqualToPor) {
  const TrajectoryTree t = testing::fig4_tree();
  const std::string in = write_tree("fig4.json", t);
  for (const std::string packer : {"multi", "heuristic"}) {
    ASSERT_EQ(cli({"pack", "--input", in, "--kind", "tree", "--capacity", std::to_string(tree_token_total(t)),
                   "--packer", packer, "--out", path("plan.json"), "--stats", path("s.json"), "--oracle"}),
              kExitOk);
    const json s = read_json("s.json");
    EXPECT_EQ(s["traversals"], 1) << packer;
    EXPECT_DOUBLE_EQ(s["err"].get<double>(), s["por"].get<double>()) << packer;
    EXPECT_EQ(s["oracle"]["gap"], 0) << packer;
    const PackPlan plan = parse_plan_json(t, read_text_file(path("plan.json")));
    EXPECT_TRUE(validate_plan(t, plan, Capacity{tree_token_total(t)}).empty());
  }
  // Linearized copies cost more than the tree, so the single-path packer splits here.
  ASSERT_EQ(cli({"pack", "--input", in, "--kind", "tree", "--capacity", std::to_string(tree_token_total(t)),
                 "--packer", "single", "--out", path("plan.json"), "--stats", path("s.json")}),
            kExitOk);
  const json s = read_json("s.json");
  EXPECT_LT(s["err"].get<double>(), s["por"].get<double>());
  EXPECT_GE(s["err"].get<double>(), 0.0);
}

TEST_F(CliTest, EmitWritesOneBatchPerTraversal) {
  const TrajectoryTree t = testing::fig4_tree();
  const std::string in = write_tree("fig4.json", t);
  ASSERT_EQ(cli({"pack", "--input", in, "--kind", "tree", "--capacity", "14", "--out", path("plan.json"), "--stats",
                 path("s.json")}),
            kExitOk);
  ASSERT_EQ(cli({"emit", "--input", in, "--kind", "tree", "--plan", path("plan.json"), "--out", path("batches")}),
            kExitOk);
  const PackPlan plan = parse_plan_json(t, read_text_file(path("plan.json")));
  size_t files = 0;
  for (const auto& entry : fs::directory_iterator(path("batches"))) {
    (void)entry;
    ++files;
  }
  ASSERT_EQ(files, plan.traversals.size());
  for (size_t i = 0; i < files; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "batches/batch_%03zu.json", i);
    EXPECT_EQ(read_json(name)["num_tokens"].get<Tokens>(), plan.traversals[i].cost);
  }
}

TEST_F(CliTest, VerifyPassesAndNegativeControlsFail) {
  ASSERT_EQ(cli({"verify", "--seed", "7", "--out", path("v.json")}), kExitOk);
  const json r = read_json("v.json");
  EXPECT_TRUE(r["pass"].get<bool>());
  EXPECT_LE(r["gradients"]["max_rel_err"].get<double>(), 1e-9);
  EXPECT_TRUE(r["negative_controls"]["plain_causal_mask"]["detected"].get<bool>());

  EXPECT_EQ(cli({"verify", "--seed", "7", "--disable-scaler", "--out", path("d.json")}), kExitVerificationFailed);
  EXPECT_FALSE(read_json("d.json")["pass"].get<bool>());
  EXPECT_EQ(cli({"verify", "--seed", "7", "--plain-causal-mask", "--out", path("m.json")}), kExitVerificationFailed);
  EXPECT_FALSE(read_json("m.json")["prefix_identity"]["pass"].get<bool>());
}

TEST_F(CliTest, BenchRatiosFollowFromErrAndAreLabelled) {
  ASSERT_EQ(cli({"bench", "--out", path("b.json")}), kExitOk);
  const json r = read_json("b.json");
  EXPECT_FALSE(r["wall_clock_measured"].get<bool>());
  EXPECT_NE(r["note"].get<std::string>().find("NOT measured"), std::string::npos);
  ASSERT_EQ(r["rows"].size(), 9u);
  for (const json& row : r["rows"]) {
    ASSERT_FALSE(row.contains("skipped"));
    EXPECT_NEAR(row["token_ratio"].get<double>(), row["ratio_from_err"].get<double>(),
                1e-12 * row["token_ratio"].get<double>());
    EXPECT_LE(row["token_ratio"].get<double>(), row["full_reuse_ratio"].get<double>() * (1 + 1e-12));
  }
}

TEST_F(CliTest, BadInputExitsWithTwo) {
  EXPECT_EQ(cli({"analyze", "--input", path("missing.jsonl")}), kExitInputError);
  const std::string bad = write("bad.jsonl", "{\"id\": \"a\", \"tokens\": [1, 2]}\nnot json\n");
  EXPECT_EQ(cli({"analyze", "--input", bad}), kExitInputError);
  const std::string star = write_tree("star.json", testing::star_tree());
  EXPECT_EQ(cli({"pack", "--input", star, "--kind", "tree", "--capacity", "8", "--out", path("p.json")}),
            kExitInputError);
  EXPECT_EQ(cli({"pack", "--input", star, "--kind", "tree", "--packer", "greedy", "--capacity", "12", "--out",
                 path("p.json")}),
            kExitInputError);
  EXPECT_EQ(cli({"emit", "--input", star, "--kind", "tree", "--plan", bad, "--out", path("e")}), kExitInputError);
}

TEST_F(CliTest, ExactLimitsExitWithThree) {
  TreeSpec root;
  root.segment = {1};
  for (int i = 0; i < 13; ++i) root.children.push_back(testing::leaf_spec({10 + i, 50}, "l" + std::to_string(i)));
  const std::string wide = write_tree("wide.json", TrajectoryTree::from_spec(root));
  EXPECT_EQ(cli({"pack", "--input", wide, "--kind", "tree", "--capacity", "8", "--out", path("p.json")}),
            kExitLimitExceeded);
  EXPECT_EQ(cli({"pack", "--input", wide, "--kind", "tree", "--capacity", "8", "--packer", "heuristic", "--out",
                 path("p.json"), "--stats", path("s.json")}),
            kExitOk);
  const std::string star = write_tree("star.json", testing::star_tree());
  EXPECT_EQ(cli({"pack", "--input", star, "--kind", "tree", "--capacity", "12", "--max-items", "1", "--out",
                 path("p.json")}),
            kExitLimitExceeded);
}

TEST_F(CliTest, ReportsAreByteIdenticalAcrossRuns) {
  ASSERT_EQ(cli({"analyze", "--synthetic-por", "0.5", "--seed", "3", "--out", path("a.json")}), kExitOk);
  const std::string report = read_text_file(path("a.json"));
  const std::string curves = read_text_file(path("a.curves.csv"));
  ASSERT_EQ(cli({"analyze", "--synthetic-por", "0.5", "--seed", "3", "--out", path("a.json")}), kExitOk);
  EXPECT_EQ(read_text_file(path("a.json")), report);
  EXPECT_EQ(read_text_file(path("a.curves.csv")), curves);

  const std::string in = write_tree("fig4.json", testing::fig4_tree());
  for (const std::string n : {"1", "2"}) {
    ASSERT_EQ(cli({"pack", "--input", in, "--kind", "tree", "--capacity", "14", "--out", path("p" + n + ".json"),
                   "--stats", path("s" + n + ".json")}),
              kExitOk);
  }
  EXPECT_EQ(read_text_file(path("p1.json")), read_text_file(path("p2.json")));
  ASSERT_EQ(cli({"verify", "--seed", "5", "--out", path("v1.json")}), kExitOk);
  ASSERT_EQ(cli({"verify", "--seed", "5", "--out", path("v2.json")}), kExitOk);
  EXPECT_EQ(read_text_file(path("v1.json")), read_text_file(path("v2.json")));
}

}  // namespace
}  // namespace prefix_forest::cli
