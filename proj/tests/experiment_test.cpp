/*
 * Copyright 2026 The hoilab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "hoilab/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace hoilab {
namespace {

const char* const kCli = HOILAB_CLI_PATH;

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("hoilab_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  CliResult run(const std::string& args) {
    const auto out = root_ / "stdout.txt", err = root_ / "stderr.txt";
    const std::string cmd = std::string("\"") + kCli + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    const int status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return {status, slurp(out), slurp(err)};
  }

  fs::path write_config(const nlohmann::json& extra, const std::string& name = "config.json") {
    nlohmann::json j = {{"num_verbs", 3}, {"num_objects", 2}, {"d", 8},
                        {"n_train", 120}, {"n_test", 60},   {"epochs", 2}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    const auto p = root_ / name;
    write_json_file(p, j);
    return p;
  }

  fs::path root_;
};

TEST(Config, DefaultsDescribeTheBenchmark) {
  const auto s = spec_from_json(nlohmann::json::object());
  EXPECT_EQ(s.data.num_verbs * s.data.num_objects, 80u);
  EXPECT_EQ(s.data.n_train, 4000u);
  EXPECT_EQ(s.data.n_test, 2000u);
  EXPECT_EQ(s.data.zipf_exponent, 1.2);
  EXPECT_EQ(s.embedding_noise, 0.3);
  EXPECT_EQ(s.train.gamma, 100.0);
  EXPECT_EQ(s.train.min_samples_per_class, 40);
  EXPECT_EQ(s.train.restart_period_epochs, 5);
}

TEST(Config, RejectsUnknownKeysAndBadArms) {
  EXPECT_THROW(spec_from_json({{"epoch", 3}}), Error);
  EXPECT_THROW(spec_from_json({{"arms", {{{"name", "a"}, {"zipf_exponent", 2.0}}}}}), Error);
  EXPECT_THROW(spec_from_json({{"arms", {{{"name", "a"}}, {{"name", "a"}}}}}), Error);
  EXPECT_THROW(spec_from_json({{"seeds", nlohmann::json::array()}}), Error);
  EXPECT_THROW(spec_from_json({{"init_mode", "zeros"}}), Error);
  EXPECT_THROW(spec_from_json({{"embedding_source", "file"}}), Error);
}

TEST(Config, OverridesParseJsonOrString) {
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "epochs=3");
  apply_override(j, "loss_name=bce");
  apply_override(j, "seeds=[1,2]");
  EXPECT_EQ(j.at("epochs"), 3);
  EXPECT_EQ(j.at("loss_name"), "bce");
  EXPECT_EQ(j.at("seeds"), nlohmann::json::array({1, 2}));
  EXPECT_THROW(apply_override(j, "novalue"), Error);
}

TEST(World, SameSeedSameWorld) {
  const auto spec = spec_from_json({{"num_verbs", 3}, {"num_objects", 2}, {"d", 8},
                                    {"n_train", 50}, {"n_test", 20}});
  const auto a = make_world(spec, 4), b = make_world(spec, 4), c = make_world(spec, 5);
  EXPECT_EQ(dataset_to_json(a.dataset, "t").dump(), dataset_to_json(b.dataset, "t").dump());
  EXPECT_NE(dataset_to_json(a.dataset, "t").dump(), dataset_to_json(c.dataset, "t").dump());
  EXPECT_EQ(a.embeddings.rows(), b.embeddings.rows());
}

TEST(Wins, MissingValuesCountForNeitherSide) {
  ComparisonReport r;
  r.arms = {{"a", {{0, 0.5, {{1, 0.2}}}, {1, 0.6, {{1, std::nullopt}}}}},
            {"b", {{0, 0.4, {{1, 0.3}}}, {1, 0.7, {{1, 0.1}}}}}};
  const auto all = pairwise_wins(r, "map_all");
  EXPECT_EQ(all[0][1], 1);
  EXPECT_EQ(all[1][0], 1);
  const auto few = pairwise_wins(r, "few@1");
  EXPECT_EQ(few[0][1], 0);
  EXPECT_EQ(few[1][0], 1);
}

TEST_F(CliTest, TrainWritesRunDirectories) {
  const auto cfg = write_config({{"seeds", {0, 1}}});
  const auto r = run("train --config \"" + cfg.string() + "\" --out \"" + (root_ / "out").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  for (const char* seed : {"seed_0", "seed_1"}) {
    for (const char* f : {"config.json", "checkpoint.json", "training_log.csv", "eval.json", "eval.csv"}) {
      EXPECT_TRUE(fs::exists(root_ / "out" / seed / "run" / f)) << seed << "/" << f;
    }
  }
  EXPECT_TRUE(fs::exists(root_ / "out" / "report.json"));
  const auto log = slurp(root_ / "out" / "seed_0" / "run" / "training_log.csv");
  EXPECT_EQ(log.rfind("epoch,mean_loss,val_mAP,lr\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const auto ckpt = load_checkpoint((root_ / "out" / "seed_0" / "run" / "checkpoint.json").string());
  EXPECT_EQ(ckpt.num_classes(), 6u);
}

TEST_F(CliTest, CompareTwoArmsFiveSeeds) {
  const auto cfg = write_config({{"seeds", {0, 1, 2, 3, 4}},
                                 {"arms", {{{"name", "lse"}, {"loss_name", "lse_sign"}},
                                           {{"name", "bce"}, {"loss_name", "bce"}}}}});
  const auto r = run("compare --config \"" + cfg.string() + "\" --out \"" + (root_ / "out").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto report = read_json_file((root_ / "out" / "report.json").string());
  ASSERT_EQ(report.at("arms").size(), 2u);
  std::size_t values = 0;
  for (const auto& arm : report.at("arms")) values += arm.at("runs").size();
  EXPECT_EQ(values, 10u);
  EXPECT_TRUE(report.at("wins").at("map_all").at("lse").contains("bce"));
  const auto summary = slurp(root_ / "out" / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 11);
}

TEST_F(CliTest, CompareWithoutArmsFails) {
  const auto cfg = write_config({});
  const auto r = run("compare --config \"" + cfg.string() + "\" --out \"" + (root_ / "out").string() + "\"");
  EXPECT_NE(r.status, 0);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  const auto cfg = write_config({{"seeds", {3}}});
  for (const char* out : {"a", "b"}) {
    const auto r = run("ablate-init --config \"" + cfg.string() + "\" --out \"" + (root_ / out).string() + "\"");
    ASSERT_EQ(r.status, 0) << r.err;
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_ / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root_ / "a");
    EXPECT_EQ(slurp(entry.path()), slurp(root_ / "b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10u);
}

TEST_F(CliTest, AblateGammaTable) {
  const auto cfg = write_config({{"seeds", {0, 1}}});
  const auto r = run("ablate-gamma --config \"" + cfg.string() + "\" --out \"" +
                     (root_ / "out").string() + "\" --gammas 50,100,500");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rows = slurp(root_ / "out" / "gamma_table.csv");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 7);
  const auto means = slurp(root_ / "out" / "gamma_means.csv");
  EXPECT_EQ(std::count(means.begin(), means.end(), '\n'), 4);
  EXPECT_TRUE(fs::exists(root_ / "out" / "seed_1" / "gamma_500" / "checkpoint.json"));
}

TEST_F(CliTest, AblateGammaRejectsNonPositive) {
  const auto cfg = write_config({});
  const auto r = run("ablate-gamma --config \"" + cfg.string() + "\" --out \"" +
                     (root_ / "out").string() + "\" --gammas 100,0");
  EXPECT_EQ(r.status, 1);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err.at("error").at("subcommand"), "ablate-gamma");
  EXPECT_NE(err.at("error").at("message").get<std::string>().find("non-positive"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreStructuredJson) {
  const auto r = run("train --config \"" + (root_ / "missing.json").string() + "\" --out \"" +
                     (root_ / "out").string() + "\"");
  EXPECT_EQ(r.status, 1);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err.at("error").at("subcommand"), "train");
  EXPECT_FALSE(err.at("error").at("kind").get<std::string>().empty());

  const auto bad = write_config({{"loss_name", "hinge"}});
  const auto r2 = run("train --config \"" + bad.string() + "\" --out \"" + (root_ / "out").string() + "\"");
  EXPECT_EQ(r2.status, 1);
  EXPECT_NE(r2.err.find("hinge"), std::string::npos);

  const auto r3 = run("train --out x");
  EXPECT_EQ(r3.status, 2);
  EXPECT_EQ(nlohmann::json::parse(r3.err).at("error").at("kind"), "usage");
}

TEST_F(CliTest, OverridesAndSeedsFlags) {
  const auto cfg = write_config({});
  const auto r = run("train --config \"" + cfg.string() + "\" --out \"" + (root_ / "out").string() +
                     "\" --seeds 7,9 --override epochs=1 --override loss_name=focal");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto snap = read_json_file((root_ / "out" / "seed_9" / "run" / "config.json").string());
  EXPECT_EQ(snap.at("epochs"), 1);
  EXPECT_EQ(snap.at("loss_name"), "focal");
  EXPECT_EQ(snap.at("seeds"), nlohmann::json::array({9}));
  EXPECT_FALSE(fs::exists(root_ / "out" / "seed_0"));
}

TEST_F(CliTest, GenDataThenEvalCheckpoint) {
  const auto cfg = write_config({{"seeds", {2}}});
  ASSERT_EQ(run("gen-data --config \"" + cfg.string() + "\" --out \"" + (root_ / "data").string() + "\"").status, 0);
  for (const char* f : {"taxonomy.tsv", "dataset.json", "embeddings.txt", "config.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "data" / "seed_2" / f)) << f;
  }
  const auto ds = load_dataset((root_ / "data" / "seed_2" / "dataset.json").string());
  EXPECT_EQ(ds.train.size(), 120u);
  const auto emb = load_embeddings((root_ / "data" / "seed_2" / "embeddings.txt").string(), 6);
  EXPECT_EQ(emb.dim(), 8u);

  ASSERT_EQ(run("train --config \"" + cfg.string() + "\" --out \"" + (root_ / "run").string() + "\"").status, 0);
  const auto r = run("eval --checkpoint \"" + (root_ / "run" / "seed_2" / "run" / "checkpoint.json").string() +
                     "\" --dataset \"" + (root_ / "data" / "seed_2" / "dataset.json").string() +
                     "\" --out \"" + (root_ / "eval").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  // Same checkpoint and test split as the train run, so the report is identical.
  EXPECT_EQ(slurp(root_ / "eval" / "eval.json"), slurp(root_ / "run" / "seed_2" / "run" / "eval.json"));
}

class DetectEvalTest : public CliTest {
 protected:
  void write_inputs(const nlohmann::json& detections) {
    // Two classes on distinct objects, 2x2 grid, d = 4.
    nlohmann::json tokens = nlohmann::json::array();
    for (int t = 0; t < 5; ++t) tokens.push_back({0.1 * t, 1.0, -0.2 * t, 0.5});
    const nlohmann::json eye = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    write_json_file(root_ / "scenes.json",
                    {{"grid_size", 2},
                     {"d_k", 4},
                     {"attention", {{"query", eye}, {"key", eye}, {"value", eye}}},
                     {"classes", nlohmann::json::array({nlohmann::json::array({"ride", "bicycle"}),
                                                      nlohmann::json::array({"eat", "apple"})})},
                     {"train_counts", {4, 40}},
                     {"scenes", {{{"scene_id", "s1"}, {"tokens", tokens}},
                                 {{"scene_id", "s2"}, {"tokens", tokens}}}}});
    write_json_file(root_ / "gt.json",
                    {{{"scene_id", "s1"}, {"human_box", {0, 0, 0.5, 1}}, {"object_box", {0.5, 0, 1, 1}},
                      {"hoi_class", "ride bicycle"}},
                     {{"scene_id", "s2"}, {"human_box", {0.1, 0.1, 0.4, 0.9}},
                      {"object_box", {0.6, 0.6, 0.9, 0.9}}, {"hoi_class", 1}}});
    write_json_file(root_ / "det.json", detections);
    save_checkpoint((root_ / "ckpt.json").string(),
                    init_random(2, 4, RandomScheme::kXavier, 1, 10.0));
  }
  CliResult detect() {
    return run("detect-eval --gt \"" + (root_ / "gt.json").string() + "\" --detections \"" +
               (root_ / "det.json").string() + "\" --checkpoint \"" + (root_ / "ckpt.json").string() +
               "\" --scenes \"" + (root_ / "scenes.json").string() + "\" --out \"" +
               (root_ / "out").string() + "\"");
  }
};

TEST_F(DetectEvalTest, OracleDetectionsScorePerfectly) {
  write_inputs({{{"scene_id", "s1"}, {"human_box", {0, 0, 0.5, 1}}, {"object_box", {0.5, 0, 1, 1}},
                 {"object_class", "bicycle"}, {"object_probability", 0.9}},
                {{"scene_id", "s2"}, {"human_box", {0.1, 0.1, 0.4, 0.9}},
                 {"object_box", {0.6, 0.6, 0.9, 0.9}}, {"object_class", "apple"}}});
  const auto r = detect();
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rep = read_json_file((root_ / "out" / "detection.json").string());
  EXPECT_EQ(rep.at("full_map"), 1.0);
  EXPECT_EQ(rep.at("rare_map"), 1.0);
  EXPECT_EQ(rep.at("nonrare_map"), 1.0);
}

TEST_F(DetectEvalTest, NoDetectionsScoreZero) {
  write_inputs(nlohmann::json::array());
  const auto r = detect();
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rep = read_json_file((root_ / "out" / "detection.json").string());
  EXPECT_EQ(rep.at("full_map"), 0.0);
  EXPECT_EQ(rep.at("per_class_ap"), nlohmann::json::array({0.0, 0.0}));
}

TEST_F(DetectEvalTest, UnknownSceneIsReported) {
  write_inputs({{{"scene_id", "nope"}, {"human_box", {0, 0, 1, 1}}, {"object_box", {0, 0, 1, 1}},
                 {"object_class", "apple"}}});
  const auto r = detect();
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
}

}  // namespace
}  // namespace hoilab
