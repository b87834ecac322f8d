/*
 * Copyright 2026 The HetSNGP Authors.
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

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetsngp/cli.hpp"

namespace hetsngp {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("hetsngp_cli_" + std::string(info->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Writes a small, fast config and returns its path.
  fs::path write_config(const std::string& name, const std::string& variant,
                        const std::string& dataset, const std::string& extra = "") {
    Json j = Json::parse(R"({
      "net": {"hidden_dim": 32, "num_residual_blocks": 2, "output_dim": 32},
      "rff": {"num_features": 128},
      "train": {"epochs": 15, "learning_rate": 0.2},
      "predict": {"mc_samples": 50},
      "seed": 3
    })");
    j["variant"] = variant;
    j["dataset"] = Json::parse(dataset);
    j["output_dir"] = (root_ / name).string();
    if (!extra.empty()) j.merge_patch(Json::parse(extra));
    fs::path p = root_ / (name + ".json");
    spit(p, j.dump(2));
    return p;
  }

  static std::string moons() {
    return R"({"generator": "two_moons", "params": {"n": 200, "noise_sd": 0.1}, "seed": 1,
               "test_fraction": 0.2})";
  }
  static std::string mixture() {
    return R"({"generator": "gaussian_mixture", "params": {"n_per_class": 60, "ood_n": 40},
               "seed": 2, "test_fraction": 0.3})";
  }

  int train(const fs::path& config) {
    CliOptions o;
    o.config_path = config.string();
    return cmd_train(o, out_, err_);
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, TrainWritesArtifactsAndEvalMatchesTrainAccuracy) {
  fs::path cfg = write_config("run", "sngp", moons());
  ASSERT_EQ(train(cfg), exit_code::kOk) << err_.str();
  fs::path dir = root_ / "run";
  ASSERT_TRUE(fs::exists(dir / "checkpoint.bin"));
  std::string log = slurp(dir / "train_log.csv");
  EXPECT_EQ(log.rfind("epoch,loss,train_acc\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 16);
  Json manifest = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["artifacts"]["checkpoint"]["hash"],
            git_blob_hash(slurp(dir / "checkpoint.bin")));
  EXPECT_EQ(manifest["config_hash"].get<std::string>().size(), 40u);

  CliOptions e;
  e.checkpoint = (dir / "checkpoint.bin").string();
  ASSERT_EQ(cmd_eval(e, out_, err_), exit_code::kOk) << err_.str();
  Json report = Json::parse(slurp(dir / "eval_report.json"));
  EXPECT_NEAR(report["accuracy"].get<double>(),
              manifest["train_report"]["final_train_accuracy"].get<double>(), 1e-12);
  EXPECT_EQ(report["n"].get<int>(), 160);
  for (const char* key : {"accuracy", "nll", "ece", "n"}) EXPECT_TRUE(report.contains(key));
}

TEST_F(CliTest, GitBlobHashMatchesGit) {
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_F(CliTest, UnknownKeyIsConfigErrorNamingTheKey) {
  fs::path cfg = write_config("bad", "sngp", moons(), R"({"train": {"epochz": 3}})");
  EXPECT_EQ(train(cfg), exit_code::kConfig);
  EXPECT_NE(err_.str().find("train.epochz"), std::string::npos) << err_.str();
}

TEST_F(CliTest, ConfigValidationErrors) {
  EXPECT_EQ(train(write_config("e0", "sngp", moons(), R"({"train": {"epochs": 0}})")),
            exit_code::kConfig);
  EXPECT_EQ(train(write_config("v", "gp", moons())), exit_code::kConfig);
  EXPECT_EQ(train(write_config("t", "sngp", moons(), R"({"train": {"epochs": "ten"}})")),
            exit_code::kConfig);
  spit(root_ / "broken.json", "{ not json");
  CliOptions o;
  o.config_path = (root_ / "broken.json").string();
  EXPECT_EQ(cmd_train(o, out_, err_), exit_code::kConfig);
  o.config_path.clear();
  EXPECT_EQ(cmd_train(o, out_, err_), exit_code::kConfig);
}

TEST_F(CliTest, RunConfigJsonRoundTrip) {
  RunConfig rc = load_run_config(write_config("rt", "hetsngp", mixture()).string());
  Json j = run_config_to_json(rc);
  RunConfig back = run_config_from_json(j);
  EXPECT_EQ(run_config_to_json(back), j);
  EXPECT_EQ(back.model.variant, VariantKind::kHetSngp);
  EXPECT_EQ(back.dataset.mixture.n_per_class, 60);
}

TEST_F(CliTest, DivergenceExitCode) {
  fs::path cfg = write_config("div", "deterministic", moons(),
                              R"({"train": {"learning_rate": 1e6, "epochs": 30}})");
  EXPECT_EQ(train(cfg), exit_code::kDiverged);
}

TEST_F(CliTest, CheckpointRoundTripIsByteExact) {
  ASSERT_EQ(train(write_config("ck", "hetsngp", moons())), exit_code::kOk) << err_.str();
  const std::string bytes = slurp(root_ / "ck" / "checkpoint.bin");
  Checkpoint ck = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(ck), bytes);
  EXPECT_EQ(ck.dims.input_dim, 2);
  EXPECT_TRUE(ck.model.gp().finalized());
  EXPECT_TRUE(ck.model.het().has_value());
}

TEST_F(CliTest, CorruptedOrMissingCheckpointExitsFour) {
  ASSERT_EQ(train(write_config("cor", "sngp", moons())), exit_code::kOk);
  fs::path good = root_ / "cor" / "checkpoint.bin";
  std::string bytes = slurp(good);

  CliOptions e;
  e.out_dir = (root_ / "evals").string();
  auto eval_bytes = [&](const std::string& b) {
    spit(root_ / "x.bin", b);
    e.checkpoint = (root_ / "x.bin").string();
    return cmd_eval(e, out_, err_);
  };
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x20;
  EXPECT_EQ(eval_bytes(flipped), exit_code::kCheckpoint);
  EXPECT_EQ(eval_bytes(bytes.substr(0, bytes.size() - 9)), exit_code::kCheckpoint);
  EXPECT_EQ(eval_bytes("HSNGPCKP"), exit_code::kCheckpoint);
  EXPECT_EQ(eval_bytes(""), exit_code::kCheckpoint);

  // A newer version with a valid checksum is still rejected.
  std::string v2 = bytes.substr(0, bytes.size() - 32);
  v2[8] = 2;
  std::string hex = sha256_hex(v2);
  std::string raw;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    raw.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  EXPECT_EQ(eval_bytes(v2 + raw), exit_code::kCheckpoint);
  EXPECT_NE(err_.str().find("version"), std::string::npos);

  e.checkpoint = (root_ / "missing.bin").string();
  EXPECT_EQ(cmd_eval(e, out_, err_), exit_code::kCheckpoint);
}

TEST_F(CliTest, DeterministicEvalIgnoresMcSamples) {
  ASSERT_EQ(train(write_config("det", "deterministic", moons())), exit_code::kOk);
  CliOptions e;
  e.checkpoint = (root_ / "det" / "checkpoint.bin").string();
  e.out_dir = (root_ / "a").string();
  e.mc_samples = 1;
  ASSERT_EQ(cmd_eval(e, out_, err_), exit_code::kOk);
  e.out_dir = (root_ / "b").string();
  e.mc_samples = 777;
  ASSERT_EQ(cmd_eval(e, out_, err_), exit_code::kOk);
  EXPECT_EQ(slurp(root_ / "a" / "eval_report.json"), slurp(root_ / "b" / "eval_report.json"));
}

TEST_F(CliTest, OodReportAndDegenerateCases) {
  ASSERT_EQ(train(write_config("ood", "hetsngp", mixture(), R"({"train": {"epochs": 150}})")),
            exit_code::kOk)
      << err_.str();
  CliOptions o;
  o.checkpoint = (root_ / "ood" / "checkpoint.bin").string();
  ASSERT_EQ(cmd_ood(o, out_, err_), exit_code::kOk) << err_.str();
  Json r = Json::parse(slurp(root_ / "ood" / "ood_report.json"));
  EXPECT_EQ(r["n_id"].get<int>(), 54);
  EXPECT_EQ(r["n_ood"].get<int>(), 40);
  EXPECT_GE(r["auroc"].get<double>(), 0.9);

  // The same rows on both sides are indistinguishable.
  Dataset ds = gaussian_mixture_with_ood(200, 3, 0, 8.0, 5);
  spit(root_ / "same.csv", to_csv(ds));
  o.id_data = o.ood_data = (root_ / "same.csv").string();
  o.out_dir = (root_ / "same").string();
  ASSERT_EQ(cmd_ood(o, out_, err_), exit_code::kOk) << err_.str();
  Json same = Json::parse(slurp(root_ / "same" / "ood_report.json"));
  EXPECT_NEAR(same["auroc"].get<double>(), 0.5, 0.05);  // about 3 standard errors at n = 600

  spit(root_ / "empty.csv", "x0,x1,label\n");
  o.ood_data = (root_ / "empty.csv").string();
  EXPECT_EQ(cmd_ood(o, out_, err_), exit_code::kInput);
  spit(root_ / "wide.csv", "x0,x1,x2,label\n1,2,3,0\n");
  o.ood_data = (root_ / "wide.csv").string();
  EXPECT_EQ(cmd_ood(o, out_, err_), exit_code::kInput);
  o.ood_data = (root_ / "nope.csv").string();
  EXPECT_EQ(cmd_ood(o, out_, err_), exit_code::kInput);
}

TEST_F(CliTest, GridArithmeticAndDimensionCheck) {
  ASSERT_EQ(train(write_config("grid", "sngp", moons())), exit_code::kOk);
  CliOptions o;
  o.checkpoint = (root_ / "grid" / "checkpoint.bin").string();
  o.grid = GridSpec{0.0, 1.0, 0.0, 1.0, 3};
  ASSERT_EQ(cmd_grid(o, out_, err_), exit_code::kOk);
  std::istringstream csv(slurp(root_ / "grid" / "grid.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "x,y,max_prob,pred_label");
  std::vector<std::pair<double, double>> coords;
  while (std::getline(csv, line)) {
    double x, y, p;
    int label;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &x, &y, &p, &label), 4);
    EXPECT_GE(p, 0.5);
    EXPECT_LE(p, 1.0);
    coords.emplace_back(x, y);
  }
  ASSERT_EQ(coords.size(), 9u);
  const double v[3] = {0.0, 0.5, 1.0};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(coords[r * 3 + c].first, v[c]);
      EXPECT_EQ(coords[r * 3 + c].second, v[r]);
    }
  }

  Dataset three_d;
  three_d.num_classes = 2;
  three_d.x = Matrix::Random(40, 3);
  for (int i = 0; i < 40; ++i) three_d.y.push_back(three_d.x(i, 0) > 0);
  spit(root_ / "3d.csv", to_csv(three_d));
  fs::path cfg = write_config(
      "g3", "sngp",
      R"({"generator": "csv", "params": {"path": ")" + (root_ / "3d.csv").string() + R"("}})",
      R"({"train": {"epochs": 2}})");
  ASSERT_EQ(train(cfg), exit_code::kOk) << err_.str();
  o.checkpoint = (root_ / "g3" / "checkpoint.bin").string();
  EXPECT_EQ(cmd_grid(o, out_, err_), exit_code::kGridDim);
}

TEST_F(CliTest, ReportsAreReproducible) {
  fs::path cfg = write_config("rep", "hetsngp", moons());
  ASSERT_EQ(train(cfg), exit_code::kOk);
  const std::string ck1 = slurp(root_ / "rep" / "checkpoint.bin");
  const std::string man1 = slurp(root_ / "rep" / "manifest.json");
  const std::string log1 = slurp(root_ / "rep" / "train_log.csv");
  ASSERT_EQ(train(cfg), exit_code::kOk);
  EXPECT_EQ(slurp(root_ / "rep" / "checkpoint.bin"), ck1);
  EXPECT_EQ(slurp(root_ / "rep" / "manifest.json"), man1);
  EXPECT_EQ(slurp(root_ / "rep" / "train_log.csv"), log1);
}

TEST_F(CliTest, SeedOverrideChangesRun) {
  fs::path cfg = write_config("seed", "sngp", moons());
  ASSERT_EQ(train(cfg), exit_code::kOk);
  const std::string a = slurp(root_ / "seed" / "checkpoint.bin");
  CliOptions o;
  o.config_path = cfg.string();
  o.seed = 99;
  ASSERT_EQ(cmd_train(o, out_, err_), exit_code::kOk);
  EXPECT_NE(slurp(root_ / "seed" / "checkpoint.bin"), a);
  Json m = Json::parse(slurp(root_ / "seed" / "manifest.json"));
  EXPECT_EQ(m["config"]["seed"].get<int>(), 99);
}

TEST_F(CliTest, EnsembleOfOneEqualsEval) {
  fs::path cfg = write_config("ens", "heteroscedastic", moons());
  CliOptions o;
  o.config_path = cfg.string();
  o.members = 1;
  o.subset = "test";
  ASSERT_EQ(cmd_ensemble(o, out_, err_), exit_code::kOk) << err_.str();
  Json ens = Json::parse(slurp(root_ / "ens" / "ensemble_report.json"));

  CliOptions e;
  e.checkpoint = (root_ / "ens" / "member_0" / "checkpoint.bin").string();
  e.subset = "test";
  e.out_dir = (root_ / "single").string();
  ASSERT_EQ(cmd_eval(e, out_, err_), exit_code::kOk);
  Json single = Json::parse(slurp(root_ / "single" / "eval_report.json"));
  EXPECT_EQ(ens["ensemble"], single);

  o.members = 0;
  EXPECT_EQ(cmd_ensemble(o, out_, err_), exit_code::kConfig);
}

TEST_F(CliTest, EnsembleNllBelowMeanMemberNll) {
  fs::path cfg = write_config("ens4", "hetsngp", moons());
  CliOptions o;
  o.config_path = cfg.string();
  o.members = 3;
  o.subset = "test";
  ASSERT_EQ(cmd_ensemble(o, out_, err_), exit_code::kOk) << err_.str();
  Json r = Json::parse(slurp(root_ / "ens4" / "ensemble_report.json"));
  EXPECT_EQ(r["members"].size(), 3u);
  EXPECT_LE(r["ensemble"]["nll"].get<double>(), r["mean_member_nll"].get<double>());
  Json m = Json::parse(slurp(root_ / "ens4" / "ensemble_manifest.json"));
  EXPECT_EQ(m["members"][2]["seed"].get<int>(), 5);
  EXPECT_TRUE(fs::exists(root_ / "ens4" / "member_2" / "checkpoint.bin"));
}

TEST_F(CliTest, BenchWithOneSeedReportsZeroStderr) {
  auto tiny = [&](const std::string& name, const std::string& ds) {
    return write_config(name, "hetsngp", ds, R"({"train": {"epochs": 3}})").string();
  };
  CliOptions o;
  o.config_path = tiny("circ", R"({"generator": "noisy_circles", "params": {"n_per_class": 30}})");
  o.ood_config = tiny("mix", mixture());
  o.moons_config = tiny("moon", moons());
  o.seed_count = 1;
  o.out_dir = (root_ / "bench").string();
  ASSERT_EQ(cmd_bench_synthetic(o, out_, err_), exit_code::kOk) << err_.str();
  Json s = Json::parse(slurp(root_ / "bench" / "bench_summary.json"));
  ASSERT_EQ(s["label_noise"].size(), 4u);
  for (const auto& row : s["label_noise"]) {
    EXPECT_EQ(row["stderr"].get<double>(), 0.0);
    EXPECT_EQ(row["accuracies"].size(), 1u);
  }
  EXPECT_EQ(s["mixture_ood"].size(), 4u);
  EXPECT_EQ(s["moons_far_field"].size(), 4u);
  std::string table = slurp(root_ / "bench" / "bench_table.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
  o.seed_count = 0;
  EXPECT_EQ(cmd_bench_synthetic(o, out_, err_), exit_code::kConfig);
}

TEST_F(CliTest, GridPointsHelper) {
  Matrix p = grid_points(GridSpec{-1.0, 1.0, 2.0, 4.0, 2});
  ASSERT_EQ(p.rows(), 4);
  EXPECT_EQ(p(1, 0), 1.0);
  EXPECT_EQ(p(1, 1), 2.0);
  EXPECT_EQ(p(2, 0), -1.0);
  EXPECT_EQ(p(2, 1), 4.0);
  Matrix one = grid_points(GridSpec{0.0, 1.0, 5.0, 6.0, 1});
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one(0, 1), 5.0);
}

#ifdef HETSNGP_BIN
TEST_F(CliTest, BinaryParsesArguments) {
  const std::string bin = HETSNGP_BIN;
  auto run = [&](const std::string& args) {
    int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), exit_code::kConfig);
  EXPECT_EQ(run("frobnicate"), exit_code::kConfig);
  EXPECT_EQ(run("eval"), exit_code::kConfig);  // --checkpoint is required
  EXPECT_EQ(run("eval --checkpoint " + (root_ / "none.bin").string()), exit_code::kCheckpoint);
  fs::path cfg = write_config("bin", "deterministic", moons(), R"({"train": {"epochs": 2}})");
  EXPECT_EQ(run("train --config " + cfg.string()), exit_code::kOk);
  EXPECT_EQ(run("--mc-samples 0 eval --checkpoint " + (root_ / "bin" / "checkpoint.bin").string()),
            exit_code::kConfig);
}
#endif

}  // namespace
}  // namespace hetsngp
