#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "satpred/app.hpp"
#include "test_util.hpp"

using namespace satpred;
using nlohmann::json;
using satpred::testing::read_file;
using satpred::testing::TempDir;
using satpred::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = app::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// A fast experiment: 300 synthetic reviews, short LDA chains, cheap backbones.
json small_config(const fs::path& out) {
  return json{{"seed", 17},
              {"output_dir", out.string()},
              {"synthetic", {{"n_reviews", 300}, {"n_courses", 12}}},
              {"topics", {{"iterations", 60}, {"burn_in", 40}, {"thin", 5}, {"fold_in_iterations", 20}, {"fold_in_burn_in", 10}}},
              {"embedding", {{"dim", 8}}},
              {"backbones", json::array({"ridge", json{{"preset", "gbrt"}, {"rounds", 20}},
                                         json{{"preset", "mlp"}, {"epochs", 5}, {"layers", {8}}}})},
              {"ablation", {{"backbone", "ridge"}}}};
}

fs::path write_config(const TempDir& dir, const json& cfg, const std::string& name = "cfg.json") {
  const fs::path p = dir / name;
  write_file(p, cfg.dump(2));
  return p;
}

std::vector<std::string> with_config(std::vector<std::string> args, const fs::path& cfg) {
  args.push_back("--config");
  args.push_back(cfg.string());
  return args;
}

void run_stages(const fs::path& cfg) {
  for (const char* stage : {"synth", "ingest", "split", "fit-topics", "embed", "featurize", "train"}) {
    const auto r = run(with_config({stage}, cfg));
    ASSERT_EQ(r.code, app::kExitOk) << stage << ": " << r.err;
  }
}

/// Every regular file under `root`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

}  // namespace

TEST(Cli, StagedPipelineProducesArtifacts) {
  TempDir dir;
  const auto cfg = write_config(dir, small_config(dir / "run"));
  run_stages(cfg);
  const auto r = run(with_config({"report"}, cfg));
  ASSERT_EQ(r.code, app::kExitOk) << r.err;
  for (const char* f : {app::artifact::kResolvedConfig, app::artifact::kReviews, app::artifact::kSplit,
                        app::artifact::kVocab, app::artifact::kTopicModel, app::artifact::kEmbeddings,
                        app::artifact::kNormStats, app::artifact::kTestJson, app::artifact::kPredictions,
                        app::artifact::kDomainJson, app::artifact::kErrorsJson}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "run" / "models" / "ridge.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "models" / "gbrt.json"));
}

TEST(Cli, MissingUpstreamArtifactNamesProducer) {
  TempDir dir;
  const auto cfg = write_config(dir, small_config(dir / "run"));
  const auto r = run(with_config({"train"}, cfg));
  EXPECT_EQ(r.code, app::kExitRuntime);
  EXPECT_NE(r.err.find("satpred featurize"), std::string::npos) << r.err;
  const auto s = run(with_config({"split"}, cfg));
  EXPECT_EQ(s.code, app::kExitRuntime);
  EXPECT_NE(s.err.find("satpred ingest"), std::string::npos) << s.err;
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  TempDir dir;
  json bad = small_config(dir / "run");
  bad["topics"]["k"] = 1;
  EXPECT_EQ(run(with_config({"synth"}, write_config(dir, bad))).code, app::kExitConfig);
  json unknown = small_config(dir / "run");
  unknown["mystery"] = true;
  EXPECT_EQ(run(with_config({"synth"}, write_config(dir, unknown, "u.json"))).code, app::kExitConfig);
  json no_seed = small_config(dir / "run");
  no_seed.erase("seed");
  const auto cfg = write_config(dir, no_seed, "n.json");
  EXPECT_EQ(run(with_config({"synth"}, cfg)).code, app::kExitConfig);
  EXPECT_EQ(run(with_config({"synth", "--seed", "3"}, cfg)).code, app::kExitOk);
  EXPECT_EQ(run({"synth", "--config", (dir / "absent.json").string()}).code, app::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, app::kExitConfig);
  EXPECT_EQ(run({"--help"}).code, app::kExitOk);
}

TEST(Cli, FailedAssertionExitsWithThree) {
  TempDir dir;
  json cfg = small_config(dir / "run");
  cfg["assertions"] = {{"benchmark", json::array({{{"order", {"ridge", "gbrt"}}, {"min_gap", 100.0}}})}};
  const auto p = write_config(dir, cfg);
  ASSERT_EQ(run(with_config({"synth"}, p)).code, app::kExitOk);
  ASSERT_EQ(run(with_config({"ingest"}, p)).code, app::kExitOk);
  const auto r = run(with_config({"benchmark"}, p));
  EXPECT_EQ(r.code, app::kExitAssertion) << r.err;
  EXPECT_TRUE(fs::exists(dir / "run" / app::artifact::kBenchmarkText));
}

TEST(Cli, RerunIsByteIdentical) {
  TempDir dir;
  const auto cfg_a = write_config(dir, small_config(dir / "a"), "a.json");
  const auto cfg_b = write_config(dir, small_config(dir / "b"), "b.json");
  for (const auto& cfg : {cfg_a, cfg_b}) {
    run_stages(cfg);
    for (const char* stage : {"report", "benchmark", "ablate"}) {
      const auto r = run(with_config({stage}, cfg));
      ASSERT_EQ(r.code, app::kExitOk) << stage << ": " << r.err;
    }
  }
  auto a = snapshot(dir / "a");
  auto b = snapshot(dir / "b");
  // Rerunning in place rewrites identical bytes, resolved config included.
  run_stages(cfg_a);
  for (const char* stage : {"report", "benchmark", "ablate"}) ASSERT_EQ(run(with_config({stage}, cfg_a)).code, 0);
  EXPECT_EQ(snapshot(dir / "a"), a);
  ASSERT_EQ(a.size(), b.size());
  for (auto& [name, content] : a) {
    ASSERT_TRUE(b.contains(name)) << name;
    if (name == app::artifact::kResolvedConfig) continue;  // differs only in output_dir
    EXPECT_EQ(content, b[name]) << name;
  }
}

TEST(Cli, IngestReportsRejects) {
  TempDir dir;
  const auto cfg = write_config(dir, small_config(dir / "run"));
  write_file(dir / "in.jsonl",
             R"({"id":"a","course_id":"c","text":"fine course","rating":4})" "\n"
             R"({"id":"b","course_id":"c","rating":4})" "\n"
             R"({"id":"c","course_id":"c","text":"ok","rating":9})" "\n");
  const auto r = run(with_config({"ingest", "--input", (dir / "in.jsonl").string()}, cfg));
  ASSERT_EQ(r.code, app::kExitOk) << r.err;
  const auto rejects = read_file(dir / "run" / app::artifact::kRejects);
  EXPECT_EQ(std::count(rejects.begin(), rejects.end(), '\n'), 2);
  const auto reviews = read_file(dir / "run" / app::artifact::kReviews);
  EXPECT_EQ(std::count(reviews.begin(), reviews.end(), '\n'), 1);
}
