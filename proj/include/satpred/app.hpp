#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "satpred/error.hpp"

namespace satpred::app {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitAssertion = 3 };

/// File names inside an output directory.
namespace artifact {
inline constexpr const char* kResolvedConfig = "config.resolved.json";
inline constexpr const char* kSynthetic = "synthetic.jsonl";
inline constexpr const char* kLatents = "latents.jsonl";
inline constexpr const char* kReviews = "reviews.jsonl";
inline constexpr const char* kRejects = "rejects.jsonl";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kVocab = "vocab.json";
inline constexpr const char* kTopicModel = "topic_model.json";
inline constexpr const char* kEmbeddings = "embeddings.emb";
inline constexpr const char* kNormStats = "norm_stats.json";
inline constexpr const char* kDesignTrain = "design_train.csv";
inline constexpr const char* kDesignVal = "design_val.csv";
inline constexpr const char* kDesignTest = "design_test.csv";
inline constexpr const char* kDropped = "dropped.jsonl";
inline constexpr const char* kModelsDir = "models";
inline constexpr const char* kBenchmarkText = "benchmark.txt";
inline constexpr const char* kBenchmarkJson = "benchmark.json";
inline constexpr const char* kAblationText = "ablation.txt";
inline constexpr const char* kAblationJson = "ablation.json";
inline constexpr const char* kTestText = "test_report.txt";
inline constexpr const char* kTestJson = "test_report.json";
inline constexpr const char* kDomainText = "domain_report.txt";
inline constexpr const char* kDomainJson = "domain_report.json";
inline constexpr const char* kPredictions = "predictions_test.csv";
inline constexpr const char* kErrorsText = "top_errors.txt";
inline constexpr const char* kErrorsJson = "top_errors.json";
}  // namespace artifact

/// An upstream artifact is absent; the message names the command that writes it.
class MissingArtifact : public Error {
public:
  MissingArtifact(const std::filesystem::path& path, const std::string& producer)
      : Error("missing " + path.string() + "; run `satpred " + producer + "` first"), producer(producer) {}
  std::string producer;
};

/// Parses and runs one command. Never throws; returns an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// Same, without the program name: {"benchmark", "--config", "x.json"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace satpred::app
