#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "satpred/behavior.hpp"
#include "satpred/corpus.hpp"
#include "satpred/embed.hpp"
#include "satpred/eval.hpp"
#include "satpred/fusion.hpp"
#include "satpred/pipeline.hpp"
#include "satpred/regress/model.hpp"
#include "satpred/synthetic.hpp"

namespace satpred {

struct EmbeddingConfig {
  enum class Provider { test, file, http };
  Provider provider = Provider::test;
  std::uint32_t dim = 768;
  std::uint64_t seed = 0;
  /// Embedding store for the file provider.
  std::filesystem::path path;
  /// Base URL for the http provider; empty means EMBED_ENDPOINT.
  std::string endpoint;
  std::size_t batch_size = 64;
  std::size_t window = 4;

  std::unique_ptr<EmbeddingProvider> make_provider() const;
};

/// One declarative experiment. Every seed is resolved at load time from the
/// top-level seed unless the document pins it.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  std::optional<std::filesystem::path> dataset_path;
  InputFormat dataset_format = InputFormat::jsonl;
  std::optional<std::filesystem::path> stopwords_path;

  SyntheticSpec synthetic;

  SplitRatios ratios;
  std::uint64_t split_seed = 0;

  TopicStageOptions topics;
  FoldInOptions fold_in;

  EmbeddingConfig embedding;

  BehaviorSchema behavior = BehaviorSchema::defaults();
  double max_drop_fraction = 0.1;
  bool clamp_predictions = false;

  std::vector<RegressorSpec> backbones;
  std::vector<Mask> masks;
  std::string ablation_backbone = "mlp";

  std::size_t top_errors = 10;
  std::size_t domain_floor = 30;

  std::vector<OrderingAssertion> benchmark_assertions;
  std::vector<OrderingAssertion> ablation_assertions;

  /// Unknown keys anywhere are a ConfigError. `seed_override` replaces the
  /// top-level seed before derivation; `out_override` replaces output_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = {},
                                    std::optional<std::filesystem::path> out_override = {});
  static ExperimentConfig load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {},
                               std::optional<std::filesystem::path> out_override = {});

  /// Fully resolved document; from_json(to_json()) reproduces this config.
  nlohmann::json to_json() const;

  Tokenizer tokenizer() const;
  PipelineOptions pipeline_options() const;
  FeaturizeOptions featurize_options() const;
  /// The configured backbone of that name, else the preset of that name with
  /// a derived seed; ConfigError when neither exists.
  RegressorSpec backbone(const std::string& name) const;
};

/// "full", "-topic", "sentiment", "topic+behavior" or a JSON array of names.
Mask parse_mask(const nlohmann::json& j);

}  // namespace satpred
