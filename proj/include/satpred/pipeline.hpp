#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "satpred/behavior.hpp"
#include "satpred/corpus.hpp"
#include "satpred/embed.hpp"
#include "satpred/fusion.hpp"
#include "satpred/topics.hpp"

namespace satpred {

struct TopicStageOptions {
  std::uint32_t min_doc_freq = 2;
  bool pool_by_course = true;
  LdaOptions lda;
  std::vector<std::string> labels;
};

struct TopicStage {
  Vocabulary vocab;
  TopicModel model;
};

/// Builds the vocabulary and fits LDA on the training split only.
TopicStage fit_topic_stage(const Dataset& train, const Tokenizer& tokenizer, const TopicStageOptions& options);

struct FeaturizeOptions {
  BehaviorSchema behavior = BehaviorSchema::defaults();
  FoldInOptions fold_in;
  double max_drop_fraction = 0.1;
  Mask mask = Mask::full();
};

struct Featurized {
  NormStats norm;
  AssembleResult train, val, test;
};

/// Fits normalization statistics on the training split and assembles the
/// three design matrices under `options.mask`.
Featurized featurize(const DatasetSplit& split, const Tokenizer& tokenizer, const TopicStage& topics,
                     const EmbeddingStore& embeddings, const FeaturizeOptions& options);

/// Every embedding the dataset needs, in id order.
std::vector<EmbedItem> embed_items(const Dataset& dataset);

/// Everything downstream evaluation needs, fitted on the training split.
struct PreparedData {
  DatasetSplit split;
  Tokenizer tokenizer;
  TopicStage topics;
  EmbeddingStore embeddings;
  Featurized features;

  const DesignMatrix& train() const { return features.train.design; }
  const DesignMatrix& val() const { return features.val.design; }
  const DesignMatrix& test() const { return features.test.design; }
};

struct PipelineOptions {
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
  TopicStageOptions topics;
  FeaturizeOptions featurize;
  std::size_t embed_batch_size = 64;
};

/// split -> topics -> embeddings (via `provider`) -> featurize.
PreparedData prepare(const Dataset& dataset, const Tokenizer& tokenizer, EmbeddingProvider& provider,
                     const PipelineOptions& options);

}  // namespace satpred
