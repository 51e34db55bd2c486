#include "satpred/pipeline.hpp"

#include <algorithm>

#include "satpred/error.hpp"

namespace satpred {

TopicStage fit_topic_stage(const Dataset& train, const Tokenizer& tokenizer, const TopicStageOptions& options) {
  if (train.empty()) throw DataError("cannot fit topics on an empty training split");
  TopicStage stage;
  stage.vocab = build_vocab(train, tokenizer, options.min_doc_freq);
  std::vector<TokenizedDoc> docs;
  docs.reserve(train.size());
  for (const auto& r : train) docs.push_back(tokenize(tokenizer, r.text, stage.vocab, r.id));
  const std::vector<TokenizedDoc> corpus = options.pool_by_course ? pool_by_course(docs, train) : std::move(docs);
  stage.model = fit_lda(corpus, stage.vocab, options.lda);
  if (!options.labels.empty()) {
    if (static_cast<Eigen::Index>(options.labels.size()) != stage.model.num_topics()) {
      throw ConfigError("topic labels must name every topic (" + std::to_string(stage.model.num_topics()) + ")");
    }
    stage.model.labels = options.labels;
  }
  return stage;
}

Featurized featurize(const DatasetSplit& split, const Tokenizer& tokenizer, const TopicStage& topics,
                     const EmbeddingStore& embeddings, const FeaturizeOptions& options) {
  Featurized out;
  FeatureSources src;
  if (options.mask.behavior) {
    out.norm = fit_norm_stats(split.train, options.behavior);
    src.norm_stats = &out.norm;
  }
  if (options.mask.topic) {
    src.topic_model = &topics.model;
    src.vocab = &topics.vocab;
    src.tokenizer = &tokenizer;
    src.fold_in = options.fold_in;
    src.topic_labels = topics.model.labels;
  }
  if (options.mask.sentiment) src.embeddings = &embeddings;
  out.train = assemble_matrix(split.train, src, options.mask, options.max_drop_fraction);
  out.val = split.val.empty() ? AssembleResult{} : assemble_matrix(split.val, src, options.mask, options.max_drop_fraction);
  out.test = assemble_matrix(split.test, src, options.mask, options.max_drop_fraction);
  return out;
}

std::vector<EmbedItem> embed_items(const Dataset& dataset) {
  std::vector<EmbedItem> items;
  items.reserve(dataset.size());
  for (const auto& r : dataset) items.push_back({r.id, r.text});
  std::sort(items.begin(), items.end(), [](const EmbedItem& a, const EmbedItem& b) { return a.id < b.id; });
  return items;
}

PreparedData prepare(const Dataset& dataset, const Tokenizer& tokenizer, EmbeddingProvider& provider,
                     const PipelineOptions& options) {
  PreparedData data;
  data.split = split_dataset(dataset, options.ratios, options.split_seed);
  data.tokenizer = tokenizer;
  data.topics = fit_topic_stage(data.split.train, tokenizer, options.topics);
  const auto items = embed_items(dataset);
  data.embeddings = encode_batch(provider, items, options.embed_batch_size);
  data.features = featurize(data.split, tokenizer, data.topics, data.embeddings, options.featurize);
  return data;
}

}  // namespace satpred
