#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "satpred/behavior.hpp"
#include "satpred/corpus.hpp"
#include "satpred/embed.hpp"
#include "satpred/topics.hpp"

namespace satpred {

enum class Segment { topic, sentiment, behavior };

/// Which modality segments enter the fused vector.
struct Mask {
  bool topic = true;
  bool sentiment = true;
  bool behavior = true;

  static Mask full() { return {}; }
  static Mask only(Segment s);
  static Mask without(Segment s);
  /// From names {"topic", "sentiment", "behavior"}; throws ConfigError on unknown names or an empty set.
  static Mask from_names(const std::vector<std::string>& names);

  bool contains(Segment s) const;
  bool empty() const { return !topic && !sentiment && !behavior; }
  /// "full", "-topic", "sentiment", "topic+behavior", ...
  std::string name() const;
  std::vector<std::string> names() const;

  bool operator==(const Mask&) const = default;
};

struct SegmentRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index size() const { return end - begin; }
  bool operator==(const SegmentRange&) const = default;
};

/// z = [theta; h; b] with masked segments skipped.
struct FusedVector {
  Eigen::VectorXd z;
  SegmentRange topic, sentiment, behavior;

  SegmentRange range(Segment s) const;
  auto segment(Segment s) const { return z.segment(range(s).begin, range(s).size()); }
};

/// Unmasked inputs must be non-null; masked ones are ignored.
FusedVector fuse(const TopicDistribution* theta, const Embedding* h, const Eigen::VectorXd* b, const Mask& mask);

/// Stacked fused vectors with targets, rows sorted by review id.
struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  Mask mask;
  SegmentRange topic, sentiment, behavior;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
  SegmentRange range(Segment s) const;

  /// Column subset for a narrower mask; throws ConfigError if `sub` asks for a segment this matrix lacks.
  DesignMatrix restrict(const Mask& sub) const;

  /// Header "id,y,<columns>", values printed with 17 significant digits so
  /// read_csv restores every bit.
  void write_csv(const std::filesystem::path& path) const;
  static DesignMatrix read_csv(const std::filesystem::path& path);
};

/// Fitted component models used to featurize reviews. Sources for masked
/// segments may be left null.
struct FeatureSources {
  const TopicModel* topic_model = nullptr;
  const Vocabulary* vocab = nullptr;
  const Tokenizer* tokenizer = nullptr;
  /// Per-review fold-in seed is mix_seed(fold_in.seed, fnv1a(review id)).
  FoldInOptions fold_in;
  const EmbeddingStore* embeddings = nullptr;
  const NormStats* norm_stats = nullptr;
  std::vector<std::string> topic_labels;
};

struct DroppedRow {
  std::string id;
  std::string reason;
};

struct AssembleResult {
  DesignMatrix design;
  std::vector<DroppedRow> dropped;
};

/// One row per review, sorted by id. Rows whose unmasked components cannot be
/// resolved are dropped and reported; more than `max_drop_fraction` dropped is
/// a DataError.
AssembleResult assemble_matrix(const Dataset& dataset, const FeatureSources& sources, const Mask& mask,
                               double max_drop_fraction = 0.1);

/// Per-review topic mixture with the per-id fold-in seed.
TopicDistribution review_theta(const ReviewRecord& record, const FeatureSources& sources);

}  // namespace satpred
