#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "satpred/corpus.hpp"

namespace satpred {

enum class NormScheme { zscore, minmax };

std::string_view to_string(NormScheme s);
std::optional<NormScheme> parse_norm_scheme(std::string_view s);

/// How an event log collapses to one number.
struct Pooling {
  enum class Kind { weekly_mean, exp_decay };
  Kind kind = Kind::exp_decay;
  /// Decay rate per day, for exp_decay.
  double decay_per_day = 0.05;
};

/// Collapses an event log observed at `now`. weekly_mean is the mean of the
/// per-ISO-week means; exp_decay weights each event by exp(-rate * age_days).
/// Events after `now` count as age 0. Returns nullopt for an empty log.
std::optional<double> pool_temporal(std::span<const Event> events, const Pooling& pooling, std::int64_t now);

struct FeatureSpec {
  std::string name;
  NormScheme scheme = NormScheme::zscore;
  Pooling pooling;
};

struct BehaviorSchema {
  std::vector<FeatureSpec> features;
  /// Appends the completion status as an ordinal feature plus a one-hot block.
  bool include_completion = true;
  NormScheme completion_scheme = NormScheme::minmax;

  /// Viewing duration, quiz attempts, forum posts, revisit count, completion.
  static BehaviorSchema defaults();

  std::size_t num_features() const { return features.size() + (include_completion ? 1 : 0); }
  /// Values, then missingness indicators, then the completion one-hot.
  std::size_t dim() const { return 2 * num_features() + (include_completion ? 3 : 0); }
  std::vector<std::string> column_names() const;
  std::vector<std::string> feature_names() const;
};

inline constexpr const char* kCompletionFeature = "completion";

/// Raw (pre-normalization) value of one feature, pooled at the review timestamp.
std::optional<double> raw_feature(const ReviewRecord& record, const FeatureSpec& spec);
std::optional<double> completion_level(const ReviewRecord& record);

struct FeatureStats {
  FeatureSpec spec;
  double mean = 0.0;
  double sd = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Statistics fitted on training records only.
struct NormStats {
  std::vector<FeatureStats> features;
  bool include_completion = true;

  std::size_t dim() const { return 2 * features.size() + (include_completion ? 3 : 0); }

  void save(const std::filesystem::path& path) const;
  static NormStats load(const std::filesystem::path& path);
};

NormStats fit_norm_stats(const Dataset& train, const BehaviorSchema& schema);

/// Applies one normalization; degenerate stats (sd = 0 or max = min) give 0
/// and min-max output is clipped to [0, 1].
double normalize_value(double raw, const FeatureStats& stats);

/// Normalized behavioral vector; see BehaviorSchema::dim for the layout. A
/// missing feature has value 0 and indicator 1.
Eigen::VectorXd normalize(const ReviewRecord& record, const NormStats& stats);

}  // namespace satpred
