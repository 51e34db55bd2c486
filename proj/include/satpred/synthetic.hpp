#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "satpred/corpus.hpp"

namespace satpred {

/// Planted-signal review generator. Each review mixes six topics with
/// per-topic vocabularies; sentiment is carried by intensifier or negator
/// phrases around shared praise words; behavior logs are driven by an
/// engagement latent. rating = clip(3 + w_t t + w_s s + w_b e + sigma eps, 1, 5)
/// with each latent standardized over the dataset.
struct SyntheticSpec {
  std::size_t n_reviews = 5000;
  std::size_t n_courses = 60;
  double topic_weight = 0.55;
  double sentiment_weight = 0.75;
  double behavior_weight = 0.35;
  double noise_sd = 0.3;
  std::uint64_t seed = 0;
  /// Probability that any one behavioral feature is unobserved.
  double missing_rate = 0.15;
  /// Courses are assigned to domains round-robin.
  std::vector<std::string> domains{"cs", "business", "humanities"};
  /// Per-domain multiplier on noise_sd; absent domains use 1.
  std::map<std::string, double> domain_noise;

  /// Throws ConfigError on negative weights, all-zero weights or bad sizes.
  void validate() const;

  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr int kSyntheticTopics = 6;

/// Ground truth behind one generated review.
struct SyntheticLatent {
  std::string id;
  /// Realized topic proportions of the content tokens.
  std::array<double, kSyntheticTopics> topic_mix{};
  /// Standardized latents entering the rating.
  double topic = 0.0;
  double sentiment = 0.0;
  double behavior = 0.0;
  double noise = 0.0;
  /// Rating before clipping.
  double raw_rating = 0.0;
};

struct SyntheticData {
  Dataset dataset;
  std::vector<SyntheticLatent> latents;
};

/// Content vocabulary of each planted topic.
const std::array<std::vector<std::string>, kSyntheticTopics>& synthetic_topic_words();
/// Operator-facing labels for the planted topics, in index order.
const std::array<std::string, kSyntheticTopics>& synthetic_topic_labels();

SyntheticData generate_synthetic(const SyntheticSpec& spec);

void write_latents(const std::vector<SyntheticLatent>& latents, const std::filesystem::path& path);

}  // namespace satpred
