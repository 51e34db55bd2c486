#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "satpred/corpus.hpp"

namespace satpred {

/// Fitted topic-word distributions. Rows of `phi` are topics and lie on the
/// vocabulary simplex.
struct TopicModel {
  Eigen::MatrixXd phi;  // K x V
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t vocab_hash = 0;
  /// Operator-supplied names for topic indices; empty or size K.
  std::vector<std::string> labels;

  Eigen::Index num_topics() const { return phi.rows(); }
  Eigen::Index vocab_size() const { return phi.cols(); }

  /// Throws FormatError unless K >= 2, priors are positive and phi rows are
  /// non-negative and sum to 1 within 1e-9.
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static TopicModel load(const std::filesystem::path& path);
};

/// Per-document mixture over topics, on the K-simplex.
struct TopicDistribution {
  Eigen::VectorXd theta;
};

struct LdaOptions {
  int num_topics = 6;
  /// Non-positive means the 50/K default.
  double alpha = 0.0;
  double beta = 0.01;
  int iterations = 1000;
  int burn_in = 800;
  int thin = 10;
  std::uint64_t seed = 0;
  /// Re-checks count bookkeeping after every sweep (slow; small corpora only).
  bool verify_counts = false;
  /// Relabels the initial assignment by this permutation of [0, K). The
  /// sampler scans topics in the permuted order, so the chain is the exact
  /// relabeling of the unpermuted one.
  std::vector<int> init_permutation;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : 50.0 / num_topics; }
};

/// Collapsed Gibbs LDA. phi is the average of (n_kw + beta) / (n_k + V beta)
/// over every `thin`-th sweep after burn-in, counted back from the last sweep.
TopicModel fit_lda(std::span<const TokenizedDoc> corpus, std::size_t vocab_size,
                   std::uint64_t vocab_hash, const LdaOptions& options);
TopicModel fit_lda(std::span<const TokenizedDoc> corpus, const Vocabulary& vocab, const LdaOptions& options);

struct FoldInOptions {
  int iterations = 100;
  int burn_in = 50;
  std::uint64_t seed = 0;
};

/// Fold-in Gibbs with phi fixed; theta_k = (n_k + alpha) / (N + K alpha)
/// averaged over post-burn-in sweeps. An empty document gets the uniform mixture.
TopicDistribution infer_theta(const TopicModel& model, const TokenizedDoc& doc, const FoldInOptions& options);

/// Concatenates the documents of each course into one training document,
/// ordered by course id. `docs[i]` must belong to `dataset[i]`.
std::vector<TokenizedDoc> pool_by_course(std::span<const TokenizedDoc> docs, const Dataset& dataset);

/// Mean per-token log p(w | d) with theta from fold-in.
double heldout_log_likelihood(const TopicModel& model, std::span<const TokenizedDoc> docs,
                              const FoldInOptions& options);

}  // namespace satpred
