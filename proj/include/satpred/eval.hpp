#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "satpred/corpus.hpp"
#include "satpred/error.hpp"
#include "satpred/fusion.hpp"
#include "satpred/pipeline.hpp"
#include "satpred/regress/model.hpp"

namespace satpred {

namespace detail {
template <typename A, typename B>
void check_metric_args(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
  if (y.size() == 0) throw DataError("metric over an empty vector");
  if (y.size() != yhat.size()) throw DataError("metric arguments differ in length");
  if (!y.allFinite() || !yhat.allFinite()) throw DataError("metric arguments must be finite");
}
}  // namespace detail

/// sqrt(mean((y - yhat)^2)).
template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
  detail::check_metric_args(y, yhat);
  return std::sqrt((y.derived().template cast<double>() - yhat.derived().template cast<double>()).squaredNorm() /
                   static_cast<double>(y.size()));
}

/// mean(|y - yhat|).
template <typename A, typename B>
double mae(const Eigen::MatrixBase<A>& y, const Eigen::MatrixBase<B>& yhat) {
  detail::check_metric_args(y, yhat);
  return (y.derived().template cast<double>() - yhat.derived().template cast<double>()).cwiseAbs().sum() /
         static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Lexical baseline

/// Bag-of-words featurizer: (1 + log tf) * idf with smoothed
/// idf = log((1 + N) / (1 + df)) + 1, rows L2-normalized. Vocabulary and idf
/// come from the training documents only.
class TfidfFeaturizer {
public:
  static TfidfFeaturizer fit(const Dataset& train, const Tokenizer& tokenizer, std::uint32_t min_doc_freq);

  /// One row per record, in the given order.
  Eigen::MatrixXd transform(const Dataset& records) const;
  Eigen::RowVectorXd transform_one(std::string_view text) const;

  const Vocabulary& vocabulary() const { return vocab_; }
  const Eigen::VectorXd& idf() const { return idf_; }

private:
  Tokenizer tokenizer_;
  Vocabulary vocab_;
  Eigen::VectorXd idf_;
};

/// Records of `dataset` in the row order of `ids`; DataError if one is absent.
Dataset records_for(const Dataset& dataset, const std::vector<std::string>& ids);

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string label;
  std::string backbone;
  std::string mask;
  std::string group;
  bool failed = false;
  std::string error;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n_test = 0;
  /// RMSE minus the full-model RMSE, for ablation rows.
  std::optional<double> delta_rmse;
  /// Hyperparameters as JSON text; "preset" marks untouched artifact defaults.
  std::string hyperparameters;
  bool preset_defaults = true;
  std::uint64_t seed = 0;
};

struct AssertionResult {
  std::string description;
  bool passed = false;
  std::string detail;
};

/// Orders `rows` by strictly increasing RMSE with every gap above `min_gap`.
struct OrderingAssertion {
  std::vector<std::string> rows;
  double min_gap = 0.0;
};

struct EvalReport {
  std::string kind;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  std::vector<ReportRow> rows;
  /// Backbone -> population variance of RMSE across groups (domain reports).
  std::vector<std::pair<std::string, double>> group_variance;
  std::vector<std::string> notes;
  std::vector<AssertionResult> assertions;

  const ReportRow* find(std::string_view label, std::string_view group = {}) const;
  /// Labels of successful rows sorted by RMSE (ties by label).
  std::vector<std::string> ranking() const;
  bool all_assertions_pass() const;

  /// Adds an ordering check; missing or failed rows fail the assertion.
  void check(const OrderingAssertion& assertion);
  /// Adds rmse >= mae checks for every successful row.
  void check_metric_invariants();

  std::string to_text() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& text_path, const std::filesystem::path& json_path) const;
};

// ---------------------------------------------------------------------------
// Experiments

struct CellResult {
  std::string label;
  RegressorSpec spec;
  Mask mask;
  bool failed = false;
  std::string error;
  Eigen::VectorXd predictions;
  double rmse = 0.0;
  double mae = 0.0;
};

/// Trains on the train design restricted to `mask`, early-stopping on val,
/// and scores the test design.
CellResult run_cell(const PreparedData& data, const RegressorSpec& spec, const Mask& mask, std::string label,
                    bool clamp_predictions = false);

struct BenchmarkOptions {
  std::uint64_t seed = 0;
  bool clamp_predictions = false;
  bool include_baselines = true;
  std::uint32_t tfidf_min_doc_freq = 2;
  std::vector<OrderingAssertion> assertions;
};

struct BenchmarkResult {
  EvalReport report;
  std::vector<CellResult> cells;
};

/// Every backbone on the full fused representation, plus topic-only linear,
/// sentiment-only linear and TF-IDF linear baselines. A failing backbone
/// becomes a failed row and the run continues.
BenchmarkResult run_benchmark(const PreparedData& data, const std::vector<RegressorSpec>& backbones,
                              const BenchmarkOptions& options);

/// `backbone` under each mask with shared splits and seed; rows carry the
/// RMSE delta against the full mask when it is present.
BenchmarkResult run_ablation(const PreparedData& data, const RegressorSpec& backbone, const std::vector<Mask>& masks,
                             const BenchmarkOptions& options);

/// {full, -topic, -sentiment, -behavior}.
std::vector<Mask> standard_ablation_masks();

/// Label used for a backbone evaluated under a mask.
std::string cell_label(const std::string& backbone, const Mask& mask);

struct GroupedPredictions {
  std::string label;
  Eigen::VectorXd predictions;
};

/// Per-group RMSE/MAE for each prediction vector plus the population
/// variance of group RMSE per backbone. Groups below `min_rows` are excluded
/// with a note.
EvalReport domain_breakdown(const std::vector<std::string>& row_groups, const Eigen::VectorXd& y,
                            const std::vector<GroupedPredictions>& predictions, std::size_t min_rows = 30);

struct ErrorCase {
  std::string id;
  double y = 0.0;
  double prediction = 0.0;
  double abs_error = 0.0;
  Eigen::VectorXd theta;
  Eigen::VectorXd behavior;
  std::string excerpt;
};

/// The k largest absolute errors, ties broken by id; k is clipped to n.
/// `records` supplies text excerpts and may omit ids.
std::vector<ErrorCase> top_errors(const Eigen::VectorXd& predictions, const DesignMatrix& design,
                                  const Dataset& records, std::size_t k, std::size_t excerpt_chars = 80);
std::vector<ErrorCase> top_errors(const TrainedModel& model, const DesignMatrix& design, const Dataset& records,
                                  std::size_t k, std::size_t excerpt_chars = 80);

nlohmann::json to_json(const std::vector<ErrorCase>& cases);
std::string format_errors(const std::vector<ErrorCase>& cases);

}  // namespace satpred
