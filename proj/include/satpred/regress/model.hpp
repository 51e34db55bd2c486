#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "satpred/fusion.hpp"
#include "satpred/regress/forest.hpp"
#include "satpred/regress/gbrt.hpp"
#include "satpred/regress/linear.hpp"
#include "satpred/regress/mlp.hpp"

namespace satpred {

enum class Backbone { linear, ridge, forest, gbrt, mlp };

std::string_view to_string(Backbone b);

struct LinearParams {
  double lambda = 0.0;
};

using BackboneParams = std::variant<LinearParams, ForestParams, GbrtParams, MlpParams>;

/// A named, fully parameterized regression backbone.
struct RegressorSpec {
  std::string name;
  Backbone backbone = Backbone::linear;
  BackboneParams params = LinearParams{};
  std::uint64_t seed = 0;

  /// Preset names: linear, ridge, forest, gbrt, gbrt-l2 (regularized leaves,
  /// XGBoost-style), gbrt-hist (histogram splits with leaf-wise growth,
  /// LightGBM-style), mlp. Throws ConfigError for anything else.
  static RegressorSpec preset(std::string_view name);
  static const std::vector<std::string>& preset_names();

  /// Either a preset name string or an object {"preset" | "backbone", "name",
  /// "seed", <hyperparameters>}; hyperparameters override the preset. Unknown
  /// keys are a ConfigError.
  static RegressorSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Throws ConfigError when a hyperparameter is out of range.
  void validate() const;
};

struct TrainMetadata {
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  /// Boosting rounds kept or MLP epochs run.
  int rounds_used = 0;
  int best_epoch = 0;
  std::vector<double> val_curve;
  /// Linear models: rank of the centered design and whether it was deficient.
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

class TrainedModel {
public:
  using Params = std::variant<LinearModel<double>, Forest, Gbrt, Mlp>;

  TrainedModel(RegressorSpec spec, Eigen::Index num_features, Params params, TrainMetadata metadata);

  const RegressorSpec& spec() const { return spec_; }
  Eigen::Index num_features() const { return p_; }
  const Params& params() const { return params_; }
  const TrainMetadata& metadata() const { return metadata_; }

  /// One prediction per row; DataError if X.cols() != num_features().
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, bool clamp_to_rating_range = false) const;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);

private:
  RegressorSpec spec_;
  Eigen::Index p_;
  Params params_;
  TrainMetadata metadata_;
};

inline constexpr int kModelFormatVersion = 1;

/// Fits the backbone; `val` (may be null) drives early stopping where the
/// backbone supports it.
TrainedModel train(const RegressorSpec& spec, const DesignMatrix& design, const DesignMatrix* val = nullptr);
TrainedModel train(const RegressorSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd* X_val = nullptr, const Eigen::VectorXd* y_val = nullptr);

}  // namespace satpred
