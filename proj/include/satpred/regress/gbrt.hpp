#pragma once

#include <vector>

#include <Eigen/Core>

#include "satpred/regress/tree.hpp"

namespace satpred {

enum class Splitter { exact, histogram };
enum class Growth { level, leaf };

struct GbrtParams {
  int rounds = 200;
  int max_depth = 3;
  double shrinkage = 0.1;
  double leaf_l2 = 1.0;
  double min_child_weight = 1.0;
  Splitter splitter = Splitter::exact;
  int bins = 256;
  Growth growth = Growth::level;
  int max_leaves = 31;
  /// Early-stopping patience on validation RMSE; 0 disables.
  int patience = 0;
};

struct Gbrt {
  double base = 0.0;
  double shrinkage = 0.1;
  std::vector<RegressionTree> trees;
  /// Validation RMSE after each round, when a validation set was given.
  std::vector<double> val_curve;
  std::vector<double> train_mse_curve;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct ValidationSet {
  const Eigen::MatrixXd* X = nullptr;
  const Eigen::VectorXd* y = nullptr;
  explicit operator bool() const { return X != nullptr && y != nullptr && X->rows() > 0; }
};

/// F_0 = mean(y); each round fits a tree to the residuals with leaf values
/// sum(r) / (count + leaf_l2) and adds shrinkage * tree. With early stopping
/// the ensemble is truncated to the best validation round.
Gbrt fit_gbrt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbrtParams& params,
              ValidationSet val = {});

void validate(const GbrtParams& params);

}  // namespace satpred
