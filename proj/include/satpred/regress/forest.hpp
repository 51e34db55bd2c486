#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "satpred/regress/tree.hpp"

namespace satpred {

struct ForestParams {
  int n_trees = 200;
  /// Negative means unlimited.
  int max_depth = -1;
  /// 0 means ceil(p / 3).
  int mtry = 0;
  bool bootstrap = true;
};

struct Forest {
  std::vector<RegressionTree> trees;

  /// Arithmetic mean of the per-tree predictions.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

/// CART trees on bootstrap resamples (or the full data) with squared-error
/// splits over `mtry` random features per node. Tree t draws from
/// mix_seed(seed, t), so results do not depend on evaluation order.
Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params, std::uint64_t seed);

}  // namespace satpred
