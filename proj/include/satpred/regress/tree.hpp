#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "satpred/rng.hpp"

namespace satpred {

/// Flat binary regression tree. Rows with x[feature] < threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  template <typename Derived>
  double predict_row(const Eigen::DenseBase<Derived>& x) const {
    int i = 0;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(i)];
      i = x(n.feature) < n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t num_leaves() const;
  int depth() const;

  bool operator==(const RegressionTree&) const = default;

private:
  std::vector<TreeNode> nodes_;
};

/// Per-feature quantile bin edges from training data, duplicates merged.
/// bin(x) = number of edges <= x, so splitting after bin b is x < edges[b].
class FeatureBins {
public:
  FeatureBins(const Eigen::MatrixXd& X, int max_bins);

  const std::vector<double>& edges(Eigen::Index feature) const { return edges_[static_cast<std::size_t>(feature)]; }
  std::uint16_t bin(Eigen::Index row, Eigen::Index feature) const { return codes_(row, feature); }
  std::size_t num_bins(Eigen::Index feature) const { return edges(feature).size() + 1; }

private:
  std::vector<std::vector<double>> edges_;
  Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic> codes_;
};

struct TreeOptions {
  /// Negative means unlimited.
  int max_depth = -1;
  /// Leaf-wise growth cap; used only when leaf_wise is set.
  int max_leaves = 31;
  bool leaf_wise = false;
  /// Leaf value sum / (count + leaf_l2); split gain uses the same penalty.
  double leaf_l2 = 0.0;
  /// Minimum rows per child.
  double min_child_weight = 1.0;
  /// Features examined per node; 0 or >= p means all. When none of the
  /// sampled features admits a split the remaining ones are tried.
  std::size_t mtry = 0;
  /// Histogram splitting when set; exact splitting otherwise.
  const FeatureBins* bins = nullptr;
};

/// Grows one tree on `rows` (duplicates allowed, as in bootstrap samples)
/// fitting `target` under squared error. Split ties resolve to the lowest
/// feature index, then the lowest threshold. `rng` is used only when mtry
/// subsamples features.
RegressionTree build_tree(const Eigen::MatrixXd& X, std::span<const double> target,
                          std::vector<std::uint32_t> rows, const TreeOptions& options, Rng* rng = nullptr);

}  // namespace satpred
