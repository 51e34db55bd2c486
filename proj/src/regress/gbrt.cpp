#include "satpred/regress/gbrt.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "satpred/error.hpp"

namespace satpred {

void validate(const GbrtParams& p) {
  if (p.rounds < 1) throw ConfigError("gbrt rounds must be >= 1");
  if (p.max_depth < 1 && !(p.growth == Growth::leaf && p.max_depth < 0)) {
    throw ConfigError("gbrt depth must be >= 1 (or negative with leaf-wise growth)");
  }
  if (!(p.shrinkage > 0.0 && p.shrinkage <= 1.0)) throw ConfigError("gbrt shrinkage must be in (0, 1]");
  if (p.leaf_l2 < 0.0) throw ConfigError("gbrt leaf_l2 must be >= 0");
  if (p.min_child_weight < 0.0) throw ConfigError("gbrt min_child_weight must be >= 0");
  if (p.bins < 2 || p.bins > 65536) throw ConfigError("gbrt bins must be in [2, 65536]");
  if (p.growth == Growth::leaf && p.max_leaves < 2) throw ConfigError("gbrt max_leaves must be >= 2");
  if (p.patience < 0) throw ConfigError("gbrt patience must be >= 0");
}

Eigen::VectorXd Gbrt::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(X.rows(), base);
  for (const auto& t : trees) f += shrinkage * t.predict(X);
  return f;
}

Gbrt fit_gbrt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbrtParams& params, ValidationSet val) {
  validate(params);
  const Eigen::Index n = X.rows();
  if (n < 1) throw DataError("gbrt needs at least one row");
  if (y.size() != n) throw DataError("gbrt: X and y disagree in length");
  if (val && val.X->cols() != X.cols()) throw DataError("gbrt: validation set has a different width");

  std::optional<FeatureBins> bins;
  if (params.splitter == Splitter::histogram) bins.emplace(X, params.bins);

  TreeOptions opts;
  opts.max_depth = params.max_depth;
  opts.leaf_wise = params.growth == Growth::leaf;
  opts.max_leaves = params.max_leaves;
  opts.leaf_l2 = params.leaf_l2;
  opts.min_child_weight = params.min_child_weight;
  opts.bins = bins ? &*bins : nullptr;

  Gbrt model;
  model.base = y.mean();
  model.shrinkage = params.shrinkage;
  Eigen::VectorXd F = Eigen::VectorXd::Constant(n, model.base);
  Eigen::VectorXd Fval;
  if (val) Fval = Eigen::VectorXd::Constant(val.X->rows(), model.base);

  std::vector<std::uint32_t> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0U);
  Eigen::VectorXd residual(n);

  const bool early_stop = val && params.patience > 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_rounds = 0;
  int since_best = 0;

  for (int m = 0; m < params.rounds; ++m) {
    residual = y - F;
    RegressionTree tree = build_tree(X, std::span<const double>(residual.data(), static_cast<std::size_t>(n)), all, opts);
    F += params.shrinkage * tree.predict(X);
    model.train_mse_curve.push_back((y - F).squaredNorm() / static_cast<double>(n));
    if (val) {
      Fval += params.shrinkage * tree.predict(*val.X);
      const double rmse = std::sqrt((*val.y - Fval).squaredNorm() / static_cast<double>(val.X->rows()));
      model.val_curve.push_back(rmse);
      if (rmse < best_val) {
        best_val = rmse;
        best_rounds = model.trees.size() + 1;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    model.trees.push_back(std::move(tree));
    if (early_stop && since_best >= params.patience) break;
  }
  if (early_stop) model.trees.resize(best_rounds);
  return model;
}

}  // namespace satpred
