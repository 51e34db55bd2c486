#include "satpred/regress/forest.hpp"

#include <cmath>
#include <numeric>

#include "satpred/error.hpp"
#include "satpred/rng.hpp"

namespace satpred {

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& X) const {
  if (trees.empty()) throw DataError("forest has no trees");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(X.rows());
  for (const auto& t : trees) sum += t.predict(X);
  return sum / static_cast<double>(trees.size());
}

Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 2) throw DataError("random forest needs at least 2 rows");
  if (y.size() != n) throw DataError("forest: X and y disagree in length");
  if (params.n_trees < 1) throw ConfigError("forest needs n_trees >= 1");
  if (params.mtry < 0 || params.mtry > p) throw ConfigError("forest mtry exceeds the number of features");

  TreeOptions opts;
  opts.max_depth = params.max_depth;
  opts.mtry = params.mtry > 0 ? static_cast<std::size_t>(params.mtry)
                              : static_cast<std::size_t>(std::ceil(static_cast<double>(p) / 3.0));
  opts.min_child_weight = 1.0;
  opts.leaf_l2 = 0.0;

  const std::span<const double> target(y.data(), static_cast<std::size_t>(n));
  Forest forest;
  forest.trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      std::iota(rows.begin(), rows.end(), 0U);
    }
    forest.trees.push_back(build_tree(X, target, std::move(rows), opts, &rng));
  }
  return forest;
}

}  // namespace satpred
