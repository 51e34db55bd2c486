#include "satpred/regress/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "satpred/error.hpp"

namespace satpred {

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = predict_row(X.row(i));
  return out;
}

std::size_t RegressionTree::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  // Children are always created after their parent.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& n = nodes_[i];
    if (n.is_leaf()) continue;
    d[static_cast<std::size_t>(n.left)] = d[i] + 1;
    d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

FeatureBins::FeatureBins(const Eigen::MatrixXd& X, int max_bins) {
  if (max_bins < 2 || max_bins > 65536) throw ConfigError("histogram bins must be in [2, 65536]");
  const Eigen::Index n = X.rows();
  edges_.resize(static_cast<std::size_t>(X.cols()));
  codes_.resize(n, X.cols());
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    for (Eigen::Index i = 0; i < n; ++i) sorted[static_cast<std::size_t>(i)] = X(i, f);
    std::sort(sorted.begin(), sorted.end());
    auto& e = edges_[static_cast<std::size_t>(f)];
    if (n > 0) {
      for (int j = 1; j < max_bins; ++j) {
        const auto idx = static_cast<std::size_t>((static_cast<long long>(j) * n) / max_bins);
        const double q = sorted[std::min(idx, sorted.size() - 1)];
        if (q > sorted.front() && (e.empty() || q > e.back())) e.push_back(q);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      codes_(i, f) = static_cast<std::uint16_t>(std::upper_bound(e.begin(), e.end(), X(i, f)) - e.begin());
    }
  }
}

namespace {

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool valid() const { return feature >= 0; }
};

class Builder {
public:
  Builder(const Eigen::MatrixXd& X, std::span<const double> target, const TreeOptions& options, Rng* rng)
      : X_(X), target_(target), opt_(options), rng_(rng) {}

  RegressionTree build(std::vector<std::uint32_t> rows) {
    if (rows.empty()) throw DataError("cannot grow a tree on zero rows");
    nodes_.clear();
    if (opt_.leaf_wise) grow_leaf_wise(std::move(rows));
    else grow_depth_first(std::move(rows), 0);
    return RegressionTree(std::move(nodes_));
  }

private:
  double score(double g, double n) const { return g * g / (n + opt_.leaf_l2); }

  void stats(const std::vector<std::uint32_t>& rows, double& g, double& n, bool& pure) const {
    g = 0.0;
    const double first = target_[rows.front()];
    pure = true;
    for (auto r : rows) {
      g += target_[r];
      pure = pure && target_[r] == first;
    }
    n = static_cast<double>(rows.size());
  }

  bool depth_allows(int depth) const { return opt_.max_depth < 0 || depth < opt_.max_depth; }

  void evaluate_exact(const std::vector<std::uint32_t>& rows, int f, double g, double n, double parent, Split& best) {
    scratch_.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) scratch_[i] = {X_(rows[i], f), target_[rows[i]]};
    std::sort(scratch_.begin(), scratch_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double gl = 0.0;
    for (std::size_t i = 0; i + 1 < scratch_.size(); ++i) {
      gl += scratch_[i].second;
      if (!(scratch_[i].first < scratch_[i + 1].first)) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = n - nl;
      if (nl < opt_.min_child_weight || nr < opt_.min_child_weight) continue;
      const double gain = score(gl, nl) + score(g - gl, nr) - parent;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = f;
        best.threshold = 0.5 * (scratch_[i].first + scratch_[i + 1].first);
        // Midpoints of huge adjacent values can round up to the right value.
        if (!(best.threshold > scratch_[i].first) || !(best.threshold <= scratch_[i + 1].first)) {
          best.threshold = scratch_[i + 1].first;
        }
      }
    }
  }

  void evaluate_hist(const std::vector<std::uint32_t>& rows, int f, double g, double n, double parent, Split& best) {
    const auto& edges = opt_.bins->edges(f);
    const std::size_t nb = edges.size() + 1;
    hist_g_.assign(nb, 0.0);
    hist_n_.assign(nb, 0.0);
    for (auto r : rows) {
      const auto b = opt_.bins->bin(r, f);
      hist_g_[b] += target_[r];
      hist_n_[b] += 1.0;
    }
    double gl = 0.0, nl = 0.0;
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      gl += hist_g_[b];
      nl += hist_n_[b];
      const double nr = n - nl;
      if (hist_n_[b] == 0.0 && b > 0) continue;  // same partition as the previous edge
      if (nl < opt_.min_child_weight || nr < opt_.min_child_weight) continue;
      const double gain = score(gl, nl) + score(g - gl, nr) - parent;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = f;
        best.threshold = edges[b];
      }
    }
  }

  Split find_split(const std::vector<std::uint32_t>& rows, double g, double n) {
    const auto p = static_cast<int>(X_.cols());
    const double parent = score(g, n);
    Split best;
    best.gain = 1e-12 * (1.0 + std::abs(parent));
    auto eval = [&](int f) {
      if (opt_.bins) evaluate_hist(rows, f, g, n, parent, best);
      else evaluate_exact(rows, f, g, n, parent, best);
    };
    const std::size_t mtry = opt_.mtry;
    if (mtry == 0 || mtry >= static_cast<std::size_t>(p)) {
      for (int f = 0; f < p; ++f) eval(f);
      return best;
    }
    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    rng_->shuffle(std::span(perm));
    std::vector<int> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(chosen.begin(), chosen.end());
    for (int f : chosen) eval(f);
    for (std::size_t j = mtry; j < perm.size() && !best.valid(); ++j) eval(perm[j]);
    return best;
  }

  int new_node(double g, double n) {
    TreeNode node;
    node.value = g / (n + opt_.leaf_l2);
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void partition(const std::vector<std::uint32_t>& rows, const Split& s, std::vector<std::uint32_t>& left,
                 std::vector<std::uint32_t>& right) const {
    left.clear();
    right.clear();
    for (auto r : rows) (X_(r, s.feature) < s.threshold ? left : right).push_back(r);
  }

  int grow_depth_first(std::vector<std::uint32_t> rows, int depth) {
    double g, n;
    bool pure;
    stats(rows, g, n, pure);
    const int id = new_node(g, n);
    if (pure || !depth_allows(depth) || n < 2.0 * opt_.min_child_weight) return id;
    const Split s = find_split(rows, g, n);
    if (!s.valid()) return id;
    std::vector<std::uint32_t> left, right;
    partition(rows, s, left, right);
    rows.clear();
    rows.shrink_to_fit();
    nodes_[static_cast<std::size_t>(id)].feature = s.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = s.threshold;
    const int l = grow_depth_first(std::move(left), depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    const int r = grow_depth_first(std::move(right), depth + 1);
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  struct Frontier {
    int node;
    int depth;
    std::vector<std::uint32_t> rows;
    Split split;
  };

  Frontier make_frontier(std::vector<std::uint32_t> rows, int depth) {
    double g, n;
    bool pure;
    stats(rows, g, n, pure);
    Frontier f{new_node(g, n), depth, std::move(rows), {}};
    if (!pure && depth_allows(depth) && n >= 2.0 * opt_.min_child_weight) f.split = find_split(f.rows, g, n);
    return f;
  }

  void grow_leaf_wise(std::vector<std::uint32_t> rows) {
    if (opt_.max_leaves < 2) {
      make_frontier(std::move(rows), std::numeric_limits<int>::max());
      return;
    }
    std::vector<Frontier> frontier;
    frontier.push_back(make_frontier(std::move(rows), 0));
    int leaves = 1;
    while (leaves < opt_.max_leaves) {
      // Highest gain first; ties go to the earliest-created node.
      std::ptrdiff_t pick = -1;
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        if (!frontier[i].split.valid()) continue;
        if (pick < 0 || frontier[i].split.gain > frontier[static_cast<std::size_t>(pick)].split.gain ||
            (frontier[i].split.gain == frontier[static_cast<std::size_t>(pick)].split.gain &&
             frontier[i].node < frontier[static_cast<std::size_t>(pick)].node)) {
          pick = static_cast<std::ptrdiff_t>(i);
        }
      }
      if (pick < 0) break;
      Frontier parent = std::move(frontier[static_cast<std::size_t>(pick)]);
      frontier.erase(frontier.begin() + pick);
      std::vector<std::uint32_t> left, right;
      partition(parent.rows, parent.split, left, right);
      auto& pn = nodes_[static_cast<std::size_t>(parent.node)];
      pn.feature = parent.split.feature;
      pn.threshold = parent.split.threshold;
      Frontier lf = make_frontier(std::move(left), parent.depth + 1);
      Frontier rf = make_frontier(std::move(right), parent.depth + 1);
      nodes_[static_cast<std::size_t>(parent.node)].left = lf.node;
      nodes_[static_cast<std::size_t>(parent.node)].right = rf.node;
      frontier.push_back(std::move(lf));
      frontier.push_back(std::move(rf));
      ++leaves;
    }
  }

  const Eigen::MatrixXd& X_;
  std::span<const double> target_;
  const TreeOptions& opt_;
  Rng* rng_;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<double, double>> scratch_;
  std::vector<double> hist_g_, hist_n_;
};

}  // namespace

RegressionTree build_tree(const Eigen::MatrixXd& X, std::span<const double> target, std::vector<std::uint32_t> rows,
                          const TreeOptions& options, Rng* rng) {
  if (static_cast<Eigen::Index>(target.size()) != X.rows()) throw DataError("tree target length differs from X rows");
  if (options.mtry > static_cast<std::size_t>(X.cols())) throw ConfigError("mtry exceeds the number of features");
  if (options.mtry != 0 && options.mtry < static_cast<std::size_t>(X.cols()) && rng == nullptr) {
    throw ConfigError("feature subsampling needs an Rng");
  }
  if (options.leaf_l2 < 0.0) throw ConfigError("leaf_l2 must be >= 0");
  return Builder(X, target, options, rng).build(std::move(rows));
}

}  // namespace satpred
