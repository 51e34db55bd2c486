#include "satpred/regress/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <fstream>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/json_fields.hpp"

namespace satpred {

using nlohmann::json;

std::string_view to_string(Backbone b) {
  switch (b) {
    case Backbone::linear: return "linear";
    case Backbone::ridge: return "ridge";
    case Backbone::forest: return "forest";
    case Backbone::gbrt: return "gbrt";
    case Backbone::mlp: return "mlp";
  }
  return "?";
}

namespace {

std::optional<Backbone> parse_backbone(std::string_view s) {
  for (Backbone b : {Backbone::linear, Backbone::ridge, Backbone::forest, Backbone::gbrt, Backbone::mlp}) {
    if (to_string(b) == s) return b;
  }
  return std::nullopt;
}

std::string_view to_string(Splitter s) { return s == Splitter::exact ? "exact" : "histogram"; }
std::string_view to_string(Growth g) { return g == Growth::level ? "level" : "leaf"; }

Splitter parse_splitter(const std::string& s) {
  if (s == "exact") return Splitter::exact;
  if (s == "histogram") return Splitter::histogram;
  throw ConfigError("unknown splitter '" + s + "' (expected exact or histogram)");
}

Growth parse_growth(const std::string& s) {
  if (s == "level") return Growth::level;
  if (s == "leaf") return Growth::leaf;
  throw ConfigError("unknown growth '" + s + "' (expected level or leaf)");
}

void read_params(FieldReader& r, LinearParams& p, Backbone b) {
  if (b == Backbone::ridge) r.read("lambda", p.lambda);
}

void read_params(FieldReader& r, ForestParams& p) {
  r.read("n_trees", p.n_trees);
  r.read("max_depth", p.max_depth);
  r.read("mtry", p.mtry);
  r.read("bootstrap", p.bootstrap);
}

void read_params(FieldReader& r, GbrtParams& p) {
  r.read("rounds", p.rounds);
  r.read("max_depth", p.max_depth);
  r.read("shrinkage", p.shrinkage);
  r.read("leaf_l2", p.leaf_l2);
  r.read("min_child_weight", p.min_child_weight);
  std::string s;
  if (r.read("splitter", s)) p.splitter = parse_splitter(s);
  r.read("bins", p.bins);
  if (r.read("growth", s)) p.growth = parse_growth(s);
  r.read("max_leaves", p.max_leaves);
  r.read("patience", p.patience);
}

void read_params(FieldReader& r, MlpParams& p) {
  r.read("layers", p.layers);
  r.read("lr", p.lr);
  r.read("epochs", p.epochs);
  r.read("batch", p.batch);
  r.read("patience", p.patience);
}

json params_json(const RegressorSpec& spec) {
  json j = json::object();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          if (spec.backbone == Backbone::ridge) j["lambda"] = p.lambda;
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          j["n_trees"] = p.n_trees;
          j["max_depth"] = p.max_depth;
          j["mtry"] = p.mtry;
          j["bootstrap"] = p.bootstrap;
        } else if constexpr (std::is_same_v<T, GbrtParams>) {
          j["rounds"] = p.rounds;
          j["max_depth"] = p.max_depth;
          j["shrinkage"] = p.shrinkage;
          j["leaf_l2"] = p.leaf_l2;
          j["min_child_weight"] = p.min_child_weight;
          j["splitter"] = to_string(p.splitter);
          j["bins"] = p.bins;
          j["growth"] = to_string(p.growth);
          j["max_leaves"] = p.max_leaves;
          j["patience"] = p.patience;
        } else {
          j["layers"] = p.layers;
          j["lr"] = p.lr;
          j["epochs"] = p.epochs;
          j["batch"] = p.batch;
          j["patience"] = p.patience;
        }
      },
      spec.params);
  return j;
}

BackboneParams default_params(Backbone b) {
  switch (b) {
    case Backbone::linear: return LinearParams{0.0};
    case Backbone::ridge: return LinearParams{1.0};
    case Backbone::forest: return ForestParams{};
    case Backbone::gbrt: return GbrtParams{};
    case Backbone::mlp: return MlpParams{};
  }
  return LinearParams{};
}

}  // namespace

const std::vector<std::string>& RegressorSpec::preset_names() {
  static const std::vector<std::string> names{"linear", "ridge", "forest", "gbrt", "gbrt-l2", "gbrt-hist", "mlp"};
  return names;
}

RegressorSpec RegressorSpec::preset(std::string_view name) {
  RegressorSpec s;
  s.name = std::string(name);
  if (name == "gbrt-l2") {
    s.backbone = Backbone::gbrt;
    GbrtParams p;
    p.leaf_l2 = 5.0;
    p.min_child_weight = 5.0;
    s.params = p;
  } else if (name == "gbrt-hist") {
    s.backbone = Backbone::gbrt;
    GbrtParams p;
    p.splitter = Splitter::histogram;
    p.growth = Growth::leaf;
    p.max_leaves = 31;
    p.max_depth = 6;
    p.min_child_weight = 20.0;
    s.params = p;
  } else if (auto b = parse_backbone(name)) {
    s.backbone = *b;
    s.params = default_params(*b);
  } else {
    throw ConfigError("unknown backbone preset '" + std::string(name) + "'");
  }
  return s;
}

RegressorSpec RegressorSpec::from_json(const json& j) {
  if (j.is_string()) {
    RegressorSpec s = preset(j.get<std::string>());
    s.validate();
    return s;
  }
  FieldReader r(j, "backbone spec");
  std::string preset_name, backbone_name;
  const bool has_preset = r.read("preset", preset_name);
  const bool has_backbone = r.read("backbone", backbone_name);
  if (has_preset == has_backbone) throw ConfigError("backbone spec needs exactly one of 'preset' or 'backbone'");
  if (has_backbone && !parse_backbone(backbone_name)) {
    throw ConfigError("unknown backbone '" + backbone_name + "'");
  }
  RegressorSpec s = preset(has_preset ? preset_name : backbone_name);
  r.read("name", s.name);
  r.read("seed", s.seed);
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) read_params(r, p, s.backbone);
        else read_params(r, p);
      },
      s.params);
  r.finish();
  s.validate();
  return s;
}

json RegressorSpec::to_json() const {
  json j = params_json(*this);
  j["name"] = name;
  j["backbone"] = to_string(backbone);
  j["seed"] = seed;
  return j;
}

void RegressorSpec::validate() const {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          if (backbone != Backbone::linear && backbone != Backbone::ridge) throw ConfigError("backbone/params mismatch");
          if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda)) throw ConfigError("ridge lambda must be finite and >= 0");
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          if (backbone != Backbone::forest) throw ConfigError("backbone/params mismatch");
          if (p.n_trees < 1) throw ConfigError("forest n_trees must be >= 1");
          if (p.max_depth == 0) throw ConfigError("forest max_depth must be >= 1 or negative for unlimited");
          if (p.mtry < 0) throw ConfigError("forest mtry must be >= 0");
        } else if constexpr (std::is_same_v<T, GbrtParams>) {
          if (backbone != Backbone::gbrt) throw ConfigError("backbone/params mismatch");
          satpred::validate(p);
        } else {
          if (backbone != Backbone::mlp) throw ConfigError("backbone/params mismatch");
          satpred::validate(p);
        }
      },
      params);
}

// ---------------------------------------------------------------------------

TrainedModel::TrainedModel(RegressorSpec spec, Eigen::Index num_features, Params params, TrainMetadata metadata)
    : spec_(std::move(spec)), p_(num_features), params_(std::move(params)), metadata_(std::move(metadata)) {}

Eigen::VectorXd TrainedModel::predict(const Eigen::MatrixXd& X, bool clamp_to_rating_range) const {
  if (X.cols() != p_) {
    throw DataError("model '" + spec_.name + "' expects " + std::to_string(p_) + " features, got " +
                    std::to_string(X.cols()));
  }
  Eigen::VectorXd out = std::visit([&](const auto& m) -> Eigen::VectorXd { return m.predict(X); }, params_);
  if (clamp_to_rating_range) out = out.cwiseMax(kMinRating).cwiseMin(kMaxRating);
  return out;
}

namespace {

/// Ridge on columns standardized by training mean and population sd, mapped
/// back to weights on the raw columns. Constant columns keep scale 1.
LinearModel<double> fit_ridge_standardized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::RowVectorXd scale =
      ((X.rowwise() - mean).cwiseAbs2().colwise().sum() / static_cast<double>(X.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale[j] > 0.0)) scale[j] = 1.0;
  }
  const Eigen::MatrixXd Z = (X.rowwise() - mean).array().rowwise() / scale.array();
  LinearModel<double> m = fit_linear(Z, y, lambda);
  m.weights = m.weights.cwiseQuotient(scale.transpose());
  m.intercept -= mean.dot(m.weights);
  return m;
}

}  // namespace

TrainedModel train(const RegressorSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd* X_val, const Eigen::VectorXd* y_val) {
  spec.validate();
  if (!X.allFinite() || !y.allFinite()) throw DataError("training data contains non-finite values");
  if (X.rows() != y.size()) throw DataError("training X and y disagree in length");
  ValidationSet val{X_val, y_val};
  if (val && (X_val->cols() != X.cols() || X_val->rows() != y_val->size())) {
    throw DataError("validation matrix is inconsistent with the training matrix");
  }

  TrainMetadata meta;
  meta.n_train = static_cast<std::size_t>(X.rows());
  meta.n_val = val ? static_cast<std::size_t>(X_val->rows()) : 0;

  TrainedModel::Params params = std::visit(
      [&](const auto& p) -> TrainedModel::Params {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          auto m = spec.backbone == Backbone::ridge ? fit_ridge_standardized(X, y, p.lambda) : fit_linear(X, y, p.lambda);
          meta.rank = m.rank;
          meta.rank_deficient = m.rank_deficient;
          return m;
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          auto f = fit_forest(X, y, p, spec.seed);
          meta.rounds_used = static_cast<int>(f.trees.size());
          return f;
        } else if constexpr (std::is_same_v<T, GbrtParams>) {
          auto g = fit_gbrt(X, y, p, val);
          meta.rounds_used = static_cast<int>(g.trees.size());
          meta.val_curve = g.val_curve;
          return g;
        } else {
          auto fit = fit_mlp(X, y, p, spec.seed, val);
          meta.rounds_used = fit.epochs_run;
          meta.best_epoch = fit.best_epoch;
          meta.val_curve = fit.val_curve;
          return std::move(fit.model);
        }
      },
      spec.params);
  return TrainedModel(spec, X.cols(), std::move(params), std::move(meta));
}

TrainedModel train(const RegressorSpec& spec, const DesignMatrix& design, const DesignMatrix* val) {
  if (val && val->rows() > 0) {
    if (!(val->mask == design.mask)) throw DataError("validation matrix was assembled under a different mask");
    return train(spec, design.X, design.y, &val->X, &val->y);
  }
  return train(spec, design.X, design.y);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw FormatError("matrix record has inconsistent shape");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json tree_json(const std::vector<TreeNode>& nodes, int i) {
  const TreeNode& n = nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf()) return {{"value", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"value", n.value},
          {"left", tree_json(nodes, n.left)},
          {"right", tree_json(nodes, n.right)}};
}

int tree_from(const json& j, std::vector<TreeNode>& nodes, Eigen::Index p) {
  TreeNode n;
  n.value = j.at("value").get<double>();
  const int id = static_cast<int>(nodes.size());
  nodes.push_back(n);
  if (j.contains("feature")) {
    const int f = j.at("feature").get<int>();
    if (f < 0 || f >= p) throw FormatError("tree node feature index out of range");
    const double t = j.at("threshold").get<double>();
    const int l = tree_from(j.at("left"), nodes, p);
    const int r = tree_from(j.at("right"), nodes, p);
    TreeNode& self = nodes[static_cast<std::size_t>(id)];
    self.feature = f;
    self.threshold = t;
    self.left = l;
    self.right = r;
  }
  return id;
}

json trees_json(const std::vector<RegressionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(tree_json(t.nodes(), 0));
  return arr;
}

std::vector<RegressionTree> trees_from(const json& j, Eigen::Index p) {
  std::vector<RegressionTree> trees;
  for (const auto& t : j) {
    std::vector<TreeNode> nodes;
    tree_from(t, nodes, p);
    trees.emplace_back(std::move(nodes));
  }
  return trees;
}

}  // namespace

json TrainedModel::to_json() const {
  json j;
  j["version"] = kModelFormatVersion;
  j["spec"] = spec_.to_json();
  j["num_features"] = p_;
  json meta;
  meta["n_train"] = metadata_.n_train;
  meta["n_val"] = metadata_.n_val;
  meta["rounds_used"] = metadata_.rounds_used;
  meta["best_epoch"] = metadata_.best_epoch;
  meta["val_curve"] = metadata_.val_curve;
  meta["rank"] = metadata_.rank;
  meta["rank_deficient"] = metadata_.rank_deficient;
  j["metadata"] = meta;
  json params = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel<double>>) {
          return {{"weights", vector_json(m.weights)}, {"intercept", m.intercept}, {"lambda", m.lambda}};
        } else if constexpr (std::is_same_v<T, Forest>) {
          return {{"trees", trees_json(m.trees)}};
        } else if constexpr (std::is_same_v<T, Gbrt>) {
          return {{"base", m.base}, {"shrinkage", m.shrinkage}, {"trees", trees_json(m.trees)}};
        } else {
          json layers = json::array();
          for (std::size_t l = 0; l < m.weights.size(); ++l) {
            layers.push_back({{"weights", matrix_json(m.weights[l])}, {"bias", vector_json(m.biases[l])}});
          }
          return {{"layers", layers},
                  {"input_mean", vector_json(m.input_mean)},
                  {"input_scale", vector_json(m.input_scale)}};
        }
      },
      params_);
  j["params"] = std::move(params);
  return j;
}

TrainedModel TrainedModel::from_json(const json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError("unsupported model format version " + std::to_string(version));
    }
    RegressorSpec spec = RegressorSpec::from_json(j.at("spec"));
    const auto p = j.at("num_features").get<Eigen::Index>();
    const json& meta_j = j.at("metadata");
    TrainMetadata meta;
    meta.n_train = meta_j.at("n_train").get<std::size_t>();
    meta.n_val = meta_j.at("n_val").get<std::size_t>();
    meta.rounds_used = meta_j.at("rounds_used").get<int>();
    meta.best_epoch = meta_j.at("best_epoch").get<int>();
    meta.val_curve = meta_j.at("val_curve").get<std::vector<double>>();
    meta.rank = meta_j.at("rank").get<Eigen::Index>();
    meta.rank_deficient = meta_j.at("rank_deficient").get<bool>();

    const json& pj = j.at("params");
    Params params;
    switch (spec.backbone) {
      case Backbone::linear:
      case Backbone::ridge: {
        LinearModel<double> m;
        m.weights = vector_from(pj.at("weights"));
        m.intercept = pj.at("intercept").get<double>();
        m.lambda = pj.at("lambda").get<double>();
        m.rank = meta.rank;
        m.rank_deficient = meta.rank_deficient;
        if (m.weights.size() != p) throw FormatError("linear weights do not match num_features");
        params = std::move(m);
        break;
      }
      case Backbone::forest: {
        Forest f;
        f.trees = trees_from(pj.at("trees"), p);
        params = std::move(f);
        break;
      }
      case Backbone::gbrt: {
        Gbrt g;
        g.base = pj.at("base").get<double>();
        g.shrinkage = pj.at("shrinkage").get<double>();
        g.trees = trees_from(pj.at("trees"), p);
        g.val_curve = meta.val_curve;
        params = std::move(g);
        break;
      }
      case Backbone::mlp: {
        Mlp m;
        for (const auto& layer : pj.at("layers")) {
          m.weights.push_back(matrix_from(layer.at("weights")));
          m.biases.push_back(vector_from(layer.at("bias")));
        }
        m.input_mean = vector_from(pj.at("input_mean"));
        m.input_scale = vector_from(pj.at("input_scale"));
        if (m.weights.empty() || m.inputs() != p || m.input_mean.size() != p || m.input_scale.size() != p) {
          throw FormatError("mlp parameters do not match num_features");
        }
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
          const Eigen::Index expected_in = l == 0 ? p : m.weights[l - 1].rows();
          if (m.weights[l].cols() != expected_in || m.biases[l].size() != m.weights[l].rows()) {
            throw FormatError("mlp layer shapes are inconsistent");
          }
        }
        if (m.weights.back().rows() != 1) throw FormatError("mlp output layer must have one unit");
        params = std::move(m);
        break;
      }
    }
    return TrainedModel(std::move(spec), p, std::move(params), std::move(meta));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file has an invalid spec: ") + e.what());
  }
}

void TrainedModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace satpred
