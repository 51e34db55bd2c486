#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/regress/model.hpp"
#include "test_util.hpp"

using namespace satpred;
using nlohmann::json;
using satpred::testing::TempDir;

namespace {

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem problem(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng(seed);
  Problem pr{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) pr.X(i, j) = rng.normal();
    pr.y[i] = std::clamp(3.0 + pr.X(i, 0) - 0.5 * pr.X(i, 1) + 0.2 * rng.normal(), 1.0, 5.0);
  }
  return pr;
}

/// Small, fast variant of each preset.
RegressorSpec quick(const std::string& name) {
  json j = {{"preset", name}, {"seed", 9}};
  if (name == "forest") j["n_trees"] = 10;
  if (name.starts_with("gbrt")) j["rounds"] = 20;
  if (name == "mlp") {
    j["epochs"] = 5;
    j["layers"] = {8, 4};
  }
  return RegressorSpec::from_json(j);
}

}  // namespace

TEST(RegressorSpec, PresetsCoverSevenBackbones) {
  const auto& names = RegressorSpec::preset_names();
  EXPECT_EQ(names, (std::vector<std::string>{"linear", "ridge", "forest", "gbrt", "gbrt-l2", "gbrt-hist", "mlp"}));
  for (const auto& n : names) {
    const auto s = RegressorSpec::preset(n);
    EXPECT_EQ(s.name, n);
    EXPECT_NO_THROW(s.validate());
  }
  EXPECT_THROW(RegressorSpec::preset("xgboost"), ConfigError);
}

TEST(RegressorSpec, DefaultHyperparameters) {
  EXPECT_EQ(std::get<LinearParams>(RegressorSpec::preset("ridge").params).lambda, 1.0);
  EXPECT_EQ(std::get<LinearParams>(RegressorSpec::preset("linear").params).lambda, 0.0);
  const auto f = std::get<ForestParams>(RegressorSpec::preset("forest").params);
  EXPECT_EQ(f.n_trees, 200);
  EXPECT_EQ(f.mtry, 0);
  EXPECT_LT(f.max_depth, 0);
  EXPECT_TRUE(f.bootstrap);
  const auto g = std::get<GbrtParams>(RegressorSpec::preset("gbrt").params);
  EXPECT_EQ(g.rounds, 200);
  EXPECT_EQ(g.max_depth, 3);
  EXPECT_EQ(g.shrinkage, 0.1);
  EXPECT_EQ(g.leaf_l2, 1.0);
  EXPECT_EQ(g.bins, 256);
  EXPECT_EQ(g.max_leaves, 31);
  const auto h = std::get<GbrtParams>(RegressorSpec::preset("gbrt-hist").params);
  EXPECT_EQ(h.splitter, Splitter::histogram);
  EXPECT_EQ(h.growth, Growth::leaf);
  const auto m = std::get<MlpParams>(RegressorSpec::preset("mlp").params);
  EXPECT_EQ(m.layers, (std::vector<int>{128, 64}));
  EXPECT_EQ(m.lr, 1e-3);
  EXPECT_EQ(m.epochs, 200);
  EXPECT_EQ(m.batch, 64);
  EXPECT_EQ(m.patience, 10);
}

TEST(RegressorSpec, JsonOverridesAndRoundTrip) {
  const auto s = RegressorSpec::from_json(json{{"preset", "gbrt"}, {"name", "g2"}, {"rounds", 7}, {"seed", 5}});
  EXPECT_EQ(s.name, "g2");
  EXPECT_EQ(s.seed, 5u);
  EXPECT_EQ(std::get<GbrtParams>(s.params).rounds, 7);
  const auto back = RegressorSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(RegressorSpec::from_json(json("mlp")).name, "mlp");
}

TEST(RegressorSpec, InvalidJsonIsConfigError) {
  EXPECT_THROW(RegressorSpec::from_json(json{{"preset", "gbrt"}, {"roundz", 7}}), ConfigError);
  EXPECT_THROW(RegressorSpec::from_json(json{{"backbone", "svm"}}), ConfigError);
  EXPECT_THROW(RegressorSpec::from_json(json{{"preset", "gbrt"}, {"backbone", "gbrt"}}), ConfigError);
  EXPECT_THROW(RegressorSpec::from_json(json{{"preset", "ridge"}, {"lambda", -1.0}}), ConfigError);
  EXPECT_THROW(RegressorSpec::from_json(json{{"preset", "mlp"}, {"layers", json::array()}}), ConfigError);
  EXPECT_THROW(RegressorSpec::from_json(json{{"preset", "linear"}, {"lambda", 1.0}}), ConfigError);
}

TEST(TrainedModel, EveryPresetPredictsOnePerRowAndIsDeterministic) {
  const auto tr = problem(120, 4, 1);
  const auto te = problem(30, 4, 2);
  for (const auto& n : RegressorSpec::preset_names()) {
    const auto spec = quick(n);
    const auto a = train(spec, tr.X, tr.y, &te.X, &te.y);
    const auto b = train(spec, tr.X, tr.y, &te.X, &te.y);
    const Eigen::VectorXd pa = a.predict(te.X);
    ASSERT_EQ(pa.size(), 30) << n;
    EXPECT_TRUE(pa.allFinite()) << n;
    EXPECT_TRUE(pa == b.predict(te.X)) << n;
    EXPECT_EQ(a.metadata().n_train, 120u);
  }
}

TEST(TrainedModel, SaveLoadGivesBitIdenticalPredictions) {
  TempDir dir;
  const auto tr = problem(100, 3, 3);
  const auto te = problem(40, 3, 4);
  for (const auto& n : RegressorSpec::preset_names()) {
    const auto m = train(quick(n), tr.X, tr.y);
    m.save(dir / (n + ".json"));
    const auto back = TrainedModel::load(dir / (n + ".json"));
    EXPECT_EQ(back.spec().to_json(), m.spec().to_json()) << n;
    EXPECT_EQ(back.num_features(), 3);
    EXPECT_TRUE(back.predict(te.X) == m.predict(te.X)) << n;
  }
}

TEST(TrainedModel, CorruptFilesAreFormatErrors) {
  TempDir dir;
  satpred::testing::write_file(dir / "a.json", "{");
  EXPECT_THROW(TrainedModel::load(dir / "a.json"), FormatError);
  satpred::testing::write_file(dir / "b.json", R"({"version": 99})");
  EXPECT_THROW(TrainedModel::load(dir / "b.json"), FormatError);
  EXPECT_THROW(TrainedModel::load(dir / "missing.json"), Error);
}

TEST(TrainedModel, DimensionMismatchIsDataError) {
  const auto tr = problem(50, 3, 5);
  const auto m = train(quick("ridge"), tr.X, tr.y);
  EXPECT_THROW(m.predict(Eigen::MatrixXd::Zero(2, 4)), DataError);
  const auto val = problem(10, 2, 6);
  EXPECT_THROW(train(quick("gbrt"), tr.X, tr.y, &val.X, &val.y), DataError);
}

TEST(TrainedModel, ClampToRatingRange) {
  Eigen::MatrixXd X(3, 1);
  X << 0, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 3, 5;
  const auto m = train(quick("linear"), X, y);
  Eigen::MatrixXd Xt(2, 1);
  Xt << -5, 10;
  const Eigen::VectorXd raw = m.predict(Xt);
  EXPECT_LT(raw[0], 1.0);
  EXPECT_GT(raw[1], 5.0);
  const Eigen::VectorXd clamped = m.predict(Xt, true);
  EXPECT_EQ(clamped[0], 1.0);
  EXPECT_EQ(clamped[1], 5.0);
}

TEST(TrainedModel, NonFiniteTrainingDataIsDataError) {
  auto tr = problem(20, 2, 7);
  tr.X(3, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(train(quick("forest"), tr.X, tr.y), DataError);
}

TEST(TrainedModel, RidgeTinyPenaltyMatchesLinear) {
  const auto tr = problem(200, 5, 8);
  auto ridge = RegressorSpec::preset("ridge");
  std::get<LinearParams>(ridge.params).lambda = 1e-12;
  const Eigen::VectorXd a = train(ridge, tr.X, tr.y).predict(tr.X);
  const Eigen::VectorXd b = train(RegressorSpec::preset("linear"), tr.X, tr.y).predict(tr.X);
  EXPECT_LT(std::sqrt((a - b).squaredNorm() / a.size()), 1e-6);
}

TEST(TrainedModel, RidgeIsInvariantToColumnScale) {
  const auto tr = problem(200, 4, 12);
  Eigen::Vector4d s(1000.0, 1e-3, 7.0, 1.0);
  const Eigen::MatrixXd Xs = tr.X * s.asDiagonal();
  const auto ridge = RegressorSpec::preset("ridge");
  const Eigen::VectorXd a = train(ridge, tr.X, tr.y).predict(tr.X);
  const Eigen::VectorXd b = train(ridge, Xs, tr.y).predict(Xs);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  // Without standardization a penalty of 1 would shrink the 1e-3-scaled column hard.
  const Eigen::VectorXd raw = fit_linear(Xs, tr.y, 1.0).predict(Xs);
  EXPECT_GT((raw - b).cwiseAbs().maxCoeff(), 1e-3);
}
