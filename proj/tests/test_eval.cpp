#include <cstring>
#include <map>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "satpred/eval.hpp"
#include "test_util.hpp"

using namespace satpred;
using nlohmann::json;

namespace {

PipelineOptions quick_pipeline(std::uint64_t seed) {
  PipelineOptions o;
  o.split_seed = seed;
  o.topics.lda.iterations = 80;
  o.topics.lda.burn_in = 60;
  o.topics.lda.thin = 5;
  o.topics.lda.seed = seed + 1;
  o.featurize.fold_in = {30, 15, seed + 2};
  return o;
}

PreparedData prepare_synthetic(const SyntheticSpec& spec, std::uint64_t seed, double constant_rating = 0.0) {
  auto data = generate_synthetic(spec);
  if (constant_rating > 0.0) {
    for (auto& r : data.dataset) r.rating = constant_rating;
  }
  TestEncoderProvider provider(16, seed + 3);
  return prepare(data.dataset, Tokenizer(), provider, quick_pipeline(seed));
}

const PreparedData& shared_data() {
  static const PreparedData d = [] {
    SyntheticSpec spec;
    spec.n_reviews = 800;
    spec.n_courses = 20;
    spec.seed = 41;
    return prepare_synthetic(spec, 41);
  }();
  return d;
}

RegressorSpec quick(const std::string& name, std::uint64_t seed = 3) {
  json j = {{"preset", name}, {"seed", seed}};
  if (name == "forest") j["n_trees"] = 20;
  if (name.starts_with("gbrt")) j["rounds"] = 40;
  if (name == "mlp") {
    j["epochs"] = 20;
    j["layers"] = {16};
  }
  return RegressorSpec::from_json(j);
}

std::vector<RegressorSpec> quick_backbones() {
  std::vector<RegressorSpec> out;
  for (const auto& n : RegressorSpec::preset_names()) out.push_back(quick(n));
  return out;
}

}  // namespace

TEST(Tfidf, HandComputedWeights) {
  Dataset train{satpred::testing::make_record("1", "c", "alpha beta", 3),
                satpred::testing::make_record("2", "c", "alpha gamma gamma", 3)};
  const auto t = TfidfFeaturizer::fit(train, Tokenizer(std::set<std::string>{}), 1);
  const auto& v = t.vocabulary();
  const auto a = *v.find("alpha"), b = *v.find("beta"), g = *v.find("gamma");
  EXPECT_NEAR(t.idf()[a], 1.0, 1e-12);
  EXPECT_NEAR(t.idf()[b], std::log(1.5) + 1.0, 1e-12);
  const Eigen::RowVectorXd row = t.transform_one("alpha gamma gamma");
  const double wa = 1.0, wg = (1.0 + std::log(2.0)) * (std::log(1.5) + 1.0);
  const double norm = std::hypot(wa, wg);
  EXPECT_NEAR(row[a], wa / norm, 1e-12);
  EXPECT_NEAR(row[g], wg / norm, 1e-12);
  EXPECT_EQ(row[b], 0.0);
  EXPECT_TRUE(t.transform_one("unseen words only").isZero(0.0));
}

TEST(Tfidf, RowsAreUnitNormOrZero) {
  const auto& d = shared_data();
  const auto t = TfidfFeaturizer::fit(d.split.train, d.tokenizer, 2);
  const Eigen::MatrixXd X = t.transform(d.split.test);
  ASSERT_EQ(X.rows(), static_cast<Eigen::Index>(d.split.test.size()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double n = X.row(i).norm();
    EXPECT_TRUE(n == 0.0 || std::abs(n - 1.0) < 1e-12);
  }
}

TEST(Benchmark, ReportStructureAndInvariants) {
  const auto& d = shared_data();
  BenchmarkOptions o;
  o.seed = 41;
  const auto res = run_benchmark(d, quick_backbones(), o);
  for (const auto& n : RegressorSpec::preset_names()) ASSERT_NE(res.report.find(n), nullptr) << n;
  for (const char* l : {"topic+linear", "sentiment+linear", "tfidf+linear"}) ASSERT_NE(res.report.find(l), nullptr) << l;
  for (const auto& r : res.report.rows) {
    EXPECT_FALSE(r.failed) << r.label << ": " << r.error;
    EXPECT_GE(r.rmse, r.mae);
    EXPECT_EQ(r.n_test, d.split.test.size());
  }
  EXPECT_TRUE(res.report.all_assertions_pass());
  EXPECT_EQ(res.report.n_train, d.split.train.size());
  const auto ranking = res.report.ranking();
  EXPECT_EQ(ranking.size(), res.report.rows.size());
}

TEST(Benchmark, DeterministicReportText) {
  const auto& d = shared_data();
  BenchmarkOptions o;
  o.seed = 41;
  const std::vector<RegressorSpec> b{quick("ridge"), quick("gbrt"), quick("mlp")};
  const auto a = run_benchmark(d, b, o);
  const auto c = run_benchmark(d, b, o);
  EXPECT_EQ(a.report.to_text(), c.report.to_text());
  EXPECT_EQ(a.report.to_json().dump(), c.report.to_json().dump());
}

TEST(Benchmark, FailingBackboneBecomesFailedRow) {
  const auto& d = shared_data();
  auto bad = quick("forest");
  std::get<ForestParams>(bad.params).mtry = 10000;
  BenchmarkOptions o;
  o.include_baselines = false;
  const auto res = run_benchmark(d, {bad, quick("ridge")}, o);
  const auto* row = res.report.find("forest");
  ASSERT_NE(row, nullptr);
  EXPECT_TRUE(row->failed);
  EXPECT_FALSE(row->error.empty());
  EXPECT_FALSE(res.report.find("ridge")->failed);
}

TEST(Benchmark, OrderingAssertionsEvaluated) {
  const auto& d = shared_data();
  BenchmarkOptions o;
  o.include_baselines = false;
  o.assertions = {{{"ridge", "linear"}, 1e9}};
  const auto res = run_benchmark(d, {quick("ridge"), quick("linear")}, o);
  EXPECT_FALSE(res.report.all_assertions_pass());
  o.assertions = {{{"ridge", "does-not-exist"}, 0.0}};
  EXPECT_FALSE(run_benchmark(d, {quick("ridge")}, o).report.all_assertions_pass());
}

TEST(Benchmark, ConstantTargetGivesZeroError) {
  SyntheticSpec spec;
  spec.n_reviews = 300;
  spec.seed = 9;
  const auto d = prepare_synthetic(spec, 9, 3.0);
  BenchmarkOptions o;
  const auto res = run_benchmark(d, quick_backbones(), o);
  for (const auto& r : res.report.rows) {
    ASSERT_FALSE(r.failed) << r.label << ": " << r.error;
    EXPECT_LT(r.rmse, 1e-6) << r.label;
  }
}

TEST(Ablation, FullMaskMatchesBenchmarkRowBitIdentically) {
  const auto& d = shared_data();
  BenchmarkOptions o;
  o.seed = 41;
  for (const auto& name : {"ridge", "gbrt", "mlp"}) {
    const auto spec = quick(name);
    const auto bench = run_benchmark(d, {spec}, o);
    const auto abl = run_ablation(d, spec, {Mask::full()}, o);
    const auto* a = bench.report.find(name);
    const auto* b = abl.report.find(name);
    ASSERT_NE(a, nullptr);
    ASSERT_NE(b, nullptr);
    EXPECT_EQ(std::memcmp(&a->rmse, &b->rmse, sizeof(double)), 0) << name;
    EXPECT_EQ(std::memcmp(&a->mae, &b->mae, sizeof(double)), 0) << name;
    EXPECT_TRUE(bench.cells.front().predictions == abl.cells.front().predictions);
  }
}

TEST(Ablation, StandardMasksAndDeltas) {
  const auto& d = shared_data();
  const auto masks = standard_ablation_masks();
  ASSERT_EQ(masks.size(), 4u);
  const auto res = run_ablation(d, quick("ridge"), masks, BenchmarkOptions{});
  const auto* full = res.report.find("ridge");
  ASSERT_NE(full, nullptr);
  for (const char* l : {"ridge/-topic", "ridge/-sentiment", "ridge/-behavior"}) {
    const auto* r = res.report.find(l);
    ASSERT_NE(r, nullptr) << l;
    ASSERT_TRUE(r->delta_rmse.has_value());
    EXPECT_DOUBLE_EQ(*r->delta_rmse, r->rmse - full->rmse);
  }
}

TEST(Ablation, ZeroBehaviorWeightMakesBehaviorMaskHarmless) {
  SyntheticSpec spec;
  spec.n_reviews = 1500;
  spec.behavior_weight = 0.0;
  spec.seed = 12;
  const auto d = prepare_synthetic(spec, 12);
  const auto res = run_ablation(d, quick("ridge"), {Mask::full(), Mask::without(Segment::behavior)}, {});
  const auto* r = res.report.find("ridge/-behavior");
  ASSERT_NE(r, nullptr);
  EXPECT_LT(*r->delta_rmse, 0.02);
}

TEST(DomainBreakdown, SingleGroupEqualsOverall) {
  Rng rng(1);
  Eigen::VectorXd y(50), p(50);
  for (Eigen::Index i = 0; i < 50; ++i) y[i] = 1 + 4 * rng.uniform(), p[i] = y[i] + rng.normal();
  const auto rep = domain_breakdown(std::vector<std::string>(50, "cs"), y, {{"m", p}}, 30);
  const auto* row = rep.find("m", "cs");
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->rmse, rmse(y, p));
  EXPECT_EQ(row->mae, mae(y, p));
  EXPECT_EQ(rep.group_variance.front().second, 0.0);
}

TEST(DomainBreakdown, SmallGroupsExcludedWithNote) {
  std::vector<std::string> g(40, "big");
  for (int i = 0; i < 5; ++i) g.push_back("tiny");
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(45, 3.0);
  const auto rep = domain_breakdown(g, y, {{"m", y}}, 30);
  EXPECT_EQ(rep.find("m", "tiny"), nullptr);
  EXPECT_NE(rep.find("m", "big"), nullptr);
  ASSERT_FALSE(rep.notes.empty());
  EXPECT_NE(rep.notes.front().find("tiny"), std::string::npos);
}

TEST(DomainBreakdown, GroupRmseFollowsNoiseOrdering) {
  Rng rng(2);
  const std::map<std::string, double> sd{{"a", 0.2}, {"b", 0.5}, {"c", 1.0}};
  std::vector<std::string> groups;
  std::vector<double> ys, ps;
  for (const auto& [g, s] : sd) {
    for (int i = 0; i < 400; ++i) {
      groups.push_back(g);
      const double y = 3.0 + rng.normal();
      ys.push_back(y);
      ps.push_back(y + s * rng.normal());
    }
  }
  const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  const Eigen::VectorXd p = Eigen::Map<Eigen::VectorXd>(ps.data(), static_cast<Eigen::Index>(ps.size()));
  const auto rep = domain_breakdown(groups, y, {{"m", p}}, 30);
  const double ra = rep.find("m", "a")->rmse, rb = rep.find("m", "b")->rmse, rc = rep.find("m", "c")->rmse;
  EXPECT_LT(ra, rb);
  EXPECT_LT(rb, rc);
  const double mean = (ra + rb + rc) / 3.0;
  EXPECT_NEAR(rep.group_variance.front().second,
              ((ra - mean) * (ra - mean) + (rb - mean) * (rb - mean) + (rc - mean) * (rc - mean)) / 3.0, 1e-15);
}

TEST(DomainBreakdown, IdenticalDomainsHaveSmallSpread) {
  SyntheticSpec spec;
  spec.seed = 13;
  const auto d = prepare_synthetic(spec, 13);
  const auto cell = run_cell(d, quick("ridge"), Mask::full(), "ridge");
  const auto records = records_for(d.split.test, d.test().ids);
  std::vector<std::string> groups;
  for (const auto& r : records) groups.push_back(r.domain_tag);
  const auto rep = domain_breakdown(groups, d.test().y, {{"ridge", cell.predictions}}, 30);
  double lo = 1e9, hi = -1e9;
  for (const auto& r : rep.rows) lo = std::min(lo, r.rmse), hi = std::max(hi, r.rmse);
  EXPECT_EQ(rep.rows.size(), 3u);
  EXPECT_LT(hi - lo, 0.05);
}

TEST(TopErrors, PoisonedRowRanksFirst) {
  const auto& d = shared_data();
  const auto model = train(quick("ridge"), d.train(), &d.val());
  DesignMatrix test = d.test();
  Eigen::Index top = 0;
  test.y.maxCoeff(&top);
  test.y[top] = 1.0;
  const auto errors = top_errors(model, test, d.split.test, 5);
  ASSERT_EQ(errors.size(), 5u);
  EXPECT_EQ(errors.front().id, test.ids[static_cast<std::size_t>(top)]);
  EXPECT_EQ(errors.front().y, 1.0);
  EXPECT_FALSE(errors.front().excerpt.empty());
  EXPECT_EQ(errors.front().theta.size(), 6);
  EXPECT_EQ(errors.front().behavior.size(), 13);
  for (std::size_t i = 1; i < errors.size(); ++i) EXPECT_GE(errors[i - 1].abs_error, errors[i].abs_error);
}

TEST(TopErrors, ClipsKAndBreaksTiesById) {
  DesignMatrix d;
  d.X = Eigen::MatrixXd::Zero(3, 1);
  d.y = Eigen::Vector3d(3.0, 3.0, 3.0);
  d.ids = {"c", "a", "b"};
  d.mask = Mask::only(Segment::behavior);
  d.behavior = {0, 1};
  d.columns = {"behavior.x"};
  const auto perfect = top_errors(d.y, d, {}, 10);
  ASSERT_EQ(perfect.size(), 3u);
  EXPECT_EQ(perfect[0].id, "a");
  EXPECT_EQ(perfect[1].id, "b");
  EXPECT_EQ(perfect[2].id, "c");
  for (const auto& e : perfect) EXPECT_EQ(e.abs_error, 0.0);
  DesignMatrix two = d;
  two.X = Eigen::MatrixXd::Zero(2, 1);
  two.y = Eigen::Vector2d(1.0, 5.0);
  two.ids = {"x", "y"};
  EXPECT_EQ(top_errors(Eigen::Vector2d(2.0, 2.0), two, {}, 3).size(), 2u);
  EXPECT_THROW(top_errors(Eigen::Vector2d(2.0, 2.0), two, {}, 0), ConfigError);
}

TEST(Reports, WriteTextAndJson) {
  satpred::testing::TempDir dir;
  const auto& d = shared_data();
  const auto res = run_benchmark(d, {quick("ridge")}, BenchmarkOptions{});
  res.report.write(dir / "b.txt", dir / "b.json");
  const auto j = json::parse(satpred::testing::read_file(dir / "b.json"));
  EXPECT_EQ(j.at("kind"), "benchmark");
  EXPECT_EQ(j.at("rows").size(), res.report.rows.size());
  const auto text = satpred::testing::read_file(dir / "b.txt");
  EXPECT_NE(text.find("ridge"), std::string::npos);
  EXPECT_NE(text.find("tfidf+linear"), std::string::npos);
}
