#include <cmath>

#include <gtest/gtest.h>

#include "satpred/behavior.hpp"
#include "satpred/error.hpp"
#include "test_util.hpp"

using namespace satpred;
using satpred::testing::make_record;
using satpred::testing::TempDir;

namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kMonday = 1704067200;  // 2024-01-01T00:00:00Z, ISO week 2024-W01

Pooling decay(double rate) { return {Pooling::Kind::exp_decay, rate}; }
Pooling weekly() { return {Pooling::Kind::weekly_mean, 0.0}; }

ReviewRecord with_feature(std::string id, std::string name, std::optional<double> v) {
  auto r = make_record(std::move(id), "c", "t", 3.0);
  if (v) r.behavior_raw[std::move(name)] = *v;
  return r;
}

BehaviorSchema one_feature(NormScheme scheme) {
  BehaviorSchema s;
  s.features = {{"f", scheme, decay(0.05)}};
  s.include_completion = false;
  return s;
}

FeatureStats stats_of(NormScheme scheme, double mean, double sd, double min, double max) {
  FeatureStats fs;
  fs.spec = {"f", scheme, {}};
  fs.mean = mean;
  fs.sd = sd;
  fs.min = min;
  fs.max = max;
  fs.count = 1;
  return fs;
}

}  // namespace

TEST(PoolTemporal, EmptyIsMissing) {
  EXPECT_FALSE(pool_temporal({}, decay(0.05), kMonday).has_value());
  EXPECT_FALSE(pool_temporal({}, weekly(), kMonday).has_value());
}

TEST(PoolTemporal, SingletonUnderBothSchemes) {
  const std::vector<Event> e{{kMonday - 3 * kDay, 7.0}};
  EXPECT_DOUBLE_EQ(*pool_temporal(e, decay(0.05), kMonday), 7.0);
  EXPECT_DOUBLE_EQ(*pool_temporal(e, weekly(), kMonday), 7.0);
}

TEST(PoolTemporal, ZeroRateIsArithmeticMean) {
  const std::vector<Event> e{{kMonday - 40 * kDay, 1.0}, {kMonday - 2 * kDay, 2.0}, {kMonday, 6.0}};
  EXPECT_NEAR(*pool_temporal(e, decay(0.0), kMonday), 3.0, 1e-12);
}

TEST(PoolTemporal, DecayHandExample) {
  const std::vector<Event> e{{kMonday, 1.0}, {kMonday - 30 * kDay, 3.0}};
  const double w = std::exp(-30.0);
  EXPECT_NEAR(*pool_temporal(e, decay(1.0), kMonday), (1.0 + 3.0 * w) / (1.0 + w), 1e-12);
}

TEST(PoolTemporal, HugeRateReturnsMostRecentValue) {
  const std::vector<Event> e{{kMonday - 10 * kDay, 100.0}, {kMonday - kDay, 4.5}, {kMonday - 3 * kDay, -8.0}};
  EXPECT_NEAR(*pool_temporal(e, decay(1e6), kMonday), 4.5, 1e-9);
}

TEST(PoolTemporal, FutureEventsCountAsAgeZero) {
  const std::vector<Event> e{{kMonday + 5 * kDay, 2.0}, {kMonday, 4.0}};
  EXPECT_NEAR(*pool_temporal(e, decay(3.0), kMonday), 3.0, 1e-12);
}

TEST(PoolTemporal, NegativeRateIsConfigError) {
  const std::vector<Event> e{{kMonday, 1.0}};
  EXPECT_THROW(pool_temporal(e, decay(-1.0), kMonday), ConfigError);
}

TEST(PoolTemporal, WeeklyMeanAveragesIsoWeekMeans) {
  // Mon 2024-01-01 and Sun 2024-01-07 share W01; Mon 2024-01-08 is W02;
  // Sun 2023-12-31 belongs to 2023-W52.
  const std::vector<Event> e{
      {kMonday, 1.0}, {kMonday + 6 * kDay + 3600, 3.0}, {kMonday + 7 * kDay, 10.0}, {kMonday - kDay, 30.0}};
  // Week means 2, 10, 30.
  EXPECT_NEAR(*pool_temporal(e, weekly(), kMonday + 30 * kDay), 14.0, 1e-12);
}

TEST(PoolTemporal, WeeklyMeanIndependentOfEventOrder) {
  std::vector<Event> e{{kMonday, 1.0}, {kMonday + 9 * kDay, 5.0}, {kMonday + 2 * kDay, 2.0}};
  const double a = *pool_temporal(e, weekly(), kMonday);
  std::reverse(e.begin(), e.end());
  EXPECT_DOUBLE_EQ(*pool_temporal(e, weekly(), kMonday), a);
  EXPECT_NEAR(a, (1.5 + 5.0) / 2.0, 1e-12);
}

TEST(FitNormStats, MinMaxForcedExample) {
  const Dataset d{with_feature("a", "f", 0.0), with_feature("b", "f", 5.0), with_feature("c", "f", 10.0)};
  const auto s = fit_norm_stats(d, one_feature(NormScheme::minmax));
  ASSERT_EQ(s.features.size(), 1u);
  EXPECT_EQ(s.features[0].min, 0.0);
  EXPECT_EQ(s.features[0].max, 10.0);
  std::vector<double> out;
  for (const auto& r : d) out.push_back(normalize(r, s)[0]);
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(FitNormStats, ZscorePopulationStatistics) {
  const Dataset d{with_feature("a", "f", 2.0), with_feature("b", "f", 4.0), with_feature("c", "f", 6.0)};
  const auto s = fit_norm_stats(d, one_feature(NormScheme::zscore));
  EXPECT_NEAR(s.features[0].mean, 4.0, 1e-12);
  EXPECT_NEAR(s.features[0].sd, std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_NEAR(normalize(d[0], s)[0], -1.2247, 1e-4);
}

TEST(FitNormStats, MissingValuesExcludedFromStatistics) {
  const Dataset d{with_feature("a", "f", 1.0), with_feature("b", "f", std::nullopt), with_feature("c", "f", 3.0)};
  const auto s = fit_norm_stats(d, one_feature(NormScheme::zscore));
  EXPECT_EQ(s.features[0].count, 2u);
  EXPECT_DOUBLE_EQ(s.features[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(s.features[0].sd, 1.0);
}

TEST(FitNormStats, FeatureMissingInTrainingIsConfigError) {
  const Dataset d{with_feature("a", "g", 1.0), with_feature("b", "g", 2.0)};
  EXPECT_THROW(fit_norm_stats(d, one_feature(NormScheme::zscore)), ConfigError);
}

TEST(FitNormStats, UsesOnlyTheGivenRecords) {
  const Dataset train{with_feature("a", "f", 1.0), with_feature("b", "f", 3.0)};
  const auto s = fit_norm_stats(train, one_feature(NormScheme::zscore));
  // Mean 2, population sd 1; a far-out value is not clipped under zscore.
  EXPECT_DOUBLE_EQ(normalize(with_feature("t", "f", 101.0), s)[0], 99.0);
}

TEST(Normalize, DegenerateStatsGiveZero) {
  EXPECT_EQ(normalize_value(7.0, stats_of(NormScheme::zscore, 7.0, 0.0, 7.0, 7.0)), 0.0);
  EXPECT_EQ(normalize_value(9.0, stats_of(NormScheme::minmax, 7.0, 0.0, 7.0, 7.0)), 0.0);
}

TEST(Normalize, MinMaxClipsOutOfRange) {
  const auto fs = stats_of(NormScheme::minmax, 5.0, 1.0, 0.0, 10.0);
  EXPECT_EQ(normalize_value(-3.0, fs), 0.0);
  EXPECT_EQ(normalize_value(12.0, fs), 1.0);
  EXPECT_EQ(normalize_value(2.5, fs), 0.25);
}

TEST(Normalize, MissingFeatureSetsIndicatorAndZeroValue) {
  const Dataset d{with_feature("a", "f", 1.0), with_feature("b", "f", 3.0)};
  const auto s = fit_norm_stats(d, one_feature(NormScheme::zscore));
  const auto b = normalize(with_feature("m", "f", std::nullopt), s);
  ASSERT_EQ(b.size(), 2);
  EXPECT_EQ(b[0], 0.0);
  EXPECT_EQ(b[1], 1.0);
  const auto p = normalize(d[0], s);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Normalize, DefaultSchemaLayoutHasDimensionThirteen) {
  const auto schema = BehaviorSchema::defaults();
  EXPECT_EQ(schema.num_features(), 5u);
  EXPECT_EQ(schema.dim(), 13u);
  EXPECT_EQ(schema.column_names().size(), 13u);
  EXPECT_EQ(schema.column_names()[5], "video_duration.missing");
}

TEST(Normalize, TrainingSetInvariantsOnSyntheticData) {
  const auto data = satpred::testing::small_synthetic(400, 11);
  const auto schema = BehaviorSchema::defaults();
  const auto stats = fit_norm_stats(data.dataset, schema);
  const std::size_t F = stats.features.size();
  for (std::size_t k = 0; k < F; ++k) {
    double sum = 0.0, ss = 0.0, lo = 1e300, hi = -1e300;
    std::size_t n = 0;
    for (const auto& r : data.dataset) {
      const auto b = normalize(r, stats);
      ASSERT_EQ(static_cast<std::size_t>(b.size()), stats.dim());
      ASSERT_TRUE(b.allFinite());
      const double v = b[static_cast<Eigen::Index>(k)];
      if (b[static_cast<Eigen::Index>(F + k)] == 1.0) {
        ASSERT_EQ(v, 0.0);
        continue;
      }
      sum += v;
      ss += v * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n;
    }
    ASSERT_GT(n, 0u);
    const double mean = sum / static_cast<double>(n);
    if (stats.features[k].spec.scheme == NormScheme::zscore) {
      EXPECT_NEAR(mean, 0.0, 1e-9) << stats.features[k].spec.name;
      EXPECT_NEAR(ss / static_cast<double>(n) - mean * mean, 1.0, 1e-9) << stats.features[k].spec.name;
    } else {
      EXPECT_EQ(lo, 0.0);
      EXPECT_EQ(hi, 1.0);
    }
  }
}

TEST(Normalize, CompletionOneHot) {
  auto a = make_record("a", "c", "t", 3.0);
  a.completion = Completion::not_started;
  auto b = make_record("b", "c", "t", 3.0);
  b.completion = Completion::completed;
  auto m = make_record("m", "c", "t", 3.0);
  BehaviorSchema schema;
  schema.include_completion = true;
  const auto s = fit_norm_stats(Dataset{a, b}, schema);
  const auto va = normalize(a, s), vb = normalize(b, s), vm = normalize(m, s);
  ASSERT_EQ(va.size(), 5);
  EXPECT_EQ(va[0], 0.0);
  EXPECT_EQ(vb[0], 1.0);
  EXPECT_EQ(va[2], 1.0);
  EXPECT_EQ(vb[4], 1.0);
  EXPECT_EQ(vm[1], 1.0);
  EXPECT_EQ(vm.segment(2, 3).sum(), 0.0);
}

TEST(NormStats, SaveLoadRoundTrip) {
  TempDir dir;
  const auto data = satpred::testing::small_synthetic(100, 3);
  const auto s = fit_norm_stats(data.dataset, BehaviorSchema::defaults());
  s.save(dir / "n.json");
  const auto back = NormStats::load(dir / "n.json");
  ASSERT_EQ(back.features.size(), s.features.size());
  for (const auto& r : data.dataset) ASSERT_TRUE(normalize(r, back) == normalize(r, s));
  satpred::testing::write_file(dir / "bad.json", "{\"version\":9}");
  EXPECT_THROW(NormStats::load(dir / "bad.json"), FormatError);
}
