#include "satpred/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"

namespace satpred {

using nlohmann::json;

namespace {

constexpr double kSecondsPerDay = 86400.0;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Monday-based week index; 1970-01-01 was a Thursday. ISO weeks run Monday to
/// Sunday, so this indexes them one-to-one.
std::int64_t iso_week_index(std::int64_t ts) {
  const std::int64_t day = floor_div(ts, 86400);
  return floor_div(day + 3, 7);
}

}  // namespace

std::string_view to_string(NormScheme s) { return s == NormScheme::zscore ? "zscore" : "minmax"; }

std::optional<NormScheme> parse_norm_scheme(std::string_view s) {
  if (s == "zscore") return NormScheme::zscore;
  if (s == "minmax") return NormScheme::minmax;
  return std::nullopt;
}

std::optional<double> pool_temporal(std::span<const Event> events, const Pooling& pooling, std::int64_t now) {
  if (events.empty()) return std::nullopt;
  if (pooling.kind == Pooling::Kind::weekly_mean) {
    std::map<std::int64_t, std::pair<double, int>> weeks;
    for (const Event& e : events) {
      auto& [sum, n] = weeks[iso_week_index(e.ts)];
      sum += e.value;
      ++n;
    }
    double total = 0.0;
    for (const auto& [week, acc] : weeks) total += acc.first / acc.second;
    return total / static_cast<double>(weeks.size());
  }

  if (pooling.decay_per_day < 0.0) throw ConfigError("decay rate must be >= 0");
  auto age_days = [&](const Event& e) {
    return std::max(0.0, static_cast<double>(now - e.ts) / kSecondsPerDay);
  };
  // Shift ages by the youngest so the largest weight is exactly 1 and very
  // large rates cannot underflow every weight.
  double youngest = age_days(events.front());
  for (const Event& e : events) youngest = std::min(youngest, age_days(e));
  double num = 0.0, den = 0.0;
  for (const Event& e : events) {
    const double w = std::exp(-pooling.decay_per_day * (age_days(e) - youngest));
    num += w * e.value;
    den += w;
  }
  return num / den;
}

BehaviorSchema BehaviorSchema::defaults() {
  BehaviorSchema s;
  s.features = {
      {"video_duration", NormScheme::zscore, {Pooling::Kind::exp_decay, 0.05}},
      {"quiz_attempts", NormScheme::zscore, {Pooling::Kind::exp_decay, 0.05}},
      {"forum_posts", NormScheme::zscore, {Pooling::Kind::weekly_mean, 0.05}},
      {"revisit_count", NormScheme::zscore, {Pooling::Kind::exp_decay, 0.05}},
  };
  s.include_completion = true;
  s.completion_scheme = NormScheme::minmax;
  return s;
}

std::vector<std::string> BehaviorSchema::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

std::vector<std::string> BehaviorSchema::column_names() const {
  std::vector<std::string> base = feature_names();
  if (include_completion) base.emplace_back(kCompletionFeature);
  std::vector<std::string> cols = base;
  for (const auto& b : base) cols.push_back(b + ".missing");
  if (include_completion) {
    for (auto c : {Completion::not_started, Completion::in_progress, Completion::completed}) {
      cols.push_back(std::string(kCompletionFeature) + "=" + std::string(to_string(c)));
    }
  }
  return cols;
}

std::optional<double> raw_feature(const ReviewRecord& record, const FeatureSpec& spec) {
  auto it = record.behavior_raw.find(spec.name);
  if (it == record.behavior_raw.end()) return std::nullopt;
  if (const double* scalar = std::get_if<double>(&it->second)) return *scalar;
  const auto& events = std::get<std::vector<Event>>(it->second);
  return pool_temporal(events, spec.pooling, record.timestamp);
}

std::optional<double> completion_level(const ReviewRecord& record) {
  if (!record.completion) return std::nullopt;
  return static_cast<double>(static_cast<int>(*record.completion));
}

NormStats fit_norm_stats(const Dataset& train, const BehaviorSchema& schema) {
  NormStats stats;
  stats.include_completion = schema.include_completion;
  std::vector<FeatureSpec> specs = schema.features;
  if (schema.include_completion) specs.push_back({kCompletionFeature, schema.completion_scheme, {}});

  for (const auto& spec : specs) {
    std::vector<double> values;
    values.reserve(train.size());
    for (const auto& r : train) {
      const auto v = spec.name == kCompletionFeature ? completion_level(r) : raw_feature(r, spec);
      if (v) values.push_back(*v);
    }
    if (values.empty()) {
      throw ConfigError("behavior feature '" + spec.name + "' has no observed values in the training split");
    }
    FeatureStats fs;
    fs.spec = spec;
    fs.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    fs.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - fs.mean) * (v - fs.mean);
    fs.sd = std::sqrt(ss / static_cast<double>(values.size()));
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    fs.min = *lo;
    fs.max = *hi;
    stats.features.push_back(fs);
  }
  return stats;
}

double normalize_value(double raw, const FeatureStats& stats) {
  if (stats.spec.scheme == NormScheme::zscore) {
    if (!(stats.sd > 0.0)) return 0.0;
    return (raw - stats.mean) / stats.sd;
  }
  if (!(stats.max > stats.min)) return 0.0;
  return std::clamp((raw - stats.min) / (stats.max - stats.min), 0.0, 1.0);
}

Eigen::VectorXd normalize(const ReviewRecord& record, const NormStats& stats) {
  const auto F = static_cast<Eigen::Index>(stats.features.size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(stats.dim()));
  for (Eigen::Index k = 0; k < F; ++k) {
    const auto& fs = stats.features[static_cast<std::size_t>(k)];
    const auto raw = fs.spec.name == kCompletionFeature ? completion_level(record) : raw_feature(record, fs.spec);
    if (raw) b[k] = normalize_value(*raw, fs);
    else b[F + k] = 1.0;
  }
  if (stats.include_completion && record.completion) {
    b[2 * F + static_cast<int>(*record.completion)] = 1.0;
  }
  return b;
}

void NormStats::save(const std::filesystem::path& path) const {
  json feats = json::array();
  for (const auto& f : features) {
    feats.push_back({{"name", f.spec.name},
                     {"scheme", std::string(to_string(f.spec.scheme))},
                     {"pooling", f.spec.pooling.kind == Pooling::Kind::weekly_mean ? "weekly_mean" : "exp_decay"},
                     {"decay_per_day", f.spec.pooling.decay_per_day},
                     {"mean", f.mean},
                     {"sd", f.sd},
                     {"min", f.min},
                     {"max", f.max},
                     {"count", f.count}});
  }
  json doc = {{"version", 1}, {"include_completion", include_completion}, {"features", feats}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

NormStats NormStats::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  NormStats stats;
  try {
    const json doc = json::parse(in);
    if (doc.at("version").get<int>() != 1) throw FormatError("unsupported norm stats version");
    stats.include_completion = doc.at("include_completion").get<bool>();
    for (const auto& f : doc.at("features")) {
      FeatureStats fs;
      fs.spec.name = f.at("name").get<std::string>();
      auto scheme = parse_norm_scheme(f.at("scheme").get<std::string>());
      if (!scheme) throw FormatError("unknown normalization scheme");
      fs.spec.scheme = *scheme;
      fs.spec.pooling.kind = f.at("pooling").get<std::string>() == "weekly_mean" ? Pooling::Kind::weekly_mean
                                                                                  : Pooling::Kind::exp_decay;
      fs.spec.pooling.decay_per_day = f.at("decay_per_day").get<double>();
      fs.mean = f.at("mean").get<double>();
      fs.sd = f.at("sd").get<double>();
      fs.min = f.at("min").get<double>();
      fs.max = f.at("max").get<double>();
      fs.count = f.at("count").get<std::size_t>();
      stats.features.push_back(fs);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return stats;
}

}  // namespace satpred
