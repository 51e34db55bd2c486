#include "satpred/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/json_fields.hpp"
#include "satpred/rng.hpp"

namespace satpred {

using nlohmann::json;

namespace {

// Child-seed streams derived from the top-level seed.
enum SeedStream : std::uint64_t { kSplit = 1, kLda = 2, kFoldIn = 3, kEncoder = 4, kSynthetic = 5 };

std::string_view provider_name(EmbeddingConfig::Provider p) {
  switch (p) {
    case EmbeddingConfig::Provider::test: return "test";
    case EmbeddingConfig::Provider::file: return "file";
    case EmbeddingConfig::Provider::http: return "http";
  }
  return "?";
}

std::string_view pooling_name(Pooling::Kind k) { return k == Pooling::Kind::weekly_mean ? "weekly_mean" : "exp_decay"; }

NormScheme scheme_from(const std::string& s) {
  auto v = parse_norm_scheme(s);
  if (!v) throw ConfigError("unknown normalization scheme '" + s + "' (expected zscore or minmax)");
  return *v;
}

OrderingAssertion assertion_from(const json& j) {
  OrderingAssertion a;
  FieldReader r(j, "assertion");
  if (!r.read("order", a.rows) || a.rows.size() < 2) throw ConfigError("assertion needs an 'order' list of >= 2 rows");
  r.read("min_gap", a.min_gap);
  r.finish();
  if (!(a.min_gap >= 0.0)) throw ConfigError("assertion min_gap must be >= 0");
  return a;
}

json assertion_json(const OrderingAssertion& a) { return {{"order", a.rows}, {"min_gap", a.min_gap}}; }

void read_dataset(FieldReader& top, ExperimentConfig& c) {
  const json* j = top.child("dataset");
  if (!j) return;
  FieldReader r(*j, "dataset");
  std::string s;
  if (r.read("path", s)) c.dataset_path = s;
  if (r.read("format", s)) {
    auto f = parse_input_format(s);
    if (!f) throw ConfigError("dataset.format must be jsonl or csv");
    c.dataset_format = *f;
  }
  if (r.read("stopwords", s)) c.stopwords_path = s;
  r.finish();
}

void read_split(FieldReader& top, ExperimentConfig& c) {
  c.split_seed = mix_seed(c.seed, kSplit);
  const json* j = top.child("split");
  if (!j) return;
  FieldReader r(*j, "split");
  r.read("train", c.ratios.train);
  r.read("val", c.ratios.val);
  r.read("test", c.ratios.test);
  r.read("seed", c.split_seed);
  r.finish();
}

void read_topics(FieldReader& top, ExperimentConfig& c) {
  auto& t = c.topics;
  t.lda.seed = mix_seed(c.seed, kLda);
  c.fold_in.seed = mix_seed(c.seed, kFoldIn);
  if (const json* j = top.child("topics")) {
    FieldReader r(*j, "topics");
    r.read("k", t.lda.num_topics);
    r.read("alpha", t.lda.alpha);
    r.read("beta", t.lda.beta);
    r.read("iterations", t.lda.iterations);
    r.read("burn_in", t.lda.burn_in);
    r.read("thin", t.lda.thin);
    r.read("seed", t.lda.seed);
    r.read("pool_by_course", t.pool_by_course);
    r.read("min_doc_freq", t.min_doc_freq);
    r.read("labels", t.labels);
    r.read("fold_in_iterations", c.fold_in.iterations);
    r.read("fold_in_burn_in", c.fold_in.burn_in);
    r.read("fold_in_seed", c.fold_in.seed);
    r.finish();
  }
  if (t.lda.num_topics < 2) throw ConfigError("topics.k must be >= 2");
  if (!(t.lda.beta > 0.0)) throw ConfigError("topics.beta must be > 0");
  if (t.lda.alpha < 0.0) throw ConfigError("topics.alpha must be > 0 (omit it for 50/k)");
  t.lda.alpha = t.lda.resolved_alpha();
  if (!(t.lda.iterations > t.lda.burn_in && t.lda.burn_in >= 0)) throw ConfigError("topics: need iterations > burn_in >= 0");
  if (t.lda.thin < 1) throw ConfigError("topics.thin must be >= 1");
  if (t.min_doc_freq < 1) throw ConfigError("topics.min_doc_freq must be >= 1");
  if (!t.labels.empty() && static_cast<int>(t.labels.size()) != t.lda.num_topics) {
    throw ConfigError("topics.labels must have exactly k entries");
  }
  if (!(c.fold_in.iterations > c.fold_in.burn_in && c.fold_in.burn_in >= 0)) {
    throw ConfigError("topics: need fold_in_iterations > fold_in_burn_in >= 0");
  }
}

void read_embedding(FieldReader& top, ExperimentConfig& c) {
  auto& e = c.embedding;
  e.seed = mix_seed(c.seed, kEncoder);
  if (const json* j = top.child("embedding")) {
    FieldReader r(*j, "embedding");
    std::string s;
    if (r.read("provider", s)) {
      if (s == "test") e.provider = EmbeddingConfig::Provider::test;
      else if (s == "file") e.provider = EmbeddingConfig::Provider::file;
      else if (s == "http") e.provider = EmbeddingConfig::Provider::http;
      else throw ConfigError("embedding.provider must be test, file or http");
    }
    r.read("dim", e.dim);
    r.read("seed", e.seed);
    if (r.read("path", s)) e.path = s;
    r.read("endpoint", e.endpoint);
    r.read("batch_size", e.batch_size);
    r.read("window", e.window);
    r.finish();
  }
  if (e.dim < 2) throw ConfigError("embedding.dim must be >= 2");
  if (e.batch_size < 1) throw ConfigError("embedding.batch_size must be >= 1");
  if (e.window < 1) throw ConfigError("embedding.window must be >= 1");
  if (e.provider == EmbeddingConfig::Provider::file && e.path.empty()) {
    throw ConfigError("embedding.path is required for the file provider");
  }
}

void read_behavior(FieldReader& top, ExperimentConfig& c) {
  const json* j = top.child("behavior");
  if (!j) return;
  FieldReader r(*j, "behavior");
  if (const json* feats = r.child("features")) {
    if (!feats->is_array()) throw ConfigError("behavior.features must be an array");
    c.behavior.features.clear();
    std::set<std::string> names;
    for (const auto& fj : *feats) {
      FieldReader fr(fj, "behavior feature");
      FeatureSpec f;
      if (!fr.read("name", f.name) || f.name.empty()) throw ConfigError("behavior feature needs a name");
      if (f.name == kCompletionFeature) throw ConfigError("'completion' is configured by behavior.completion");
      if (!names.insert(f.name).second) throw ConfigError("duplicate behavior feature '" + f.name + "'");
      std::string s;
      if (fr.read("scheme", s)) f.scheme = scheme_from(s);
      if (fr.read("pooling", s)) {
        if (s == "weekly_mean") f.pooling.kind = Pooling::Kind::weekly_mean;
        else if (s == "exp_decay") f.pooling.kind = Pooling::Kind::exp_decay;
        else throw ConfigError("behavior pooling must be weekly_mean or exp_decay");
      }
      fr.read("decay_per_day", f.pooling.decay_per_day);
      if (!(f.pooling.decay_per_day >= 0.0)) throw ConfigError("behavior decay_per_day must be >= 0");
      fr.finish();
      c.behavior.features.push_back(std::move(f));
    }
  }
  r.read("completion", c.behavior.include_completion);
  std::string s;
  if (r.read("completion_scheme", s)) c.behavior.completion_scheme = scheme_from(s);
  r.finish();
  if (c.behavior.num_features() == 0) throw ConfigError("behavior schema is empty");
}

void read_backbones(FieldReader& top, ExperimentConfig& c) {
  const json* j = top.child("backbones");
  std::vector<json> entries;
  if (j) {
    if (!j->is_array() || j->empty()) throw ConfigError("backbones must be a non-empty array");
    entries.assign(j->begin(), j->end());
  } else {
    for (const auto& n : RegressorSpec::preset_names()) entries.emplace_back(n);
  }
  std::set<std::string> names;
  for (const auto& e : entries) {
    RegressorSpec s = RegressorSpec::from_json(e);
    if (!(e.is_object() && e.contains("seed"))) s.seed = mix_seed(c.seed, fnv1a(s.name));
    if (!names.insert(s.name).second) throw ConfigError("duplicate backbone name '" + s.name + "'");
    c.backbones.push_back(std::move(s));
  }
}

}  // namespace

Mask parse_mask(const json& j) {
  if (j.is_array()) {
    try {
      return Mask::from_names(j.get<std::vector<std::string>>());
    } catch (const json::exception&) {
      throw ConfigError("mask arrays must hold segment names");
    }
  }
  if (!j.is_string()) throw ConfigError("mask must be a string or an array of segment names");
  const std::string s = j.get<std::string>();
  if (s == "full") return Mask::full();
  if (!s.empty() && s[0] == '-') {
    const Mask one = Mask::from_names({s.substr(1)});
    for (Segment seg : {Segment::topic, Segment::sentiment, Segment::behavior}) {
      if (one.contains(seg)) return Mask::without(seg);
    }
  }
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t plus = s.find('+', start);
    names.push_back(s.substr(start, plus == std::string::npos ? std::string::npos : plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return Mask::from_names(names);
}

std::unique_ptr<EmbeddingProvider> EmbeddingConfig::make_provider() const {
  switch (provider) {
    case Provider::test: return std::make_unique<TestEncoderProvider>(dim, seed);
    case Provider::file: return std::make_unique<StoreProvider>(load_embeddings(path));
    case Provider::http:
      if (endpoint.empty()) return HttpProvider::from_env(window);
      return std::make_unique<HttpProvider>(endpoint, window);
  }
  throw ConfigError("unknown embedding provider");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, std::optional<std::uint64_t> seed_override,
                                             std::optional<std::filesystem::path> out_override) {
  ExperimentConfig c;
  FieldReader top(j, "config");
  const bool has_seed = top.read("seed", c.seed);
  if (seed_override) c.seed = *seed_override;
  else if (!has_seed) throw ConfigError("a seed is required: set \"seed\" in the config or pass --seed");

  std::string out;
  if (top.read("output_dir", out)) c.output_dir = out;
  if (out_override) c.output_dir = *out_override;
  if (c.output_dir.empty()) throw ConfigError("an output directory is required: set \"output_dir\" or pass --out");

  read_dataset(top, c);

  if (const json* sj = top.child("synthetic")) c.synthetic = SyntheticSpec::from_json(*sj);
  if (!(top.child("synthetic") && top.child("synthetic")->contains("seed"))) c.synthetic.seed = mix_seed(c.seed, kSynthetic);

  read_split(top, c);
  const double sum = c.ratios.train + c.ratios.val + c.ratios.test;
  if (!(c.ratios.train > 0.0 && c.ratios.val > 0.0 && c.ratios.test > 0.0) || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  read_topics(top, c);
  read_embedding(top, c);
  read_behavior(top, c);

  if (const json* fj = top.child("fusion")) {
    FieldReader r(*fj, "fusion");
    r.read("max_drop_fraction", c.max_drop_fraction);
    r.read("clamp_predictions", c.clamp_predictions);
    r.finish();
  }
  if (!(c.max_drop_fraction >= 0.0 && c.max_drop_fraction <= 1.0)) throw ConfigError("fusion.max_drop_fraction must be in [0, 1]");

  read_backbones(top, c);

  if (const json* mj = top.child("masks")) {
    if (!mj->is_array() || mj->empty()) throw ConfigError("masks must be a non-empty array");
    for (const auto& m : *mj) c.masks.push_back(parse_mask(m));
  } else {
    c.masks = standard_ablation_masks();
  }

  if (const json* aj = top.child("ablation")) {
    FieldReader r(*aj, "ablation");
    r.read("backbone", c.ablation_backbone);
    r.finish();
  }
  c.backbone(c.ablation_backbone);

  if (const json* rj = top.child("report")) {
    FieldReader r(*rj, "report");
    r.read("top_errors", c.top_errors);
    r.read("domain_floor", c.domain_floor);
    r.finish();
  }
  if (c.top_errors < 1) throw ConfigError("report.top_errors must be >= 1");

  if (const json* aj = top.child("assertions")) {
    FieldReader r(*aj, "assertions");
    for (const char* key : {"benchmark", "ablation"}) {
      if (const json* list = r.child(key)) {
        if (!list->is_array()) throw ConfigError(std::string("assertions.") + key + " must be an array");
        auto& dst = std::string(key) == "benchmark" ? c.benchmark_assertions : c.ablation_assertions;
        for (const auto& a : *list) dst.push_back(assertion_from(a));
      }
    }
    r.finish();
  }
  top.finish();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override,
                                        std::optional<std::filesystem::path> out_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(j, seed_override, out_override);
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  json ds = {{"format", dataset_format == InputFormat::jsonl ? "jsonl" : "csv"}};
  if (dataset_path) ds["path"] = dataset_path->string();
  if (stopwords_path) ds["stopwords"] = stopwords_path->string();
  j["dataset"] = ds;
  j["synthetic"] = synthetic.to_json();
  j["split"] = {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}, {"seed", split_seed}};
  j["topics"] = {{"k", topics.lda.num_topics},
                 {"alpha", topics.lda.resolved_alpha()},
                 {"beta", topics.lda.beta},
                 {"iterations", topics.lda.iterations},
                 {"burn_in", topics.lda.burn_in},
                 {"thin", topics.lda.thin},
                 {"seed", topics.lda.seed},
                 {"pool_by_course", topics.pool_by_course},
                 {"min_doc_freq", topics.min_doc_freq},
                 {"labels", topics.labels},
                 {"fold_in_iterations", fold_in.iterations},
                 {"fold_in_burn_in", fold_in.burn_in},
                 {"fold_in_seed", fold_in.seed}};
  json emb = {{"provider", provider_name(embedding.provider)},
              {"dim", embedding.dim},
              {"seed", embedding.seed},
              {"batch_size", embedding.batch_size},
              {"window", embedding.window}};
  if (!embedding.path.empty()) emb["path"] = embedding.path.string();
  if (!embedding.endpoint.empty()) emb["endpoint"] = embedding.endpoint;
  j["embedding"] = emb;
  json feats = json::array();
  for (const auto& f : behavior.features) {
    feats.push_back({{"name", f.name},
                     {"scheme", to_string(f.scheme)},
                     {"pooling", pooling_name(f.pooling.kind)},
                     {"decay_per_day", f.pooling.decay_per_day}});
  }
  j["behavior"] = {{"features", feats},
                   {"completion", behavior.include_completion},
                   {"completion_scheme", to_string(behavior.completion_scheme)}};
  j["fusion"] = {{"max_drop_fraction", max_drop_fraction}, {"clamp_predictions", clamp_predictions}};
  json bb = json::array();
  for (const auto& b : backbones) {
    json s = b.to_json();
    // from_json wants exactly one of preset/backbone; the resolved form keeps the family.
    bb.push_back(std::move(s));
  }
  j["backbones"] = bb;
  json masks_j = json::array();
  for (const auto& m : masks) masks_j.push_back(m.names());
  j["masks"] = masks_j;
  j["ablation"] = {{"backbone", ablation_backbone}};
  j["report"] = {{"top_errors", top_errors}, {"domain_floor", domain_floor}};
  json as = {{"benchmark", json::array()}, {"ablation", json::array()}};
  for (const auto& a : benchmark_assertions) as["benchmark"].push_back(assertion_json(a));
  for (const auto& a : ablation_assertions) as["ablation"].push_back(assertion_json(a));
  j["assertions"] = as;
  return j;
}

Tokenizer ExperimentConfig::tokenizer() const {
  return stopwords_path ? Tokenizer::from_stopword_file(*stopwords_path) : Tokenizer();
}

FeaturizeOptions ExperimentConfig::featurize_options() const {
  FeaturizeOptions f;
  f.behavior = behavior;
  f.fold_in = fold_in;
  f.max_drop_fraction = max_drop_fraction;
  f.mask = Mask::full();
  return f;
}

PipelineOptions ExperimentConfig::pipeline_options() const {
  PipelineOptions p;
  p.ratios = ratios;
  p.split_seed = split_seed;
  p.topics = topics;
  p.featurize = featurize_options();
  p.embed_batch_size = embedding.batch_size;
  return p;
}

RegressorSpec ExperimentConfig::backbone(const std::string& name) const {
  for (const auto& b : backbones) {
    if (b.name == name) return b;
  }
  const auto& presets = RegressorSpec::preset_names();
  if (std::find(presets.begin(), presets.end(), name) == presets.end()) {
    throw ConfigError("backbone '" + name + "' is neither configured nor a preset");
  }
  RegressorSpec spec = RegressorSpec::preset(name);
  spec.seed = mix_seed(seed, fnv1a(spec.name));
  return spec;
}

}  // namespace satpred
