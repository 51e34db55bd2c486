#include "satpred/app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "satpred/config.hpp"
#include "satpred/eval.hpp"
#include "satpred/pipeline.hpp"
#include "satpred/synthetic.hpp"

namespace satpred::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out;
  std::ostream& log;

  fs::path at(const char* name) const { return out / name; }

  /// Path of an upstream artifact; MissingArtifact when absent.
  fs::path need(const char* name, const char* producer) const {
    fs::path p = out / name;
    if (!fs::exists(p)) throw MissingArtifact(p, producer);
    return p;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

Context open_context(const CommonArgs& args, std::ostream& log) {
  std::optional<fs::path> out;
  if (args.out) out = fs::path(*args.out);
  ExperimentConfig cfg = args.config.empty() ? ExperimentConfig::from_json(json::object(), args.seed, out)
                                             : ExperimentConfig::load(args.config, args.seed, out);
  Context ctx{std::move(cfg), {}, log};
  ctx.out = ctx.cfg.output_dir;
  fs::create_directories(ctx.out);
  write_text(ctx.at(artifact::kResolvedConfig), ctx.cfg.to_json().dump(2) + "\n");
  return ctx;
}

Dataset load_reviews(const Context& ctx) {
  const fs::path p = ctx.need(artifact::kReviews, "ingest");
  IngestResult r = ingest_reviews(p, InputFormat::jsonl);
  if (!r.rejects.empty()) throw DataError(p.string() + " has invalid rows; rerun `satpred ingest`");
  return std::move(r.dataset);
}

DatasetSplit load_split(const Context& ctx, const Dataset& reviews) {
  return apply_split(reviews, satpred::load_split(ctx.need(artifact::kSplit, "split")));
}

TopicStage load_topic_stage(const Context& ctx) {
  TopicStage t;
  t.vocab = Vocabulary::load(ctx.need(artifact::kVocab, "fit-topics"));
  t.model = TopicModel::load(ctx.need(artifact::kTopicModel, "fit-topics"));
  if (t.model.vocab_hash != t.vocab.hash()) {
    throw DataError("topic model does not match the vocabulary; rerun `satpred fit-topics`");
  }
  return t;
}

EmbeddingStore encode_all(const Context& ctx, const Dataset& dataset) {
  auto provider = ctx.cfg.embedding.make_provider();
  const auto items = embed_items(dataset);
  try {
    return encode_batch(*provider, items, ctx.cfg.embedding.batch_size);
  } catch (const EmbedFailure& e) {
    std::string ids;
    for (std::size_t i = 0; i < e.failed_ids.size() && i < 10; ++i) ids += (i ? ", " : "") + e.failed_ids[i];
    if (e.failed_ids.size() > 10) ids += ", ...";
    throw Error(std::string(e.what()) + " [" + ids + "]");
  }
}

/// Reuses embeddings.emb when it came from the configured provider and covers
/// every review; otherwise encodes in-process.
EmbeddingStore embeddings_for(const Context& ctx, const Dataset& dataset) {
  const fs::path p = ctx.at(artifact::kEmbeddings);
  if (fs::exists(p)) {
    EmbeddingStore store = load_embeddings(p);
    const std::string tag = ctx.cfg.embedding.make_provider()->tag();
    const bool covers = std::all_of(dataset.begin(), dataset.end(), [&](const auto& r) { return store.contains(r.id); });
    if (store.provider_tag() == tag && covers) {
      ctx.log << "reusing " << p.string() << '\n';
      return store;
    }
  }
  return encode_all(ctx, dataset);
}

PreparedData prepare_in_process(const Context& ctx) {
  const Dataset reviews = load_reviews(ctx);
  PreparedData d;
  d.tokenizer = ctx.cfg.tokenizer();
  d.split = split_dataset(reviews, ctx.cfg.ratios, ctx.cfg.split_seed);
  d.topics = fit_topic_stage(d.split.train, d.tokenizer, ctx.cfg.topics);
  d.embeddings = embeddings_for(ctx, reviews);
  d.features = featurize(d.split, d.tokenizer, d.topics, d.embeddings, ctx.cfg.featurize_options());
  return d;
}

BenchmarkOptions benchmark_options(const ExperimentConfig& cfg, std::vector<OrderingAssertion> assertions) {
  BenchmarkOptions o;
  o.seed = cfg.seed;
  o.clamp_predictions = cfg.clamp_predictions;
  o.tfidf_min_doc_freq = cfg.topics.min_doc_freq;
  o.assertions = std::move(assertions);
  return o;
}

int finish_report(const Context& ctx, const EvalReport& report, const char* text_name, const char* json_name) {
  report.write(ctx.at(text_name), ctx.at(json_name));
  ctx.log << report.to_text();
  if (!report.all_assertions_pass()) {
    ctx.log << "assertion failure; see " << ctx.at(text_name).string() << '\n';
    return kExitAssertion;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const Context& ctx) {
  SyntheticData data = generate_synthetic(ctx.cfg.synthetic);
  write_jsonl(data.dataset, ctx.at(artifact::kSynthetic));
  write_latents(data.latents, ctx.at(artifact::kLatents));
  ctx.log << "wrote " << data.dataset.size() << " synthetic reviews to " << ctx.at(artifact::kSynthetic).string()
          << '\n';
  return kExitOk;
}

int cmd_ingest(const Context& ctx, const std::string& input) {
  fs::path source;
  InputFormat format = ctx.cfg.dataset_format;
  if (!input.empty()) {
    source = input;
  } else if (ctx.cfg.dataset_path) {
    source = *ctx.cfg.dataset_path;
  } else {
    source = ctx.need(artifact::kSynthetic, "synth");
    format = InputFormat::jsonl;
  }
  if (!fs::exists(source)) throw ConfigError("dataset " + source.string() + " does not exist");
  IngestResult r = ingest_reviews(source, format);
  if (r.dataset.empty()) throw DataError("no valid reviews in " + source.string());
  write_jsonl(r.dataset, ctx.at(artifact::kReviews));
  write_rejects(r.rejects, ctx.at(artifact::kRejects));
  ctx.log << "ingested " << r.dataset.size() << " reviews, rejected " << r.rejects.size() << '\n';
  return kExitOk;
}

int cmd_split(const Context& ctx) {
  const Dataset reviews = load_reviews(ctx);
  const SplitIds ids = split_ids(split_dataset(reviews, ctx.cfg.ratios, ctx.cfg.split_seed));
  save_split(ids, ctx.at(artifact::kSplit));
  ctx.log << "split " << ids.train.size() << '/' << ids.val.size() << '/' << ids.test.size() << '\n';
  return kExitOk;
}

int cmd_fit_topics(const Context& ctx) {
  const Dataset reviews = load_reviews(ctx);
  const DatasetSplit split = load_split(ctx, reviews);
  const TopicStage t = fit_topic_stage(split.train, ctx.cfg.tokenizer(), ctx.cfg.topics);
  t.vocab.save(ctx.at(artifact::kVocab));
  t.model.save(ctx.at(artifact::kTopicModel));
  ctx.log << "fitted " << t.model.num_topics() << " topics over " << t.vocab.size() << " terms\n";
  return kExitOk;
}

int cmd_embed(const Context& ctx) {
  const Dataset reviews = load_reviews(ctx);
  const EmbeddingStore store = encode_all(ctx, reviews);
  save_embeddings(store, ctx.at(artifact::kEmbeddings));
  ctx.log << "embedded " << store.size() << " reviews (dim " << store.dim() << ", " << store.provider_tag() << ")\n";
  return kExitOk;
}

int cmd_featurize(const Context& ctx) {
  const Dataset reviews = load_reviews(ctx);
  const DatasetSplit split = load_split(ctx, reviews);
  const TopicStage topics = load_topic_stage(ctx);
  const EmbeddingStore store = load_embeddings(ctx.need(artifact::kEmbeddings, "embed"));
  const Featurized f = featurize(split, ctx.cfg.tokenizer(), topics, store, ctx.cfg.featurize_options());
  f.norm.save(ctx.at(artifact::kNormStats));
  f.train.design.write_csv(ctx.at(artifact::kDesignTrain));
  f.val.design.write_csv(ctx.at(artifact::kDesignVal));
  f.test.design.write_csv(ctx.at(artifact::kDesignTest));
  std::string dropped;
  const std::pair<const char*, const AssembleResult*> parts[] = {{"train", &f.train}, {"val", &f.val}, {"test", &f.test}};
  for (const auto& [name, part] : parts) {
    for (const auto& d : part->dropped) dropped += json{{"split", name}, {"id", d.id}, {"reason", d.reason}}.dump() + '\n';
  }
  write_text(ctx.at(artifact::kDropped), dropped);
  ctx.log << "design matrices " << f.train.design.rows() << '/' << f.val.design.rows() << '/' << f.test.design.rows()
          << " rows x " << f.train.design.cols() << " columns\n";
  return kExitOk;
}

std::vector<RegressorSpec> selected_backbones(const ExperimentConfig& cfg, const std::vector<std::string>& names) {
  if (names.empty()) return cfg.backbones;
  std::vector<RegressorSpec> out;
  for (const auto& n : names) out.push_back(cfg.backbone(n));
  return out;
}

int cmd_train(const Context& ctx, const std::vector<std::string>& names) {
  const DesignMatrix tr = DesignMatrix::read_csv(ctx.need(artifact::kDesignTrain, "featurize"));
  const DesignMatrix va = DesignMatrix::read_csv(ctx.need(artifact::kDesignVal, "featurize"));
  const fs::path dir = ctx.at(artifact::kModelsDir);
  fs::create_directories(dir);
  for (const auto& spec : selected_backbones(ctx.cfg, names)) {
    const TrainedModel m = train(spec, tr, &va);
    m.save(dir / (spec.name + ".json"));
    ctx.log << spec.name;
    if (va.rows() > 0) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " val rmse %.4f", rmse(va.y, m.predict(va.X, ctx.cfg.clamp_predictions)));
      ctx.log << buf;
    }
    ctx.log << '\n';
  }
  return kExitOk;
}

int cmd_benchmark(const Context& ctx) {
  const PreparedData data = prepare_in_process(ctx);
  const BenchmarkResult r = run_benchmark(data, ctx.cfg.backbones, benchmark_options(ctx.cfg, ctx.cfg.benchmark_assertions));
  return finish_report(ctx, r.report, artifact::kBenchmarkText, artifact::kBenchmarkJson);
}

int cmd_ablate(const Context& ctx) {
  const PreparedData data = prepare_in_process(ctx);
  const BenchmarkResult r = run_ablation(data, ctx.cfg.backbone(ctx.cfg.ablation_backbone), ctx.cfg.masks,
                                         benchmark_options(ctx.cfg, ctx.cfg.ablation_assertions));
  return finish_report(ctx, r.report, artifact::kAblationText, artifact::kAblationJson);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_report(const Context& ctx) {
  const DesignMatrix test = DesignMatrix::read_csv(ctx.need(artifact::kDesignTest, "featurize"));
  const Dataset reviews = load_reviews(ctx);
  const fs::path dir = ctx.at(artifact::kModelsDir);
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  if (files.empty()) throw MissingArtifact(dir / "*.json", "train");
  std::sort(files.begin(), files.end());

  std::vector<TrainedModel> models;
  std::vector<GroupedPredictions> preds;
  for (const auto& f : files) {
    models.push_back(TrainedModel::load(f));
    preds.push_back({models.back().spec().name, models.back().predict(test.X, ctx.cfg.clamp_predictions)});
  }

  EvalReport overall;
  overall.kind = "test";
  overall.seed = ctx.cfg.seed;
  overall.n_test = static_cast<std::size_t>(test.rows());
  for (std::size_t i = 0; i < models.size(); ++i) {
    ReportRow row;
    row.label = preds[i].label;
    row.backbone = preds[i].label;
    row.mask = test.mask.name();
    row.rmse = rmse(test.y, preds[i].predictions);
    row.mae = mae(test.y, preds[i].predictions);
    row.n_test = overall.n_test;
    json hp = models[i].spec().to_json();
    hp.erase("name");
    hp.erase("seed");
    row.hyperparameters = hp.dump();
    row.seed = models[i].spec().seed;
    overall.rows.push_back(std::move(row));
  }
  overall.check_metric_invariants();
  overall.write(ctx.at(artifact::kTestText), ctx.at(artifact::kTestJson));
  ctx.log << overall.to_text();

  std::string csv = "id,y";
  for (const auto& p : preds) csv += "," + p.label;
  csv += '\n';
  for (Eigen::Index r = 0; r < test.rows(); ++r) {
    csv += test.ids[static_cast<std::size_t>(r)] + "," + format_double(test.y(r));
    for (const auto& p : preds) csv += "," + format_double(p.predictions(r));
    csv += '\n';
  }
  write_text(ctx.at(artifact::kPredictions), csv);

  const Dataset records = records_for(reviews, test.ids);
  std::vector<std::string> groups;
  groups.reserve(records.size());
  for (const auto& r : records) groups.push_back(r.domain_tag);
  const EvalReport domains = domain_breakdown(groups, test.y, preds, ctx.cfg.domain_floor);
  domains.write(ctx.at(artifact::kDomainText), ctx.at(artifact::kDomainJson));

  // Error inspection uses the ablation backbone when it was trained, else the first model.
  std::size_t pick = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].spec().name == ctx.cfg.ablation_backbone) pick = i;
  }
  const auto cases = top_errors(preds[pick].predictions, test, records, ctx.cfg.top_errors);
  write_text(ctx.at(artifact::kErrorsText), "model " + preds[pick].label + "\n" + format_errors(cases));
  write_text(ctx.at(artifact::kErrorsJson), json{{"model", preds[pick].label}, {"cases", to_json(cases)}}.dump(2) + "\n");
  return overall.all_assertions_pass() ? kExitOk : kExitAssertion;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "Experiment config (JSON)");
  sub->add_option("--seed", args.seed, "Top-level seed; overrides the config");
  sub->add_option("--out", args.out, "Output directory; overrides the config");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal course review rating prediction", "satpred"};
  app.require_subcommand(1);
  CommonArgs common;
  std::string input;
  std::vector<std::string> backbones;
  std::function<int(const Context&)> action;

  auto add = [&](const char* name, const char* help, std::function<int(const Context&)> fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    sub->callback([&action, fn] { action = fn; });
    return sub;
  };
  add("synth", "Generate a planted-signal synthetic dataset", cmd_synth);
  add("ingest", "Validate a review file into reviews.jsonl", [&](const Context& c) { return cmd_ingest(c, input); })
      ->add_option("--input", input, "Review file; defaults to the config dataset or synthetic.jsonl");
  add("split", "Stratified train/val/test split", cmd_split);
  add("fit-topics", "Build the vocabulary and fit the topic model", cmd_fit_topics);
  add("embed", "Encode every review with the configured provider", cmd_embed);
  add("featurize", "Normalize behavior and assemble design matrices", cmd_featurize);
  add("train", "Train backbones on the design matrices", [&](const Context& c) { return cmd_train(c, backbones); })
      ->add_option("--backbone", backbones, "Backbone names; defaults to every configured backbone");
  add("benchmark", "Compare every backbone and the baselines", cmd_benchmark);
  add("ablate", "Evaluate one backbone under each modality mask", cmd_ablate);
  add("report", "Test metrics, domain breakdown and top errors for trained models", cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const Context ctx = open_context(common, out);
    return action(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"satpred"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace satpred::app
