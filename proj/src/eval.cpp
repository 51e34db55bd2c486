#include "satpred/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace satpred {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TF-IDF

TfidfFeaturizer TfidfFeaturizer::fit(const Dataset& train, const Tokenizer& tokenizer, std::uint32_t min_doc_freq) {
  TfidfFeaturizer f;
  f.tokenizer_ = tokenizer;
  f.vocab_ = build_vocab(train, tokenizer, min_doc_freq);
  const auto V = static_cast<Eigen::Index>(f.vocab_.size());
  f.idf_.resize(V);
  const auto N = static_cast<double>(train.size());
  for (Eigen::Index t = 0; t < V; ++t) {
    const auto df = static_cast<double>(f.vocab_.doc_freq(static_cast<std::uint32_t>(t)));
    f.idf_[t] = std::log((1.0 + N) / (1.0 + df)) + 1.0;
  }
  return f;
}

Eigen::RowVectorXd TfidfFeaturizer::transform_one(std::string_view text) const {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(vocab_.size()));
  const TokenizedDoc doc = tokenize(tokenizer_, text, vocab_);
  for (auto w : doc.tokens) row[static_cast<Eigen::Index>(w)] += 1.0;
  for (Eigen::Index t = 0; t < row.size(); ++t) {
    if (row[t] > 0.0) row[t] = (1.0 + std::log(row[t])) * idf_[t];
  }
  const double norm = row.norm();
  if (norm > 0.0) row /= norm;
  return row;
}

Eigen::MatrixXd TfidfFeaturizer::transform(const Dataset& records) const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(vocab_.size()));
  for (std::size_t i = 0; i < records.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = transform_one(records[i].text);
  return X;
}

Dataset records_for(const Dataset& dataset, const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, const ReviewRecord*> by_id;
  for (const auto& r : dataset) by_id.emplace(r.id, &r);
  Dataset out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("record '" + id + "' not found");
    out.push_back(*it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string signed_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.*f", digits, v);
  return buf;
}

std::string table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      line += row[c];
      if (c + 1 < row.size()) line.append(width[c] - row[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

}  // namespace

const ReportRow* EvalReport::find(std::string_view label, std::string_view group) const {
  for (const auto& r : rows) {
    if (r.label == label && r.group == group) return &r;
  }
  return nullptr;
}

std::vector<std::string> EvalReport::ranking() const {
  std::vector<const ReportRow*> ok;
  for (const auto& r : rows) {
    if (!r.failed && r.group.empty()) ok.push_back(&r);
  }
  std::sort(ok.begin(), ok.end(), [](const ReportRow* a, const ReportRow* b) {
    return a->rmse != b->rmse ? a->rmse < b->rmse : a->label < b->label;
  });
  std::vector<std::string> out;
  for (const auto* r : ok) out.push_back(r->label);
  return out;
}

bool EvalReport::all_assertions_pass() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.passed; });
}

void EvalReport::check(const OrderingAssertion& assertion) {
  AssertionResult res;
  std::string desc = "rmse order";
  for (std::size_t i = 0; i < assertion.rows.size(); ++i) desc += (i == 0 ? " " : " < ") + assertion.rows[i];
  if (assertion.min_gap > 0.0) desc += " (gap > " + fixed(assertion.min_gap, 3) + ")";
  res.description = desc;
  res.passed = true;
  std::vector<const ReportRow*> found;
  for (const auto& label : assertion.rows) {
    const ReportRow* r = find(label);
    if (!r || r->failed) {
      res.passed = false;
      res.detail = "row '" + label + "' missing or failed";
      assertions.push_back(res);
      return;
    }
    found.push_back(r);
  }
  std::string detail;
  for (std::size_t i = 0; i + 1 < found.size(); ++i) {
    const double gap = found[i + 1]->rmse - found[i]->rmse;
    if (!(gap > assertion.min_gap)) res.passed = false;
    if (!detail.empty()) detail += ", ";
    detail += found[i]->label + "->" + found[i + 1]->label + " gap " + signed_fixed(gap);
  }
  res.detail = detail;
  assertions.push_back(res);
}

void EvalReport::check_metric_invariants() {
  AssertionResult res{"rmse >= mae >= 0 on every row", true, ""};
  for (const auto& r : rows) {
    if (r.failed) continue;
    if (!(r.rmse >= r.mae && r.mae >= 0.0)) {
      res.passed = false;
      res.detail += (res.detail.empty() ? "" : ", ") + r.label;
    }
  }
  assertions.push_back(res);
}

std::string EvalReport::to_text() const {
  std::string out = kind + " report\n";
  out += "seed " + std::to_string(seed) + "; train/val/test " + std::to_string(n_train) + "/" + std::to_string(n_val) +
         "/" + std::to_string(n_test) + "\n\n";
  const bool grouped = std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.group.empty(); });
  const bool deltas = std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.delta_rmse.has_value(); });
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"model"};
  if (grouped) header.emplace_back("group");
  for (const char* h : {"mask", "rmse", "mae", "n_test"}) header.emplace_back(h);
  if (deltas) header.emplace_back("d_rmse");
  header.emplace_back("hyperparameters");
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> c{r.label};
    if (grouped) c.push_back(r.group);
    c.push_back(r.mask);
    if (r.failed) {
      c.insert(c.end(), {"FAILED", "-", "-"});
      if (deltas) c.emplace_back("-");
      c.push_back(r.error);
    } else {
      c.push_back(fixed(r.rmse));
      c.push_back(fixed(r.mae));
      c.push_back(std::to_string(r.n_test));
      if (deltas) c.push_back(r.delta_rmse ? signed_fixed(*r.delta_rmse) : "");
      c.push_back(r.preset_defaults ? "defaults" : "custom");
    }
    cells.push_back(std::move(c));
  }
  out += table(cells);
  if (!group_variance.empty()) {
    out += "\ncross-group RMSE variance\n";
    std::vector<std::vector<std::string>> gv;
    for (const auto& [label, var] : group_variance) gv.push_back({label, fixed(var, 6)});
    out += table(gv);
  }
  const auto order = ranking();
  if (!order.empty() && !grouped) {
    out += "\nranking (best first): ";
    for (std::size_t i = 0; i < order.size(); ++i) out += (i ? " < " : "") + order[i];
    out += '\n';
  }
  if (!notes.empty()) {
    out += "\nnotes\n";
    for (const auto& n : notes) out += "  - " + n + '\n';
  }
  if (!assertions.empty()) {
    out += "\nassertions\n";
    for (const auto& a : assertions) {
      out += std::string("  ") + (a.passed ? "PASS " : "FAIL ") + a.description;
      if (!a.detail.empty()) out += " [" + a.detail + "]";
      out += '\n';
    }
  }
  return out;
}

json EvalReport::to_json() const {
  json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["sizes"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  json rs = json::array();
  for (const auto& r : rows) {
    json row = {{"label", r.label}, {"backbone", r.backbone}, {"mask", r.mask}, {"seed", r.seed}};
    if (!r.group.empty()) row["group"] = r.group;
    if (r.failed) {
      row["failed"] = true;
      row["error"] = r.error;
    } else {
      row["rmse"] = r.rmse;
      row["mae"] = r.mae;
      row["n_test"] = r.n_test;
      if (r.delta_rmse) row["delta_rmse"] = *r.delta_rmse;
    }
    row["hyperparameters"] = r.hyperparameters.empty() ? json::object() : json::parse(r.hyperparameters);
    row["preset_defaults"] = r.preset_defaults;
    rs.push_back(std::move(row));
  }
  j["rows"] = std::move(rs);
  if (!group_variance.empty()) {
    json gv = json::object();
    for (const auto& [label, var] : group_variance) gv[label] = var;
    j["group_rmse_variance"] = gv;
  }
  j["ranking"] = ranking();
  j["notes"] = notes;
  json as = json::array();
  for (const auto& a : assertions) as.push_back({{"description", a.description}, {"passed", a.passed}, {"detail", a.detail}});
  j["assertions"] = std::move(as);
  return j;
}

void EvalReport::write(const std::filesystem::path& text_path, const std::filesystem::path& json_path) const {
  {
    std::ofstream out(text_path, std::ios::binary);
    if (!out) throw Error("cannot write " + text_path.string());
    out << to_text();
  }
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw Error("cannot write " + json_path.string());
  out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Experiments

std::string cell_label(const std::string& backbone, const Mask& mask) {
  if (mask == Mask::full()) return backbone;
  const auto names = mask.names();
  if (names.size() == 1) return names.front() + "+" + backbone;
  return backbone + "/" + mask.name();
}

std::vector<Mask> standard_ablation_masks() {
  return {Mask::full(), Mask::without(Segment::topic), Mask::without(Segment::sentiment),
          Mask::without(Segment::behavior)};
}

namespace {

bool is_preset_default(const RegressorSpec& spec) {
  try {
    RegressorSpec p = RegressorSpec::preset(spec.name);
    p.seed = spec.seed;
    return p.to_json() == spec.to_json();
  } catch (const ConfigError&) {
    return false;
  }
}

ReportRow row_from(const CellResult& c, std::size_t n_test) {
  ReportRow r;
  r.label = c.label;
  r.backbone = c.spec.name;
  r.mask = c.mask.name();
  r.failed = c.failed;
  r.error = c.error;
  r.rmse = c.rmse;
  r.mae = c.mae;
  r.n_test = c.failed ? 0 : n_test;
  json hp = c.spec.to_json();
  hp.erase("name");
  hp.erase("seed");
  r.hyperparameters = hp.dump();
  r.preset_defaults = is_preset_default(c.spec);
  r.seed = c.spec.seed;
  return r;
}

void fill_sizes(EvalReport& report, const PreparedData& data, std::uint64_t seed) {
  report.seed = seed;
  report.n_train = static_cast<std::size_t>(data.train().rows());
  report.n_val = static_cast<std::size_t>(data.val().rows());
  report.n_test = static_cast<std::size_t>(data.test().rows());
}

CellResult tfidf_cell(const PreparedData& data, const BenchmarkOptions& options) {
  CellResult c;
  c.label = "tfidf+linear";
  c.spec = RegressorSpec::preset("linear");
  c.spec.seed = options.seed;
  c.mask = Mask{false, false, false};
  try {
    const Dataset train_rows = records_for(data.split.train, data.train().ids);
    const Dataset test_rows = records_for(data.split.test, data.test().ids);
    const auto f = TfidfFeaturizer::fit(train_rows, data.tokenizer, options.tfidf_min_doc_freq);
    const TrainedModel m = train(c.spec, f.transform(train_rows), data.train().y);
    Eigen::VectorXd pred = m.predict(f.transform(test_rows), options.clamp_predictions);
    c.rmse = rmse(data.test().y, pred);
    c.mae = mae(data.test().y, pred);
    c.predictions = std::move(pred);
  } catch (const std::exception& e) {
    c.failed = true;
    c.error = e.what();
  }
  return c;
}

}  // namespace

CellResult run_cell(const PreparedData& data, const RegressorSpec& spec, const Mask& mask, std::string label,
                    bool clamp_predictions) {
  CellResult c;
  c.label = std::move(label);
  c.spec = spec;
  c.mask = mask;
  try {
    const DesignMatrix train_m = data.train().restrict(mask);
    const DesignMatrix test_m = data.test().restrict(mask);
    const bool has_val = data.val().rows() > 0;
    const DesignMatrix val_m = has_val ? data.val().restrict(mask) : DesignMatrix{};
    const TrainedModel model = train(spec, train_m, has_val ? &val_m : nullptr);
    Eigen::VectorXd pred = model.predict(test_m.X, clamp_predictions);
    c.rmse = rmse(test_m.y, pred);
    c.mae = mae(test_m.y, pred);
    c.predictions = std::move(pred);
  } catch (const std::exception& e) {
    c.failed = true;
    c.error = e.what();
  }
  return c;
}

BenchmarkResult run_benchmark(const PreparedData& data, const std::vector<RegressorSpec>& backbones,
                              const BenchmarkOptions& options) {
  BenchmarkResult res;
  res.report.kind = "benchmark";
  fill_sizes(res.report, data, options.seed);
  for (const auto& spec : backbones) {
    res.cells.push_back(run_cell(data, spec, Mask::full(), cell_label(spec.name, Mask::full()), options.clamp_predictions));
  }
  if (options.include_baselines) {
    RegressorSpec lin = RegressorSpec::preset("linear");
    lin.seed = options.seed;
    for (Segment s : {Segment::topic, Segment::sentiment}) {
      res.cells.push_back(run_cell(data, lin, Mask::only(s), cell_label("linear", Mask::only(s)), options.clamp_predictions));
    }
    res.cells.push_back(tfidf_cell(data, options));
  }
  const auto n_test = static_cast<std::size_t>(data.test().rows());
  for (const auto& c : res.cells) {
    res.report.rows.push_back(row_from(c, n_test));
    if (c.label == "tfidf+linear") res.report.rows.back().mask = "lexical";
  }
  res.report.notes.push_back("hyperparameters marked 'defaults' are the built-in presets; none were tuned on test data");
  res.report.check_metric_invariants();
  for (const auto& a : options.assertions) res.report.check(a);
  return res;
}

BenchmarkResult run_ablation(const PreparedData& data, const RegressorSpec& backbone, const std::vector<Mask>& masks,
                             const BenchmarkOptions& options) {
  if (masks.empty()) throw ConfigError("ablation needs at least one mask");
  BenchmarkResult res;
  res.report.kind = "ablation";
  fill_sizes(res.report, data, options.seed);
  for (const auto& m : masks) {
    res.cells.push_back(run_cell(data, backbone, m, cell_label(backbone.name, m), options.clamp_predictions));
  }
  const auto n_test = static_cast<std::size_t>(data.test().rows());
  const CellResult* full = nullptr;
  for (const auto& c : res.cells) {
    if (c.mask == Mask::full() && !c.failed) full = &c;
  }
  for (const auto& c : res.cells) {
    ReportRow r = row_from(c, n_test);
    if (full && !c.failed) r.delta_rmse = c.rmse - full->rmse;
    res.report.rows.push_back(std::move(r));
  }
  res.report.check_metric_invariants();
  for (const auto& a : options.assertions) res.report.check(a);
  return res;
}

EvalReport domain_breakdown(const std::vector<std::string>& row_groups, const Eigen::VectorXd& y,
                            const std::vector<GroupedPredictions>& predictions, std::size_t min_rows) {
  if (static_cast<Eigen::Index>(row_groups.size()) != y.size()) throw DataError("group labels and targets differ in length");
  EvalReport report;
  report.kind = "domain";
  report.n_test = static_cast<std::size_t>(y.size());
  std::map<std::string, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < row_groups.size(); ++i) groups[row_groups[i]].push_back(static_cast<Eigen::Index>(i));
  std::vector<std::string> kept;
  for (const auto& [g, idx] : groups) {
    if (idx.size() < min_rows) {
      report.notes.push_back("group '" + g + "' excluded: " + std::to_string(idx.size()) + " test rows < floor " +
                             std::to_string(min_rows));
    } else {
      kept.push_back(g);
    }
  }
  if (kept.size() < 2) report.notes.push_back("fewer than two groups meet the floor; cross-group variance is degenerate");
  for (const auto& p : predictions) {
    if (p.predictions.size() != y.size()) throw DataError("predictions for '" + p.label + "' have the wrong length");
    std::vector<double> group_rmse;
    for (const auto& g : kept) {
      const auto& idx = groups[g];
      const Eigen::VectorXd yg = y(idx);
      const Eigen::VectorXd pg = p.predictions(idx);
      ReportRow r;
      r.label = p.label;
      r.backbone = p.label;
      r.group = g;
      r.mask = "full";
      r.rmse = rmse(yg, pg);
      r.mae = mae(yg, pg);
      r.n_test = idx.size();
      group_rmse.push_back(r.rmse);
      report.rows.push_back(std::move(r));
    }
    double var = 0.0;
    if (!group_rmse.empty()) {
      const double mean = std::accumulate(group_rmse.begin(), group_rmse.end(), 0.0) / static_cast<double>(group_rmse.size());
      for (double v : group_rmse) var += (v - mean) * (v - mean);
      var /= static_cast<double>(group_rmse.size());
    }
    report.group_variance.emplace_back(p.label, var);
  }
  report.check_metric_invariants();
  return report;
}

std::vector<ErrorCase> top_errors(const Eigen::VectorXd& predictions, const DesignMatrix& design,
                                  const Dataset& records, std::size_t k, std::size_t excerpt_chars) {
  if (k < 1) throw ConfigError("top_errors needs k >= 1");
  if (predictions.size() != design.rows()) throw DataError("predictions and design differ in length");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(design.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> err(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    err[i] = std::abs(design.y[static_cast<Eigen::Index>(i)] - predictions[static_cast<Eigen::Index>(i)]);
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    if (err[ua] != err[ub]) return err[ua] > err[ub];
    return design.ids[ua] < design.ids[ub];
  });
  std::unordered_map<std::string_view, const ReviewRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<ErrorCase> out;
  const std::size_t take = std::min(k, order.size());
  for (std::size_t i = 0; i < take; ++i) {
    const Eigen::Index row = order[i];
    const auto ur = static_cast<std::size_t>(row);
    ErrorCase c;
    c.id = design.ids[ur];
    c.y = design.y[row];
    c.prediction = predictions[row];
    c.abs_error = err[ur];
    c.theta = design.X.row(row).segment(design.topic.begin, design.topic.size()).transpose();
    c.behavior = design.X.row(row).segment(design.behavior.begin, design.behavior.size()).transpose();
    if (auto it = by_id.find(c.id); it != by_id.end()) {
      const std::string& text = it->second->text;
      if (text.size() <= excerpt_chars) {
        c.excerpt = text;
      } else {
        std::size_t cut = excerpt_chars;
        while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;  // UTF-8 boundary
        c.excerpt = text.substr(0, cut) + "...";
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ErrorCase> top_errors(const TrainedModel& model, const DesignMatrix& design, const Dataset& records,
                                  std::size_t k, std::size_t excerpt_chars) {
  return top_errors(model.predict(design.X), design, records, k, excerpt_chars);
}

json to_json(const std::vector<ErrorCase>& cases) {
  json arr = json::array();
  for (const auto& c : cases) {
    arr.push_back({{"id", c.id},
                   {"y", c.y},
                   {"prediction", c.prediction},
                   {"abs_error", c.abs_error},
                   {"theta", std::vector<double>(c.theta.data(), c.theta.data() + c.theta.size())},
                   {"behavior", std::vector<double>(c.behavior.data(), c.behavior.data() + c.behavior.size())},
                   {"excerpt", c.excerpt}});
  }
  return arr;
}

std::string format_errors(const std::vector<ErrorCase>& cases) {
  std::vector<std::vector<std::string>> cells{{"rank", "id", "y", "prediction", "abs_error", "top_topic", "excerpt"}};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    std::string topic = "-";
    if (c.theta.size() > 0) {
      Eigen::Index k;
      const double v = c.theta.maxCoeff(&k);
      topic = std::to_string(k) + " (" + fixed(v, 2) + ")";
    }
    cells.push_back({std::to_string(i + 1), c.id, fixed(c.y, 3), fixed(c.prediction, 3), fixed(c.abs_error, 3), topic,
                     c.excerpt});
  }
  return table(cells);
}

}  // namespace satpred
