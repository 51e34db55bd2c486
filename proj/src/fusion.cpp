#include "satpred/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "satpred/error.hpp"
#include "satpred/rng.hpp"

namespace satpred {

Mask Mask::only(Segment s) {
  Mask m{false, false, false};
  if (s == Segment::topic) m.topic = true;
  if (s == Segment::sentiment) m.sentiment = true;
  if (s == Segment::behavior) m.behavior = true;
  return m;
}

Mask Mask::without(Segment s) {
  Mask m;
  if (s == Segment::topic) m.topic = false;
  if (s == Segment::sentiment) m.sentiment = false;
  if (s == Segment::behavior) m.behavior = false;
  return m;
}

Mask Mask::from_names(const std::vector<std::string>& names) {
  Mask m{false, false, false};
  for (const auto& n : names) {
    if (n == "topic") m.topic = true;
    else if (n == "sentiment") m.sentiment = true;
    else if (n == "behavior") m.behavior = true;
    else throw ConfigError("unknown mask segment '" + n + "'");
  }
  if (m.empty()) throw ConfigError("mask must include at least one segment");
  return m;
}

bool Mask::contains(Segment s) const {
  switch (s) {
    case Segment::topic: return topic;
    case Segment::sentiment: return sentiment;
    case Segment::behavior: return behavior;
  }
  return false;
}

std::vector<std::string> Mask::names() const {
  std::vector<std::string> out;
  if (topic) out.emplace_back("topic");
  if (sentiment) out.emplace_back("sentiment");
  if (behavior) out.emplace_back("behavior");
  return out;
}

std::string Mask::name() const {
  if (topic && sentiment && behavior) return "full";
  if (sentiment && behavior) return "-topic";
  if (topic && behavior) return "-sentiment";
  if (topic && sentiment) return "-behavior";
  const auto n = names();
  return n.empty() ? "empty" : n.front();
}

SegmentRange FusedVector::range(Segment s) const {
  return s == Segment::topic ? topic : s == Segment::sentiment ? sentiment : behavior;
}

SegmentRange DesignMatrix::range(Segment s) const {
  return s == Segment::topic ? topic : s == Segment::sentiment ? sentiment : behavior;
}

FusedVector fuse(const TopicDistribution* theta, const Embedding* h, const Eigen::VectorXd* b, const Mask& mask) {
  if (mask.topic && theta == nullptr) throw DataError("topic distribution missing");
  if (mask.sentiment && h == nullptr) throw DataError("sentiment embedding missing");
  if (mask.behavior && b == nullptr) throw DataError("behavior vector missing");
  FusedVector out;
  Eigen::Index p = 0;
  auto place = [&](bool on, Eigen::Index n, SegmentRange& r) {
    r.begin = p;
    if (on) p += n;
    r.end = p;
  };
  place(mask.topic, mask.topic ? theta->theta.size() : 0, out.topic);
  place(mask.sentiment, mask.sentiment ? h->size() : 0, out.sentiment);
  place(mask.behavior, mask.behavior ? b->size() : 0, out.behavior);
  out.z.resize(p);
  if (mask.topic) out.z.segment(out.topic.begin, out.topic.size()) = theta->theta;
  if (mask.sentiment) out.z.segment(out.sentiment.begin, out.sentiment.size()) = h->cast<double>();
  if (mask.behavior) out.z.segment(out.behavior.begin, out.behavior.size()) = *b;
  return out;
}

TopicDistribution review_theta(const ReviewRecord& record, const FeatureSources& sources) {
  if (!sources.topic_model || !sources.vocab || !sources.tokenizer) {
    throw DataError("topic sources not configured");
  }
  const TokenizedDoc doc = tokenize(*sources.tokenizer, record.text, *sources.vocab, record.id);
  FoldInOptions opts = sources.fold_in;
  opts.seed = mix_seed(sources.fold_in.seed, fnv1a(record.id));
  return infer_theta(*sources.topic_model, doc, opts);
}

AssembleResult assemble_matrix(const Dataset& dataset, const FeatureSources& sources, const Mask& mask,
                               double max_drop_fraction) {
  if (mask.empty()) throw ConfigError("cannot assemble a design matrix with an empty mask");
  if (mask.topic && (!sources.topic_model || !sources.vocab || !sources.tokenizer)) {
    throw ConfigError("topic segment requested without a fitted topic model");
  }
  if (mask.sentiment && !sources.embeddings) throw ConfigError("sentiment segment requested without embeddings");
  if (mask.behavior && !sources.norm_stats) throw ConfigError("behavior segment requested without norm stats");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dataset[a].id < dataset[b].id; });

  AssembleResult result;
  std::vector<FusedVector> rows;
  std::vector<double> targets;
  rows.reserve(dataset.size());
  for (std::size_t idx : order) {
    const ReviewRecord& r = dataset[idx];
    TopicDistribution theta;
    Eigen::VectorXd b;
    const Embedding* h = nullptr;
    if (mask.sentiment) {
      h = sources.embeddings->find(r.id);
      if (!h) {
        result.dropped.push_back({r.id, "no sentiment embedding"});
        continue;
      }
    }
    if (mask.topic) theta = review_theta(r, sources);
    if (mask.behavior) b = normalize(r, *sources.norm_stats);
    rows.push_back(fuse(&theta, h, &b, mask));
    if (!rows.back().z.allFinite()) {
      rows.pop_back();
      result.dropped.push_back({r.id, "non-finite features"});
      continue;
    }
    targets.push_back(r.rating);
    result.design.ids.push_back(r.id);
  }

  if (!dataset.empty() &&
      static_cast<double>(result.dropped.size()) > max_drop_fraction * static_cast<double>(dataset.size())) {
    throw DataError(std::to_string(result.dropped.size()) + " of " + std::to_string(dataset.size()) +
                    " rows dropped during assembly (first: " + result.dropped.front().id + ": " +
                    result.dropped.front().reason + ")");
  }
  if (rows.empty()) throw DataError("design matrix has no rows");

  DesignMatrix& dm = result.design;
  const FusedVector& first = rows.front();
  for (const auto& row : rows) {
    if (row.z.size() != first.z.size() || row.topic != first.topic || row.sentiment != first.sentiment) {
      throw DataError("inconsistent fused vector layout across rows");
    }
  }
  dm.mask = mask;
  dm.topic = first.topic;
  dm.sentiment = first.sentiment;
  dm.behavior = first.behavior;
  dm.X.resize(static_cast<Eigen::Index>(rows.size()), first.z.size());
  for (std::size_t i = 0; i < rows.size(); ++i) dm.X.row(static_cast<Eigen::Index>(i)) = rows[i].z.transpose();
  dm.y = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));

  for (Eigen::Index k = 0; k < dm.topic.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    dm.columns.push_back("topic." + (ku < sources.topic_labels.size() ? sources.topic_labels[ku] : std::to_string(k)));
  }
  for (Eigen::Index k = 0; k < dm.sentiment.size(); ++k) dm.columns.push_back("sent." + std::to_string(k));
  if (mask.behavior) {
    std::vector<std::string> names;
    for (const auto& f : sources.norm_stats->features) names.push_back(f.spec.name);
    const auto n_feat = names.size();
    for (std::size_t i = 0; i < n_feat; ++i) names.push_back(names[i] + ".missing");
    if (sources.norm_stats->include_completion) {
      for (auto c : {Completion::not_started, Completion::in_progress, Completion::completed}) {
        names.push_back(std::string(kCompletionFeature) + "=" + std::string(to_string(c)));
      }
    }
    for (auto& n : names) dm.columns.push_back("beh." + n);
  }
  return result;
}

DesignMatrix DesignMatrix::restrict(const Mask& sub) const {
  for (auto s : {Segment::topic, Segment::sentiment, Segment::behavior}) {
    if (sub.contains(s) && !mask.contains(s)) throw ConfigError("design matrix lacks a segment requested by mask " + sub.name());
  }
  if (sub.empty()) throw ConfigError("cannot restrict to an empty mask");
  DesignMatrix out;
  out.y = y;
  out.ids = ids;
  out.mask = sub;
  std::vector<Eigen::Index> keep;
  Eigen::Index p = 0;
  auto take = [&](Segment s, SegmentRange& dst) {
    const SegmentRange src = range(s);
    dst.begin = p;
    if (sub.contains(s)) {
      for (Eigen::Index c = src.begin; c < src.end; ++c) keep.push_back(c);
      p += src.size();
    }
    dst.end = p;
  };
  take(Segment::topic, out.topic);
  take(Segment::sentiment, out.sentiment);
  take(Segment::behavior, out.behavior);
  out.X.resize(X.rows(), p);
  for (Eigen::Index j = 0; j < p; ++j) {
    out.X.col(j) = X.col(keep[static_cast<std::size_t>(j)]);
    out.columns.push_back(columns[static_cast<std::size_t>(keep[static_cast<std::size_t>(j)])]);
  }
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void DesignMatrix::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,y";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)] << ',' << fmt17(y[i]);
    for (Eigen::Index j = 0; j < X.cols(); ++j) out << ',' << fmt17(X(i, j));
    out << '\n';
  }
}

DesignMatrix DesignMatrix::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty design matrix file");
  auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "y") {
    throw FormatError(path.string() + ": design matrix header must start with id,y");
  }
  DesignMatrix dm;
  dm.columns.assign(header.begin() + 2, header.end());
  dm.mask = Mask{false, false, false};
  // Segments must appear in topic, sentiment, behavior order.
  int stage = 0;
  Eigen::Index c = 0;
  for (const auto& name : dm.columns) {
    int s;
    if (name.rfind("topic.", 0) == 0) s = 0;
    else if (name.rfind("sent.", 0) == 0) s = 1;
    else if (name.rfind("beh.", 0) == 0) s = 2;
    else throw FormatError(path.string() + ": column '" + name + "' has no segment prefix");
    if (s < stage) throw FormatError(path.string() + ": segments out of order");
    stage = s;
    ++c;
    (s == 0 ? dm.topic : s == 1 ? dm.sentiment : dm.behavior).end = c;
    if (s == 0) dm.mask.topic = true;
    if (s == 1) dm.mask.sentiment = true;
    if (s == 2) dm.mask.behavior = true;
  }
  dm.topic.begin = 0;
  if (!dm.mask.topic) dm.topic.end = 0;
  dm.sentiment.begin = dm.topic.end;
  if (!dm.mask.sentiment) dm.sentiment.end = dm.sentiment.begin;
  dm.behavior.begin = dm.sentiment.end;
  if (!dm.mask.behavior) dm.behavior.end = dm.behavior.begin;

  std::vector<double> yv, xv;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has the wrong number of fields");
    }
    dm.ids.push_back(fields[0]);
    try {
      yv.push_back(std::stod(fields[1]));
      for (std::size_t j = 2; j < fields.size(); ++j) xv.push_back(std::stod(fields[j]));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has a non-numeric value");
    }
  }
  const auto n = static_cast<Eigen::Index>(yv.size());
  const auto p = static_cast<Eigen::Index>(dm.columns.size());
  dm.y = Eigen::Map<Eigen::VectorXd>(yv.data(), n);
  dm.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xv.data(), n, p);
  return dm;
}

}  // namespace satpred
