#include "satpred/topics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/rng.hpp"

namespace satpred {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw FormatError("bad hex value '" + s + "'");
  return v;
}

/// Samples an index from cumulative weights laid out in scan order.
int draw(Rng& rng, const std::vector<double>& cumulative, const std::vector<int>& order) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  const auto j = std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(order.size()) - 1);
  return order[static_cast<std::size_t>(j)];
}

}  // namespace

void TopicModel::validate() const {
  if (num_topics() < 2) throw FormatError("topic model needs K >= 2");
  if (vocab_size() < 1) throw FormatError("topic model has an empty vocabulary");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw FormatError("topic model priors must be positive");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != num_topics()) {
    throw FormatError("topic labels must have one entry per topic");
  }
  for (Eigen::Index k = 0; k < num_topics(); ++k) {
    if ((phi.row(k).array() < 0.0).any() || !phi.row(k).allFinite()) {
      throw FormatError("phi row " + std::to_string(k) + " has negative or non-finite entries");
    }
    if (std::abs(phi.row(k).sum() - 1.0) > 1e-9) {
      throw FormatError("phi row " + std::to_string(k) + " does not sum to 1");
    }
  }
}

void TopicModel::save(const std::filesystem::path& path) const {
  std::vector<double> flat(static_cast<std::size_t>(phi.size()));
  for (Eigen::Index k = 0; k < phi.rows(); ++k) {
    for (Eigen::Index w = 0; w < phi.cols(); ++w) flat[static_cast<std::size_t>(k * phi.cols() + w)] = phi(k, w);
  }
  json doc = {{"version", 1},
              {"K", phi.rows()},
              {"V", phi.cols()},
              {"alpha", alpha},
              {"beta", beta},
              {"vocab_hash", hex64(vocab_hash)},
              {"labels", labels},
              {"phi", flat}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
}

TopicModel TopicModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  TopicModel m;
  try {
    const json doc = json::parse(in);
    if (doc.at("version").get<int>() != 1) throw FormatError("unsupported topic model version");
    const auto K = doc.at("K").get<Eigen::Index>();
    const auto V = doc.at("V").get<Eigen::Index>();
    const auto flat = doc.at("phi").get<std::vector<double>>();
    if (K < 0 || V < 0 || static_cast<Eigen::Index>(flat.size()) != K * V) {
      throw FormatError("phi has the wrong number of entries");
    }
    m.phi.resize(K, V);
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index w = 0; w < V; ++w) m.phi(k, w) = flat[static_cast<std::size_t>(k * V + w)];
    }
    m.alpha = doc.at("alpha").get<double>();
    m.beta = doc.at("beta").get<double>();
    m.vocab_hash = parse_hex64(doc.at("vocab_hash").get<std::string>());
    if (doc.contains("labels")) m.labels = doc.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

TopicModel fit_lda(std::span<const TokenizedDoc> corpus, std::size_t vocab_size, std::uint64_t vocab_hash,
                   const LdaOptions& options) {
  const int K = options.num_topics;
  if (K < 2) throw ConfigError("LDA needs K >= 2");
  if (options.burn_in < 0 || options.iterations <= options.burn_in) {
    throw ConfigError("LDA needs iterations > burn_in >= 0");
  }
  if (options.thin < 1) throw ConfigError("LDA thin must be >= 1");
  if (!(options.beta > 0.0)) throw ConfigError("LDA beta must be positive");
  if (vocab_size == 0) throw ConfigError("LDA needs a non-empty vocabulary");

  const double alpha = options.resolved_alpha();
  const double beta = options.beta;
  const auto V = vocab_size;
  const double vbeta = static_cast<double>(V) * beta;

  std::size_t total_tokens = 0;
  for (const auto& d : corpus) {
    for (auto w : d.tokens) {
      if (w >= V) throw DataError("token index out of vocabulary range in doc '" + d.review_id + "'");
    }
    total_tokens += d.tokens.size();
  }
  if (total_tokens == 0) throw DataError("LDA corpus has no tokens");
  if (static_cast<std::size_t>(K) > total_tokens) throw DataError("K exceeds the number of corpus tokens");

  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  if (!options.init_permutation.empty()) {
    order = options.init_permutation;
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < K; ++k) {
      if (sorted.size() != static_cast<std::size_t>(K) || sorted[static_cast<std::size_t>(k)] != k) {
        throw ConfigError("init_permutation is not a permutation of the topic indices");
      }
    }
  }

  const std::size_t D = corpus.size();
  const auto uK = static_cast<std::size_t>(K);
  std::vector<std::int32_t> ndk(D * uK, 0);
  std::vector<std::int32_t> nwk(V * uK, 0);
  std::vector<std::int32_t> nk(uK, 0);
  std::vector<std::vector<int>> z(D);

  Rng rng(options.seed);
  for (std::size_t d = 0; d < D; ++d) {
    z[d].resize(corpus[d].tokens.size());
    for (std::size_t i = 0; i < z[d].size(); ++i) {
      const int k = order[rng.below(uK)];
      z[d][i] = k;
      const auto w = corpus[d].tokens[i];
      ++ndk[d * uK + static_cast<std::size_t>(k)];
      ++nwk[w * uK + static_cast<std::size_t>(k)];
      ++nk[static_cast<std::size_t>(k)];
    }
  }

  auto verify = [&]() {
    for (std::size_t d = 0; d < D; ++d) {
      std::int64_t s = 0;
      for (std::size_t k = 0; k < uK; ++k) s += ndk[d * uK + k];
      if (s != static_cast<std::int64_t>(corpus[d].tokens.size())) throw Error("LDA doc-topic counts out of sync");
    }
    for (std::size_t k = 0; k < uK; ++k) {
      std::int64_t s = 0;
      for (std::size_t w = 0; w < V; ++w) s += nwk[w * uK + k];
      if (s != nk[k]) throw Error("LDA topic-word counts out of sync");
    }
  };

  Eigen::MatrixXd phi_sum = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(V));
  int samples = 0;
  std::vector<double> cumulative(uK);

  for (int it = 1; it <= options.iterations; ++it) {
    for (std::size_t d = 0; d < D; ++d) {
      const auto& tokens = corpus[d].tokens;
      std::int32_t* nd = &ndk[d * uK];
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t w = tokens[i];
        std::int32_t* nw = &nwk[w * uK];
        const auto old = static_cast<std::size_t>(z[d][i]);
        --nd[old];
        --nw[old];
        --nk[old];
        double cum = 0.0;
        for (std::size_t j = 0; j < uK; ++j) {
          const auto k = static_cast<std::size_t>(order[j]);
          cum += (nd[k] + alpha) * (nw[k] + beta) / (nk[k] + vbeta);
          cumulative[j] = cum;
        }
        const int k = draw(rng, cumulative, order);
        z[d][i] = k;
        ++nd[k];
        ++nw[k];
        ++nk[static_cast<std::size_t>(k)];
      }
    }
    if (options.verify_counts) verify();
    if (it > options.burn_in && (options.iterations - it) % options.thin == 0) {
      for (std::size_t w = 0; w < V; ++w) {
        for (std::size_t k = 0; k < uK; ++k) {
          phi_sum(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w)) +=
              (nwk[w * uK + k] + beta) / (nk[k] + vbeta);
        }
      }
      ++samples;
    }
  }

  TopicModel model;
  model.phi = phi_sum / static_cast<double>(samples);
  // Renormalize away accumulated rounding so rows sum to 1 at machine precision.
  for (Eigen::Index k = 0; k < model.phi.rows(); ++k) model.phi.row(k) /= model.phi.row(k).sum();
  model.alpha = alpha;
  model.beta = beta;
  model.vocab_hash = vocab_hash;
  return model;
}

TopicModel fit_lda(std::span<const TokenizedDoc> corpus, const Vocabulary& vocab, const LdaOptions& options) {
  return fit_lda(corpus, vocab.size(), vocab.hash(), options);
}

TopicDistribution infer_theta(const TopicModel& model, const TokenizedDoc& doc, const FoldInOptions& options) {
  const auto K = static_cast<std::size_t>(model.num_topics());
  if (doc.vocab_hash != model.vocab_hash) {
    throw DataError("document '" + doc.review_id + "' was tokenized against a different vocabulary");
  }
  if (options.burn_in < 0 || options.iterations <= options.burn_in) {
    throw ConfigError("fold-in needs iterations > burn_in >= 0");
  }
  TopicDistribution out;
  if (doc.tokens.empty()) {
    out.theta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
    return out;
  }
  for (auto w : doc.tokens) {
    if (static_cast<Eigen::Index>(w) >= model.vocab_size()) {
      throw DataError("token index out of range for topic model in doc '" + doc.review_id + "'");
    }
  }

  const double alpha = model.alpha;
  const double N = static_cast<double>(doc.tokens.size());
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> nd(K, 0);
  std::vector<int> z(doc.tokens.size());
  Rng rng(options.seed);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = static_cast<int>(rng.below(K));
    ++nd[static_cast<std::size_t>(z[i])];
  }

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  std::vector<double> cumulative(K);
  int samples = 0;
  for (int it = 1; it <= options.iterations; ++it) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto w = static_cast<Eigen::Index>(doc.tokens[i]);
      --nd[static_cast<std::size_t>(z[i])];
      double cum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        cum += (nd[k] + alpha) * model.phi(static_cast<Eigen::Index>(k), w);
        cumulative[k] = cum;
      }
      z[i] = draw(rng, cumulative, order);
      ++nd[static_cast<std::size_t>(z[i])];
    }
    if (it > options.burn_in) {
      for (std::size_t k = 0; k < K; ++k) {
        acc(static_cast<Eigen::Index>(k)) += (nd[k] + alpha) / (N + static_cast<double>(K) * alpha);
      }
      ++samples;
    }
  }
  out.theta = acc / static_cast<double>(samples);
  out.theta /= out.theta.sum();
  return out;
}

std::vector<TokenizedDoc> pool_by_course(std::span<const TokenizedDoc> docs, const Dataset& dataset) {
  if (docs.size() != dataset.size()) throw DataError("pool_by_course: docs and dataset differ in length");
  std::map<std::string, TokenizedDoc> pooled;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto& target = pooled[dataset[i].course_id];
    if (target.review_id.empty()) {
      target.review_id = "course:" + dataset[i].course_id;
      target.vocab_hash = docs[i].vocab_hash;
    }
    target.tokens.insert(target.tokens.end(), docs[i].tokens.begin(), docs[i].tokens.end());
  }
  std::vector<TokenizedDoc> out;
  out.reserve(pooled.size());
  for (auto& [course, doc] : pooled) out.push_back(std::move(doc));
  return out;
}

double heldout_log_likelihood(const TopicModel& model, std::span<const TokenizedDoc> docs,
                              const FoldInOptions& options) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& doc : docs) {
    if (doc.tokens.empty()) continue;
    FoldInOptions per_doc = options;
    per_doc.seed = mix_seed(options.seed, fnv1a(doc.review_id));
    const Eigen::VectorXd theta = infer_theta(model, doc, per_doc).theta;
    for (auto w : doc.tokens) {
      total += std::log(theta.dot(model.phi.col(static_cast<Eigen::Index>(w))));
      ++count;
    }
  }
  if (count == 0) throw DataError("held-out corpus has no tokens");
  return total / static_cast<double>(count);
}

}  // namespace satpred
