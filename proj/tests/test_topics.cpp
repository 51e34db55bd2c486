#include <cmath>

#include <gtest/gtest.h>

#include "satpred/error.hpp"
#include "satpred/rng.hpp"
#include "satpred/topics.hpp"
#include "test_util.hpp"

using namespace satpred;

namespace {

/// Two topics over disjoint halves of a 40-word vocabulary, Zipf-weighted.
struct TwoTopicCorpus {
  std::vector<TokenizedDoc> docs;
  Eigen::MatrixXd phi_true;  // 2 x 40
  static constexpr std::size_t kV = 40;
};

TwoTopicCorpus make_two_topic_corpus(std::size_t n_docs, std::size_t doc_len, std::uint64_t seed) {
  TwoTopicCorpus c;
  c.phi_true = Eigen::MatrixXd::Zero(2, TwoTopicCorpus::kV);
  for (int k = 0; k < 2; ++k) {
    for (int r = 0; r < 20; ++r) c.phi_true(k, k * 20 + r) = 1.0 / (r + 1.0);
    c.phi_true.row(k) /= c.phi_true.row(k).sum();
  }
  Rng rng(seed);
  for (std::size_t d = 0; d < n_docs; ++d) {
    TokenizedDoc doc;
    doc.review_id = "d" + std::to_string(d);
    const double share = rng.uniform();
    for (std::size_t t = 0; t < doc_len; ++t) {
      const int k = rng.uniform() < share ? 0 : 1;
      std::vector<double> w(c.phi_true.cols());
      for (Eigen::Index j = 0; j < c.phi_true.cols(); ++j) w[static_cast<std::size_t>(j)] = c.phi_true(k, j);
      doc.tokens.push_back(static_cast<std::uint32_t>(rng.categorical(w)));
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

/// Best matching of fitted rows to true rows over both permutations of K=2.
std::array<int, 2> match(const Eigen::MatrixXd& fitted, const Eigen::MatrixXd& truth) {
  const double direct = cosine(fitted.row(0), truth.row(0)) + cosine(fitted.row(1), truth.row(1));
  const double swapped = cosine(fitted.row(1), truth.row(0)) + cosine(fitted.row(0), truth.row(1));
  return direct >= swapped ? std::array<int, 2>{0, 1} : std::array<int, 2>{1, 0};
}

LdaOptions quick_options(int K, std::uint64_t seed) {
  LdaOptions o;
  o.num_topics = K;
  o.alpha = 0.1;
  o.iterations = 200;
  o.burn_in = 150;
  o.thin = 5;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Lda, RecoversDisjointTopicsUpToPermutation) {
  const auto c = make_two_topic_corpus(500, 10, 3);
  const auto m = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(2, 7));
  const auto perm = match(m.phi, c.phi_true);
  for (int k = 0; k < 2; ++k) EXPECT_GT(cosine(m.phi.row(perm[k]), c.phi_true.row(k)), 0.9);
}

TEST(Lda, PhiRowsOnSimplex) {
  const auto c = make_two_topic_corpus(100, 10, 4);
  const auto m = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(3, 1));
  EXPECT_NO_THROW(m.validate());
  for (Eigen::Index k = 0; k < m.phi.rows(); ++k) {
    EXPECT_NEAR(m.phi.row(k).sum(), 1.0, 1e-12);
    EXPECT_GE(m.phi.row(k).minCoeff(), 0.0);
  }
}

TEST(Lda, SingleWordCorpus) {
  std::vector<TokenizedDoc> docs(20);
  for (auto& d : docs) d.tokens.assign(5, 0);
  // V = 1: each row is exactly (n + beta) / (n + beta) = 1.
  auto m = fit_lda(docs, 1, 0, quick_options(2, 2));
  EXPECT_EQ(m.phi(0, 0), 1.0);
  EXPECT_EQ(m.phi(1, 0), 1.0);
  // V = 3 with only word 0 observed: unobserved words share the beta mass equally.
  m = fit_lda(docs, 3, 0, quick_options(2, 2));
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_GT(m.phi(k, 0), 0.99);
    EXPECT_DOUBLE_EQ(m.phi(k, 1), m.phi(k, 2));
  }
}

TEST(Lda, DeterministicGivenSeed) {
  const auto c = make_two_topic_corpus(100, 10, 5);
  const auto a = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(2, 9));
  const auto b = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(2, 9));
  EXPECT_TRUE(a.phi == b.phi);
}

TEST(Lda, PermutedInitPermutesPhiRows) {
  const auto c = make_two_topic_corpus(120, 10, 6);
  LdaOptions o = quick_options(3, 12);
  const auto base = fit_lda(c.docs, TwoTopicCorpus::kV, 0, o);
  o.init_permutation = {2, 0, 1};
  const auto perm = fit_lda(c.docs, TwoTopicCorpus::kV, 0, o);
  for (int j = 0; j < 3; ++j) EXPECT_TRUE(perm.phi.row(o.init_permutation[static_cast<std::size_t>(j)]) == base.phi.row(j));
}

TEST(Lda, CountBookkeepingHolds) {
  const auto c = make_two_topic_corpus(50, 8, 8);
  LdaOptions o = quick_options(4, 3);
  o.verify_counts = true;
  EXPECT_NO_THROW(fit_lda(c.docs, TwoTopicCorpus::kV, 0, o));
}

TEST(Lda, Errors) {
  std::vector<TokenizedDoc> empty(3);
  EXPECT_THROW(fit_lda(empty, 5, 0, quick_options(2, 1)), DataError);
  std::vector<TokenizedDoc> tiny(1);
  tiny[0].tokens = {0, 1};
  EXPECT_THROW(fit_lda(tiny, 2, 0, quick_options(3, 1)), DataError);
  EXPECT_THROW(fit_lda(tiny, 2, 0, quick_options(1, 1)), ConfigError);
  LdaOptions bad = quick_options(2, 1);
  bad.burn_in = bad.iterations;
  EXPECT_THROW(fit_lda(tiny, 2, 0, bad), ConfigError);
}

TEST(Lda, DefaultsAreStandardPriors) {
  LdaOptions o;
  EXPECT_EQ(o.num_topics, 6);
  EXPECT_DOUBLE_EQ(o.resolved_alpha(), 50.0 / 6.0);
  EXPECT_EQ(o.beta, 0.01);
  EXPECT_EQ(o.iterations, 1000);
  EXPECT_EQ(o.burn_in, 800);
  EXPECT_EQ(o.thin, 10);
  FoldInOptions f;
  EXPECT_EQ(f.iterations, 100);
  EXPECT_EQ(f.burn_in, 50);
}

TEST(FoldIn, EmptyDocIsUniform) {
  TopicModel m;
  m.phi = Eigen::MatrixXd::Constant(6, 4, 0.25);
  m.alpha = 50.0 / 6.0;
  m.beta = 0.01;
  TokenizedDoc doc;
  const auto t = infer_theta(m, doc, {});
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_EQ(t.theta(k), 1.0 / 6.0);
}

TEST(FoldIn, TopWordsDocConcentratesOnItsTopic) {
  const auto c = make_two_topic_corpus(500, 10, 3);
  const auto m = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(2, 7));
  const auto perm = match(m.phi, c.phi_true);
  TokenizedDoc doc;
  for (std::uint32_t w = 0; w < 10; ++w) doc.tokens.push_back(w);  // true topic 0's top-10 words
  FoldInOptions f;
  f.seed = 4;
  const auto t = infer_theta(m, doc, f);
  EXPECT_GT(t.theta(perm[0]), 0.8);
}

TEST(FoldIn, ThetaOnSimplexForRandomDocs) {
  const auto c = make_two_topic_corpus(200, 10, 9);
  const auto m = fit_lda(c.docs, TwoTopicCorpus::kV, 0, quick_options(3, 7));
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    TokenizedDoc doc;
    const auto len = rng.below(15);
    for (std::uint64_t t = 0; t < len; ++t) doc.tokens.push_back(static_cast<std::uint32_t>(rng.below(TwoTopicCorpus::kV)));
    FoldInOptions f;
    f.iterations = 20;
    f.burn_in = 10;
    f.seed = static_cast<std::uint64_t>(i);
    const auto t = infer_theta(m, doc, f);
    ASSERT_NEAR(t.theta.sum(), 1.0, 1e-9);
    ASSERT_GE(t.theta.minCoeff(), 0.0);
  }
}

TEST(FoldIn, VocabMismatchIsFatal) {
  TopicModel m;
  m.phi = Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0);
  m.alpha = 1;
  m.beta = 0.01;
  m.vocab_hash = 42;
  TokenizedDoc doc;
  doc.tokens = {0};
  doc.vocab_hash = 7;
  EXPECT_THROW(infer_theta(m, doc, {}), DataError);
}

TEST(Lda, HeldoutLikelihoodBeatsUnigram) {
  const auto train = make_two_topic_corpus(400, 10, 21);
  const auto test = make_two_topic_corpus(100, 10, 22);
  const auto m = fit_lda(train.docs, TwoTopicCorpus::kV, 0, quick_options(2, 5));
  FoldInOptions f;
  f.seed = 1;
  const double ll_k2 = heldout_log_likelihood(m, test.docs, f);

  // K = 1 is a unigram model: p(w) = (n_w + beta) / (N + V beta).
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(TwoTopicCorpus::kV);
  double n = 0;
  for (const auto& d : train.docs) {
    for (auto w : d.tokens) counts(w) += 1, n += 1;
  }
  const double beta = 0.01;
  double ll_k1 = 0;
  double tokens = 0;
  for (const auto& d : test.docs) {
    for (auto w : d.tokens) {
      ll_k1 += std::log((counts(w) + beta) / (n + TwoTopicCorpus::kV * beta));
      tokens += 1;
    }
  }
  ll_k1 /= tokens;
  EXPECT_GT(ll_k2, ll_k1);
}

TEST(TopicModel, SaveLoadRoundTripAndValidation) {
  satpred::testing::TempDir dir;
  const auto c = make_two_topic_corpus(60, 8, 1);
  auto m = fit_lda(c.docs, TwoTopicCorpus::kV, 99, quick_options(2, 1));
  m.labels = {"first", "second"};
  m.save(dir / "m.json");
  const auto back = TopicModel::load(dir / "m.json");
  EXPECT_TRUE(back.phi == m.phi);
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.vocab_hash, 99u);
  EXPECT_EQ(back.labels, m.labels);

  satpred::testing::write_file(dir / "bad.json", R"({"version":1,"K":2,"V":2,"alpha":1,"beta":0.01,"vocab_hash":"0000000000000000","labels":[],"phi":[0.5,0.6,0.5,0.5]})");
  EXPECT_THROW(TopicModel::load(dir / "bad.json"), FormatError);
}

TEST(Pooling, ConcatenatesByCourseInCourseOrder) {
  Dataset d{satpred::testing::make_record("a", "c2", "", 3), satpred::testing::make_record("b", "c1", "", 3),
            satpred::testing::make_record("c", "c2", "", 3)};
  std::vector<TokenizedDoc> docs(3);
  docs[0].tokens = {1};
  docs[1].tokens = {2};
  docs[2].tokens = {3, 4};
  const auto pooled = pool_by_course(docs, d);
  ASSERT_EQ(pooled.size(), 2u);
  EXPECT_EQ(pooled[0].tokens, std::vector<std::uint32_t>{2});
  EXPECT_EQ(pooled[1].tokens, (std::vector<std::uint32_t>{1, 3, 4}));
}
