#include "satpred/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/json_fields.hpp"
#include "satpred/rng.hpp"

namespace satpred {

using nlohmann::json;

const std::array<std::vector<std::string>, kSyntheticTopics>& synthetic_topic_words() {
  static const std::array<std::vector<std::string>, kSyntheticTopics> words{{
      {"instructor", "lecturer", "professor", "teacher", "explains", "explanation", "speaker", "presenter",
       "accent", "voice", "enthusiasm", "charisma", "teaching", "mentor", "lecturing", "pace", "delivery",
       "knowledgeable", "expert", "passion", "charismatic", "articulate", "humor", "storytelling"},
      {"material", "syllabus", "curriculum", "chapters", "modules", "topics", "concepts", "theory", "examples",
       "readings", "textbook", "depth", "coverage", "outdated", "slides", "notes", "case", "studies",
       "theorems", "derivations", "references", "advanced", "fundamentals", "content"},
      {"quiz", "quizzes", "exam", "exams", "assignment", "assignments", "grading", "rubric", "deadline",
       "deadlines", "homework", "tests", "peer", "graded", "score", "scores", "midterm", "project",
       "projects", "autograder", "submission", "marks", "retake", "plagiarism"},
      {"platform", "interface", "player", "buffering", "subtitles", "app", "mobile", "browser", "login",
       "download", "navigation", "layout", "bugs", "crashes", "audio", "playback", "captions", "dashboard",
       "menus", "loading", "server", "upload", "website", "links"},
      {"support", "community", "discussion", "discussions", "staff", "responses", "moderators", "classmates",
       "peers", "chat", "office", "hours", "email", "replies", "troubleshooting", "guidance", "tutoring",
       "advisors", "teamwork", "collaboration", "networking", "cohort", "mentoring", "helpdesk"},
      {"price", "cost", "certificate", "value", "money", "career", "job", "salary", "promotion", "resume",
       "credential", "worth", "investment", "subscription", "refund", "free", "paid", "fee", "discount",
       "employer", "skills", "portfolio", "linkedin", "degree"},
  }};
  return words;
}

const std::array<std::string, kSyntheticTopics>& synthetic_topic_labels() {
  static const std::array<std::string, kSyntheticTopics> labels{
      "instructor_quality", "course_content", "assessment_design",
      "platform_usability", "learning_support", "perceived_value"};
  return labels;
}

namespace {

// Rating contribution of each planted topic before standardization.
constexpr std::array<double, kSyntheticTopics> kTopicEffect{1.0, -1.0, 0.6, -0.6, 0.3, -0.3};

const std::vector<std::string>& praise_words() {
  static const std::vector<std::string> w{"helpful", "clear",     "engaging",  "useful",    "good",
                                          "great",   "interesting", "practical", "relevant", "enjoyable"};
  return w;
}

// Intensifiers and the negator are stopwords: invisible to the topic model
// and to lexical baselines, visible to the contextual encoder.
const std::vector<std::string>& positive_markers() {
  static const std::vector<std::string> w{"very"};
  return w;
}
constexpr const char* kNegator = "not";

constexpr std::int64_t kEpoch2024 = 1704067200;
constexpr std::int64_t kDay = 86400;

void standardize(std::vector<double>& v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (double& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

std::vector<double> dirichlet(Rng& rng, const std::vector<double>& alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[k] = rng.gamma(alpha[k]);
    total += out[k];
  }
  if (!(total > 0.0)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (double& x : out) x /= total;
  return out;
}

std::string fmt_id(const char* prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int digits_for(std::size_t n) {
  int d = 1;
  for (std::size_t x = n > 0 ? n - 1 : 0; x >= 10; x /= 10) ++d;
  return std::max(d, 4);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_reviews < 1) throw ConfigError("synthetic n_reviews must be >= 1");
  if (n_courses < 1) throw ConfigError("synthetic n_courses must be >= 1");
  for (double w : {topic_weight, sentiment_weight, behavior_weight, noise_sd}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("synthetic weights and noise_sd must be finite and >= 0");
  }
  if (topic_weight == 0.0 && sentiment_weight == 0.0 && behavior_weight == 0.0 && noise_sd == 0.0) {
    throw ConfigError("synthetic spec needs at least one positive signal weight or noise_sd");
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("synthetic missing_rate must be in [0, 1)");
  if (domains.empty()) throw ConfigError("synthetic spec needs at least one domain");
  for (const auto& [d, m] : domain_noise) {
    if (std::find(domains.begin(), domains.end(), d) == domains.end()) {
      throw ConfigError("domain_noise names unknown domain '" + d + "'");
    }
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("domain_noise multipliers must be finite and >= 0");
  }
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  SyntheticSpec s;
  FieldReader r(j, "synthetic");
  r.read("n_reviews", s.n_reviews);
  r.read("n_courses", s.n_courses);
  r.read("topic_weight", s.topic_weight);
  r.read("sentiment_weight", s.sentiment_weight);
  r.read("behavior_weight", s.behavior_weight);
  r.read("noise_sd", s.noise_sd);
  r.read("seed", s.seed);
  r.read("missing_rate", s.missing_rate);
  r.read("domains", s.domains);
  r.read("domain_noise", s.domain_noise);
  r.finish();
  s.validate();
  return s;
}

json SyntheticSpec::to_json() const {
  return {{"n_reviews", n_reviews},         {"n_courses", n_courses},   {"topic_weight", topic_weight},
          {"sentiment_weight", sentiment_weight}, {"behavior_weight", behavior_weight}, {"noise_sd", noise_sd},
          {"seed", seed},                   {"missing_rate", missing_rate}, {"domains", domains},
          {"domain_noise", domain_noise}};
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto& topic_words = synthetic_topic_words();
  const std::size_t n = spec.n_reviews;

  // Course topic profiles.
  std::vector<std::vector<double>> course_profile(spec.n_courses);
  for (auto& prof : course_profile) prof = dirichlet(rng, std::vector<double>(kSyntheticTopics, 0.5));

  // Mild Zipf weights over each topic's word list.
  std::vector<double> zipf(topic_words[0].size());
  for (std::size_t r = 0; r < zipf.size(); ++r) zipf[r] = 1.0 / std::sqrt(static_cast<double>(r + 1));

  SyntheticData out;
  out.dataset.resize(n);
  out.latents.resize(n);
  std::vector<double> topic_raw(n), sent_raw(n), beh_raw(n), eps(n);
  const int id_width = digits_for(n);
  const int course_width = std::max(3, digits_for(spec.n_courses) - 1);

  for (std::size_t i = 0; i < n; ++i) {
    ReviewRecord& rec = out.dataset[i];
    SyntheticLatent& lat = out.latents[i];
    rec.id = fmt_id("r", i, id_width);
    lat.id = rec.id;
    const std::size_t course = rng.below(spec.n_courses);
    rec.course_id = fmt_id("c", course, course_width);
    rec.domain_tag = spec.domains[course % spec.domains.size()];
    rec.timestamp = kEpoch2024 + static_cast<std::int64_t>(rng.below(365 * kDay));

    // Content tokens from the review's topic mixture.
    std::vector<double> alpha(kSyntheticTopics);
    for (int k = 0; k < kSyntheticTopics; ++k) alpha[static_cast<std::size_t>(k)] = 0.2 + 3.0 * course_profile[course][static_cast<std::size_t>(k)];
    const std::vector<double> mix = dirichlet(rng, alpha);
    const std::size_t n_content = 6 + rng.below(7);
    std::vector<std::vector<std::string>> units;
    std::array<int, kSyntheticTopics> counts{};
    for (std::size_t t = 0; t < n_content; ++t) {
      const std::size_t k = rng.categorical(mix);
      const std::size_t w = rng.categorical(zipf);
      units.push_back({topic_words[k][w]});
      ++counts[k];
    }
    double tau = 0.0;
    for (int k = 0; k < kSyntheticTopics; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      lat.topic_mix[ku] = static_cast<double>(counts[ku]) / static_cast<double>(n_content);
      tau += lat.topic_mix[ku] * kTopicEffect[ku];
    }
    topic_raw[i] = tau;

    // Sentiment phrases.
    const double u = rng.normal();
    const double p_pos = 1.0 / (1.0 + std::exp(-2.5 * u));
    const std::size_t n_phrases = 2 + rng.below(3);
    double polarity = 0.0;
    for (std::size_t t = 0; t < n_phrases; ++t) {
      const bool pos = rng.uniform() < p_pos;
      const std::string& praise = praise_words()[rng.below(praise_words().size())];
      const std::string marker = pos ? positive_markers()[rng.below(positive_markers().size())] : kNegator;
      units.push_back({marker, praise});
      polarity += pos ? 1.0 : -1.0;
    }
    sent_raw[i] = polarity / static_cast<double>(n_phrases);
    rng.shuffle(std::span(units));
    std::string text;
    for (const auto& unit : units) {
      for (const auto& w : unit) {
        if (!text.empty()) text += ' ';
        text += w;
      }
    }
    rec.text = std::move(text);

    // Behavior logs driven by the engagement latent.
    const double e = rng.normal();
    beh_raw[i] = e;
    auto observed = [&] { return !(rng.uniform() < spec.missing_rate); };
    auto past_ts = [&](std::int64_t max_days) {
      return rec.timestamp - static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_days * kDay)));
    };
    if (observed()) {
      std::vector<Event> ev(1 + rng.below(5));
      for (auto& x : ev) x = {past_ts(60), std::max(1.0, 40.0 + 15.0 * e + 8.0 * rng.normal())};
      std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
      rec.behavior_raw["video_duration"] = std::move(ev);
    }
    if (observed()) {
      rec.behavior_raw["quiz_attempts"] = std::max(0.0, std::round(2.5 + 1.2 * e + 0.8 * rng.normal()));
    }
    if (observed()) {
      std::vector<Event> ev(1 + rng.below(6));
      for (auto& x : ev) x = {past_ts(70), std::max(0.0, std::round(2.0 + 1.5 * e + rng.normal()))};
      std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
      rec.behavior_raw["forum_posts"] = std::move(ev);
    }
    if (observed()) {
      rec.behavior_raw["revisit_count"] = std::max(0.0, std::round(4.0 + 2.0 * e + 1.5 * rng.normal()));
    }
    if (observed()) {
      const double level = e + 0.5 * rng.normal();
      rec.completion = level > 0.6 ? Completion::completed : level > -0.4 ? Completion::in_progress : Completion::not_started;
    }
    eps[i] = rng.normal();
  }

  standardize(topic_raw);
  standardize(sent_raw);
  standardize(beh_raw);
  for (std::size_t i = 0; i < n; ++i) {
    ReviewRecord& rec = out.dataset[i];
    SyntheticLatent& lat = out.latents[i];
    auto it = spec.domain_noise.find(rec.domain_tag);
    const double sd = spec.noise_sd * (it == spec.domain_noise.end() ? 1.0 : it->second);
    lat.topic = topic_raw[i];
    lat.sentiment = sent_raw[i];
    lat.behavior = beh_raw[i];
    lat.noise = sd * eps[i];
    lat.raw_rating = 3.0 + spec.topic_weight * lat.topic + spec.sentiment_weight * lat.sentiment +
                     spec.behavior_weight * lat.behavior + lat.noise;
    rec.rating = std::clamp(lat.raw_rating, kMinRating, kMaxRating);
  }
  return out;
}

void write_latents(const std::vector<SyntheticLatent>& latents, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& l : latents) {
    json j = {{"id", l.id},
              {"topic_mix", l.topic_mix},
              {"topic", l.topic},
              {"sentiment", l.sentiment},
              {"behavior", l.behavior},
              {"noise", l.noise},
              {"raw_rating", l.raw_rating}};
    out << j.dump() << '\n';
  }
}

}  // namespace satpred
