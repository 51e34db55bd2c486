#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace satpred {

enum class Completion { not_started, in_progress, completed };

std::string_view to_string(Completion c);
std::optional<Completion> parse_completion(std::string_view s);

/// One timestamped behavioral observation.
struct Event {
  std::int64_t ts = 0;
  double value = 0.0;
  bool operator==(const Event&) const = default;
};

/// A raw behavioral signal is either a scalar or an event log. A feature that
/// was not observed has no entry in the map at all.
using BehaviorValue = std::variant<double, std::vector<Event>>;

struct ReviewRecord {
  std::string id;
  std::string course_id;
  std::string domain_tag;
  std::string text;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  std::map<std::string, BehaviorValue> behavior_raw;
  std::optional<Completion> completion;

  bool operator==(const ReviewRecord&) const = default;
};

using Dataset = std::vector<ReviewRecord>;

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

// ---------------------------------------------------------------------------
// Ingestion

enum class InputFormat { jsonl, csv };

std::optional<InputFormat> parse_input_format(std::string_view s);

struct IngestOptions {
  /// When set, behavior keys outside this list reject the row.
  std::optional<std::vector<std::string>> behavior_schema;
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct IngestResult {
  Dataset dataset;
  std::vector<RejectedRow> rejects;
};

/// Reads a review file. Structural problems (unparseable JSON line, CSV
/// without the required header) throw FormatError carrying the line number;
/// semantically invalid rows are collected in `rejects`.
IngestResult ingest_reviews(const std::filesystem::path& path, InputFormat format,
                            const IngestOptions& options = {});

std::string to_jsonl_line(const ReviewRecord& record);
void write_jsonl(const Dataset& dataset, const std::filesystem::path& path);
void write_rejects(const std::vector<RejectedRow>& rejects, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Tokenization and vocabulary

/// Lowercases and splits UTF-8 text on whitespace and punctuation. No filtering.
std::vector<std::string> split_words(std::string_view text);

const std::set<std::string>& default_stopwords();

class Tokenizer {
public:
  Tokenizer();
  explicit Tokenizer(std::set<std::string> stopwords);

  /// One stopword per line; blank lines and lines starting with '#' ignored.
  static Tokenizer from_stopword_file(const std::filesystem::path& path);

  /// split_words minus stopwords and digits-only tokens.
  std::vector<std::string> terms(std::string_view text) const;

  const std::set<std::string>& stopwords() const { return stopwords_; }

private:
  std::set<std::string> stopwords_;
};

class Vocabulary {
public:
  Vocabulary() = default;

  std::optional<std::uint32_t> find(std::string_view term) const;
  /// Returns the existing index or appends the term.
  std::uint32_t add(const std::string& term, std::uint32_t doc_freq = 0);

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::string& term(std::uint32_t index) const { return terms_.at(index); }
  const std::vector<std::string>& terms() const { return terms_; }
  std::uint32_t doc_freq(std::uint32_t index) const { return doc_freq_.at(index); }
  void set_doc_freq(std::uint32_t index, std::uint32_t df) { doc_freq_.at(index) = df; }

  /// Checksum binding models to this exact term list and order.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

private:
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> doc_freq_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct TokenizedDoc {
  std::string review_id;
  std::vector<std::uint32_t> tokens;
  std::uint64_t vocab_hash = 0;
};

enum class VocabMode { build, lookup };

/// In build mode unseen terms are appended to `vocab`; in lookup mode they are dropped.
TokenizedDoc tokenize(const Tokenizer& tokenizer, std::string_view text, Vocabulary& vocab,
                      VocabMode mode, std::string review_id = {});
TokenizedDoc tokenize(const Tokenizer& tokenizer, std::string_view text, const Vocabulary& vocab,
                      std::string review_id = {});

/// Terms appearing in at least `min_doc_freq` distinct documents, indexed in
/// lexicographic order.
Vocabulary build_vocab(const Dataset& dataset, const Tokenizer& tokenizer, std::uint32_t min_doc_freq);

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Stratified by course_id, deterministic in (ids, course ids, seed) and
/// independent of input order.
DatasetSplit split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

/// Id lists only, for persisting a split next to the dataset it came from.
struct SplitIds {
  std::vector<std::string> train, val, test;
};

SplitIds split_ids(const DatasetSplit& split);
DatasetSplit apply_split(const Dataset& dataset, const SplitIds& ids);
void save_split(const SplitIds& ids, const std::filesystem::path& path);
SplitIds load_split(const std::filesystem::path& path);

}  // namespace satpred
