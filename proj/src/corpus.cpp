#include "satpred/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "satpred/error.hpp"
#include "satpred/rng.hpp"

namespace satpred {

using nlohmann::json;

std::string_view to_string(Completion c) {
  switch (c) {
    case Completion::not_started: return "not_started";
    case Completion::in_progress: return "in_progress";
    case Completion::completed: return "completed";
  }
  return "";
}

std::optional<Completion> parse_completion(std::string_view s) {
  if (s == "not_started") return Completion::not_started;
  if (s == "in_progress") return Completion::in_progress;
  if (s == "completed") return Completion::completed;
  return std::nullopt;
}

std::optional<InputFormat> parse_input_format(std::string_view s) {
  if (s == "jsonl") return InputFormat::jsonl;
  if (s == "csv") return InputFormat::csv;
  return std::nullopt;
}

namespace {

/// Thrown while decoding one row; turned into a RejectedRow by the caller.
struct RowRejected {
  std::string reason;
};

void check_rating(double rating) {
  if (!std::isfinite(rating) || rating < kMinRating || rating > kMaxRating) {
    throw RowRejected{"rating out of range [1,5]"};
  }
}

void check_feature_name(const std::string& name, const IngestOptions& options) {
  if (!options.behavior_schema) return;
  const auto& schema = *options.behavior_schema;
  if (std::find(schema.begin(), schema.end(), name) == schema.end()) {
    throw RowRejected{"unknown behavior feature '" + name + "'"};
  }
}

ReviewRecord record_from_json(const json& obj, const IngestOptions& options) {
  if (!obj.is_object()) throw RowRejected{"row is not a JSON object"};
  ReviewRecord r;

  auto get_string = [&](const char* key, bool required) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) throw RowRejected{std::string("missing ") + key};
      return {};
    }
    if (!it->is_string()) throw RowRejected{std::string(key) + " is not a string"};
    return it->get<std::string>();
  };

  r.id = get_string("id", true);
  r.course_id = get_string("course_id", false);
  r.domain_tag = get_string("domain", false);
  r.text = get_string("text", true);

  auto rating = obj.find("rating");
  if (rating == obj.end() || rating->is_null()) throw RowRejected{"missing rating"};
  if (!rating->is_number()) throw RowRejected{"rating is not a number"};
  r.rating = rating->get<double>();
  check_rating(r.rating);

  if (auto ts = obj.find("ts"); ts != obj.end() && !ts->is_null()) {
    if (!ts->is_number_integer()) throw RowRejected{"ts is not an integer"};
    r.timestamp = ts->get<std::int64_t>();
  }

  if (auto beh = obj.find("behavior"); beh != obj.end() && !beh->is_null()) {
    if (!beh->is_object()) throw RowRejected{"behavior is not an object"};
    for (const auto& [name, value] : beh->items()) {
      if (value.is_null()) continue;
      check_feature_name(name, options);
      if (value.is_number()) {
        const double v = value.get<double>();
        if (!std::isfinite(v)) throw RowRejected{"non-finite behavior value for " + name};
        r.behavior_raw.emplace(name, v);
      } else if (value.is_array()) {
        std::vector<Event> events;
        events.reserve(value.size());
        for (const auto& pair : value) {
          if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
              !pair[1].is_number()) {
            throw RowRejected{"behavior events for " + name + " must be [ts, value] pairs"};
          }
          events.push_back({pair[0].get<std::int64_t>(), pair[1].get<double>()});
        }
        // An empty log carries no observation.
        if (!events.empty()) r.behavior_raw.emplace(name, std::move(events));
      } else {
        throw RowRejected{"behavior value for " + name + " must be a number or event list"};
      }
    }
  }

  if (auto c = obj.find("completion"); c != obj.end() && !c->is_null()) {
    if (!c->is_string()) throw RowRejected{"completion is not a string"};
    auto parsed = parse_completion(c->get<std::string>());
    if (!parsed) throw RowRejected{"unknown completion status"};
    r.completion = parsed;
  }
  return r;
}

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and newlines.
class CsvReader {
public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Reads one record; returns false at EOF. `line` is the 1-based line the record starts on.
  bool next(std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    int c = in_.peek();
    if (c == EOF) return false;
    line = line_ + 1;
    std::string field;
    bool quoted = false;
    bool field_was_quoted = false;
    for (;;) {
      c = in_.get();
      if (c == EOF) {
        if (quoted) throw FormatError("unterminated quoted CSV field starting on line " + std::to_string(line));
        fields.push_back(std::move(field));
        ++line_;
        return true;
      }
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_was_quoted) {
        quoted = true;
        field_was_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
      } else if (c == '\n') {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(std::move(field));
        ++line_;
        return true;
      } else {
        field.push_back(static_cast<char>(c));
      }
    }
  }

private:
  std::istream& in_;
  std::size_t line_ = 0;
};

double parse_double_field(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw RowRejected{what + " is not a number"};
  }
  if (pos != s.size()) throw RowRejected{what + " is not a number"};
  return v;
}

IngestResult ingest_jsonl(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      ReviewRecord r = record_from_json(obj, options);
      if (!seen.insert(r.id).second) throw RowRejected{"duplicate id '" + r.id + "'"};
      result.dataset.push_back(std::move(r));
    } catch (const RowRejected& rej) {
      result.rejects.push_back({lineno, rej.reason});
    }
  }
  return result;
}

IngestResult ingest_csv(std::istream& in, const IngestOptions& options) {
  CsvReader reader(in);
  std::vector<std::string> header;
  std::size_t lineno = 0;
  if (!reader.next(header, lineno)) throw FormatError("line 1: empty CSV file");

  static const std::set<std::string> kKnown = {"id", "course_id", "domain", "text",
                                               "rating", "ts", "completion"};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& name = header[i];
    if (!kKnown.count(name) && name.rfind("beh.", 0) != 0) {
      throw FormatError("line " + std::to_string(lineno) + ": unknown CSV column '" + name + "'");
    }
    if (!col.emplace(name, i).second) {
      throw FormatError("line " + std::to_string(lineno) + ": duplicate CSV column '" + name + "'");
    }
  }
  for (const char* required : {"id", "text", "rating"}) {
    if (!col.count(required)) {
      throw FormatError("line " + std::to_string(lineno) + ": CSV header lacks '" + required + "'");
    }
  }

  IngestResult result;
  std::set<std::string> seen;
  std::vector<std::string> fields;
  while (reader.next(fields, lineno)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw FormatError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      ReviewRecord r;
      auto cell = [&](const char* name) -> const std::string* {
        auto it = col.find(name);
        return it == col.end() ? nullptr : &fields[it->second];
      };
      r.id = *cell("id");
      if (r.id.empty()) throw RowRejected{"missing id"};
      if (auto* c = cell("course_id")) r.course_id = *c;
      if (auto* c = cell("domain")) r.domain_tag = *c;
      r.text = *cell("text");
      if (cell("text")->empty()) throw RowRejected{"missing text"};
      if (cell("rating")->empty()) throw RowRejected{"missing rating"};
      r.rating = parse_double_field(*cell("rating"), "rating");
      check_rating(r.rating);
      if (auto* c = cell("ts"); c && !c->empty()) {
        std::size_t pos = 0;
        try {
          r.timestamp = std::stoll(*c, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != c->size()) throw RowRejected{"ts is not an integer"};
      }
      if (auto* c = cell("completion"); c && !c->empty()) {
        auto parsed = parse_completion(*c);
        if (!parsed) throw RowRejected{"unknown completion status"};
        r.completion = parsed;
      }
      for (const auto& [name, idx] : col) {
        if (name.rfind("beh.", 0) != 0 || fields[idx].empty()) continue;
        const std::string feature = name.substr(4);
        check_feature_name(feature, options);
        const double v = parse_double_field(fields[idx], feature);
        if (!std::isfinite(v)) throw RowRejected{"non-finite behavior value for " + feature};
        r.behavior_raw.emplace(feature, v);
      }
      if (!seen.insert(r.id).second) throw RowRejected{"duplicate id '" + r.id + "'"};
      result.dataset.push_back(std::move(r));
    } catch (const RowRejected& rej) {
      result.rejects.push_back({lineno, rej.reason});
    }
  }
  return result;
}

}  // namespace

IngestResult ingest_reviews(const std::filesystem::path& path, InputFormat format,
                            const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return format == InputFormat::jsonl ? ingest_jsonl(in, options) : ingest_csv(in, options);
}

std::string to_jsonl_line(const ReviewRecord& r) {
  json obj = json::object();
  obj["id"] = r.id;
  obj["course_id"] = r.course_id;
  obj["domain"] = r.domain_tag;
  obj["text"] = r.text;
  obj["rating"] = r.rating;
  obj["ts"] = r.timestamp;
  json beh = json::object();
  for (const auto& [name, value] : r.behavior_raw) {
    if (const double* scalar = std::get_if<double>(&value)) {
      beh[name] = *scalar;
    } else {
      json events = json::array();
      for (const Event& e : std::get<std::vector<Event>>(value)) events.push_back({e.ts, e.value});
      beh[name] = std::move(events);
    }
  }
  obj["behavior"] = std::move(beh);
  if (r.completion) obj["completion"] = std::string(to_string(*r.completion));
  return obj.dump();
}

void write_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : dataset) out << to_jsonl_line(r) << '\n';
}

void write_rejects(const std::vector<RejectedRow>& rejects, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : rejects) out << json{{"line", r.line}, {"reason", r.reason}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

/// Decodes one UTF-8 code point; invalid bytes decode to U+FFFD and advance by one.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  // Latin-1 supplement symbols and punctuation, except letters.
  if (cp >= 0x80 && cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation and spaces
  if (cp >= 0x20A0 && cp <= 0x20CF) return false;  // currency
  if (cp >= 0x2190 && cp <= 0x2BFF) return false;  // arrows, math, boxes, misc symbols
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;  // fullwidth punctuation
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
  if (cp == 0xFFFD || cp == 0xFEFF) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;  // Latin-1
  if (cp >= 0x100 && cp <= 0x17F && (cp % 2 == 0) && cp != 0x130 && cp != 0x138) return cp + 1;  // Latin Extended-A (approx.)
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                  // Cyrillic
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

const std::set<std::string>& default_stopwords() {
  // Mirrors data/stopwords_en.txt.
  static const std::set<std::string> kWords = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
      "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
      "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
      "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
      "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
      "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
      "for", "with", "about", "against", "between", "into", "through", "during", "before",
      "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
      "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
      "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
      "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can",
      "will", "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain",
      "aren", "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn",
      "mustn", "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn"};
  return kWords;
}

Tokenizer::Tokenizer() : stopwords_(default_stopwords()) {}

Tokenizer::Tokenizer(std::set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}

Tokenizer Tokenizer::from_stopword_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stopword file " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    for (auto& w : split_words(line)) words.insert(std::move(w));
  }
  return Tokenizer(std::move(words));
}

std::vector<std::string> Tokenizer::terms(std::string_view text) const {
  std::vector<std::string> words = split_words(text);
  std::erase_if(words, [&](const std::string& w) { return stopwords_.count(w) > 0 || all_digits(w); });
  return words;
}

// ---------------------------------------------------------------------------
// Vocabulary

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::add(const std::string& term, std::uint32_t doc_freq) {
  auto [it, inserted] = index_.emplace(term, static_cast<std::uint32_t>(terms_.size()));
  if (inserted) {
    terms_.push_back(term);
    doc_freq_.push_back(doc_freq);
  }
  return it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (const auto& t : terms_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  json doc = {{"version", 1}, {"terms", terms_}, {"doc_freq", doc_freq_}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (doc.value("version", 0) != 1) throw FormatError(path.string() + ": unsupported vocabulary version");
  const auto terms = doc.at("terms").get<std::vector<std::string>>();
  const auto df = doc.at("doc_freq").get<std::vector<std::uint32_t>>();
  if (terms.size() != df.size()) throw FormatError(path.string() + ": terms/doc_freq length mismatch");
  Vocabulary v;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (v.add(terms[i], df[i]) != i) throw FormatError(path.string() + ": duplicate term " + terms[i]);
  }
  return v;
}

TokenizedDoc tokenize(const Tokenizer& tokenizer, std::string_view text, Vocabulary& vocab,
                      VocabMode mode, std::string review_id) {
  if (mode == VocabMode::lookup) return tokenize(tokenizer, text, std::as_const(vocab), std::move(review_id));
  TokenizedDoc doc;
  doc.review_id = std::move(review_id);
  for (const auto& t : tokenizer.terms(text)) doc.tokens.push_back(vocab.add(t));
  doc.vocab_hash = vocab.hash();
  return doc;
}

TokenizedDoc tokenize(const Tokenizer& tokenizer, std::string_view text, const Vocabulary& vocab,
                      std::string review_id) {
  TokenizedDoc doc;
  doc.review_id = std::move(review_id);
  for (const auto& t : tokenizer.terms(text)) {
    if (auto idx = vocab.find(t)) doc.tokens.push_back(*idx);
  }
  doc.vocab_hash = vocab.hash();
  return doc;
}

Vocabulary build_vocab(const Dataset& dataset, const Tokenizer& tokenizer, std::uint32_t min_doc_freq) {
  if (min_doc_freq < 1) throw ConfigError("min_doc_freq must be >= 1");
  std::map<std::string, std::uint32_t> df;
  for (const auto& r : dataset) {
    auto terms = tokenizer.terms(r.text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[t];
  }
  Vocabulary vocab;
  for (const auto& [term, count] : df) {
    if (count >= min_doc_freq) vocab.add(term, count);
  }
  if (vocab.empty()) {
    throw ConfigError("vocabulary is empty at min_doc_freq=" + std::to_string(min_doc_freq));
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Split

DatasetSplit split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  const std::size_t n = dataset.size();
  if (n < 3) throw DataError("cannot split fewer than 3 records");

  auto target = [&](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * r)));
  };
  const std::size_t n_val = target(ratios.val);
  const std::size_t n_test = target(ratios.test);
  if (n_val + n_test >= n) throw DataError("split leaves no training records");

  // Course groups, members sorted by id so input order does not matter.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[dataset[i].course_id].push_back(i);

  struct Quota {
    std::vector<std::size_t>* members;
    std::size_t val = 0, test = 0;
    double val_rem = 0.0, test_rem = 0.0;
  };
  std::vector<Quota> quotas;
  std::size_t val_assigned = 0, test_assigned = 0;
  for (auto& [course, members] : groups) {
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) { return dataset[a].id < dataset[b].id; });
    Rng rng(mix_seed(seed, fnv1a(course)));
    rng.shuffle(std::span(members));
    const double ideal_val = static_cast<double>(members.size()) * ratios.val;
    const double ideal_test = static_cast<double>(members.size()) * ratios.test;
    Quota q{&members};
    q.val = static_cast<std::size_t>(std::floor(ideal_val));
    q.test = static_cast<std::size_t>(std::floor(ideal_test));
    q.val_rem = ideal_val - static_cast<double>(q.val);
    q.test_rem = ideal_test - static_cast<double>(q.test);
    val_assigned += q.val;
    test_assigned += q.test;
    quotas.push_back(q);
  }

  // Hand out the remaining slots by largest fractional remainder; ties go to
  // the earlier course. Groups with no spare training record are skipped.
  auto distribute = [&](std::size_t have, std::size_t want, auto rem_of, auto count_of) {
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem_of(quotas[a]) > rem_of(quotas[b]); });
    while (have < want) {
      bool progressed = false;
      for (std::size_t idx : order) {
        if (have >= want) break;
        Quota& q = quotas[idx];
        if (q.val + q.test + 1 > q.members->size()) continue;
        ++count_of(q);
        ++have;
        progressed = true;
      }
      if (!progressed) break;
    }
  };
  distribute(val_assigned, n_val, [](const Quota& q) { return q.val_rem; },
             [](Quota& q) -> std::size_t& { return q.val; });
  distribute(test_assigned, n_test, [](const Quota& q) { return q.test_rem; },
             [](Quota& q) -> std::size_t& { return q.test; });

  DatasetSplit split;
  for (const Quota& q : quotas) {
    const auto& m = *q.members;
    for (std::size_t j = 0; j < m.size(); ++j) {
      const ReviewRecord& r = dataset[m[j]];
      if (j < q.val) split.val.push_back(r);
      else if (j < q.val + q.test) split.test.push_back(r);
      else split.train.push_back(r);
    }
  }
  auto by_id = [](const ReviewRecord& a, const ReviewRecord& b) { return a.id < b.id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.val.begin(), split.val.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

SplitIds split_ids(const DatasetSplit& split) {
  SplitIds ids;
  for (const auto& r : split.train) ids.train.push_back(r.id);
  for (const auto& r : split.val) ids.val.push_back(r.id);
  for (const auto& r : split.test) ids.test.push_back(r.id);
  return ids;
}

DatasetSplit apply_split(const Dataset& dataset, const SplitIds& ids) {
  std::unordered_map<std::string, const ReviewRecord*> by_id;
  for (const auto& r : dataset) by_id.emplace(r.id, &r);
  auto collect = [&](const std::vector<std::string>& list) {
    Dataset out;
    out.reserve(list.size());
    for (const auto& id : list) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("split references unknown review id '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  };
  return {collect(ids.train), collect(ids.val), collect(ids.test)};
}

void save_split(const SplitIds& ids, const std::filesystem::path& path) {
  json doc = {{"version", 1}, {"train", ids.train}, {"val", ids.val}, {"test", ids.test}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
}

SplitIds load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    json doc = json::parse(in);
    return {doc.at("train").get<std::vector<std::string>>(), doc.at("val").get<std::vector<std::string>>(),
            doc.at("test").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace satpred
