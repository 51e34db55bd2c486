#include "satpred/embed.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "satpred/corpus.hpp"
#include "satpred/rng.hpp"

namespace satpred {

using nlohmann::json;

EmbeddingStore::EmbeddingStore(std::uint32_t dim, std::string provider_tag)
    : dim_(dim), provider_tag_(std::move(provider_tag)) {}

void EmbeddingStore::insert(const std::string& id, Embedding vector) {
  if (vector.size() != static_cast<Eigen::Index>(dim_)) {
    throw DataError("embedding for '" + id + "' has dim " + std::to_string(vector.size()) + ", store expects " +
                    std::to_string(dim_));
  }
  if (!vector.allFinite()) throw DataError("embedding for '" + id + "' has non-finite entries");
  if (!entries_.emplace(id, std::move(vector)).second) throw DataError("duplicate embedding id '" + id + "'");
}

const Embedding* EmbeddingStore::find(const std::string& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || provider_tag_ != other.provider_tag_ || entries_.size() != other.entries_.size()) {
    return false;
  }
  for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    for (Eigen::Index i = 0; i < a->second.size(); ++i) {
      if (std::bit_cast<std::uint32_t>(a->second[i]) != std::bit_cast<std::uint32_t>(b->second[i])) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Binary persistence

namespace {

class ByteWriter {
public:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void put_string(const std::string& s, const char* what) {
    if (s.size() > 0xFFFF) throw DataError(std::string(what) + " longer than 65535 bytes");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes_.append(s);
  }
  void put_raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }

private:
  std::string bytes_;
};

class ByteReader {
public:
  ByteReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint16_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  std::string_view get_raw(std::size_t n) {
    need(n);
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated embedding file");
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_raw("EMB1");
  w.put<std::uint16_t>(kEmbeddingFormatVersion);
  w.put<std::uint32_t>(store.dim());
  w.put<std::uint64_t>(store.size());
  w.put_string(store.provider_tag(), "provider tag");
  for (const auto& [id, vec] : store.entries()) {
    w.put_string(id, "review id");
    for (Eigen::Index i = 0; i < vec.size(); ++i) w.put<std::uint32_t>(std::bit_cast<std::uint32_t>(vec[i]));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("write failed for " + path.string());
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(bytes, path.string());
  if (r.get_raw(4) != "EMB1") throw FormatError(path.string() + ": bad magic, not an embedding store");
  const auto version = r.get<std::uint16_t>();
  if (version != kEmbeddingFormatVersion) {
    throw FormatError(path.string() + ": unsupported embedding format version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  EmbeddingStore store(dim, r.get_string());
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::string id = r.get_string();
    Embedding v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = std::bit_cast<float>(r.get<std::uint32_t>());
    try {
      store.insert(id, std::move(v));
    } catch (const DataError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) +
                      " trailing bytes; record size inconsistent with dim");
  }
  return store;
}

// ---------------------------------------------------------------------------
// Providers

Embedding test_encode(std::string_view text, std::uint32_t dim, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("test encoder dim must be >= 2");
  std::map<std::string, int> counts;
  for (auto& t : split_words(text)) ++counts[t];
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  const std::uint64_t matrix_seed = mix_seed(seed, dim);
  for (const auto& [token, count] : counts) {
    // Column of the implicit Gaussian projection for this token's hash bucket.
    Rng column(mix_seed(matrix_seed, fnv1a(token)));
    for (std::uint32_t i = 0; i < dim; ++i) acc[i] += count * column.normal();
  }
  const double norm = acc.norm();
  if (norm > 0.0) acc /= norm;
  return acc.cast<float>();
}

TestEncoderProvider::TestEncoderProvider(std::uint32_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) throw ConfigError("test encoder dim must be >= 2");
}

std::vector<Embedding> TestEncoderProvider::embed(std::span<const EmbedItem> items) {
  std::vector<Embedding> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(test_encode(item.text, dim_, seed_));
  return out;
}

std::string TestEncoderProvider::tag() const {
  return "test-encoder:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

StoreProvider::StoreProvider(EmbeddingStore store) : store_(std::move(store)) {}

std::vector<Embedding> StoreProvider::embed(std::span<const EmbedItem> items) {
  std::vector<Embedding> out;
  std::vector<std::string> missing;
  out.reserve(items.size());
  for (const auto& item : items) {
    if (const Embedding* v = store_.find(item.id)) out.push_back(*v);
    else missing.push_back(item.id);
  }
  if (!missing.empty()) throw ProviderError("ids missing from embedding store", std::move(missing));
  return out;
}

HttpProvider::HttpProvider(std::string base_url, std::size_t window, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), window_(window == 0 ? 1 : window), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  const auto scheme = base_url_.find("://");
  if (scheme == std::string::npos) throw ConfigError("embedding endpoint must include a scheme: " + base_url_);
  const auto slash = base_url_.find('/', scheme + 3);
  host_ = base_url_.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : base_url_.substr(slash);
}

std::unique_ptr<HttpProvider> HttpProvider::from_env(std::size_t window) {
  const char* endpoint = std::getenv("EMBED_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0') {
    throw ConfigError("EMBED_ENDPOINT must be set for the http embedding provider");
  }
  return std::make_unique<HttpProvider>(endpoint, window);
}

std::vector<Embedding> HttpProvider::embed(std::span<const EmbedItem> items) {
  json request = {{"texts", json::array()}};
  for (const auto& item : items) request["texts"].push_back(item.text);

  httplib::Client client(host_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  auto res = client.Post(path_prefix_ + "/embed", request.dump(), "application/json");
  if (!res) throw TransientProviderError("embedding endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransientProviderError("embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw ProviderError("embedding endpoint returned HTTP " + std::to_string(res->status));

  std::vector<Embedding> out;
  try {
    const json body = json::parse(res->body);
    const auto dim = body.at("dim").get<std::int64_t>();
    const auto& vectors = body.at("embeddings");
    if (!vectors.is_array() || vectors.size() != items.size()) {
      throw ProviderError("embedding response has " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(items.size()) + " texts");
    }
    out.reserve(items.size());
    for (const auto& v : vectors) {
      if (!v.is_array() || static_cast<std::int64_t>(v.size()) != dim) {
        throw ProviderError("embedding response vector length differs from declared dim");
      }
      Embedding e(static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < v.size(); ++i) e[static_cast<Eigen::Index>(i)] = v[i].get<float>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

EmbeddingStore encode_batch(EmbeddingProvider& provider, std::span<const EmbedItem> items, std::size_t batch_size,
                            const RetryPolicy& retry) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const std::size_t n_batches = (items.size() + batch_size - 1) / batch_size;

  struct BatchResult {
    std::vector<Embedding> vectors;
    std::vector<std::string> failed;
    std::string error;
  };
  std::vector<BatchResult> results(n_batches);

  auto run_batch = [&](std::size_t b) {
    const auto first = b * batch_size;
    const auto chunk = items.subspan(first, std::min(batch_size, items.size() - first));
    auto backoff = retry.initial_backoff;
    BatchResult& out = results[b];
    for (int attempt = 1;; ++attempt) {
      try {
        out.vectors = provider.embed(chunk);
        if (out.vectors.size() != chunk.size()) throw ProviderError("provider returned a wrong number of vectors");
        return;
      } catch (const TransientProviderError& e) {
        if (attempt >= retry.attempts) {
          out.error = e.what();
          break;
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * retry.multiplier));
      } catch (const ProviderError& e) {
        out.error = e.what();
        if (!e.ids.empty()) {
          out.failed = e.ids;
          return;
        }
        break;
      }
    }
    for (const auto& item : chunk) out.failed.push_back(item.id);
  };

  const std::size_t window = std::max<std::size_t>(1, std::min(provider.max_in_flight(), n_batches));
  if (window <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < window; ++t) {
      workers.emplace_back([&] {
        for (std::size_t b = next++; b < n_batches; b = next++) run_batch(b);
      });
    }
    for (auto& w : workers) w.join();
  }

  std::vector<std::string> failed;
  std::string first_error;
  for (const auto& r : results) {
    failed.insert(failed.end(), r.failed.begin(), r.failed.end());
    if (first_error.empty() && !r.error.empty()) first_error = r.error;
  }
  if (!failed.empty()) {
    throw EmbedFailure("embedding failed for " + std::to_string(failed.size()) + " ids: " + first_error,
                       std::move(failed));
  }

  std::optional<std::uint32_t> dim;
  for (const auto& r : results) {
    for (const auto& v : r.vectors) {
      if (!dim) dim = static_cast<std::uint32_t>(v.size());
      if (v.size() != static_cast<Eigen::Index>(*dim)) {
        throw DataError("embedding dimension drift between batches: " + std::to_string(*dim) + " vs " +
                        std::to_string(v.size()));
      }
    }
  }
  EmbeddingStore store(dim.value_or(0), provider.tag());
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (std::size_t i = 0; i < results[b].vectors.size(); ++i) {
      store.insert(items[b * batch_size + i].id, std::move(results[b].vectors[i]));
    }
  }
  return store;
}

}  // namespace satpred
