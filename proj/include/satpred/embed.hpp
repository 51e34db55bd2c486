#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "satpred/error.hpp"

namespace satpred {

/// Sentence-level sentiment representation (the encoder's CLS-position vector).
using Embedding = Eigen::VectorXf;

/// Immutable-after-build map from review id to embedding, uniform in dimension.
class EmbeddingStore {
public:
  EmbeddingStore() = default;
  EmbeddingStore(std::uint32_t dim, std::string provider_tag);

  /// Throws DataError on dimension mismatch, non-finite entries or duplicate ids.
  void insert(const std::string& id, Embedding vector);

  const Embedding* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }

  std::uint32_t dim() const { return dim_; }
  const std::string& provider_tag() const { return provider_tag_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Embedding>& entries() const { return entries_; }

  bool operator==(const EmbeddingStore& other) const;

private:
  std::uint32_t dim_ = 0;
  std::string provider_tag_;
  std::map<std::string, Embedding> entries_;
};

/// Binary layout (little-endian): "EMB1", u16 version, u32 dim, u64 count,
/// u16-prefixed provider tag, then per record a u16-prefixed id and dim f32.
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_embeddings(const std::filesystem::path& path);

inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;

// ---------------------------------------------------------------------------
// Providers

struct EmbedItem {
  std::string id;
  std::string text;
};

/// Retrying may succeed (HTTP 429/5xx, connection refused).
class TransientProviderError : public Error {
public:
  using Error::Error;
};

/// Non-retryable provider failure; `ids` narrows which items failed when known.
class ProviderError : public Error {
public:
  explicit ProviderError(const std::string& what, std::vector<std::string> ids = {})
      : Error(what), ids(std::move(ids)) {}
  std::vector<std::string> ids;
};

/// encode_batch could not resolve every id.
class EmbedFailure : public Error {
public:
  EmbedFailure(const std::string& what, std::vector<std::string> failed)
      : Error(what), failed_ids(std::move(failed)) {}
  std::vector<std::string> failed_ids;
};

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;

  /// One vector per item, in item order. Must be callable concurrently.
  virtual std::vector<Embedding> embed(std::span<const EmbedItem> items) = 0;
  virtual std::string tag() const = 0;
  /// Upper bound on concurrently submitted batches.
  virtual std::size_t max_in_flight() const { return 1; }
};

/// Hashed bag-of-tokens counts projected by a seeded Gaussian matrix, then
/// L2-normalized. Tokens are split_words() output, stopwords included. Empty
/// text maps to the zero vector.
Embedding test_encode(std::string_view text, std::uint32_t dim, std::uint64_t seed);

class TestEncoderProvider final : public EmbeddingProvider {
public:
  TestEncoderProvider(std::uint32_t dim, std::uint64_t seed);
  std::vector<Embedding> embed(std::span<const EmbedItem> items) override;
  std::string tag() const override;

private:
  std::uint32_t dim_;
  std::uint64_t seed_;
};

/// Serves vectors from a persisted store, by review id.
class StoreProvider final : public EmbeddingProvider {
public:
  explicit StoreProvider(EmbeddingStore store);
  std::vector<Embedding> embed(std::span<const EmbedItem> items) override;
  std::string tag() const override { return store_.provider_tag(); }

private:
  EmbeddingStore store_;
};

/// Client for the `/embed` JSON protocol.
class HttpProvider final : public EmbeddingProvider {
public:
  /// `base_url` like "http://host:port" or "http://host:port/prefix".
  explicit HttpProvider(std::string base_url, std::size_t window = 4,
                        std::chrono::seconds timeout = std::chrono::seconds(60));

  /// Reads EMBED_ENDPOINT; throws ConfigError when unset.
  static std::unique_ptr<HttpProvider> from_env(std::size_t window = 4);

  std::vector<Embedding> embed(std::span<const EmbedItem> items) override;
  std::string tag() const override { return "http:" + base_url_; }
  std::size_t max_in_flight() const override { return window_; }

private:
  std::string base_url_;
  std::string host_;
  std::string path_prefix_;
  std::size_t window_;
  std::chrono::seconds timeout_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  double multiplier = 2.0;
};

/// Chunks `items` into batches, submits up to provider.max_in_flight() at once
/// and retries transient failures with exponential backoff. Either every id
/// resolves or EmbedFailure lists the ids that did not.
EmbeddingStore encode_batch(EmbeddingProvider& provider, std::span<const EmbedItem> items,
                            std::size_t batch_size, const RetryPolicy& retry = {});

}  // namespace satpred
