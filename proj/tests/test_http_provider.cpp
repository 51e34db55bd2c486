#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "satpred/embed.hpp"
#include "satpred/error.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace satpred;
using nlohmann::json;

namespace {

/// In-process `/embed` server on an ephemeral loopback port.
class FakeEmbedServer {
public:
  using Handler = std::function<void(const json& request, int call, httplib::Response& res)>;

  explicit FakeEmbedServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = calls++;
      handler_(json::parse(req.body), call, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEmbedServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::atomic<int> calls{0};

private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

/// Vector i of a response is (len(text_i), index within the request, ...).
void reply_ok(const json& request, httplib::Response& res, int dim = 4) {
  json vectors = json::array();
  int i = 0;
  for (const auto& t : request.at("texts")) {
    json v = json::array();
    for (int j = 0; j < dim; ++j) v.push_back(j == 0 ? static_cast<double>(t.get<std::string>().size()) : j == 1 ? i : 0.5);
    vectors.push_back(v);
    ++i;
  }
  res.set_content(json{{"dim", dim}, {"embeddings", vectors}}.dump(), "application/json");
}

RetryPolicy fast_retry() {
  RetryPolicy r;
  r.initial_backoff = std::chrono::milliseconds(1);
  return r;
}

std::vector<EmbedItem> items(std::size_t n) {
  std::vector<EmbedItem> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"id" + std::to_string(i), std::string(i + 1, 'x')});
  return out;
}

}  // namespace

TEST(HttpProvider, PostsTextsAndPreservesOrder) {
  FakeEmbedServer server([](const json& req, int, httplib::Response& res) { reply_ok(req, res); });
  HttpProvider p(server.url(), 1);
  const auto its = items(5);
  const auto store = encode_batch(p, its, 2, fast_retry());
  ASSERT_EQ(store.size(), 5u);
  EXPECT_EQ(store.dim(), 4u);
  for (std::size_t i = 0; i < its.size(); ++i) EXPECT_EQ((*store.find(its[i].id))[0], static_cast<float>(i + 1));
  EXPECT_EQ(server.calls.load(), 3);
  EXPECT_EQ(store.provider_tag(), "http:" + server.url());
}

TEST(HttpProvider, Retries503ThenSucceeds) {
  FakeEmbedServer server([](const json& req, int call, httplib::Response& res) {
    if (call == 0) {
      res.status = 503;
      return;
    }
    reply_ok(req, res);
  });
  HttpProvider p(server.url(), 1);
  const auto store = encode_batch(p, items(2), 8, fast_retry());
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(server.calls.load(), 2);
}

TEST(HttpProvider, Retries429) {
  FakeEmbedServer server([](const json& req, int call, httplib::Response& res) {
    if (call < 2) {
      res.status = 429;
      return;
    }
    reply_ok(req, res);
  });
  HttpProvider p(server.url(), 1);
  EXPECT_EQ(encode_batch(p, items(1), 8, fast_retry()).size(), 1u);
  EXPECT_EQ(server.calls.load(), 3);
}

TEST(HttpProvider, PersistentServerErrorReportsAllIds) {
  FakeEmbedServer server([](const json&, int, httplib::Response& res) { res.status = 500; });
  HttpProvider p(server.url(), 1);
  try {
    encode_batch(p, items(3), 8, fast_retry());
    FAIL();
  } catch (const EmbedFailure& e) {
    EXPECT_EQ(e.failed_ids, (std::vector<std::string>{"id0", "id1", "id2"}));
  }
  EXPECT_EQ(server.calls.load(), 3);
}

TEST(HttpProvider, Status400IsFatalWithoutRetry) {
  FakeEmbedServer server([](const json&, int, httplib::Response& res) { res.status = 400; });
  HttpProvider p(server.url(), 1);
  EXPECT_THROW(encode_batch(p, items(2), 8, fast_retry()), EmbedFailure);
  EXPECT_EQ(server.calls.load(), 1);
}

TEST(HttpProvider, DimensionDriftBetweenBatchesIsFatal) {
  FakeEmbedServer server([](const json& req, int call, httplib::Response& res) { reply_ok(req, res, call == 0 ? 4 : 6); });
  HttpProvider p(server.url(), 1);
  EXPECT_THROW(encode_batch(p, items(4), 2, fast_retry()), DataError);
}

TEST(HttpProvider, WrongVectorCountIsFatal) {
  FakeEmbedServer server([](const json&, int, httplib::Response& res) {
    res.set_content(R"({"dim":2,"embeddings":[[1,2]]})", "application/json");
  });
  HttpProvider p(server.url(), 1);
  EXPECT_THROW(encode_batch(p, items(2), 8, fast_retry()), EmbedFailure);
  EXPECT_EQ(server.calls.load(), 1);
}

TEST(HttpProvider, MalformedBodyIsFatal) {
  FakeEmbedServer server([](const json&, int, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  HttpProvider p(server.url(), 1);
  EXPECT_THROW(encode_batch(p, items(1), 8, fast_retry()), EmbedFailure);
}

TEST(HttpProvider, PathPrefixIsHonored) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    reply_ok(json::parse(req.body), res);
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpProvider p("http://127.0.0.1:" + std::to_string(port) + "/v1/", 1);
  const auto store = encode_batch(p, items(1), 8, fast_retry());
  server.stop();
  t.join();
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(hits.load(), 1);
}

TEST(HttpProvider, WindowedConcurrentBatches) {
  std::atomic<int> in_flight{0}, peak{0};
  FakeEmbedServer server([&](const json& req, int, httplib::Response& res) {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    reply_ok(req, res);
    --in_flight;
  });
  HttpProvider p(server.url(), 2);
  const auto its = items(12);
  const auto store = encode_batch(p, its, 2, fast_retry());
  EXPECT_EQ(store.size(), 12u);
  EXPECT_LE(peak.load(), 2);
  for (std::size_t i = 0; i < its.size(); ++i) EXPECT_EQ((*store.find(its[i].id))[0], static_cast<float>(i + 1));
}

TEST(HttpProvider, UnreachableEndpointIsTransientThenFails) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpProvider p("http://127.0.0.1:" + std::to_string(port), 1, std::chrono::seconds(2));
  EXPECT_THROW(p.embed(items(1)), TransientProviderError);
  EXPECT_THROW(encode_batch(p, items(1), 8, fast_retry()), EmbedFailure);
}

TEST(HttpProvider, EndpointFromEnvironment) {
  ::unsetenv("EMBED_ENDPOINT");
  EXPECT_THROW(HttpProvider::from_env(), ConfigError);
  ::setenv("EMBED_ENDPOINT", "http://localhost:9", 1);
  const auto p = HttpProvider::from_env(3);
  EXPECT_EQ(p->tag(), "http:http://localhost:9");
  EXPECT_EQ(p->max_in_flight(), 3u);
  ::unsetenv("EMBED_ENDPOINT");
  EXPECT_THROW(HttpProvider("localhost:9"), ConfigError);
}
