#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

#include "stylealign/clients.hpp"
#include "stylealign/concurrency.hpp"
#include "stylealign/error.hpp"

namespace sa = stylealign;
using nlohmann::json;

namespace {

/// In-process provider double bound to an ephemeral localhost port.
class FakeProvider {
 public:
  FakeProvider() {
    server_.Post("/complete", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth = req.get_header_value("Authorization");
      last_body = json::parse(req.body);
      ++hits;
      res.set_content(json{{"text", "  translated: " + last_body.at("prompt").get<std::string>() + "\n"}}.dump(),
                       "application/json");
    });
    server_.Post("/chat", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hola"}}]})", "application/json");
    });
    server_.Post("/flaky", [this](const httplib::Request&, httplib::Response& res) {
      if (++flaky_hits <= 2) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"text":"finally"})", "application/json");
    });
    server_.Post("/throttle", [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    server_.Post("/reject", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("bad request", "text/plain");
    });
    server_.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>oops</html>", "text/html");
    });
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = json::parse(req.body);
      res.set_content(json{{"score", score_reply}}.dump(), "application/json");
    });
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      json vectors = json::array();
      for (const auto& t : body.at("texts")) vectors.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
      res.set_content(json{{"dim", 2}, {"vectors", vectors}}.dump(), "application/json");
    });
    server_.Post("/qe", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = json::parse(req.body);
      res.set_content(R"({"score":0.83})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  sa::ProviderConfig config(const std::string& path) const {
    sa::ProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + path;
    c.model_id = "fake-model";
    c.timeout = std::chrono::milliseconds(5000);
    c.backoff_base = std::chrono::milliseconds(1);
    c.backoff_cap = std::chrono::milliseconds(2);
    c.api_key_env = "STYLEALIGN_TEST_KEY";
    return c;
  }

  std::string last_auth;
  json last_body;
  double score_reply = 0.4;
  std::atomic<int> hits{0};
  std::atomic<int> flaky_hits{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

class ScriptedBackend : public sa::CompletionBackend {
 public:
  std::string complete(const sa::CompletionRequest& r) override {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    --in_flight;
    ++calls;
    if (fail_first > 0 && calls <= fail_first) throw sa::TransientError("try again");
    if (fail_always) throw sa::ProviderError("down");
    return "out:" + r.prompt;
  }
  int delay_ms = 0;
  int fail_first = 0;
  bool fail_always = false;
  std::atomic<int> calls{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
};

sa::ProviderConfig local_config(std::size_t max_in_flight = 4) {
  sa::ProviderConfig c;
  c.kind = "testbed";
  c.model_id = "scripted";
  c.max_in_flight = max_in_flight;
  c.backoff_base = std::chrono::milliseconds(1);
  c.backoff_cap = std::chrono::milliseconds(1);
  return c;
}

}  // namespace

TEST_CASE("completion wire format and bearer token") {
  FakeProvider fake;
  ::setenv("STYLEALIGN_TEST_KEY", "sekret-value", 1);
  sa::HttpCompletionBackend backend(fake.config("/complete"));
  const auto out = backend.complete({"fake-model", "hello", 0.6, 0.9});
  CHECK(out == "  translated: hello\n");
  CHECK(fake.last_auth == "Bearer sekret-value");
  CHECK(fake.last_body.at("model") == "fake-model");
  CHECK(fake.last_body.at("temperature") == 0.6);
  CHECK(fake.last_body.at("top_p") == 0.9);
  ::unsetenv("STYLEALIGN_TEST_KEY");
  backend.complete({"fake-model", "again", 1.0, 1.0});
  CHECK(fake.last_auth.empty());

  sa::HttpCompletionBackend chat(fake.config("/chat"));
  CHECK(chat.complete({"fake-model", "x", 1.0, 1.0}) == "hola");
}

TEST_CASE("transport error classes") {
  FakeProvider fake;
  sa::HttpCompletionBackend throttle(fake.config("/throttle"));
  CHECK_THROWS_AS(throttle.complete({"m", "x", 1, 1}), sa::TransientError);
  sa::HttpCompletionBackend reject(fake.config("/reject"));
  try {
    reject.complete({"m", "x", 1, 1});
    FAIL("expected ProviderError");
  } catch (const sa::TransientError&) {
    FAIL("4xx must not be retried");
  } catch (const sa::ProviderError& e) {
    CHECK(std::string(e.what()).find("400") != std::string::npos);
  }
  sa::HttpCompletionBackend garbage(fake.config("/garbage"));
  try {
    garbage.complete({"m", "x", 1, 1});
    FAIL("expected ParseError");
  } catch (const sa::ParseError& e) {
    CHECK(e.payload().find("oops") != std::string::npos);
  }
  auto dead = fake.config("/complete");
  dead.endpoint = "http://127.0.0.1:1/complete";
  CHECK_THROWS_AS(sa::HttpCompletionBackend(dead).complete({"m", "x", 1, 1}), sa::TransientError);
  dead.endpoint = "not-a-url";
  CHECK_THROWS_AS(sa::HttpCompletionBackend(dead).complete({"m", "x", 1, 1}), sa::ConfigError);
}

TEST_CASE("translator client retries transient failures over HTTP") {
  FakeProvider fake;
  auto cfg = fake.config("/flaky");
  sa::TranslatorClient client(std::make_shared<sa::HttpCompletionBackend>(cfg), cfg);
  CHECK(client.translate("p") == "finally");
  CHECK(client.stats().attempts == 3);
  CHECK(client.stats().retries == 2);
  CHECK(client.stats().provider_calls == 1);

  auto throttled = fake.config("/throttle");
  throttled.max_retries = 1;
  sa::TranslatorClient gives_up(std::make_shared<sa::HttpCompletionBackend>(throttled), throttled);
  CHECK_THROWS_AS(gives_up.translate("p"), sa::TransientError);
  CHECK(gives_up.stats().attempts == 2);
}

TEST_CASE("scorer, QE and embedding wire formats") {
  FakeProvider fake;
  sa::HttpScorerBackend scorer(fake.config("/score"));
  CHECK(scorer.score({"id1", "hola", "es", "politeness"}) == 0.4);
  CHECK(fake.last_body == json{{"text", "hola"}, {"language", "es"}, {"style", "politeness"}});

  sa::HttpQeBackend qe(fake.config("/qe"));
  CHECK(qe.score({"src", "hyp", "English", "Spanish"}) == 0.83);
  CHECK(fake.last_body == json{{"source", "src"}, {"hypothesis", "hyp"}});

  sa::HttpEmbeddingBackend emb(fake.config("/embed"));
  const auto r = emb.embed({"abc", "de"});
  CHECK(r.dim == 2);
  CHECK(r.vectors == std::vector<sa::Vec>{{3, 1}, {2, 1}});

  fake.score_reply = 1.7;
  sa::ScorerClient client(std::make_shared<sa::HttpScorerBackend>(fake.config("/score")), fake.config("/score"));
  CHECK_THROWS_AS(client.score_style({"id2", "x", "es", "politeness"}), sa::ProviderError);
}

TEST_CASE("retry backoff is bounded, jittered and uses the injected sleep") {
  sa::RetryPolicy p;
  p.max_retries = 5;
  p.base_delay = std::chrono::milliseconds(100);
  p.max_delay = std::chrono::milliseconds(350);
  std::vector<std::chrono::milliseconds> slept;
  p.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d); };
  int calls = 0, attempts = 0;
  const int v = sa::with_retries(
      p,
      [&] {
        if (++calls < 5) throw sa::TransientError("flaky");
        return 42;
      },
      &attempts);
  CHECK(v == 42);
  CHECK(attempts == 5);
  REQUIRE(slept.size() == 4);
  for (std::size_t i = 0; i < slept.size(); ++i) {
    const long long bound = std::min<long long>(350, 100LL << i);
    CHECK(slept[i].count() >= 0);
    CHECK(slept[i].count() <= bound);
  }

  slept.clear();
  calls = 0;
  CHECK_THROWS_AS(sa::with_retries(p, [&]() -> int { ++calls; throw sa::TransientError("always"); }), sa::TransientError);
  CHECK(calls == 6);
  calls = 0;
  CHECK_THROWS_AS(sa::with_retries(p, [&]() -> int { ++calls; throw sa::ProviderError("fatal"); }), sa::ProviderError);
  CHECK(calls == 1);
}

TEST_CASE("translator client bounds concurrency and shares in-flight duplicates") {
  auto backend = std::make_shared<ScriptedBackend>();
  backend->delay_ms = 5;
  sa::TranslatorClient client(backend, local_config(3));
  std::vector<std::string> prompts;
  for (int rep = 0; rep < 3; ++rep) {
    for (int i = 0; i < 12; ++i) prompts.push_back("prompt " + std::to_string(i));
  }
  const auto out = client.translate_all(prompts);
  CHECK(out[13] == "out:prompt 1");
  CHECK(backend->calls == 12);
  CHECK(backend->peak <= 3);
  CHECK(backend->peak >= 2);
  CHECK(client.stats().provider_calls == 12);
  CHECK(client.stats().cache_hits == 24);
}

TEST_CASE("cache keys cover prompt, model and sampling") {
  auto cfg = local_config();
  const auto k = sa::TranslatorClient::cache_key("p", cfg);
  CHECK(k == sa::TranslatorClient::cache_key("p", cfg));
  CHECK(k != sa::TranslatorClient::cache_key("q", cfg));
  auto other = cfg;
  other.temperature = 0.6;
  CHECK(k != sa::TranslatorClient::cache_key("p", other));
  other = cfg;
  other.top_p = 0.9;
  CHECK(k != sa::TranslatorClient::cache_key("p", other));
  other = cfg;
  other.model_id = "another";
  CHECK(k != sa::TranslatorClient::cache_key("p", other));
}

TEST_CASE("translation cache survives restarts and torn writes") {
  testing::TempDir dir("jsonl");
  const auto log = dir / "translations.jsonl";
  auto backend = std::make_shared<ScriptedBackend>();
  {
    sa::TranslatorClient client(backend, local_config(), std::make_shared<sa::JsonlCache>(log));
    sa::TranslationRecord rec{"en-001", "en", "ja", "vanilla", {}, {}, {}, {}};
    client.translate("one", &rec);
    client.translate("two");
    const auto r = client.record_for("one");
    REQUIRE(r);
    CHECK(r->sample_id == "en-001");
    CHECK(r->translation == "out:one");
    CHECK(!r->timestamp.empty());
  }
  std::ofstream(log, std::ios::app) << R"({"key":"half-writ)";
  sa::TranslatorClient resumed(backend, local_config(), std::make_shared<sa::JsonlCache>(log));
  CHECK(resumed.translate("one") == "out:one");
  CHECK(resumed.translate("two") == "out:two");
  CHECK(backend->calls == 2);
  CHECK(resumed.stats().cache_hits == 2);

  std::ofstream(dir / "corrupt.jsonl") << "garbage\n" << R"({"key":"a","value":1})" << "\n";
  CHECK_THROWS_AS(sa::JsonlCache(dir / "corrupt.jsonl"), sa::DataError);
}

TEST_CASE("translator client rejects empty output and surfaces failures") {
  auto backend = std::make_shared<ScriptedBackend>();
  backend->fail_always = true;
  sa::TranslatorClient client(backend, local_config());
  CHECK_THROWS_AS(client.translate("x"), sa::ProviderError);
  CHECK_THROWS_AS(client.translate("   "), sa::DataError);

  class Blank : public sa::CompletionBackend {
    std::string complete(const sa::CompletionRequest&) override { return " \n"; }
  };
  sa::TranslatorClient blank(std::make_shared<Blank>(), local_config());
  CHECK_THROWS_AS(blank.translate("x"), sa::ProviderError);
}

TEST_CASE("scorer client checks languages, range and caches") {
  class Echo : public sa::ScorerBackend {
   public:
    std::string model_id() const override { return "echo"; }
    double score(const sa::ScoreRequest& r) override {
      ++calls;
      return std::stod(r.text);
    }
    int calls = 0;
  };
  auto backend = std::make_shared<Echo>();
  sa::ScorerClient client(backend, local_config(), {"en", "ja"});
  CHECK(client.score_style({"a", "0.25", "en", "p"}) == 0.25);
  CHECK(client.score_style({"a", "0.25", "en", "p"}) == 0.25);
  CHECK(backend->calls == 1);
  CHECK_THROWS_AS(client.score_style({"b", "0.3", "fr", "p"}), sa::ConfigError);
  CHECK_THROWS_AS(client.score_style({"c", "-0.1", "en", "p"}), sa::ProviderError);
  CHECK(client.score_all({{"d", "0.5", "ja", "p"}, {"e", "1", "ja", "p"}}) == std::vector<double>{0.5, 1.0});
}

TEST_CASE("offline score tables") {
  testing::TempDir dir("offline");
  sa::OfflineScoreTable t({{"en-1", 0.3}, {"vanilla/ja/en-1", 0.4}});
  t.save(dir / "s.jsonl");
  auto back = sa::OfflineScoreTable::load(dir / "s.jsonl");
  CHECK(back.size() == 2);
  CHECK(back.score({"vanilla/ja/en-1", "", "ja", "p"}) == 0.4);
  CHECK_THROWS_AS(back.score({"missing", "", "ja", "p"}), sa::DataError);
  std::ofstream(dir / "dup.jsonl") << R"({"id":"a","score":0.1})" << "\n" << R"({"id":"a","score":0.2})" << "\n";
  CHECK_THROWS_AS(sa::OfflineScoreTable::load(dir / "dup.jsonl"), sa::DataError);
}

TEST_CASE("judge replies and prompt") {
  CHECK(sa::parse_judge_score("Score: 87.5") == 87.5);
  CHECK(sa::parse_judge_score("100") == 100.0);
  CHECK_THROWS_AS(sa::parse_judge_score("no idea"), sa::ParseError);
  CHECK_THROWS_AS(sa::parse_judge_score("140"), sa::ParseError);

  class Fixed : public sa::CompletionBackend {
   public:
    std::string complete(const sa::CompletionRequest& r) override {
      prompt = r.prompt;
      return "92";
    }
    std::string prompt;
  };
  auto backend = std::make_shared<Fixed>();
  sa::GembaJudge judge(backend, local_config());
  sa::QualityClient client(std::make_shared<sa::GembaJudge>(judge), local_config());
  CHECK(client.quality_score({"Hi", "Hola", "English", "Spanish"}) == 92.0);
  CHECK(client.quality_score({"Hi", "Hola", "English", "Spanish"}) == 92.0);
  CHECK(client.stats().provider_calls == 1);
  CHECK(backend->prompt.find("English source: \"Hi\"") != std::string::npos);
  CHECK(backend->prompt.find("Spanish translation: \"Hola\"") != std::string::npos);
}

TEST_CASE("provider config parsing") {
  const auto c = sa::ProviderConfig::from_json(
      json{{"endpoint", "http://x/y"}, {"model_id", "m"}, {"sampling", "open-weights"}, {"timeout_ms", 2500}});
  CHECK(c.temperature == 0.6);
  CHECK(c.top_p == 0.9);
  CHECK(c.timeout.count() == 2500);
  CHECK(c.api_key_env == "STYLEALIGN_API_KEY");
  CHECK(c.to_json().dump().find("sekret") == std::string::npos);
  CHECK_THROWS_AS(sa::ProviderConfig::from_json(json{{"model_id", "m"}}), sa::ConfigError);
  CHECK_THROWS_AS(sa::ProviderConfig::from_json(json{{"endpoint", "http://x"}, {"model_id", "m"}, {"top_p", 0}}),
                  sa::ConfigError);
  CHECK_THROWS_AS(sa::sampling_preset("hot"), sa::ConfigError);
}

TEST_CASE("parallel_for stops on the first error") {
  std::atomic<int> ran{0};
  CHECK_THROWS_AS(sa::parallel_for(100, 4,
                                   [&](std::size_t i) {
                                     ++ran;
                                     if (i == 3) throw sa::ProviderError("boom");
                                   }),
                  sa::ProviderError);
  CHECK(ran < 100);
  std::vector<int> hit(50, 0);
  sa::parallel_for(50, 8, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
}

TEST_CASE("rate limiter spaces requests") {
  sa::RateLimiter limiter(200.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) limiter.acquire();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(ms >= 15);
}
