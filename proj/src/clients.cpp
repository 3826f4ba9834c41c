#include "stylealign/clients.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <regex>
#include <thread>

#include "httplib.h"

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' is not an absolute URL");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

double checked_number(const json& reply, const char* field, const std::string& raw) {
  if (!reply.is_object() || !reply.contains(field) || !reply.at(field).is_number()) {
    throw ParseError(std::string("reply lacks numeric field '") + field + "'", raw);
  }
  return reply.at(field).get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------
// ProviderConfig

void ProviderConfig::validate() const {
  if (kind != "http" && kind != "testbed") throw ConfigError("unknown provider kind '" + kind + "'");
  if (kind == "http" && endpoint.empty()) throw ConfigError("http provider '" + model_id + "' has no endpoint");
  if (model_id.empty()) throw ConfigError("provider config lacks model_id");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

RetryPolicy ProviderConfig::retry_policy() const {
  RetryPolicy p;
  p.max_retries = max_retries;
  p.base_delay = backoff_base;
  p.max_delay = backoff_cap;
  return p;
}

json ProviderConfig::to_json() const {
  return json{{"kind", kind},
              {"endpoint", endpoint},
              {"model_id", model_id},
              {"temperature", temperature},
              {"top_p", top_p},
              {"max_retries", max_retries},
              {"timeout_ms", timeout.count()},
              {"max_in_flight", max_in_flight},
              {"requests_per_second", requests_per_second},
              {"batch_size", batch_size},
              {"api_key_env", api_key_env},
              {"backoff_base_ms", backoff_base.count()},
              {"backoff_cap_ms", backoff_cap.count()}};
}

ProviderConfig ProviderConfig::from_json(const json& j) {
  ProviderConfig c;
  try {
    c.kind = j.value("kind", c.kind);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model_id = j.value("model_id", c.model_id);
    if (j.contains("sampling")) std::tie(c.temperature, c.top_p) = sampling_preset(j.at("sampling").get<std::string>());
    c.temperature = j.value("temperature", c.temperature);
    c.top_p = j.value("top_p", c.top_p);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", static_cast<long long>(c.backoff_base.count())));
    c.backoff_cap = std::chrono::milliseconds(j.value("backoff_cap_ms", static_cast<long long>(c.backoff_cap.count())));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid provider config: ") + e.what());
  }
  c.validate();
  return c;
}

std::pair<double, double> sampling_preset(const std::string& name) {
  if (name == "open-weights") return {0.6, 0.9};
  if (name == "gpt") return {1.0, 1.0};
  throw ConfigError("unknown sampling preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Transport

json http_post_json(const ProviderConfig& cfg, const json& body) {
  const auto [base, path] = split_url(cfg.endpoint);
  httplib::Client client(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransientError("request to " + cfg.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("provider " + cfg.endpoint + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("provider " + cfg.endpoint + " returned HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 512));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw ParseError("provider reply is not JSON", res->body.substr(0, 4096));
  }
}

// ---------------------------------------------------------------------------
// JsonlCache

JsonlCache::JsonlCache(std::filesystem::path log_path) : log_path_(std::move(log_path)) {
  if (std::filesystem::exists(*log_path_)) {
    std::ifstream in(*log_path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        auto rec = json::parse(line);
        entries_[rec.at("key").get<std::string>()] = rec.at("value");
      } catch (const json::exception&) {
        // A torn final line from an interrupted run is dropped; anything earlier is corruption.
        if (in.peek() != EOF) {
          throw DataError("corrupt cache log " + log_path_->string() + " at line " + std::to_string(line_no));
        }
      }
    }
  } else if (log_path_->has_parent_path()) {
    std::filesystem::create_directories(log_path_->parent_path());
  }
  log_ = std::make_unique<std::ofstream>(*log_path_, std::ios::app);
  if (!*log_) throw Error("cannot open cache log " + log_path_->string());
}

std::optional<json> JsonlCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void JsonlCache::put(const std::string& key, json value) {
  std::lock_guard lock(mutex_);
  if (log_) {
    *log_ << json{{"key", key}, {"value", value}}.dump() << '\n';
    log_->flush();
  }
  entries_[key] = std::move(value);
}

std::size_t JsonlCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::map<std::string, json> JsonlCache::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

// ---------------------------------------------------------------------------
// Translation

std::string HttpCompletionBackend::complete(const CompletionRequest& request) {
  const json body = {{"model", request.model},
                     {"prompt", request.prompt},
                     {"temperature", request.temperature},
                     {"top_p", request.top_p}};
  const json reply = http_post_json(cfg_, body);
  if (reply.contains("text") && reply.at("text").is_string()) return reply.at("text").get<std::string>();
  if (reply.contains("choices") && reply.at("choices").is_array() && !reply.at("choices").empty()) {
    const auto& c = reply.at("choices").at(0);
    if (c.contains("message") && c.at("message").contains("content")) {
      return c.at("message").at("content").get<std::string>();
    }
    if (c.contains("text")) return c.at("text").get<std::string>();
  }
  throw ParseError("completion reply has no text", reply.dump());
}

json TranslationRecord::to_json() const {
  return json{{"sample_id", sample_id},     {"source_language", source_language},
              {"target_language", target_language}, {"variant", variant},
              {"prompt_hash", prompt_hash}, {"translation", translation},
              {"provider", provider},       {"timestamp", timestamp}};
}

TranslationRecord TranslationRecord::from_json(const json& j) {
  TranslationRecord r;
  r.sample_id = j.value("sample_id", "");
  r.source_language = j.value("source_language", "");
  r.target_language = j.value("target_language", "");
  r.variant = j.value("variant", "");
  r.prompt_hash = j.value("prompt_hash", "");
  r.translation = j.value("translation", "");
  r.provider = j.value("provider", "");
  r.timestamp = j.value("timestamp", "");
  return r;
}

TranslatorClient::TranslatorClient(std::shared_ptr<CompletionBackend> backend, ProviderConfig cfg,
                                   std::shared_ptr<JsonlCache> cache)
    : backend_(std::move(backend)),
      cfg_(std::move(cfg)),
      cache_(std::move(cache)),
      retry_(cfg_.retry_policy()),
      limiter_(cfg_.requests_per_second, static_cast<double>(cfg_.max_in_flight)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, cfg_.max_in_flight))) {
  if (!backend_) throw ConfigError("translator client needs a backend");
  if (!cache_) cache_ = std::make_shared<JsonlCache>();
}

std::string TranslatorClient::cache_key(const std::string& prompt, const ProviderConfig& cfg) {
  const json k = {{"prompt", sha256_hex(prompt)}, {"model", cfg.model_id}, {"temperature", cfg.temperature},
                  {"top_p", cfg.top_p}};
  return sha256_hex(k.dump());
}

std::string TranslatorClient::call_provider(const std::string& prompt) {
  const CompletionRequest req{cfg_.model_id, prompt, cfg_.temperature, cfg_.top_p};
  int attempts = 0;
  std::string text;
  in_flight_.acquire();
  try {
    text = with_retries(
        retry_,
        [&] {
          limiter_.acquire();
          ++stats_.attempts;
          return backend_->complete(req);
        },
        &attempts);
  } catch (...) {
    in_flight_.release();
    stats_.retries += static_cast<std::size_t>(std::max(0, attempts - 1));
    throw;
  }
  in_flight_.release();
  ++stats_.provider_calls;
  stats_.retries += static_cast<std::size_t>(attempts - 1);
  text = trim(text);
  if (text.empty()) throw ProviderError("provider returned an empty completion");
  return text;
}

std::string TranslatorClient::translate(const std::string& prompt, const TranslationRecord* record) {
  if (trim(prompt).empty()) throw DataError("cannot translate an empty prompt");
  const std::string key = cache_key(prompt, cfg_);
  if (auto hit = cache_->get(key)) {
    ++stats_.cache_hits;
    return hit->at("translation").get<std::string>();
  }

  std::promise<std::string> promise;
  std::shared_future<std::string> future;
  bool owner = false;
  {
    std::lock_guard lock(pending_mutex_);
    if (auto hit = cache_->get(key)) {
      ++stats_.cache_hits;
      return hit->at("translation").get<std::string>();
    }
    auto it = pending_.find(key);
    if (it != pending_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      pending_.emplace(key, future);
      owner = true;
    }
  }
  if (!owner) {
    ++stats_.cache_hits;
    return future.get();
  }

  try {
    std::string text = call_provider(prompt);
    TranslationRecord rec = record != nullptr ? *record : TranslationRecord{};
    rec.prompt_hash = sha256_hex(prompt);
    rec.translation = text;
    rec.provider = cfg_.model_id;
    rec.timestamp = utc_timestamp();
    json value = rec.to_json();
    value["temperature"] = cfg_.temperature;
    value["top_p"] = cfg_.top_p;
    cache_->put(key, std::move(value));
    promise.set_value(text);
    std::lock_guard lock(pending_mutex_);
    pending_.erase(key);
    return text;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(pending_mutex_);
    pending_.erase(key);
    throw;
  }
}

std::vector<std::string> TranslatorClient::translate_all(const std::vector<std::string>& prompts) {
  std::vector<std::string> out(prompts.size());
  parallel_for(prompts.size(), cfg_.max_in_flight, [&](std::size_t i) { out[i] = translate(prompts[i]); });
  return out;
}

std::optional<TranslationRecord> TranslatorClient::record_for(const std::string& prompt) const {
  auto hit = cache_->get(cache_key(prompt, cfg_));
  if (!hit) return std::nullopt;
  return TranslationRecord::from_json(*hit);
}

// ---------------------------------------------------------------------------
// Scoring

double HttpScorerBackend::score(const ScoreRequest& request) {
  const json body = {{"text", request.text}, {"language", request.language}, {"style", request.style}};
  const json reply = http_post_json(cfg_, body);
  return checked_number(reply, "score", reply.dump());
}

OfflineScoreTable OfflineScoreTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score table " + path.string());
  std::map<std::string, double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto rec = json::parse(line);
      const auto id = rec.at("id").get<std::string>();
      const double s = rec.at("score").get<double>();
      if (!scores.emplace(id, s).second) throw DataError("duplicate score id '" + id + "'");
    } catch (const json::exception& e) {
      throw DataError("malformed score record at " + path.filename().string() + ":" + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  return OfflineScoreTable(std::move(scores));
}

void OfflineScoreTable::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [id, s] : scores_) out += json{{"id", id}, {"score", s}}.dump() + "\n";
  write_file_atomic(path, out);
}

double OfflineScoreTable::score(const ScoreRequest& request) {
  auto it = scores_.find(request.id);
  if (it == scores_.end()) throw DataError("no offline score for id '" + request.id + "'");
  return it->second;
}

ScorerClient::ScorerClient(std::shared_ptr<ScorerBackend> backend, ProviderConfig cfg,
                           std::set<std::string> languages, std::shared_ptr<JsonlCache> cache)
    : backend_(std::move(backend)),
      cfg_(std::move(cfg)),
      languages_(std::move(languages)),
      cache_(std::move(cache)),
      limiter_(cfg_.requests_per_second, static_cast<double>(cfg_.max_in_flight)) {
  if (!backend_) throw ConfigError("scorer client needs a backend");
  if (!cache_) cache_ = std::make_shared<JsonlCache>();
}

double ScorerClient::score_style(const ScoreRequest& request) {
  if (!languages_.empty() && languages_.count(request.language) == 0) {
    throw ConfigError("scorer '" + backend_->model_id() + "' is not configured for language '" +
                      request.language + "'");
  }
  const json k = {{"model", backend_->model_id()}, {"language", request.language}, {"style", request.style},
                  {"id", request.id}, {"text", sha256_hex(request.text)}};
  const std::string key = sha256_hex(k.dump());
  if (auto hit = cache_->get(key)) {
    ++stats_.cache_hits;
    return hit->at("score").get<double>();
  }
  int attempts = 0;
  const double s = with_retries(
      cfg_.retry_policy(),
      [&] {
        limiter_.acquire();
        ++stats_.attempts;
        return backend_->score(request);
      },
      &attempts);
  ++stats_.provider_calls;
  if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
    throw ProviderError("scorer '" + backend_->model_id() + "' returned " + std::to_string(s) +
                        " outside [0, 1] for '" + request.id + "'");
  }
  cache_->put(key, json{{"score", s}, {"id", request.id}, {"language", request.language}});
  return s;
}

std::vector<double> ScorerClient::score_all(const std::vector<ScoreRequest>& requests) {
  std::vector<double> out(requests.size());
  parallel_for(requests.size(), cfg_.max_in_flight, [&](std::size_t i) { out[i] = score_style(requests[i]); });
  return out;
}

double validate_scorer(ScorerClient& scorer, const std::vector<const StyleSample*>& test_split,
                       const std::string& style_name) {
  if (test_split.empty()) throw DataError("cannot validate a scorer on an empty test set");
  double ss = 0.0;
  for (const auto* s : test_split) {
    const double predicted = scorer.score_style({s->id, s->text, s->language, style_name});
    const double err = predicted - s->style_label;
    ss += err * err;
  }
  return std::sqrt(ss / static_cast<double>(test_split.size()));
}

// ---------------------------------------------------------------------------
// Quality

std::string_view to_string(QualityMetric metric) {
  return metric == QualityMetric::GembaJudge ? "gemba-style-judge" : "external-qe";
}

const char* const kDefaultJudgeTemplate =
    "Score the following translation from {source_lang} to {target_lang} on a continuous scale from 0 to "
    "100, where a score of zero means \"no meaning preserved\" and score of one hundred means \"perfect "
    "meaning and grammar\".\n\n"
    "{source_lang} source: \"{source}\"\n"
    "{target_lang} translation: \"{hypothesis}\"\n"
    "Score: ";

double parse_judge_score(const std::string& raw) {
  static const std::regex number(R"([-+]?\d+(?:\.\d+)?)");
  std::smatch m;
  if (!std::regex_search(raw, m, number)) throw ParseError("judge reply contains no score", raw);
  const double v = std::stod(m.str());
  if (v < 0.0 || v > 100.0) throw ParseError("judge score outside [0, 100]", raw);
  return v;
}

GembaJudge::GembaJudge(std::shared_ptr<CompletionBackend> backend, ProviderConfig cfg, std::string judge_template)
    : backend_(std::move(backend)), cfg_(std::move(cfg)), template_(std::move(judge_template)) {}

std::string GembaJudge::render(const QualityRequest& r) const {
  std::string out;
  const std::pair<std::string_view, const std::string*> fields[] = {{"{source_lang}", &r.source_language},
                                                                    {"{target_lang}", &r.target_language},
                                                                    {"{source}", &r.source},
                                                                    {"{hypothesis}", &r.hypothesis}};
  std::size_t i = 0;
  while (i < template_.size()) {
    bool matched = false;
    for (const auto& [token, value] : fields) {
      if (template_.compare(i, token.size(), token) == 0) {
        out += *value;
        i += token.size();
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(template_[i++]);
  }
  return out;
}

double GembaJudge::score(const QualityRequest& request) {
  return parse_judge_score(backend_->complete({cfg_.model_id, render(request), cfg_.temperature, cfg_.top_p}));
}

double HttpQeBackend::score(const QualityRequest& request) {
  const json reply = http_post_json(cfg_, {{"source", request.source}, {"hypothesis", request.hypothesis}});
  return checked_number(reply, "score", reply.dump());
}

QualityClient::QualityClient(std::shared_ptr<QualityBackend> backend, ProviderConfig cfg,
                             std::shared_ptr<JsonlCache> cache)
    : backend_(std::move(backend)),
      cfg_(std::move(cfg)),
      cache_(std::move(cache)),
      limiter_(cfg_.requests_per_second, static_cast<double>(cfg_.max_in_flight)) {
  if (!backend_) throw ConfigError("quality client needs a backend");
  if (!cache_) cache_ = std::make_shared<JsonlCache>();
}

double QualityClient::quality_score(const QualityRequest& request) {
  const json k = {{"metric", std::string(to_string(backend_->metric()))}, {"model", backend_->model_id()},
                  {"source", sha256_hex(request.source)}, {"hypothesis", sha256_hex(request.hypothesis)}};
  const std::string key = sha256_hex(k.dump());
  if (auto hit = cache_->get(key)) {
    ++stats_.cache_hits;
    return hit->at("score").get<double>();
  }
  const double s = with_retries(cfg_.retry_policy(), [&] {
    limiter_.acquire();
    ++stats_.attempts;
    return backend_->score(request);
  });
  ++stats_.provider_calls;
  cache_->put(key, json{{"score", s}});
  return s;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbedResponse HttpEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  const json reply = http_post_json(cfg_, {{"model", cfg_.model_id}, {"texts", texts}});
  EmbedResponse r;
  try {
    r.dim = reply.at("dim").get<std::size_t>();
    r.vectors = reply.at("vectors").get<std::vector<Vec>>();
  } catch (const json::exception&) {
    throw ParseError("embedding reply lacks dim/vectors", reply.dump().substr(0, 4096));
  }
  return r;
}

}  // namespace stylealign
