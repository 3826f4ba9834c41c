#include "stylealign/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "stylealign/error.hpp"
#include "stylealign/io.hpp"

namespace stylealign {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'A', 'E', 'M', 'B', 'E', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

void check_same_dim(std::span<const double> a, std::span<const double> b, const char* context) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size(), context);
}

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("truncated embedding cache file");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

std::string get_bytes(const std::string& in, std::size_t& pos, std::size_t n) {
  if (pos + n > in.size()) throw DataError("truncated embedding cache file");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x * x;
  return std::sqrt(acc);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "cosine_similarity");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw DataError("cosine similarity of a zero-norm vector");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

Vec quantize_f32(std::span<const double> v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DataError("non-finite embedding component");
    out[i] = static_cast<double>(static_cast<float>(v[i]));
  }
  return out;
}

Vec normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw DataError("cannot normalize a zero-norm vector");
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingCache

EmbeddingCache::EmbeddingCache(std::string model_id, std::size_t dim)
    : model_id_(std::move(model_id)), dim_(dim) {}

EmbeddingCache::EmbeddingCache(EmbeddingCache&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  model_id_ = std::move(other.model_id_);
  dim_ = other.dim_;
  entries_ = std::move(other.entries_);
}

EmbeddingCache& EmbeddingCache::operator=(EmbeddingCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    model_id_ = std::move(other.model_id_);
    dim_ = other.dim_;
    entries_ = std::move(other.entries_);
  }
  return *this;
}

std::size_t EmbeddingCache::dim() const {
  std::lock_guard lock(mutex_);
  return dim_;
}

std::string EmbeddingCache::key_for(const std::string& text) { return sha256_hex(text); }

std::optional<Vec> EmbeddingCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& key, std::span<const double> vector) {
  auto q = quantize_f32(vector);
  std::lock_guard lock(mutex_);
  if (dim_ == 0) dim_ = q.size();
  if (q.size() != dim_) throw DimensionMismatch(dim_, q.size(), "embedding cache");
  entries_[key] = std::move(q);
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void EmbeddingCache::save(const std::filesystem::path& path, Format format) const {
  std::lock_guard lock(mutex_);
  std::string out;
  if (format == Format::Binary) {
    out.append(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model_id_.size()));
    out += model_id_;
    put_le<std::uint64_t>(out, entries_.size());
    for (const auto& [key, vec] : entries_) {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
      out += key;
      for (double x : vec) put_le<float>(out, static_cast<float>(x));
    }
  } else {
    out += json{{"model_id", model_id_}, {"dim", dim_}}.dump() + "\n";
    for (const auto& [key, vec] : entries_) {
      json v = json::array();
      for (double x : vec) v.push_back(static_cast<float>(x));
      out += json{{"key", key}, {"vector", v}}.dump() + "\n";
    }
  }
  write_file_atomic(path, out);
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0) {
    std::size_t pos = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kVersion) throw DataError("unsupported embedding cache version " + std::to_string(version));
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    const auto id_len = get_le<std::uint32_t>(bytes, pos);
    EmbeddingCache cache(get_bytes(bytes, pos, id_len), dim);
    const auto count = get_le<std::uint64_t>(bytes, pos);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto key_len = get_le<std::uint32_t>(bytes, pos);
      std::string key = get_bytes(bytes, pos, key_len);
      Vec v(dim);
      for (auto& x : v) x = static_cast<double>(get_le<float>(bytes, pos));
      cache.entries_.emplace(std::move(key), std::move(v));
    }
    if (pos != bytes.size()) throw DataError("trailing bytes in embedding cache " + path.string());
    return cache;
  }

  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty embedding cache " + path.string());
  EmbeddingCache cache("", 0);
  try {
    const auto head = json::parse(line);
    cache.model_id_ = head.at("model_id").get<std::string>();
    cache.dim_ = head.at("dim").get<std::size_t>();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto rec = json::parse(line);
      Vec v = rec.at("vector").get<Vec>();
      if (v.size() != cache.dim_) {
        throw DimensionMismatch(cache.dim_, v.size(), path.filename().string() + ":" + std::to_string(line_no));
      }
      cache.entries_.emplace(rec.at("key").get<std::string>(), quantize_f32(v));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed embedding cache " + path.string() + ": " + e.what());
  }
  return cache;
}

EmbeddingCache EmbeddingCache::load_or_create(const std::filesystem::path& path, const std::string& model_id) {
  if (std::filesystem::exists(path)) {
    auto cache = load(path);
    if (cache.model_id() == model_id) return cache;
  }
  return EmbeddingCache(model_id);
}

// ---------------------------------------------------------------------------
// embed_batch

std::vector<Vec> embed_batch(const std::vector<std::string>& texts, EmbeddingBackend& provider,
                             EmbeddingCache& cache, const EmbedOptions& options) {
  if (texts.empty()) throw DataError("embed_batch called with no texts");
  if (provider.model_id() != cache.model_id()) {
    throw ConfigError("embedding cache belongs to model '" + cache.model_id() + "', provider is '" +
                      provider.model_id() + "'");
  }
  std::vector<std::string> keys(texts.size());
  std::vector<std::string> missing;
  std::map<std::string, std::size_t> missing_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& t = texts[i];
    if (t.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw DataError("cannot embed empty text (input index " + std::to_string(i) + ")");
    }
    keys[i] = EmbeddingCache::key_for(t);
    if (!cache.get(keys[i]) && missing_index.emplace(keys[i], missing.size()).second) {
      missing.push_back(t);
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (missing.size() + batch - 1) / batch;
  parallel_for(n_batches, options.max_in_flight, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(missing.size(), begin + batch);
    std::vector<std::string> chunk(missing.begin() + static_cast<std::ptrdiff_t>(begin),
                                   missing.begin() + static_cast<std::ptrdiff_t>(end));
    auto response = with_retries(options.retry, [&] { return provider.embed(chunk); });
    if (response.vectors.size() != chunk.size()) {
      throw ProviderError("embedding provider returned " + std::to_string(response.vectors.size()) +
                          " vectors for " + std::to_string(chunk.size()) + " texts");
    }
    const std::size_t expected = cache.dim();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& v = response.vectors[i];
      if (v.size() != response.dim) throw DimensionMismatch(response.dim, v.size(), "embedding response");
      if (expected != 0 && v.size() != expected) throw DimensionMismatch(expected, v.size(), "embedding store");
      cache.put(EmbeddingCache::key_for(chunk[i]), v);
    }
  });

  std::vector<Vec> out;
  out.reserve(texts.size());
  for (const auto& key : keys) out.push_back(*cache.get(key));
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingStore

std::string native_scope() { return "native"; }
std::string translated_scope(const std::string& source_language, const std::string& target_language) {
  return "translated-from:" + source_language + "->" + target_language;
}

EmbeddingStore::EmbeddingStore(std::string model_id, std::size_t dim)
    : model_id_(std::move(model_id)), dim_(dim) {
  if (dim_ == 0) throw DataError("embedding store dimension must be positive");
}

void EmbeddingStore::add(const std::string& scope, const std::string& id, Vec vector) {
  if (vector.size() != dim_) throw DimensionMismatch(dim_, vector.size(), "embedding store entry '" + id + "'");
  for (double x : vector) {
    if (!std::isfinite(x)) throw DataError("non-finite component in embedding for '" + id + "'");
  }
  if (!entries_[scope].emplace(id, std::move(vector)).second) {
    throw DataError("duplicate embedding for (" + id + ", " + scope + ")");
  }
}

const Vec& EmbeddingStore::at(const std::string& scope, const std::string& id) const {
  const auto* v = find(scope, id);
  if (v == nullptr) throw DataError("missing embedding for (" + id + ", " + scope + ")");
  return *v;
}

const Vec* EmbeddingStore::find(const std::string& scope, const std::string& id) const {
  auto s = entries_.find(scope);
  if (s == entries_.end()) return nullptr;
  auto it = s->second.find(id);
  return it == s->second.end() ? nullptr : &it->second;
}

bool EmbeddingStore::contains(const std::string& scope, const std::string& id) const {
  return find(scope, id) != nullptr;
}

std::size_t EmbeddingStore::size() const {
  std::size_t n = 0;
  for (const auto& [scope, m] : entries_) n += m.size();
  return n;
}

std::size_t EmbeddingStore::size(const std::string& scope) const {
  auto s = entries_.find(scope);
  return s == entries_.end() ? 0 : s->second.size();
}

std::vector<std::string> EmbeddingStore::scopes() const {
  std::vector<std::string> out;
  for (const auto& [scope, m] : entries_) out.push_back(scope);
  return out;
}

}  // namespace stylealign
