#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>

namespace stylealign {

/// Exponential backoff with full jitter: attempt n sleeps uniform(0, min(cap, base * 2^n)).
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{1000};
  std::chrono::milliseconds max_delay{30000};
  /// Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
  std::uint64_t jitter_seed = 0x5eed;

  std::chrono::milliseconds backoff(int attempt, std::mt19937_64& rng) const;
};

/// Runs `call`, retrying on TransientError up to policy.max_retries times.
/// `attempts` (if given) receives the number of calls made, including the final one.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call, int* attempts = nullptr) -> decltype(call());

/// Token bucket; `rate` requests per second with a burst of `burst`. rate <= 0 disables it.
class RateLimiter {
 public:
  explicit RateLimiter(double rate = 0.0, double burst = 1.0);
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mutex_;
};

/// Calls fn(i) for i in [0, n) on at most `max_in_flight` threads at once. The first
/// exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t max_in_flight, const std::function<void(std::size_t)>& fn);

}  // namespace stylealign

#include "stylealign/error.hpp"

namespace stylealign {

void default_sleep(std::chrono::milliseconds d);

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call, int* attempts) -> decltype(call()) {
  std::mt19937_64 rng(policy.jitter_seed);
  for (int attempt = 0;; ++attempt) {
    if (attempts != nullptr) *attempts = attempt + 1;
    try {
      return call();
    } catch (const TransientError&) {
      if (attempt >= policy.max_retries) throw;
      const auto delay = policy.backoff(attempt, rng);
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        default_sleep(delay);
      }
    }
  }
}

}  // namespace stylealign
