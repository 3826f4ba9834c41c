#include <random>

#include "doctest.h"
#include "support.hpp"

#include "stylealign/error.hpp"
#include "stylealign/retrieval.hpp"

namespace sa = stylealign;

namespace {

sa::IndexEntry entry(const std::string& id, sa::Vec v, double label) { return {id, std::move(v), 0.0, label, "t " + id}; }

std::vector<std::string> ids(const sa::ExemplarSet& s) {
  std::vector<std::string> out;
  for (const auto& e : s.exemplars) out.push_back(e.id);
  return out;
}

}  // namespace

TEST_CASE("exact ties resolve by ascending id") {
  sa::ExemplarIndex index(2, 2);
  index.add("ja", 0, entry("b", {1, 0}, 0.1));
  index.add("ja", 0, entry("c", {2, 0}, 0.1));
  index.add("ja", 0, entry("d", {0, 1}, 0.1));
  const auto got = index.retrieve(sa::Vec{3, 0}, "ja", sa::StyleLevel{0, 2}, 2);
  CHECK(ids(got) == std::vector<std::string>{"b", "c"});
  CHECK(got.exemplars[0].similarity == 1.0);
  CHECK(!got.widened());
}

TEST_CASE("sparse buckets widen nearest-first, lower level on ties") {
  sa::ExemplarIndex index(2, 5);
  index.add("ja", 0, entry("l0", {1, 0}, 0.1));
  index.add("ja", 1, entry("l1", {1, 0.1}, 0.3));
  index.add("ja", 3, entry("l3", {1, 0.2}, 0.7));
  index.add("ja", 4, entry("l4", {1, 0.3}, 0.9));

  auto got = index.retrieve(sa::Vec{1, 0}, "ja", sa::StyleLevel{2, 5}, 2);
  CHECK(got.levels == std::vector<int>{2, 1, 3});
  CHECK(got.widened());
  CHECK(ids(got) == std::vector<std::string>{"l1", "l3"});

  got = index.retrieve(sa::Vec{1, 0}, "ja", sa::StyleLevel{2, 5}, 3);
  CHECK(got.levels == std::vector<int>{2, 1, 3, 0});
  CHECK(ids(got) == std::vector<std::string>{"l0", "l1", "l3"});

  CHECK_THROWS_AS(index.retrieve(sa::Vec{1, 0}, "ja", sa::StyleLevel{2, 5}, 5), sa::DataError);
}

TEST_CASE("exclude_id drops the query's own sample") {
  sa::ExemplarIndex index(2, 2);
  index.add("en", 1, entry("a", {1, 0}, 0.9));
  index.add("en", 1, entry("b", {0.9, 0.1}, 0.9));
  const auto got = index.retrieve(sa::Vec{1, 0}, "en", sa::StyleLevel{1, 2}, 1, "a");
  CHECK(ids(got) == std::vector<std::string>{"b"});
}

TEST_CASE("index preconditions") {
  sa::ExemplarIndex index(2, 2);
  CHECK_THROWS_AS(index.add("en", 0, entry("a", {1, 0, 0}, 0.1)), sa::DimensionMismatch);
  CHECK_THROWS_AS(index.add("en", 1, entry("a", {1, 0}, 0.1)), sa::DataError);
  CHECK_THROWS_AS(index.add("en", 0, entry("a", {0, 0}, 0.1)), sa::DataError);
  index.add("en", 0, entry("m", {1, 0}, 0.1));
  CHECK_THROWS_AS(index.add("en", 0, entry("c", {1, 0}, 0.1)), sa::DataError);
  CHECK_THROWS_AS(index.retrieve(sa::Vec{1, 0}, "fr", sa::StyleLevel{0, 2}, 1), sa::DataError);
  CHECK_THROWS_AS(index.retrieve(sa::Vec{0, 0}, "en", sa::StyleLevel{0, 2}, 1), sa::DataError);
  CHECK_THROWS_AS(index.retrieve(sa::Vec{1, 0}, "en", sa::StyleLevel{0, 3}, 1), sa::DataError);
  CHECK_THROWS_AS(index.retrieve(sa::Vec{1, 0}, "en", sa::StyleLevel{0, 2}, 0), sa::DataError);
}

TEST_CASE("build_index uses only the train split") {
  std::vector<sa::StyleSample> samples;
  sa::EmbeddingStore store("m", 2);
  for (int i = 0; i < 6; ++i) {
    const auto id = testing::make_id("ja", i);
    samples.push_back(testing::sample(id, "ja", 0.1 * i, i < 2 ? sa::Split::Test : sa::Split::Train));
    store.add(sa::native_scope(), id, {1.0, 0.1 * i});
  }
  const sa::StyleCorpus corpus("p", samples);
  const auto index = sa::build_index(corpus, store, 2);
  CHECK(index.size() == 4);
  for (int lv = 0; lv < 2; ++lv) {
    if (const auto* b = index.bucket("ja", lv)) {
      for (const auto& e : *b) CHECK(corpus.at(e.id).split == sa::Split::Train);
    }
  }
  sa::EmbeddingStore partial("m", 2);
  partial.add(sa::native_scope(), "ja-002", {1, 0});
  CHECK_THROWS_AS(sa::build_index(corpus, partial, 2), sa::DataError);
}

TEST_CASE("retrieval ranking is invariant to query scaling") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  sa::ExemplarIndex index(8, 2);
  for (int i = 0; i < 200; ++i) {
    sa::Vec v(8);
    for (auto& x : v) x = n(rng);
    index.add("en", 0, entry(testing::make_id("en", i), v, 0.2));
  }
  for (int q = 0; q < 50; ++q) {
    sa::Vec v(8);
    for (auto& x : v) x = n(rng);
    sa::Vec scaled = v;
    for (auto& x : scaled) x *= 0.125;
    CHECK(ids(index.retrieve(v, "en", sa::StyleLevel{0, 2}, 10)) ==
          ids(index.retrieve(scaled, "en", sa::StyleLevel{0, 2}, 10)));
  }
}
