#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "melon/error.hpp"
#include "melon/history.hpp"
#include "melon/rng.hpp"

using namespace melon;

TEST_CASE("append and basic user history") {
  HistoryStore h(3, 3);
  h.append({1, 0, 0});
  CHECK(h.user_history(0, 2, 0, 0) == std::vector<int>{0});
  CHECK(h.user_history(0, 1, 0, 0).empty());  // strictly before t

  // repeated pair is a set element, not a multiset one
  h.append({2, 0, 0});
  CHECK(h.user_history(0, 3, 0, 0) == std::vector<int>{0});

  CHECK_THROWS_AS(h.append({1, 1, 1}), DataError);  // decreasing t
  CHECK_THROWS_AS(h.user_history(9, 1, 0, 0), DataError);
}

TEST_CASE("histories exclude the query time and later") {
  HistoryStore h(2, 5);
  h.append({1, 0, 1});
  h.append({2, 0, 2});
  h.append({3, 0, 3});
  CHECK(h.user_history(0, 3, 0, 0) == std::vector<int>{1, 2});
  CHECK(h.user_history(1, 3, 0, 0).empty());  // cold user
}

TEST_CASE("item history mirrors user history") {
  HistoryStore h(5, 2);
  h.append({1, 1, 0});
  h.append({2, 2, 0});
  h.append({3, 3, 0});
  CHECK(h.item_history(0, 3, 0, 0) == std::vector<int>{1, 2});
  CHECK(h.item_history(1, 3, 0, 0).empty());
  h.append({4, 1, 0});
  CHECK(h.item_history(0, 9, 0, 0) == std::vector<int>{1, 2, 3});  // set semantics
}

TEST_CASE("neighbor sampling caps deterministically") {
  HistoryStore h(1, 20);
  for (int k = 0; k < 15; ++k) h.append({k, 0, k});

  const auto s1 = h.user_history(0, 100, 10, 7);
  const auto s2 = h.user_history(0, 100, 10, 7);
  CHECK(s1.size() == 10);
  CHECK(s1 == s2);
  std::set<int> distinct(s1.begin(), s1.end());
  CHECK(distinct.size() == 10);
  for (int i : s1) CHECK(i < 15);

  const auto s3 = h.user_history(0, 100, 10, 8);
  CHECK(s3.size() == 10);
  CHECK(s1 != s3);  // different seed, different subset (15 choose 10 makes ties unlikely)
}

TEST_CASE("last_interactions picks the most recent prior per row") {
  HistoryStore h(3, 12);
  h.append({5, 0, 9});

  MiniBatch b;
  b.interactions = {{8, 0, 2}};
  auto last = h.last_interactions(b);
  REQUIRE(last.size() == 1);
  CHECK(last.interactions[0] == Interaction{5, 0, 9});

  // cold user contributes nothing
  b.interactions = {{8, 1, 2}};
  CHECK(h.last_interactions(b).size() == 0);

  // two rows for one user resolve against their own timestamps
  h.append({8, 0, 7});
  b.interactions = {{8, 0, 2}, {9, 0, 3}};
  last = h.last_interactions(b);
  REQUIRE(last.size() == 2);
  CHECK(last.interactions[0] == Interaction{5, 0, 9});
  CHECK(last.interactions[1] == Interaction{8, 0, 7});
}

TEST_CASE("last_interactions against a brute-force scan") {
  Rng rng(33);
  std::vector<Interaction> stream;
  HistoryStore h(6, 8);
  for (int k = 0; k < 120; ++k) {
    Interaction x{k / 2, static_cast<int>(rng.below(6)), static_cast<int>(rng.below(8))};
    stream.push_back(x);
    h.append(x);
  }
  MiniBatch b;
  for (int j = 0; j < 10; ++j) {
    b.interactions.push_back(
        {30 + j, static_cast<int>(rng.below(6)), static_cast<int>(rng.below(8))});
  }

  const auto got = h.last_interactions(b, /*include_item_side=*/false);
  std::vector<Interaction> expected;
  for (const auto& x : b.interactions) {
    const Interaction* best = nullptr;
    for (const auto& y : stream) {
      if (y.u == x.u && y.t < x.t && (!best || y.t >= best->t)) best = &y;
    }
    if (best) expected.push_back(*best);
  }
  REQUIRE(got.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(got.interactions[k].t == expected[k].t);
    CHECK(got.interactions[k].u == expected[k].u);
  }

  // item side adds one entry per row with a prior interaction of the item
  const auto both = h.last_interactions(b, /*include_item_side=*/true);
  CHECK(both.size() >= got.size());
}

TEST_CASE("time safety and monotone growth") {
  Rng rng(44);
  std::vector<Interaction> stream;
  HistoryStore h(5, 7);
  for (int k = 0; k < 200; ++k) {
    Interaction x{k, static_cast<int>(rng.below(5)), static_cast<int>(rng.below(7))};
    stream.push_back(x);
    h.append(x);
  }

  for (std::int64_t t : {0, 13, 57, 199, 500}) {
    for (int u = 0; u < 5; ++u) {
      const auto items = h.user_history(u, t, 0, 0);
      std::set<int> brute;
      for (const auto& x : stream) {
        if (x.u == u && x.t < t) brute.insert(x.i);
      }
      CHECK(std::set<int>(items.begin(), items.end()) == brute);
    }
  }

  // histories only gain elements as t advances
  std::size_t prev = 0;
  for (std::int64_t t = 0; t <= 200; t += 20) {
    const auto n = h.user_history(2, t, 0, 0).size();
    CHECK(n >= prev);
    prev = n;
  }
}
