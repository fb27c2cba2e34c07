#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "melon/eval.hpp"
#include "melon/rng.hpp"

using namespace melon;

TEST_CASE("hit rate boundaries") {
  CHECK(hit_rate(3, 5) == 1.0);
  CHECK(hit_rate(7, 5) == 0.0);
  CHECK(hit_rate(5, 5) == 1.0);  // boundary inclusive
}

TEST_CASE("ndcg values") {
  CHECK(ndcg(1, 5) == 1.0);
  CHECK(ndcg(3, 5) == doctest::Approx(0.5).epsilon(1e-15));  // 1/log2(4)
  CHECK(ndcg(6, 5) == 0.0);
}

TEST_CASE("rank uses pessimistic ties") {
  const std::vector<double> negs{0.2, 0.5, 0.5, 0.9};
  CHECK(rank_of_positive(1.0, negs) == 1);
  CHECK(rank_of_positive(0.5, negs) == 4);  // both ties and 0.9 outrank it
  CHECK(rank_of_positive(0.1, negs) == 5);
  // pessimistic >= optimistic on random scores
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> scores(20);
    for (auto& s : scores) s = rng.below(5) * 0.25;  // force ties
    const double pos = rng.below(5) * 0.25;
    int pess = rank_of_positive(pos, scores);
    int opt = 1;
    for (double s : scores) {
      if (s > pos) ++opt;
    }
    CHECK(pess >= opt);
  }
}

TEST_CASE("metric properties") {
  Rng rng(9);
  const int ks[] = {5, 10, 20};
  for (int rep = 0; rep < 300; ++rep) {
    const int rank = 1 + static_cast<int>(rng.below(100));
    for (int k : ks) {
      CHECK(ndcg(rank, k) <= hit_rate(rank, k));
      if (rank <= k) {
        CHECK(ndcg(rank, k) >= 1.0 / std::log2(static_cast<double>(k) + 1.0));
        CHECK(ndcg(rank, k) <= 1.0);
      } else {
        CHECK(ndcg(rank, k) == 0.0);
      }
    }
  }
  // non-increasing in rank
  for (int k : ks) {
    for (int rank = 1; rank < 100; ++rank) {
      CHECK(hit_rate(rank + 1, k) <= hit_rate(rank, k));
      CHECK(ndcg(rank + 1, k) <= ndcg(rank, k));
    }
  }
}

namespace {

// Scores each (u, i) pair from a fixed table so ranks can be planted.
class TableModel : public Recommender {
 public:
  TableModel(int users, int items) : Recommender(make(users, items)), table_(users * items, 0.0) {}
  const char* kind() const override { return "table"; }
  double score(int u, int i) const override {
    return table_[static_cast<std::size_t>(u * num_items() + i)];
  }
  int score_var(ParamLookup&, int, int) const override { return -1; }
  DependentSlice dependent_slice(int, int, int) const override { return {}; }
  std::span<const double> user_embedding(int) const override { return {}; }
  std::span<const double> item_embedding(int) const override { return {}; }
  void set(int u, int i, double v) { table_[static_cast<std::size_t>(u * num_items() + i)] = v; }

 private:
  static RecommenderConfig make(int users, int items) {
    RecommenderConfig c;
    c.num_users = users;
    c.num_items = items;
    c.embed_dim = 1;
    return c;
  }
  std::vector<double> table_;
};

}  // namespace

TEST_CASE("evaluate_batch against planted ranks") {
  TableModel model(3, 60);
  // row 0: positive above everything -> rank 1
  // row 1: exactly 3 negatives above   -> rank 4
  // row 2: 49 negatives above          -> rank 50
  std::vector<Interaction> rows{{1, 0, 0}, {2, 1, 0}, {3, 2, 0}};
  std::vector<std::vector<int>> negs(3);
  for (int j = 1; j <= 55; ++j) {
    negs[0].push_back(j);
    negs[1].push_back(j);
    negs[2].push_back(j);
  }
  for (int u = 0; u < 3; ++u) {
    model.set(u, 0, 10.0);
    for (int j = 1; j <= 55; ++j) model.set(u, j, 1.0);
  }
  for (int j = 1; j <= 3; ++j) model.set(1, j, 20.0);
  for (int j = 1; j <= 49; ++j) model.set(2, j, 20.0);

  std::vector<RankedTrial> trials;
  const int ks[] = {5, 10, 20};
  const auto m = evaluate_batch(model, rows, negs, ks, &trials);
  REQUIRE(trials.size() == 3);
  CHECK(trials[0].rank == 1);
  CHECK(trials[1].rank == 4);
  CHECK(trials[2].rank == 50);

  CHECK(m.hr[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const double expected_ndcg5 = (1.0 + 1.0 / std::log2(5.0) + 0.0) / 3.0;
  CHECK(m.ndcg[0] == doctest::Approx(expected_ndcg5).epsilon(1e-15));
  CHECK(m.hr[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.hr[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  SUBCASE("constant scorer with pessimistic ties scores zero") {
    TableModel flat(1, 120);
    std::vector<Interaction> r{{1, 0, 0}};
    std::vector<std::vector<int>> n(1);
    for (int j = 1; j <= 99; ++j) n[0].push_back(j);
    std::vector<RankedTrial> tr;
    const auto mm = evaluate_batch(flat, r, n, ks, &tr);
    CHECK(tr[0].rank == 100);
    for (double v : mm.hr) CHECK(v == 0.0);
    for (double v : mm.ndcg) CHECK(v == 0.0);
  }
  SUBCASE("means are permutation invariant") {
    std::vector<Interaction> rev{rows[2], rows[0], rows[1]};
    std::vector<std::vector<int>> rnegs{negs[2], negs[0], negs[1]};
    const auto mm = evaluate_batch(model, rev, rnegs, ks);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(mm.hr[k] == doctest::Approx(m.hr[k]).epsilon(1e-15));
      CHECK(mm.ndcg[k] == doctest::Approx(m.ndcg[k]).epsilon(1e-15));
    }
  }
}

TEST_CASE("metric means match a brute-force oracle on random trials") {
  Rng rng(10);
  const int ks[] = {5, 10, 20};
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> ranks;
    for (int j = 0; j < 20; ++j) ranks.push_back(1 + static_cast<int>(rng.below(100)));
    for (int k : ks) {
      double hr = 0.0, nd = 0.0;
      for (int r : ranks) {
        hr += r <= k ? 1.0 : 0.0;
        nd += r <= k ? 1.0 / std::log2(r + 1.0) : 0.0;
      }
      hr /= ranks.size();
      nd /= ranks.size();
      double hr2 = 0.0, nd2 = 0.0;
      for (int r : ranks) {
        hr2 += hit_rate(r, k);
        nd2 += ndcg(r, k);
      }
      CHECK(hr2 / ranks.size() == hr);
      CHECK(nd2 / ranks.size() == nd);
    }
  }
}
