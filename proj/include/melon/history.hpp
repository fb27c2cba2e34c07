#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "melon/dataset.hpp"

namespace melon {

// Time-respecting bipartite interaction graph. Appends must be chronological;
// every query at time t sees only interactions with t' < t.
class HistoryStore {
 public:
  HistoryStore(int num_users, int num_items);

  void append(const Interaction& x);
  void append_batch(const MiniBatch& b);

  int num_users() const { return static_cast<int>(by_user_.size()); }
  int num_items() const { return static_cast<int>(by_item_.size()); }
  std::size_t size() const { return count_; }
  std::int64_t last_time() const { return last_t_; }

  // Distinct neighbor sets (first-interaction order). When more than `cap`
  // exist, a uniform subset of size cap is drawn, deterministic per seed.
  // cap <= 0 means uncapped.
  std::vector<int> user_history(int u, std::int64_t t, int cap, std::uint64_t seed) const;
  std::vector<int> item_history(int i, std::int64_t t, int cap, std::uint64_t seed) const;

  bool user_has_item_before(int u, int i, std::int64_t t) const;
  std::size_t user_degree_before(int u, std::int64_t t) const;  // distinct items

  std::optional<Interaction> last_of_user_before(int u, std::int64_t t) const;
  std::optional<Interaction> last_of_item_before(int i, std::int64_t t) const;

  // For each batch row, the most recent prior interaction of its user
  // (and of its item when include_item_side is set). Rows without a prior
  // contribute nothing; negatives are left empty.
  MiniBatch last_interactions(const MiniBatch& batch, bool include_item_side = false) const;

 private:
  struct Event {
    std::int64_t t;
    std::int32_t other;
  };
  static std::vector<int> collect(const std::vector<Event>& events, std::int64_t t, int cap,
                                  std::uint64_t seed);
  const std::vector<Event>& user_events(int u) const;
  const std::vector<Event>& item_events(int i) const;

  std::vector<std::vector<Event>> by_user_;
  std::vector<std::vector<Event>> by_item_;
  std::size_t count_ = 0;
  std::int64_t last_t_ = 0;
};

}  // namespace melon
