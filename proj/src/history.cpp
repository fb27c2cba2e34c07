#include "melon/history.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "melon/error.hpp"

namespace melon {

HistoryStore::HistoryStore(int num_users, int num_items)
    : by_user_(static_cast<std::size_t>(num_users)),
      by_item_(static_cast<std::size_t>(num_items)) {}

const std::vector<HistoryStore::Event>& HistoryStore::user_events(int u) const {
  if (u < 0 || u >= num_users()) {
    throw DataError("history: unknown user id " + std::to_string(u));
  }
  return by_user_[static_cast<std::size_t>(u)];
}

const std::vector<HistoryStore::Event>& HistoryStore::item_events(int i) const {
  if (i < 0 || i >= num_items()) {
    throw DataError("history: unknown item id " + std::to_string(i));
  }
  return by_item_[static_cast<std::size_t>(i)];
}

void HistoryStore::append(const Interaction& x) {
  if (count_ > 0 && x.t < last_t_) {
    throw DataError("history: out-of-order append at t=" + std::to_string(x.t) +
                    " after t=" + std::to_string(last_t_));
  }
  user_events(x.u);  // id checks
  item_events(x.i);
  by_user_[static_cast<std::size_t>(x.u)].push_back({x.t, x.i});
  by_item_[static_cast<std::size_t>(x.i)].push_back({x.t, x.u});
  last_t_ = x.t;
  ++count_;
}

void HistoryStore::append_batch(const MiniBatch& b) {
  for (const auto& x : b.interactions) append(x);
}

std::vector<int> HistoryStore::collect(const std::vector<Event>& events, std::int64_t t,
                                       int cap, std::uint64_t seed) {
  // Events are time-ordered; take the strict prefix below t, dedup keep-first.
  std::vector<int> distinct;
  std::unordered_set<int> seen;
  for (const auto& e : events) {
    if (e.t >= t) break;
    if (seen.insert(e.other).second) distinct.push_back(e.other);
  }
  if (cap <= 0 || distinct.size() <= static_cast<std::size_t>(cap)) return distinct;

  // Uniform subset without replacement via partial Fisher-Yates.
  Rng rng(seed);
  const std::size_t n = distinct.size();
  for (std::size_t k = 0; k < static_cast<std::size_t>(cap); ++k) {
    const std::size_t j = k + rng.below(n - k);
    std::swap(distinct[k], distinct[j]);
  }
  distinct.resize(static_cast<std::size_t>(cap));
  return distinct;
}

std::vector<int> HistoryStore::user_history(int u, std::int64_t t, int cap,
                                            std::uint64_t seed) const {
  return collect(user_events(u), t, cap, seed);
}

std::vector<int> HistoryStore::item_history(int i, std::int64_t t, int cap,
                                            std::uint64_t seed) const {
  return collect(item_events(i), t, cap, seed);
}

bool HistoryStore::user_has_item_before(int u, int i, std::int64_t t) const {
  for (const auto& e : user_events(u)) {
    if (e.t >= t) break;
    if (e.other == i) return true;
  }
  return false;
}

std::size_t HistoryStore::user_degree_before(int u, std::int64_t t) const {
  std::unordered_set<int> seen;
  for (const auto& e : user_events(u)) {
    if (e.t >= t) break;
    seen.insert(e.other);
  }
  return seen.size();
}

std::optional<Interaction> HistoryStore::last_of_user_before(int u, std::int64_t t) const {
  const auto& ev = user_events(u);
  // First event with e.t >= t on the time-sorted list; the one before it is
  // the most recent strictly-prior interaction.
  auto it = std::upper_bound(ev.begin(), ev.end(), t,
                             [](std::int64_t value, const Event& e) { return value <= e.t; });
  if (it == ev.begin()) return std::nullopt;
  --it;
  return Interaction{it->t, u, it->other};
}

std::optional<Interaction> HistoryStore::last_of_item_before(int i, std::int64_t t) const {
  const auto& ev = item_events(i);
  auto it = std::upper_bound(ev.begin(), ev.end(), t,
                             [](std::int64_t value, const Event& e) { return value <= e.t; });
  if (it == ev.begin()) return std::nullopt;
  --it;
  return Interaction{it->t, it->other, i};
}

MiniBatch HistoryStore::last_interactions(const MiniBatch& batch, bool include_item_side) const {
  MiniBatch out;
  for (const auto& x : batch.interactions) {
    if (auto prior = last_of_user_before(x.u, x.t)) out.interactions.push_back(*prior);
    if (include_item_side) {
      if (auto prior = last_of_item_before(x.i, x.t)) out.interactions.push_back(*prior);
    }
  }
  return out;
}

}  // namespace melon
