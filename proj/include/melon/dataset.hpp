#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melon/rng.hpp"

namespace melon {

class HistoryStore;

// One user-item interaction at time t. Timestamps are opaque integers;
// streams are kept sorted non-decreasing by t.
struct Interaction {
  std::int64_t t = 0;
  std::int32_t u = 0;
  std::int32_t i = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct SplitSpec {
  double pretrain_frac = 0.95;
  double valid_frac = 0.005;
  double test_frac = 0.045;

  void validate() const;  // throws ConfigError
};

struct MiniBatch {
  std::vector<Interaction> interactions;
  std::vector<std::vector<int>> negatives;  // per interaction; may be empty

  std::size_t size() const { return interactions.size(); }
};

enum class FileFormat { Auto, Csv, Tsv };

// Interaction log with dense ids plus the maps back to the original tokens.
struct LoadedData {
  std::vector<Interaction> stream;
  std::vector<std::string> user_ids;  // dense id -> original token
  std::vector<std::string> item_ids;

  int num_users() const { return static_cast<int>(user_ids.size()); }
  int num_items() const { return static_cast<int>(item_ids.size()); }
};

// Reads CSV/TSV rows `timestamp,user,item[,rating]`. Any rated row is a
// positive interaction. Ids are densified in input order; the stream is
// sorted by timestamp with ties kept in input order.
LoadedData load(const std::string& path, FileFormat format = FileFormat::Auto);

// Iteratively removes users and items with fewer than k interactions until
// a fixpoint, then re-densifies ids.
LoadedData filter_min_interactions(const LoadedData& data, int k);

struct SplitResult {
  std::span<const Interaction> pretrain, valid, test;
  std::size_t boundary1 = 0, boundary2 = 0;
};

SplitResult split(std::span<const Interaction> stream, const SplitSpec& spec);

// Uniform negatives over items a user has not interacted with strictly
// before t. Falls back to uniform over all items (once-per-instance warning)
// when no such item exists.
class NegativeSampler {
 public:
  explicit NegativeSampler(const HistoryStore& hist);
  std::vector<int> sample(int u, std::int64_t t, int count, Rng& rng) const;
  std::size_t fallbacks() const { return fallbacks_; }

 private:
  const HistoryStore& hist_;
  mutable std::size_t fallbacks_ = 0;
};

// Consecutive chronological chunks with `neg_per_pos` sampled negatives per
// interaction. Negative draws are seeded per interaction
// (seed ^ global interaction index), so they are reproducible and
// order-independent. `index_base` is the global index of stream[0].
std::vector<MiniBatch> make_batches(std::span<const Interaction> stream, int batch_size,
                                    int neg_per_pos, std::uint64_t seed,
                                    const HistoryStore& exclusion,
                                    std::size_t index_base = 0);

// Canonical preprocessed form: interactions.tsv with dense ids plus a JSON
// sidecar carrying counts, split boundaries, and the id maps.
void write_canonical(const std::string& dir, const LoadedData& data,
                     const SplitSpec& spec);
struct CanonicalData {
  LoadedData data;
  std::size_t boundary1 = 0, boundary2 = 0;
};
CanonicalData read_canonical(const std::string& dir);
bool is_canonical_dir(const std::string& path);

}  // namespace melon
