#pragma once

#include <span>
#include <vector>

#include "melon/dataset.hpp"
#include "melon/recommender.hpp"

namespace melon {

// One evaluation row: the interacted item ranked against sampled
// non-interacted items. Rank is 1-based with pessimistic tie-breaking
// (negatives scoring equal to the positive outrank it).
struct RankedTrial {
  int positive = 0;
  std::vector<int> negatives;
  int rank = 0;
};

int rank_of_positive(double pos_score, std::span<const double> neg_scores);

double hit_rate(int rank, int k);  // 1 if rank <= k
double ndcg(int rank, int k);      // 1/log2(rank+1) if rank <= k

struct BatchMetrics {
  std::vector<int> ks;
  std::vector<double> hr;    // aligned with ks
  std::vector<double> ndcg;  // aligned with ks
};

// Scores every (positive, sampled negatives) row with the current model and
// averages HR@k / NDCG@k over the batch. `trials`, when given, receives the
// per-row ranks.
BatchMetrics evaluate_batch(const Recommender& rec,
                            const std::vector<Interaction>& interactions,
                            const std::vector<std::vector<int>>& negatives,
                            std::span<const int> ks,
                            std::vector<RankedTrial>* trials = nullptr);

}  // namespace melon
