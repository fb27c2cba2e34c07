#include "melon/eval.hpp"

#include <cmath>

#include "melon/error.hpp"

namespace melon {

int rank_of_positive(double pos_score, std::span<const double> neg_scores) {
  int rank = 1;
  for (double s : neg_scores) {
    if (s >= pos_score) ++rank;
  }
  return rank;
}

double hit_rate(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg(int rank, int k) {
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

BatchMetrics evaluate_batch(const Recommender& rec,
                            const std::vector<Interaction>& interactions,
                            const std::vector<std::vector<int>>& negatives,
                            std::span<const int> ks, std::vector<RankedTrial>* trials) {
  if (interactions.size() != negatives.size()) {
    throw DataError("evaluate: negatives not aligned with interactions");
  }
  BatchMetrics m;
  m.ks.assign(ks.begin(), ks.end());
  m.hr.assign(ks.size(), 0.0);
  m.ndcg.assign(ks.size(), 0.0);
  if (interactions.empty()) return m;

  std::vector<double> neg_scores;
  for (std::size_t row = 0; row < interactions.size(); ++row) {
    const auto& x = interactions[row];
    const double pos = rec.score(x.u, x.i);
    neg_scores.clear();
    neg_scores.reserve(negatives[row].size());
    for (int j : negatives[row]) neg_scores.push_back(rec.score(x.u, j));
    const int rank = rank_of_positive(pos, neg_scores);
    for (std::size_t ki = 0; ki < m.ks.size(); ++ki) {
      m.hr[ki] += hit_rate(rank, m.ks[ki]);
      m.ndcg[ki] += ndcg(rank, m.ks[ki]);
    }
    if (trials) trials->push_back({x.i, negatives[row], rank});
  }
  const double n = static_cast<double>(interactions.size());
  for (std::size_t ki = 0; ki < m.ks.size(); ++ki) {
    m.hr[ki] /= n;
    m.ndcg[ki] /= n;
  }
  return m;
}

}  // namespace melon
