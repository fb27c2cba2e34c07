#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "melon/dataset.hpp"
#include "melon/params.hpp"

namespace melon {

struct RecommenderConfig {
  int num_users = 0;
  int num_items = 0;
  int embed_dim = 32;
  std::vector<int> ncf_tower = {64, 32, 16};
  std::uint64_t seed = 1;
};

// A scoring model over (user, item) pairs exposing both a plain forward pass
// (evaluation) and a tape-building forward pass (training). Scores are raw
// logits; the pairwise loss consumes differences.
class Recommender {
 public:
  explicit Recommender(RecommenderConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Recommender() = default;

  virtual const char* kind() const = 0;
  virtual double score(int u, int i) const = 0;
  // Single-element score node built through `lookup` so parameter leaves are
  // shared and overridable.
  virtual int score_var(ParamLookup& lookup, int u, int i) const = 0;
  virtual DependentSlice dependent_slice(int u, int i_pos, int i_neg) const = 0;

  // Embeddings the meta-model attends over.
  virtual std::span<const double> user_embedding(int u) const = 0;
  virtual std::span<const double> item_embedding(int i) const = 0;

  int num_users() const { return cfg_.num_users; }
  int num_items() const { return cfg_.num_items; }
  int embed_dim() const { return cfg_.embed_dim; }
  const RecommenderConfig& config() const { return cfg_; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 protected:
  void check_user(int u) const;
  void check_item(int i) const;

  RecommenderConfig cfg_;
  ParamStore params_;
};

// Matrix-factorization scorer: dot(e_u, e_i).
class BprModel : public Recommender {
 public:
  explicit BprModel(RecommenderConfig cfg);
  const char* kind() const override { return "bpr"; }
  double score(int u, int i) const override;
  int score_var(ParamLookup& lookup, int u, int i) const override;
  DependentSlice dependent_slice(int u, int i_pos, int i_neg) const override;
  std::span<const double> user_embedding(int u) const override;
  std::span<const double> item_embedding(int i) const override;

 private:
  int user_emb_, item_emb_;
};

// GMF branch (elementwise product) fused with an MLP branch over the
// concatenated MLP embeddings.
class NcfModel : public Recommender {
 public:
  explicit NcfModel(RecommenderConfig cfg);
  const char* kind() const override { return "ncf"; }
  double score(int u, int i) const override;
  int score_var(ParamLookup& lookup, int u, int i) const override;
  DependentSlice dependent_slice(int u, int i_pos, int i_neg) const override;
  std::span<const double> user_embedding(int u) const override;
  std::span<const double> item_embedding(int i) const override;

 private:
  int gmf_user_, gmf_item_, mlp_user_, mlp_item_;
  std::vector<int> tower_w_, tower_b_;
  int fuse_w_, fuse_b_;
};

std::unique_ptr<Recommender> make_recommender(const std::string& kind, RecommenderConfig cfg);

// -log sigmoid(s_pos - s_neg), evaluated in softplus form so large gaps do
// not overflow.
double ranking_loss(double s_pos, double s_neg);
int ranking_loss_var(Tape& tape, int s_pos, int s_neg);

struct InteractionGrad {
  double loss = 0.0;
  DependentSlice slice;
  std::vector<double> grad;  // concatenated in slice-range order

  std::span<const double> range_grad(std::size_t range_idx) const;
};

// One (loss, sparse gradient) pair per batch row, evaluated at the current
// parameters with the row's first negative.
std::vector<InteractionGrad> per_interaction_grads(const Recommender& rec,
                                                   const MiniBatch& batch);

}  // namespace melon
