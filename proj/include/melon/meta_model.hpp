#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "melon/history.hpp"
#include "melon/params.hpp"
#include "melon/recommender.hpp"

namespace melon {

struct MelonOptions {
  int embed_dim = 32;
  int repr_dim = 0;  // 0 -> embed_dim
  int role_layers = 2;
  double preprocess_p = 10.0;
  int neighbor_cap = 10;
  double leaky_slope = 0.2;
  bool forget_gate = true;

  enum class Inputs { TwoDirectional, InteractionOnly, ParameterOnly };
  Inputs inputs = Inputs::TwoDirectional;

  std::uint64_t seed = 1;

  int repr() const { return repr_dim > 0 ? repr_dim : embed_dim; }
};

// The meta-model: attends over interaction histories to represent the
// incoming interaction, maps (value, loss, gradient) role features per
// parameter coordinate, and fuses both into one learning rate per
// (interaction, coordinate) pair, plus an optional forgetting rate.
class MetaModel {
 public:
  explicit MetaModel(MelonOptions opt);

  const MelonOptions& options() const { return opt_; }
  ParamStore& params() { return phi_; }
  const ParamStore& params() const { return phi_; }

  // Scale/sign split used on parameter values, losses, and gradients:
  // |v| >= e^-p -> (log|v|/p, sgn v), else (-1, e^p * v).
  static std::pair<double, double> preprocess(double v, double p);

  enum class Side { User, Item };

  // Attention over neighbors, softmax(LeakyReLU([e_c, e_n]^T a)). Returns a
  // (1 x K) node. Requires at least one neighbor.
  int attention_weights_var(ParamLookup& phi, Side side, std::span<const double> center,
                            const std::vector<std::vector<double>>& neighbors) const;

  // ReLU(W [e_self, sum_k alpha_k e_k] + b); empty histories contribute a
  // zero aggregate. Returns a (1 x repr) node.
  int extended_embedding_var(ParamLookup& phi, Side side, std::span<const double> self_emb,
                             const std::vector<std::vector<double>>& neighbors) const;

  // ReLU(W_x [ext_u, ext_i] + b_x), (1 x repr).
  int interaction_repr_var(ParamLookup& phi, int ext_user, int ext_item) const;

  // Full Step-I pipeline for one interaction using the recommender's
  // embeddings and sampled neighborhoods.
  int interaction_repr_for(ParamLookup& phi, const Interaction& x, const Recommender& rec,
                           const HistoryStore& hist, std::uint64_t gat_seed) const;

  // Role MLP over preprocessed (value, loss, gradient) features, (C x repr).
  int role_repr_var(ParamLookup& phi, const Tensor& features) const;

  // (C x 6) feature block for one dependent range.
  Tensor role_features(std::span<const double> theta_values, std::span<const double> grads,
                       double loss) const;

  // sigmoid(W_lr [h_x, h_theta] + b_lr) as a length-C vector node. Pass -1
  // for the unused representation in the ablation modes.
  int rate_var(ParamLookup& phi, int h_x, int h_theta, std::size_t count) const;
  int forget_var(ParamLookup& phi, int h_x, int h_theta, std::size_t count) const;

  struct RatesVar {
    std::vector<int> w;  // one node per dependent range, each shape (len)
    std::vector<int> f;  // forgetting rates; empty when the gate is off
  };

  // Steps I-III for one interaction: one learning rate per dependent
  // parameter coordinate. Loss/gradient/parameter inputs are plain values
  // (constants on the tape); only the meta-model parameters carry gradients.
  RatesVar interaction_rates_var(ParamLookup& phi, const Interaction& x, double loss,
                                 const InteractionGrad& grad, const Recommender& rec,
                                 const HistoryStore& hist, std::uint64_t gat_seed) const;

 private:
  int head_var(ParamLookup& phi, int head_w, int head_b, int h_x, int h_theta,
               std::size_t count) const;

  MelonOptions opt_;
  ParamStore phi_;
  int att_user_ = -1, att_item_ = -1;
  int ext_user_w_ = -1, ext_user_b_ = -1, ext_item_w_ = -1, ext_item_b_ = -1;
  int inter_w_ = -1, inter_b_ = -1;
  std::vector<int> role_w_, role_b_;
  int head_w_ = -1, head_b_ = -1;
  int forget_w_ = -1, forget_b_ = -1;
};

}  // namespace melon
