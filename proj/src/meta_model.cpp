#include "melon/meta_model.hpp"

#include <cmath>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor glorot_vec(std::size_t n, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(n + 1));
  Tensor t({n});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

MetaModel::MetaModel(MelonOptions opt) : opt_(opt) {
  if (opt_.role_layers < 1) throw ConfigError("meta: role_layers must be >= 1");
  Rng rng(Rng::mix(opt_.seed, 0x6d656c6fu));
  const std::size_t d = static_cast<std::size_t>(opt_.embed_dim);
  const std::size_t r = static_cast<std::size_t>(opt_.repr());
  const bool want_interaction = opt_.inputs != MelonOptions::Inputs::ParameterOnly;
  const bool want_role = opt_.inputs != MelonOptions::Inputs::InteractionOnly;

  if (want_interaction) {
    att_user_ = phi_.add("att_user", glorot_vec(2 * d, rng));
    att_item_ = phi_.add("att_item", glorot_vec(2 * d, rng));
    ext_user_w_ = phi_.add("ext_user_w", glorot(2 * d, r, rng));
    ext_user_b_ = phi_.add("ext_user_b", Tensor({r}));
    ext_item_w_ = phi_.add("ext_item_w", glorot(2 * d, r, rng));
    ext_item_b_ = phi_.add("ext_item_b", Tensor({r}));
    inter_w_ = phi_.add("inter_w", glorot(2 * r, r, rng));
    inter_b_ = phi_.add("inter_b", Tensor({r}));
  }
  if (want_role) {
    std::size_t in = 6;
    for (int l = 0; l < opt_.role_layers; ++l) {
      role_w_.push_back(phi_.add("role_w" + std::to_string(l), glorot(in, r, rng)));
      role_b_.push_back(phi_.add("role_b" + std::to_string(l), Tensor({r})));
      in = r;
    }
  }

  const std::size_t head_in = (want_interaction && want_role) ? 2 * r : r;
  head_w_ = phi_.add("head_w", glorot(head_in, 1, rng));
  // Sigmoid head starts near sigma(-4) ~ 0.018 so early updates stay tame.
  head_b_ = phi_.add("head_b", Tensor::full({1}, -4.0));
  if (opt_.forget_gate) {
    forget_w_ = phi_.add("forget_w", glorot(head_in, 1, rng));
    // Retention starts near sigma(5) ~ 0.993.
    forget_b_ = phi_.add("forget_b", Tensor::full({1}, 5.0));
  }
}

std::pair<double, double> MetaModel::preprocess(double v, double p) {
  const double cut = std::exp(-p);
  if (std::abs(v) >= cut) {
    return {std::log(std::abs(v)) / p, v > 0.0 ? 1.0 : -1.0};
  }
  return {-1.0, std::exp(p) * v};
}

int MetaModel::attention_weights_var(ParamLookup& phi, Side side,
                                     std::span<const double> center,
                                     const std::vector<std::vector<double>>& neighbors) const {
  if (neighbors.empty()) throw NumericError("meta: attention over zero neighbors");
  Tape& t = phi.tape();
  const std::size_t d = center.size();
  const std::size_t k = neighbors.size();

  Tensor cat({k, 2 * d});
  for (std::size_t n = 0; n < k; ++n) {
    for (std::size_t j = 0; j < d; ++j) {
      cat[n * 2 * d + j] = center[j];
      cat[n * 2 * d + d + j] = neighbors[n][j];
    }
  }
  const int pairs = t.leaf(std::move(cat));
  const int a = t.reshape(phi.whole(side == Side::User ? att_user_ : att_item_), {2 * d, 1});
  const int scores = t.leaky_relu(t.matmul(pairs, a), opt_.leaky_slope);
  return t.softmax(t.reshape(scores, {1, k}));
}

int MetaModel::extended_embedding_var(ParamLookup& phi, Side side,
                                      std::span<const double> self_emb,
                                      const std::vector<std::vector<double>>& neighbors) const {
  if (ext_user_w_ < 0) throw NumericError("meta: interaction representation disabled in this mode");
  Tape& t = phi.tape();
  const std::size_t d = self_emb.size();
  const std::size_t r = static_cast<std::size_t>(opt_.repr());

  int input;  // (1 x 2d) = [e_self, aggregate]
  if (neighbors.empty()) {
    Tensor flat({1, 2 * d});
    for (std::size_t j = 0; j < d; ++j) flat[j] = self_emb[j];
    input = t.leaf(std::move(flat));
  } else {
    const int alpha = attention_weights_var(phi, side, self_emb, neighbors);
    Tensor nb({neighbors.size(), d});
    for (std::size_t n = 0; n < neighbors.size(); ++n) {
      for (std::size_t j = 0; j < d; ++j) nb[n * d + j] = neighbors[n][j];
    }
    const int agg = t.matmul(alpha, t.leaf(std::move(nb)));
    Tensor self({1, d}, {self_emb.begin(), self_emb.end()});
    input = t.concat(std::vector<int>{t.leaf(std::move(self)), agg}, 1);
  }

  const int w = side == Side::User ? ext_user_w_ : ext_item_w_;
  const int b = side == Side::User ? ext_user_b_ : ext_item_b_;
  return t.relu(t.add(t.matmul(input, phi.whole(w)), t.broadcast(phi.whole(b), {1, r})));
}

int MetaModel::interaction_repr_var(ParamLookup& phi, int ext_user, int ext_item) const {
  if (inter_w_ < 0) throw NumericError("meta: interaction representation disabled in this mode");
  Tape& t = phi.tape();
  const std::size_t r = static_cast<std::size_t>(opt_.repr());
  const int both = t.concat(std::vector<int>{ext_user, ext_item}, 1);
  return t.relu(t.add(t.matmul(both, phi.whole(inter_w_)), t.broadcast(phi.whole(inter_b_), {1, r})));
}

int MetaModel::interaction_repr_for(ParamLookup& phi, const Interaction& x,
                                    const Recommender& rec, const HistoryStore& hist,
                                    std::uint64_t gat_seed) const {
  auto gather = [&](Side side) {
    const bool user_side = side == Side::User;
    // Seeded per (side, entity, t): identical interactions see identical
    // neighborhoods in every step that rebuilds the rates.
    const std::uint64_t s =
        Rng::mix(Rng::mix(gat_seed, user_side ? 0 : 1),
                 Rng::mix(static_cast<std::uint64_t>(user_side ? x.u : x.i),
                          static_cast<std::uint64_t>(x.t)));
    const auto ids = user_side ? hist.user_history(x.u, x.t, opt_.neighbor_cap, s)
                               : hist.item_history(x.i, x.t, opt_.neighbor_cap, s);
    std::vector<std::vector<double>> embs;
    embs.reserve(ids.size());
    for (int id : ids) {
      const auto e = user_side ? rec.item_embedding(id) : rec.user_embedding(id);
      embs.emplace_back(e.begin(), e.end());
    }
    return embs;
  };
  const int ext_u = extended_embedding_var(phi, Side::User, rec.user_embedding(x.u), gather(Side::User));
  const int ext_i = extended_embedding_var(phi, Side::Item, rec.item_embedding(x.i), gather(Side::Item));
  return interaction_repr_var(phi, ext_u, ext_i);
}

int MetaModel::role_repr_var(ParamLookup& phi, const Tensor& features) const {
  if (role_w_.empty()) throw NumericError("meta: role representation disabled in this mode");
  Tape& t = phi.tape();
  const std::size_t r = static_cast<std::size_t>(opt_.repr());
  const std::size_t c = features.rows();
  int h = t.leaf(features);
  for (std::size_t l = 0; l < role_w_.size(); ++l) {
    h = t.relu(t.add(t.matmul(h, phi.whole(role_w_[l])),
                     t.broadcast(phi.whole(role_b_[l]), {c, r})));
  }
  return h;
}

Tensor MetaModel::role_features(std::span<const double> theta_values,
                                std::span<const double> grads, double loss) const {
  const std::size_t c = theta_values.size();
  if (grads.size() != c) throw NumericError("meta: feature length mismatch");
  const auto [loss_mag, loss_sign] = preprocess(loss, opt_.preprocess_p);
  Tensor out({c, 6});
  for (std::size_t i = 0; i < c; ++i) {
    const auto [vm, vs] = preprocess(theta_values[i], opt_.preprocess_p);
    const auto [gm, gs] = preprocess(grads[i], opt_.preprocess_p);
    out[i * 6 + 0] = vm;
    out[i * 6 + 1] = vs;
    out[i * 6 + 2] = loss_mag;
    out[i * 6 + 3] = loss_sign;
    out[i * 6 + 4] = gm;
    out[i * 6 + 5] = gs;
  }
  return out;
}

int MetaModel::head_var(ParamLookup& phi, int head_w, int head_b, int h_x, int h_theta,
                        std::size_t count) const {
  Tape& t = phi.tape();
  const std::size_t r = static_cast<std::size_t>(opt_.repr());
  int input;
  switch (opt_.inputs) {
    case MelonOptions::Inputs::TwoDirectional:
      input = t.concat(std::vector<int>{t.broadcast(h_x, {count, r}), h_theta}, 1);
      break;
    case MelonOptions::Inputs::InteractionOnly:
      input = h_x;  // (1 x r); broadcast after the head
      break;
    case MelonOptions::Inputs::ParameterOnly:
      input = h_theta;
      break;
    default:
      throw NumericError("meta: bad input mode");
  }
  const int logits = t.add(
      t.matmul(input, phi.whole(head_w)),
      t.broadcast(phi.whole(head_b), {t.value(input).rows(), 1}));
  const int gate = t.sigmoid(logits);
  if (opt_.inputs == MelonOptions::Inputs::InteractionOnly) {
    // one rate per interaction, shared across all its coordinates
    return t.reshape(t.broadcast(t.reshape(gate, {1}), {count, 1}), {count});
  }
  return t.reshape(gate, {count});
}

int MetaModel::rate_var(ParamLookup& phi, int h_x, int h_theta, std::size_t count) const {
  return head_var(phi, head_w_, head_b_, h_x, h_theta, count);
}

int MetaModel::forget_var(ParamLookup& phi, int h_x, int h_theta, std::size_t count) const {
  if (!opt_.forget_gate) throw NumericError("meta: forget gate disabled");
  return head_var(phi, forget_w_, forget_b_, h_x, h_theta, count);
}

MetaModel::RatesVar MetaModel::interaction_rates_var(ParamLookup& phi, const Interaction& x,
                                                     double loss, const InteractionGrad& grad,
                                                     const Recommender& rec,
                                                     const HistoryStore& hist,
                                                     std::uint64_t gat_seed) const {
  const bool want_interaction = opt_.inputs != MelonOptions::Inputs::ParameterOnly;
  const bool want_role = opt_.inputs != MelonOptions::Inputs::InteractionOnly;

  const int h_x =
      want_interaction ? interaction_repr_for(phi, x, rec, hist, gat_seed) : -1;

  RatesVar out;
  const auto& store = rec.params();
  for (std::size_t ri = 0; ri < grad.slice.ranges.size(); ++ri) {
    const FlatRange& range = grad.slice.ranges[ri];
    const std::size_t c = range.size();
    int h_theta = -1;
    if (want_role) {
      const Tensor features = role_features(store.flat(range), grad.range_grad(ri), loss);
      h_theta = role_repr_var(phi, features);
    }
    out.w.push_back(rate_var(phi, h_x, h_theta, c));
    if (opt_.forget_gate) out.f.push_back(forget_var(phi, h_x, h_theta, c));
  }
  return out;
}

}  // namespace melon
