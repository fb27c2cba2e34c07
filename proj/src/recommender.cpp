#include "melon/recommender.hpp"

#include <cmath>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

namespace {

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normal();
  return t;
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

void Recommender::check_user(int u) const {
  if (u < 0 || u >= cfg_.num_users) {
    throw DataError(std::string(kind()) + ": unknown user id " + std::to_string(u));
  }
}

void Recommender::check_item(int i) const {
  if (i < 0 || i >= cfg_.num_items) {
    throw DataError(std::string(kind()) + ": unknown item id " + std::to_string(i));
  }
}

BprModel::BprModel(RecommenderConfig cfg) : Recommender(std::move(cfg)) {
  Rng rng(Rng::mix(cfg_.seed, 0x6270u));
  const std::size_t d = static_cast<std::size_t>(cfg_.embed_dim);
  user_emb_ = params_.add(
      "user_emb", normal_init({static_cast<std::size_t>(cfg_.num_users), d}, 0.01, rng));
  item_emb_ = params_.add(
      "item_emb", normal_init({static_cast<std::size_t>(cfg_.num_items), d}, 0.01, rng));
}

double BprModel::score(int u, int i) const {
  check_user(u);
  check_item(i);
  const auto eu = user_embedding(u);
  const auto ei = item_embedding(i);
  double s = 0.0;
  for (std::size_t k = 0; k < eu.size(); ++k) s += eu[k] * ei[k];
  return s;
}

int BprModel::score_var(ParamLookup& lookup, int u, int i) const {
  check_user(u);
  check_item(i);
  Tape& t = lookup.tape();
  const int eu = lookup.row(user_emb_, static_cast<std::size_t>(u));
  const int ei = lookup.row(item_emb_, static_cast<std::size_t>(i));
  return t.sum(t.mul(eu, ei));
}

DependentSlice BprModel::dependent_slice(int u, int i_pos, int i_neg) const {
  check_user(u);
  check_item(i_pos);
  check_item(i_neg);
  DependentSlice s;
  s.ranges = {params_.row_range(user_emb_, static_cast<std::size_t>(u)),
              params_.row_range(item_emb_, static_cast<std::size_t>(i_pos)),
              params_.row_range(item_emb_, static_cast<std::size_t>(i_neg))};
  return s;
}

std::span<const double> BprModel::user_embedding(int u) const {
  check_user(u);
  return params_.flat(params_.row_range(user_emb_, static_cast<std::size_t>(u)));
}

std::span<const double> BprModel::item_embedding(int i) const {
  check_item(i);
  return params_.flat(params_.row_range(item_emb_, static_cast<std::size_t>(i)));
}

NcfModel::NcfModel(RecommenderConfig cfg) : Recommender(std::move(cfg)) {
  if (cfg_.ncf_tower.empty()) throw ConfigError("ncf: tower must have at least one layer");
  Rng rng(Rng::mix(cfg_.seed, 0x6e6366u));
  const std::size_t d = static_cast<std::size_t>(cfg_.embed_dim);
  const std::size_t users = static_cast<std::size_t>(cfg_.num_users);
  const std::size_t items = static_cast<std::size_t>(cfg_.num_items);
  gmf_user_ = params_.add("gmf_user", normal_init({users, d}, 0.01, rng));
  gmf_item_ = params_.add("gmf_item", normal_init({items, d}, 0.01, rng));
  mlp_user_ = params_.add("mlp_user", normal_init({users, d}, 0.01, rng));
  mlp_item_ = params_.add("mlp_item", normal_init({items, d}, 0.01, rng));

  std::size_t in = 2 * d;
  for (std::size_t l = 0; l < cfg_.ncf_tower.size(); ++l) {
    const std::size_t out = static_cast<std::size_t>(cfg_.ncf_tower[l]);
    tower_w_.push_back(params_.add("mlp_w" + std::to_string(l), glorot_init(in, out, rng)));
    tower_b_.push_back(params_.add("mlp_b" + std::to_string(l), Tensor({out})));
    in = out;
  }
  fuse_w_ = params_.add("fuse_w", glorot_init(d + in, 1, rng));
  fuse_b_ = params_.add("fuse_b", Tensor({1}));
}

double NcfModel::score(int u, int i) const {
  check_user(u);
  check_item(i);
  const std::size_t d = static_cast<std::size_t>(cfg_.embed_dim);
  const auto gu = params_.flat(params_.row_range(gmf_user_, static_cast<std::size_t>(u)));
  const auto gi = params_.flat(params_.row_range(gmf_item_, static_cast<std::size_t>(i)));
  const auto mu = params_.flat(params_.row_range(mlp_user_, static_cast<std::size_t>(u)));
  const auto mi = params_.flat(params_.row_range(mlp_item_, static_cast<std::size_t>(i)));

  std::vector<double> h(2 * d);
  for (std::size_t k = 0; k < d; ++k) h[k] = mu[k];
  for (std::size_t k = 0; k < d; ++k) h[d + k] = mi[k];
  for (std::size_t l = 0; l < tower_w_.size(); ++l) {
    const Tensor& w = params_.tensor(tower_w_[l]);
    const Tensor& b = params_.tensor(tower_b_[l]);
    std::vector<double> next(w.cols());
    for (std::size_t c = 0; c < w.cols(); ++c) {
      double acc = b[c];
      for (std::size_t r = 0; r < w.rows(); ++r) acc += h[r] * w.at(r, c);
      next[c] = acc > 0.0 ? acc : 0.0;
    }
    h = std::move(next);
  }

  const Tensor& fw = params_.tensor(fuse_w_);
  double s = params_.tensor(fuse_b_)[0];
  for (std::size_t k = 0; k < d; ++k) s += gu[k] * gi[k] * fw[k];
  for (std::size_t k = 0; k < h.size(); ++k) s += h[k] * fw[d + k];
  return s;
}

int NcfModel::score_var(ParamLookup& lookup, int u, int i) const {
  check_user(u);
  check_item(i);
  Tape& t = lookup.tape();
  const std::size_t d = static_cast<std::size_t>(cfg_.embed_dim);

  const int gu = t.reshape(lookup.row(gmf_user_, static_cast<std::size_t>(u)), {1, d});
  const int gi = t.reshape(lookup.row(gmf_item_, static_cast<std::size_t>(i)), {1, d});
  const int gmf = t.mul(gu, gi);

  const int mu = t.reshape(lookup.row(mlp_user_, static_cast<std::size_t>(u)), {1, d});
  const int mi = t.reshape(lookup.row(mlp_item_, static_cast<std::size_t>(i)), {1, d});
  int h = t.concat(std::vector<int>{mu, mi}, 1);
  for (std::size_t l = 0; l < tower_w_.size(); ++l) {
    const int w = lookup.whole(tower_w_[l]);
    const int b = lookup.whole(tower_b_[l]);
    const std::size_t out = params_.tensor(tower_w_[l]).cols();
    h = t.relu(t.add(t.matmul(h, w), t.broadcast(b, {1, out})));
  }

  const int fused = t.concat(std::vector<int>{gmf, h}, 1);
  const int fw = lookup.whole(fuse_w_);
  const int fb = lookup.whole(fuse_b_);
  return t.sum(t.add(t.matmul(fused, fw), t.broadcast(fb, {1, 1})));
}

DependentSlice NcfModel::dependent_slice(int u, int i_pos, int i_neg) const {
  check_user(u);
  check_item(i_pos);
  check_item(i_neg);
  DependentSlice s;
  s.ranges = {params_.row_range(gmf_user_, static_cast<std::size_t>(u)),
              params_.row_range(mlp_user_, static_cast<std::size_t>(u)),
              params_.row_range(gmf_item_, static_cast<std::size_t>(i_pos)),
              params_.row_range(gmf_item_, static_cast<std::size_t>(i_neg)),
              params_.row_range(mlp_item_, static_cast<std::size_t>(i_pos)),
              params_.row_range(mlp_item_, static_cast<std::size_t>(i_neg))};
  for (std::size_t l = 0; l < tower_w_.size(); ++l) {
    s.ranges.push_back(params_.whole_range(tower_w_[l]));
    s.ranges.push_back(params_.whole_range(tower_b_[l]));
  }
  s.ranges.push_back(params_.whole_range(fuse_w_));
  s.ranges.push_back(params_.whole_range(fuse_b_));
  return s;
}

std::span<const double> NcfModel::user_embedding(int u) const {
  check_user(u);
  return params_.flat(params_.row_range(gmf_user_, static_cast<std::size_t>(u)));
}

std::span<const double> NcfModel::item_embedding(int i) const {
  check_item(i);
  return params_.flat(params_.row_range(gmf_item_, static_cast<std::size_t>(i)));
}

std::unique_ptr<Recommender> make_recommender(const std::string& kind, RecommenderConfig cfg) {
  if (kind == "bpr") return std::make_unique<BprModel>(std::move(cfg));
  if (kind == "ncf") return std::make_unique<NcfModel>(std::move(cfg));
  throw ConfigError("unknown recommender kind '" + kind + "'");
}

double ranking_loss(double s_pos, double s_neg) {
  const double x = -(s_pos - s_neg);
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

int ranking_loss_var(Tape& tape, int s_pos, int s_neg) {
  return tape.softplus(tape.neg(tape.sub(s_pos, s_neg)));
}

std::span<const double> InteractionGrad::range_grad(std::size_t range_idx) const {
  std::size_t offset = 0;
  for (std::size_t k = 0; k < range_idx; ++k) offset += slice.ranges[k].size();
  return {grad.data() + offset, slice.ranges[range_idx].size()};
}

std::vector<InteractionGrad> per_interaction_grads(const Recommender& rec,
                                                   const MiniBatch& batch) {
  if (batch.interactions.empty()) throw DataError("per_interaction_grads: empty batch");
  std::vector<InteractionGrad> out;
  out.reserve(batch.size());
  Tape tape;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& x = batch.interactions[j];
    if (j >= batch.negatives.size() || batch.negatives[j].empty()) {
      throw DataError("per_interaction_grads: batch row " + std::to_string(j) +
                      " has no negative sample");
    }
    const int i_neg = batch.negatives[j][0];
    const std::size_t mark = tape.checkpoint();
    ParamLookup lookup(tape, rec.params());
    const int pos = rec.score_var(lookup, x.u, x.i);
    const int neg = rec.score_var(lookup, x.u, i_neg);
    const int loss = ranking_loss_var(tape, pos, neg);
    tape.backward(loss);

    InteractionGrad g;
    g.loss = tape.value_scalar(loss);
    g.slice = rec.dependent_slice(x.u, x.i, i_neg);
    g.grad.reserve(g.slice.size());
    for (const auto& r : g.slice.ranges) {
      const int node = lookup.find_leaf(r.param, r.row);
      if (node < 0) {
        throw NumericError("per_interaction_grads: slice range not touched by forward pass");
      }
      const Tensor& adj = tape.adjoint(node);
      g.grad.insert(g.grad.end(), adj.data(), adj.data() + adj.numel());
    }
    out.push_back(std::move(g));
    tape.rewind(mark);
  }
  return out;
}

}  // namespace melon
