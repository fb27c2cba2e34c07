#include "melon/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

std::vector<std::size_t> LearningRateMatrix::dependent_columns(const ParamStore& store) const {
  std::vector<std::size_t> cols;
  for (const auto& row : rows) {
    for (const auto& r : row.slice.ranges) {
      const std::size_t base = store.global_index(r);
      for (std::size_t k = 0; k < r.size(); ++k) cols.push_back(base + k);
    }
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

Tensor LearningRateMatrix::densify(Fill fill, const ParamStore& store,
                                   const std::vector<std::size_t>* columns) const {
  const std::vector<std::size_t> fallback =
      columns ? std::vector<std::size_t>{} : dependent_columns(store);
  const std::vector<std::size_t>& cols = columns ? *columns : fallback;
  std::unordered_map<std::size_t, std::size_t> col_of;
  col_of.reserve(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) col_of[cols[c]] = c;

  Tensor dense({rows.size(), cols.size()});
  std::vector<char> set(rows.size() * cols.size(), 0);
  for (std::size_t rix = 0; rix < rows.size(); ++rix) {
    const auto& row = rows[rix];
    std::size_t pos = 0;
    for (const auto& range : row.slice.ranges) {
      const std::size_t base = store.global_index(range);
      for (std::size_t k = 0; k < range.size(); ++k, ++pos) {
        const auto it = col_of.find(base + k);
        if (it == col_of.end()) continue;
        dense[rix * cols.size() + it->second] = row.w[pos];
        set[rix * cols.size() + it->second] = 1;
      }
    }
  }

  switch (fill) {
    case Fill::Zero:
      break;
    case Fill::RowConstant: {
      for (std::size_t rix = 0; rix < rows.size(); ++rix) {
        const double v = rows[rix].w.empty() ? 0.0 : rows[rix].w.front();
        for (std::size_t c = 0; c < cols.size(); ++c) {
          if (!set[rix * cols.size() + c]) dense[rix * cols.size() + c] = v;
        }
      }
      break;
    }
    case Fill::ColumnConstant: {
      std::vector<double> col_value(cols.size(), 0.0);
      std::vector<char> col_known(cols.size(), 0);
      for (std::size_t rix = 0; rix < rows.size(); ++rix) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
          if (set[rix * cols.size() + c] && !col_known[c]) {
            col_value[c] = dense[rix * cols.size() + c];
            col_known[c] = 1;
          }
        }
      }
      for (std::size_t rix = 0; rix < rows.size(); ++rix) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
          if (!set[rix * cols.size() + c]) dense[rix * cols.size() + c] = col_value[c];
        }
      }
      break;
    }
  }
  return dense;
}

BatchRatesVar Strategy::rates_var(ParamLookup&, const StrategyContext&) {
  throw NumericError(std::string(name()) + ": rate computation is not meta-trainable");
}

namespace {

LearningRateMatrix constant_rates(const StrategyContext& ctx, double value) {
  LearningRateMatrix m;
  m.total_params = ctx.rec.params().total_size();
  m.rows.reserve(ctx.grads.size());
  for (const auto& g : ctx.grads) {
    LearningRateMatrix::Row row;
    row.slice = g.slice;
    row.w.assign(g.slice.size(), value);
    m.rows.push_back(std::move(row));
  }
  return m;
}

}  // namespace

LearningRateMatrix DefaultStrategy::rates(const StrategyContext& ctx) {
  const double n = static_cast<double>(ctx.batch.size());
  return constant_rates(ctx, ctx.eta / n);
}

LearningRateMatrix EalsStrategy::rates(const StrategyContext& ctx) {
  if (boost_ <= 0.0) throw ConfigError("eals: boost must be > 0");
  const double n = static_cast<double>(ctx.batch.size());
  const double c = ctx.online_phase ? boost_ : 1.0;
  return constant_rates(ctx, ctx.eta * c / n);
}

MwnetStrategy::MwnetStrategy(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw ConfigError("mwnet: hidden width must be >= 1");
  Rng rng(Rng::mix(seed, 0x6d776eu));
  const std::size_t h = static_cast<std::size_t>(hidden);
  const double limit = std::sqrt(6.0 / static_cast<double>(1 + h));
  Tensor w0({1, h});
  for (std::size_t i = 0; i < h; ++i) w0[i] = rng.uniform(-limit, limit);
  Tensor w1({h, 1});
  for (std::size_t i = 0; i < h; ++i) w1[i] = rng.uniform(-limit, limit);
  w0_ = phi_.add("w0", std::move(w0));
  b0_ = phi_.add("b0", Tensor({h}));
  w1_ = phi_.add("w1", std::move(w1));
  b1_ = phi_.add("b1", Tensor({1}));
}

double MwnetStrategy::importance(double loss) const {
  const Tensor& w0 = phi_.tensor(w0_);
  const Tensor& b0 = phi_.tensor(b0_);
  const Tensor& w1 = phi_.tensor(w1_);
  double acc = phi_.tensor(b1_)[0];
  for (std::size_t j = 0; j < w0.numel(); ++j) {
    const double hj = loss * w0[j] + b0[j];
    if (hj > 0.0) acc += hj * w1[j];
  }
  if (acc >= 0.0) return 1.0 / (1.0 + std::exp(-acc));
  const double e = std::exp(acc);
  return e / (1.0 + e);
}

LearningRateMatrix MwnetStrategy::rates(const StrategyContext& ctx) {
  LearningRateMatrix m;
  m.total_params = ctx.rec.params().total_size();
  for (const auto& g : ctx.grads) {
    LearningRateMatrix::Row row;
    row.slice = g.slice;
    row.w.assign(g.slice.size(), ctx.eta * importance(g.loss));
    m.rows.push_back(std::move(row));
  }
  return m;
}

BatchRatesVar MwnetStrategy::rates_var(ParamLookup& phi, const StrategyContext& ctx) {
  Tape& t = phi.tape();
  const std::size_t h = phi_.tensor(b0_).numel();
  BatchRatesVar out;
  for (const auto& g : ctx.grads) {
    const int loss = t.leaf(Tensor({1, 1}, {g.loss}));
    const int hid = t.relu(t.add(t.matmul(loss, phi.whole(w0_)), t.broadcast(phi.whole(b0_), {1, h})));
    const int imp = t.sigmoid(t.add(t.matmul(hid, phi.whole(w1_)), t.broadcast(phi.whole(b1_), {1, 1})));
    const int rate = t.mul(imp, t.leaf(Tensor({1, 1}, {ctx.eta})));
    BatchRatesVar::Row row;
    for (const auto& range : g.slice.ranges) {
      row.w.push_back(
          t.reshape(t.broadcast(t.reshape(rate, {1}), {range.size(), 1}), {range.size()}));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

MetaSgdStrategy::MetaSgdStrategy(const ParamStore& rec_params, double eta_init) {
  if (eta_init <= 0.0) throw ConfigError("metasgd: eta must be > 0");
  // softplus(raw) == eta exactly at init
  const double raw = std::log(std::expm1(eta_init));
  for (int p = 0; p < rec_params.count(); ++p) {
    phi_.add("rate_" + rec_params.name(p),
             Tensor::full(rec_params.tensor(p).shape(), raw));
  }
}

LearningRateMatrix MetaSgdStrategy::rates(const StrategyContext& ctx) {
  LearningRateMatrix m;
  m.total_params = ctx.rec.params().total_size();
  for (const auto& g : ctx.grads) {
    LearningRateMatrix::Row row;
    row.slice = g.slice;
    row.w.reserve(g.slice.size());
    for (const auto& range : g.slice.ranges) {
      const Tensor& raw = phi_.tensor(range.param);  // mirrored layout
      for (std::size_t k = range.begin; k < range.end; ++k) {
        const double x = raw[k];
        row.w.push_back(x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
      }
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

BatchRatesVar MetaSgdStrategy::rates_var(ParamLookup& phi, const StrategyContext& ctx) {
  Tape& t = phi.tape();
  BatchRatesVar out;
  for (const auto& g : ctx.grads) {
    BatchRatesVar::Row row;
    for (const auto& range : g.slice.ranges) {
      int raw;
      if (range.row >= 0) {
        raw = phi.row(range.param, static_cast<std::size_t>(range.row));
      } else {
        raw = t.reshape(phi.whole(range.param), {range.size()});
      }
      row.w.push_back(t.softplus(raw));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

MelonStrategy::MelonStrategy(MelonOptions opt, std::optional<double> frozen_rate)
    : meta_(opt), frozen_rate_(frozen_rate) {}

const char* MelonStrategy::name() const {
  switch (meta_.options().inputs) {
    case MelonOptions::Inputs::InteractionOnly: return "melon_i";
    case MelonOptions::Inputs::ParameterOnly: return "melon_p";
    default: return "melon";
  }
}

ParamStore* MelonStrategy::meta_params() {
  if (frozen_rate_) return nullptr;
  return &meta_.params();
}

LearningRateMatrix MelonStrategy::rates(const StrategyContext& ctx) {
  LearningRateMatrix m;
  m.total_params = ctx.rec.params().total_size();
  if (frozen_rate_) {
    return constant_rates(ctx, *frozen_rate_);
  }

  Tape scratch;
  ParamLookup phi(scratch, meta_.params());
  const BatchRatesVar nodes = rates_var(phi, ctx);
  for (const auto& node_row : nodes.rows) {
    LearningRateMatrix::Row row;
    row.slice = ctx.grads[m.rows.size()].slice;
    for (int w : node_row.w) {
      const Tensor& v = scratch.value(w);
      row.w.insert(row.w.end(), v.data(), v.data() + v.numel());
    }
    for (int f : node_row.f) {
      const Tensor& v = scratch.value(f);
      row.f.insert(row.f.end(), v.data(), v.data() + v.numel());
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

BatchRatesVar MelonStrategy::rates_var(ParamLookup& phi, const StrategyContext& ctx) {
  if (frozen_rate_) throw NumericError("melon: frozen rates are not meta-trainable");

  if (meta_.options().inputs == MelonOptions::Inputs::ParameterOnly) {
    // Parameter-wise ablation: inputs are the batch mean loss and the batch
    // mean gradient, so each coordinate gets one rate shared by every
    // interaction that touches it (columns constant across rows).
    const double n = static_cast<double>(ctx.grads.size());
    double mean_loss = 0.0;
    for (const auto& g : ctx.grads) mean_loss += g.loss;
    mean_loss /= n;

    std::map<std::pair<int, std::ptrdiff_t>, std::vector<double>> agg;
    std::map<std::pair<int, std::ptrdiff_t>, FlatRange> slot_range;
    for (const auto& g : ctx.grads) {
      for (std::size_t ri = 0; ri < g.slice.ranges.size(); ++ri) {
        const FlatRange& range = g.slice.ranges[ri];
        auto& acc = agg[{range.param, range.row}];
        acc.resize(range.size(), 0.0);
        const auto gspan = g.range_grad(ri);
        for (std::size_t k = 0; k < gspan.size(); ++k) acc[k] += gspan[k] / n;
        slot_range[{range.param, range.row}] = range;
      }
    }

    std::map<std::pair<int, std::ptrdiff_t>, std::pair<int, int>> slot_nodes;
    for (const auto& [key, grad] : agg) {
      const FlatRange& range = slot_range[key];
      const Tensor features =
          meta_.role_features(ctx.rec.params().flat(range), grad, mean_loss);
      const int h_theta = meta_.role_repr_var(phi, features);
      const int w = meta_.rate_var(phi, -1, h_theta, range.size());
      const int f = meta_.options().forget_gate
                        ? meta_.forget_var(phi, -1, h_theta, range.size())
                        : -1;
      slot_nodes[key] = {w, f};
    }

    BatchRatesVar out;
    for (const auto& g : ctx.grads) {
      BatchRatesVar::Row row;
      for (const auto& range : g.slice.ranges) {
        const auto [w, f] = slot_nodes[{range.param, range.row}];
        row.w.push_back(w);
        if (f >= 0) row.f.push_back(f);
      }
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  BatchRatesVar out;
  for (std::size_t j = 0; j < ctx.grads.size(); ++j) {
    const auto rv = meta_.interaction_rates_var(phi, ctx.batch.interactions[j],
                                                ctx.grads[j].loss, ctx.grads[j], ctx.rec,
                                                ctx.hist, ctx.gat_seed);
    out.rows.push_back({rv.w, rv.f});
  }
  return out;
}

ApplyStats apply_rates(ParamStore& params, const LearningRateMatrix& rates,
                       std::span<const InteractionGrad> grads) {
  if (rates.rows.size() != grads.size()) {
    throw NumericError("apply: rate rows do not match gradient rows");
  }
  ApplyStats stats;

  // Forgetting first: each touched coordinate keeps the mean retention over
  // the interactions that touch it (the single-interaction case reduces to
  // theta' = f * theta - w * grad).
  std::unordered_map<std::size_t, std::pair<double, int>> retention;
  for (const auto& row : rates.rows) {
    if (row.f.empty()) continue;
    std::size_t pos = 0;
    for (const auto& range : row.slice.ranges) {
      const std::size_t base = params.global_index(range);
      for (std::size_t k = 0; k < range.size(); ++k, ++pos) {
        auto& slot = retention[base + k];
        slot.first += row.f[pos];
        slot.second += 1;
      }
    }
  }
  if (!retention.empty()) {
    for (const auto& row : rates.rows) {
      std::size_t pos = 0;
      for (const auto& range : row.slice.ranges) {
        auto span = params.flat(range);
        const std::size_t base = params.global_index(range);
        for (std::size_t k = 0; k < range.size(); ++k, ++pos) {
          auto it = retention.find(base + k);
          if (it != retention.end() && it->second.second > 0) {
            span[k] *= it->second.first / it->second.second;
            it->second.second = -it->second.second;  // apply once
          }
        }
      }
    }
  }

  for (std::size_t rix = 0; rix < rates.rows.size(); ++rix) {
    const auto& row = rates.rows[rix];
    const auto& g = grads[rix];
    if (row.slice.ranges != g.slice.ranges) {
      throw NumericError("apply: slice mismatch between rates and gradients");
    }
    std::size_t pos = 0;
    for (const auto& range : row.slice.ranges) {
      auto span = params.flat(range);
      for (std::size_t k = 0; k < range.size(); ++k, ++pos) {
        const double gv = g.grad[pos];
        if (!std::isfinite(gv) || !std::isfinite(row.w[pos])) {
          ++stats.skipped_nonfinite;
          continue;
        }
        span[k] -= row.w[pos] * gv;
      }
    }
  }
  return stats;
}

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg,
                                        const ParamStore& rec_params) {
  if (cfg.kind == "default") return std::make_unique<DefaultStrategy>();
  if (cfg.kind == "eals") return std::make_unique<EalsStrategy>(cfg.eals_boost);
  if (cfg.kind == "mwnet") return std::make_unique<MwnetStrategy>(cfg.mwnet_hidden, cfg.seed);
  if (cfg.kind == "metasgd") return std::make_unique<MetaSgdStrategy>(rec_params, cfg.eta);
  if (cfg.kind == "melon" || cfg.kind == "melon_i" || cfg.kind == "melon_p") {
    MelonOptions opt = cfg.melon;
    opt.seed = cfg.seed;
    if (cfg.kind == "melon_i") opt.inputs = MelonOptions::Inputs::InteractionOnly;
    if (cfg.kind == "melon_p") opt.inputs = MelonOptions::Inputs::ParameterOnly;
    return std::make_unique<MelonStrategy>(opt, cfg.frozen_rate);
  }
  throw ConfigError("unknown strategy kind '" + cfg.kind + "'");
}

}  // namespace melon
