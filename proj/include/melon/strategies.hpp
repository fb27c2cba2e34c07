#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melon/meta_model.hpp"

namespace melon {

// Sparse n x M learning-rate matrix: one value per (interaction, dependent
// coordinate) pair, aligned with each row's DependentSlice. `f` carries
// forgetting rates when the strategy learns them.
struct LearningRateMatrix {
  struct Row {
    DependentSlice slice;
    std::vector<double> w;
    std::vector<double> f;
  };
  std::vector<Row> rows;
  std::size_t total_params = 0;  // M

  enum class Fill { RowConstant, ColumnConstant, Zero };

  // Global flat indices of every dependent coordinate, ascending.
  std::vector<std::size_t> dependent_columns(const ParamStore& store) const;

  // Dense matrix over `columns` (default: dependent union). Independent
  // entries are filled per the strategy's structure; Fill::Zero leaves them
  // empty, which is the honest choice for the two-directional strategy.
  Tensor densify(Fill fill, const ParamStore& store,
                 const std::vector<std::size_t>* columns = nullptr) const;
};

struct StrategyContext {
  const MiniBatch& batch;
  std::span<const InteractionGrad> grads;
  const Recommender& rec;
  const HistoryStore& hist;
  double eta = 0.001;
  bool online_phase = true;
  std::uint64_t gat_seed = 0;
};

struct BatchRatesVar {
  struct Row {
    std::vector<int> w;  // per dependent range, shape (len)
    std::vector<int> f;
  };
  std::vector<Row> rows;
};

// One update strategy = one recipe for the learning-rate matrix. Strategies
// with meta-parameters also expose the rate computation as tape nodes so the
// meta-training loop can differentiate through it.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual const char* name() const = 0;

  virtual ParamStore* meta_params() { return nullptr; }
  bool trainable() { return meta_params() != nullptr; }

  // True when the recommender step is the plain W-weighted subtraction;
  // false when an optimizer (Adam) mediates the reweighted gradient.
  virtual bool pure_weighted_step() const = 0;

  virtual LearningRateMatrix rates(const StrategyContext& ctx) = 0;
  virtual BatchRatesVar rates_var(ParamLookup& phi, const StrategyContext& ctx);
};

// Every entry eta/n.
class DefaultStrategy : public Strategy {
 public:
  const char* name() const override { return "default"; }
  bool pure_weighted_step() const override { return false; }
  LearningRateMatrix rates(const StrategyContext& ctx) override;
};

// Online interactions get a constant boost c over the offline rate.
class EalsStrategy : public Strategy {
 public:
  explicit EalsStrategy(double boost) : boost_(boost) {}
  const char* name() const override { return "eals"; }
  bool pure_weighted_step() const override { return false; }
  LearningRateMatrix rates(const StrategyContext& ctx) override;

 private:
  double boost_;
};

// Loss-conditioned per-interaction importance from a one-hidden-layer net
// with a sigmoid output; rows are constant across parameters.
class MwnetStrategy : public Strategy {
 public:
  MwnetStrategy(int hidden, std::uint64_t seed);
  const char* name() const override { return "mwnet"; }
  bool pure_weighted_step() const override { return false; }
  ParamStore* meta_params() override { return &phi_; }
  LearningRateMatrix rates(const StrategyContext& ctx) override;
  BatchRatesVar rates_var(ParamLookup& phi, const StrategyContext& ctx) override;

  double importance(double loss) const;  // sigma(net(loss))

 private:
  ParamStore phi_;
  int w0_, b0_, w1_, b1_;
};

// One learnable rate per recommender parameter coordinate (softplus kept
// positive), constant across interactions.
class MetaSgdStrategy : public Strategy {
 public:
  MetaSgdStrategy(const ParamStore& rec_params, double eta_init);
  const char* name() const override { return "metasgd"; }
  bool pure_weighted_step() const override { return true; }
  ParamStore* meta_params() override { return &phi_; }
  LearningRateMatrix rates(const StrategyContext& ctx) override;
  BatchRatesVar rates_var(ParamLookup& phi, const StrategyContext& ctx) override;

 private:
  ParamStore phi_;  // mirrors the recommender parameter shapes
};

// Two-directional rates from the meta-model. `frozen_rate`, when set, pins
// every rate to that constant (and disables training and the forget gate).
class MelonStrategy : public Strategy {
 public:
  MelonStrategy(MelonOptions opt, std::optional<double> frozen_rate = std::nullopt);
  const char* name() const override;
  bool pure_weighted_step() const override { return true; }
  ParamStore* meta_params() override;
  LearningRateMatrix rates(const StrategyContext& ctx) override;
  BatchRatesVar rates_var(ParamLookup& phi, const StrategyContext& ctx) override;

  MetaModel& meta() { return meta_; }
  const MetaModel& meta() const { return meta_; }

 private:
  MetaModel meta_;
  std::optional<double> frozen_rate_;
};

struct ApplyStats {
  std::size_t skipped_nonfinite = 0;
};

// Theta_m -= sum_x W[x,m] * grad_x,m over dependent slices, with the mean
// forgetting rate applied to each touched coordinate first. Untouched
// parameters stay bit-identical.
ApplyStats apply_rates(ParamStore& params, const LearningRateMatrix& rates,
                       std::span<const InteractionGrad> grads);

struct StrategyConfig {
  std::string kind = "melon";  // default|eals|mwnet|metasgd|melon|melon_i|melon_p
  double eals_boost = 4.0;
  int mwnet_hidden = 100;
  MelonOptions melon;
  std::optional<double> frozen_rate;
  double eta = 0.001;
  std::uint64_t seed = 1;
};

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, const ParamStore& rec_params);

}  // namespace melon
