#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "melon/adam.hpp"
#include "melon/eval.hpp"
#include "melon/history.hpp"
#include "melon/strategies.hpp"

namespace melon {

struct TrainerOptions {
  int batch_size = 256;
  int epochs = 100;
  double eta = 0.001;
  double eta_meta = 0.001;
  double weight_decay = 0.001;

  enum class RecOptimizer { Adam, Sgd };
  // Optimizer for the strategies whose update is mediated by one
  // (default/eals/mwnet). Pure W-weighted strategies ignore it.
  RecOptimizer rec_optimizer = RecOptimizer::Adam;

  int train_negatives = 1;
  int eval_negatives = 99;
  std::vector<int> eval_ks = {5, 10, 20};

  int checkpoint_every = 0;  // online batches; 0 disables
  std::string checkpoint_dir;

  std::uint64_t seed = 17;
  bool include_item_last = false;  // item-side entries in B_last

  bool skip_updates = false;  // prequential eval only; test hook
  long long capture_step = -1;
  std::size_t capture_max_cols = 512;
};

struct MetricsRow {
  std::uint64_t step = 0;
  std::size_t batch_size = 0;
  std::vector<double> hr;    // aligned with eval_ks
  std::vector<double> ndcg;  // aligned with eval_ks
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct AggregateReport {
  std::vector<int> ks;
  std::vector<double> hr, ndcg;  // means of the per-batch means
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::uint64_t eval_digest = 0;
};

AggregateReport aggregate(std::span<const MetricsRow> rows, std::span<const int> ks,
                          std::uint64_t eval_digest);
void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows,
                       std::span<const int> ks);
void write_report_json(const std::string& path, const AggregateReport& report,
                       const std::string& strategy, const std::string& model);

// Densified two-directional rate snapshot over embedding columns.
struct CaptureResult {
  std::uint64_t step = 0;
  Tensor dense;                      // batch rows x columns, zero fill
  std::vector<std::size_t> columns;  // global flat coordinates
};

// Preliminary-update artifacts: the tape holding the rate computation and
// the provisional parameters, plus the lookups that expose them.
struct PreliminaryResult {
  std::unique_ptr<Tape> tape;
  std::unique_ptr<ParamLookup> phi;    // null for non-trainable strategies
  std::unique_ptr<ParamLookup> theta;  // carries the provisional overrides
  MiniBatch b_last;
  std::vector<InteractionGrad> grads_last;
  std::map<std::pair<int, std::ptrdiff_t>, int> tilde_nodes;
  bool meta_path = false;  // true when gradients can flow to the meta-params
};

// Offline pretraining plus the prequential online loop: evaluate the
// incoming batch, run the three-step update (provisional update on the last
// interactions, meta step on the new batch, recommender step), then append
// the batch to the history.
class Trainer {
 public:
  Trainer(Recommender& rec, Strategy& strat, TrainerOptions opt);

  HistoryStore& history() { return hist_; }
  const TrainerOptions& options() const { return opt_; }
  std::uint64_t step() const { return step_; }

  // Appends a stream to the history without training (pretrain/valid data).
  void seed_history(std::span<const Interaction> stream);

  void pretrain(std::span<const Interaction> stream);
  std::vector<MetricsRow> run_online(std::span<const Interaction> stream);

  // The user-side (optionally item-side) last interactions of a batch, with
  // fresh negatives for the ranking loss.
  MiniBatch derive_last(const MiniBatch& batch);

  PreliminaryResult preliminary_update(const MiniBatch& b_last);
  // Gradient of the mean b_t loss under the provisional parameters with
  // respect to the meta-parameters (no optimizer step).
  std::vector<Tensor> meta_gradients(PreliminaryResult& prelim, const MiniBatch& b_t);
  bool meta_update(PreliminaryResult& prelim, const MiniBatch& b_t);
  ApplyStats recommender_update(const MiniBatch& b_t, std::span<const InteractionGrad> grads_t);

  // Mean loss of b_t under the provisional parameters derived from b_last;
  // value-only rebuild used by the gradient checks.
  double tilde_objective(const MiniBatch& b_last, std::span<const InteractionGrad> grads_last,
                         const MiniBatch& b_t);

  // Dense provisional parameters (per-param tensors) for a result.
  std::vector<Tensor> tilde_dense(const PreliminaryResult& prelim) const;

  const std::optional<CaptureResult>& captured() const { return captured_; }
  std::uint64_t eval_digest() const { return eval_digest_; }
  std::size_t skipped_meta_steps() const { return skipped_meta_; }

 private:
  int build_tilde_loss(Tape& tape, ParamLookup* phi, ParamLookup& theta,
                       const MiniBatch& b_last, std::span<const InteractionGrad> grads_last,
                       const MiniBatch& b_t,
                       std::map<std::pair<int, std::ptrdiff_t>, int>* tilde_nodes);
  void build_tilde(Tape& tape, ParamLookup* phi, ParamLookup& theta, const MiniBatch& b_last,
                   std::span<const InteractionGrad> grads_last,
                   std::map<std::pair<int, std::ptrdiff_t>, int>& tilde_nodes);
  MetricsRow online_step(const MiniBatch& batch);
  void fill_train_negatives(MiniBatch& batch, std::uint64_t salt, std::size_t index_base);
  void maybe_capture(const LearningRateMatrix& rates);
  void checkpoint(const std::string& tag) const;

  Recommender& rec_;
  Strategy& strat_;
  TrainerOptions opt_;
  HistoryStore hist_;
  Adam adam_rec_;
  Adam adam_meta_;
  bool online_phase_ = true;
  std::uint64_t step_ = 0;
  std::uint64_t eval_digest_ = 1469598103934665603ull;  // FNV-1a basis
  std::size_t skipped_meta_ = 0;
  std::optional<CaptureResult> captured_;

  std::uint64_t seed_train_neg_, seed_eval_neg_, seed_blast_, seed_shuffle_, seed_gat_;
};

}  // namespace melon
