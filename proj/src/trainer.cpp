#include "melon/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (v >> (8 * b)) & 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<MiniBatch> chunk(std::span<const Interaction> stream, int batch_size) {
  std::vector<MiniBatch> out;
  for (std::size_t pos = 0; pos < stream.size(); pos += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(stream.size(), pos + static_cast<std::size_t>(batch_size));
    MiniBatch b;
    b.interactions.assign(stream.begin() + pos, stream.begin() + end);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

Trainer::Trainer(Recommender& rec, Strategy& strat, TrainerOptions opt)
    : rec_(rec),
      strat_(strat),
      opt_(std::move(opt)),
      hist_(rec.num_users(), rec.num_items()),
      adam_rec_(rec.params(), {opt_.eta, 0.9, 0.999, 1e-8, opt_.weight_decay}) {
  if (ParamStore* phi = strat_.meta_params()) {
    adam_meta_ = Adam(*phi, {opt_.eta_meta, 0.9, 0.999, 1e-8, opt_.weight_decay});
  }
  seed_train_neg_ = Rng::mix(opt_.seed, 0x747261696eull);
  seed_eval_neg_ = Rng::mix(opt_.seed, 0x6576616cull);
  seed_blast_ = Rng::mix(opt_.seed, 0x626c617374ull);
  seed_shuffle_ = Rng::mix(opt_.seed, 0x73687566ull);
  seed_gat_ = Rng::mix(opt_.seed, 0x676174ull);
}

void Trainer::seed_history(std::span<const Interaction> stream) {
  for (const auto& x : stream) hist_.append(x);
}

void Trainer::fill_train_negatives(MiniBatch& batch, std::uint64_t salt,
                                   std::size_t index_base) {
  NegativeSampler sampler(hist_);
  batch.negatives.clear();
  batch.negatives.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Rng rng(Rng::mix(seed_train_neg_, salt) ^ static_cast<std::uint64_t>(index_base + j));
    const auto& x = batch.interactions[j];
    batch.negatives.push_back(sampler.sample(x.u, x.t, opt_.train_negatives, rng));
  }
}

MiniBatch Trainer::derive_last(const MiniBatch& batch) {
  MiniBatch last = hist_.last_interactions(batch, opt_.include_item_last);
  if (!last.interactions.empty()) {
    fill_train_negatives(last, Rng::mix(step_, 0x6c617374ull), 0);
  }
  return last;
}

void Trainer::build_tilde(Tape& tape, ParamLookup* phi, ParamLookup& theta,
                          const MiniBatch& b_last, std::span<const InteractionGrad> grads_last,
                          std::map<std::pair<int, std::ptrdiff_t>, int>& tilde_nodes) {
  if (b_last.interactions.empty()) return;

  const StrategyContext ctx{b_last, grads_last, rec_,       hist_,
                            opt_.eta, true,     seed_gat_};
  BatchRatesVar rates;
  if (phi && strat_.trainable()) {
    rates = strat_.rates_var(*phi, ctx);
  } else {
    // Value-only rates wrapped as constants; the provisional parameters are
    // still exact, they just carry no meta-gradient.
    const LearningRateMatrix value_rates = strat_.rates(ctx);
    for (std::size_t j = 0; j < value_rates.rows.size(); ++j) {
      const auto& row = value_rates.rows[j];
      BatchRatesVar::Row node_row;
      std::size_t pos = 0;
      for (const auto& range : row.slice.ranges) {
        node_row.w.push_back(tape.leaf(
            Tensor({range.size()},
                   std::vector<double>(row.w.begin() + pos, row.w.begin() + pos + range.size()))));
        if (!row.f.empty()) {
          node_row.f.push_back(tape.leaf(Tensor(
              {range.size()},
              std::vector<double>(row.f.begin() + pos, row.f.begin() + pos + range.size()))));
        }
        pos += range.size();
      }
      rates.rows.push_back(std::move(node_row));
    }
  }

  // Group per parameter slot: theta' = mean(f) * theta - sum_x w_x * g_x.
  struct SlotAcc {
    std::vector<int> w_nodes;
    std::vector<int> f_nodes;
    std::vector<const InteractionGrad*> grads;
    std::vector<std::size_t> range_idx;
    FlatRange range;
  };
  std::map<std::pair<int, std::ptrdiff_t>, SlotAcc> slots;
  for (std::size_t j = 0; j < grads_last.size(); ++j) {
    const auto& slice = grads_last[j].slice;
    for (std::size_t ri = 0; ri < slice.ranges.size(); ++ri) {
      const FlatRange& range = slice.ranges[ri];
      SlotAcc& acc = slots[{range.param, range.row}];
      acc.range = range;
      acc.w_nodes.push_back(rates.rows[j].w[ri]);
      if (!rates.rows[j].f.empty()) acc.f_nodes.push_back(rates.rows[j].f[ri]);
      acc.grads.push_back(&grads_last[j]);
      acc.range_idx.push_back(ri);
    }
  }

  for (auto& [key, acc] : slots) {
    const bool whole = key.second < 0;
    const int base_leaf = whole ? theta.whole(key.first)
                                : theta.row(key.first, static_cast<std::size_t>(key.second));
    const Shape natural = tape.value(base_leaf).shape();
    const std::size_t len = acc.range.size();

    int flat = whole ? tape.reshape(base_leaf, {len}) : base_leaf;
    if (!acc.f_nodes.empty()) {
      int fsum = acc.f_nodes[0];
      for (std::size_t k = 1; k < acc.f_nodes.size(); ++k) fsum = tape.add(fsum, acc.f_nodes[k]);
      const int fmean =
          tape.mul(fsum, tape.leaf(Tensor::full({len}, 1.0 / static_cast<double>(acc.f_nodes.size()))));
      flat = tape.mul(fmean, flat);
    }
    for (std::size_t k = 0; k < acc.w_nodes.size(); ++k) {
      const auto gspan = acc.grads[k]->range_grad(acc.range_idx[k]);
      const int g = tape.leaf(Tensor({len}, {gspan.begin(), gspan.end()}));
      flat = tape.sub(flat, tape.mul(acc.w_nodes[k], g));
    }
    const int tilde = whole ? tape.reshape(flat, natural) : flat;
    if (whole) {
      theta.override_whole(key.first, tilde);
    } else {
      theta.override_row(key.first, static_cast<std::size_t>(key.second), tilde);
    }
    tilde_nodes[key] = tilde;
  }
}

int Trainer::build_tilde_loss(Tape& tape, ParamLookup* phi, ParamLookup& theta,
                              const MiniBatch& b_last,
                              std::span<const InteractionGrad> grads_last, const MiniBatch& b_t,
                              std::map<std::pair<int, std::ptrdiff_t>, int>* tilde_nodes) {
  std::map<std::pair<int, std::ptrdiff_t>, int> local;
  build_tilde(tape, phi, theta, b_last, grads_last, tilde_nodes ? *tilde_nodes : local);
  if (tilde_nodes && tilde_nodes->empty() && !local.empty()) *tilde_nodes = local;

  std::vector<int> losses;
  losses.reserve(b_t.size());
  for (std::size_t j = 0; j < b_t.size(); ++j) {
    const auto& x = b_t.interactions[j];
    if (j >= b_t.negatives.size() || b_t.negatives[j].empty()) {
      throw DataError("meta loss: batch row without a negative");
    }
    const int pos = rec_.score_var(theta, x.u, x.i);
    const int neg = rec_.score_var(theta, x.u, b_t.negatives[j][0]);
    losses.push_back(ranking_loss_var(tape, pos, neg));
  }
  return tape.mean(tape.concat(losses, 0));
}

PreliminaryResult Trainer::preliminary_update(const MiniBatch& b_last) {
  PreliminaryResult out;
  out.tape = std::make_unique<Tape>();
  out.theta = std::make_unique<ParamLookup>(*out.tape, rec_.params());
  if (strat_.trainable()) {
    out.phi = std::make_unique<ParamLookup>(*out.tape, *strat_.meta_params());
  }
  out.b_last = b_last;
  if (!b_last.interactions.empty()) {
    out.grads_last = per_interaction_grads(rec_, b_last);
  }
  build_tilde(*out.tape, out.phi.get(), *out.theta, out.b_last, out.grads_last,
              out.tilde_nodes);
  out.meta_path = strat_.trainable() && !out.tilde_nodes.empty();
  return out;
}

std::vector<Tensor> Trainer::meta_gradients(PreliminaryResult& prelim, const MiniBatch& b_t) {
  Tape& tape = *prelim.tape;
  std::vector<int> losses;
  losses.reserve(b_t.size());
  for (std::size_t j = 0; j < b_t.size(); ++j) {
    const auto& x = b_t.interactions[j];
    if (j >= b_t.negatives.size() || b_t.negatives[j].empty()) {
      throw DataError("meta update: batch row without a negative");
    }
    const int pos = rec_.score_var(*prelim.theta, x.u, x.i);
    const int neg = rec_.score_var(*prelim.theta, x.u, b_t.negatives[j][0]);
    losses.push_back(ranking_loss_var(tape, pos, neg));
  }
  const int objective = tape.mean(tape.concat(losses, 0));
  tape.backward(objective);
  return prelim.phi->collect_adjoints();
}

bool Trainer::meta_update(PreliminaryResult& prelim, const MiniBatch& b_t) {
  if (!prelim.meta_path || !prelim.phi) return false;

  const std::vector<Tensor> grads = meta_gradients(prelim, b_t);
  for (const auto& g : grads) {
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(g[i])) {
        ++skipped_meta_;
        std::fprintf(stderr, "[melon] warning: non-finite meta-gradient at step %llu, skipped\n",
                     static_cast<unsigned long long>(step_));
        return false;
      }
    }
  }
  adam_meta_.step(*strat_.meta_params(), grads);
  return true;
}

double Trainer::tilde_objective(const MiniBatch& b_last,
                                std::span<const InteractionGrad> grads_last,
                                const MiniBatch& b_t) {
  Tape tape;
  ParamLookup theta(tape, rec_.params());
  std::unique_ptr<ParamLookup> phi;
  if (strat_.trainable()) phi = std::make_unique<ParamLookup>(tape, *strat_.meta_params());
  const int loss = build_tilde_loss(tape, phi.get(), theta, b_last, grads_last, b_t, nullptr);
  return tape.value_scalar(loss);
}

std::vector<Tensor> Trainer::tilde_dense(const PreliminaryResult& prelim) const {
  std::vector<Tensor> out;
  for (int p = 0; p < rec_.params().count(); ++p) out.push_back(rec_.params().tensor(p));
  for (const auto& [key, node] : prelim.tilde_nodes) {
    const Tensor& v = prelim.tape->value(node);
    Tensor& dst = out[static_cast<std::size_t>(key.first)];
    if (key.second < 0) {
      dst = v;
    } else {
      const std::size_t cols = dst.cols();
      const std::size_t base = static_cast<std::size_t>(key.second) * cols;
      for (std::size_t i = 0; i < v.numel(); ++i) dst[base + i] = v[i];
    }
  }
  return out;
}

ApplyStats Trainer::recommender_update(const MiniBatch& b_t,
                                       std::span<const InteractionGrad> grads_t) {
  const StrategyContext ctx{b_t, grads_t, rec_, hist_, opt_.eta, online_phase_, seed_gat_};
  const LearningRateMatrix rates = strat_.rates(ctx);
  maybe_capture(rates);

  if (strat_.pure_weighted_step() || opt_.rec_optimizer == TrainerOptions::RecOptimizer::Sgd) {
    return apply_rates(rec_.params(), rates, grads_t);
  }

  // Optimizer-mediated path: Adam over the W-weighted mean gradient.
  std::vector<Tensor> combined;
  for (int p = 0; p < rec_.params().count(); ++p) {
    combined.emplace_back(rec_.params().tensor(p).shape());
  }
  for (std::size_t j = 0; j < rates.rows.size(); ++j) {
    const auto& row = rates.rows[j];
    std::size_t pos = 0;
    for (const auto& range : row.slice.ranges) {
      Tensor& dst = combined[static_cast<std::size_t>(range.param)];
      for (std::size_t k = 0; k < range.size(); ++k, ++pos) {
        dst[range.begin + k] += row.w[pos] * grads_t[j].grad[pos] / opt_.eta;
      }
    }
  }
  ApplyStats stats;
  adam_rec_.step(rec_.params(), combined);
  stats.skipped_nonfinite = adam_rec_.skipped_nonfinite();
  return stats;
}

MetricsRow Trainer::online_step(const MiniBatch& batch) {
  MetricsRow row;
  row.step = step_;
  row.batch_size = batch.size();

  // Prequential: measure with the pre-update parameters first.
  NegativeSampler eval_sampler(hist_);
  std::vector<std::vector<int>> eval_negs;
  eval_negs.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Rng rng(Rng::mix(seed_eval_neg_, step_, j));
    const auto& x = batch.interactions[j];
    eval_negs.push_back(eval_sampler.sample(x.u, x.t, opt_.eval_negatives, rng));
    eval_digest_ = fnv1a(eval_digest_, step_);
    eval_digest_ = fnv1a(eval_digest_, j);
    for (int id : eval_negs.back()) {
      eval_digest_ = fnv1a(eval_digest_, static_cast<std::uint64_t>(id));
    }
  }
  const BatchMetrics metrics = evaluate_batch(rec_, batch.interactions, eval_negs, opt_.eval_ks);
  row.hr = metrics.hr;
  row.ndcg = metrics.ndcg;

  const auto t0 = std::chrono::steady_clock::now();
  MiniBatch train_batch = batch;
  fill_train_negatives(train_batch, step_, 0);
  const auto grads = per_interaction_grads(rec_, train_batch);
  double mean_loss = 0.0;
  for (const auto& g : grads) mean_loss += g.loss;
  row.mean_loss = mean_loss / static_cast<double>(grads.size());

  if (!opt_.skip_updates) {
    if (strat_.trainable()) {
      const MiniBatch b_last = derive_last(train_batch);
      PreliminaryResult prelim = preliminary_update(b_last);
      meta_update(prelim, train_batch);
    }
    recommender_update(train_batch, grads);
  }
  const auto t1 = std::chrono::steady_clock::now();
  row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  hist_.append_batch(batch);
  ++step_;

  if (!std::isfinite(row.mean_loss)) {
    checkpoint("diverged");
    throw NumericError("online: non-finite loss at step " + std::to_string(row.step));
  }
  if (opt_.checkpoint_every > 0 && step_ % static_cast<std::uint64_t>(opt_.checkpoint_every) == 0) {
    checkpoint("step" + std::to_string(step_));
  }
  return row;
}

std::vector<MetricsRow> Trainer::run_online(std::span<const Interaction> stream) {
  online_phase_ = true;
  std::vector<MetricsRow> rows;
  for (auto& batch : chunk(stream, opt_.batch_size)) {
    rows.push_back(online_step(batch));
  }
  return rows;
}

void Trainer::pretrain(std::span<const Interaction> stream) {
  if (stream.empty()) throw DataError("pretrain: empty stream");
  seed_history(stream);
  online_phase_ = false;

  std::vector<std::size_t> order(stream.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt_.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(seed_shuffle_, static_cast<std::uint64_t>(epoch)));
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[shuffle_rng.below(k)]);
    }

    const std::size_t batches =
        (order.size() + static_cast<std::size_t>(opt_.batch_size) - 1) /
        static_cast<std::size_t>(opt_.batch_size);
    for (std::size_t b = 0; b < batches; ++b) {
      MiniBatch batch;
      const std::size_t lo = b * static_cast<std::size_t>(opt_.batch_size);
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(opt_.batch_size));
      for (std::size_t k = lo; k < hi; ++k) batch.interactions.push_back(stream[order[k]]);
      fill_train_negatives(batch, Rng::mix(0x707265ull, static_cast<std::uint64_t>(epoch), b), 0);
      const auto grads = per_interaction_grads(rec_, batch);

      double mean_loss = 0.0;
      for (const auto& g : grads) mean_loss += g.loss;
      mean_loss /= static_cast<double>(grads.size());
      if (!std::isfinite(mean_loss)) {
        checkpoint("diverged");
        throw NumericError("pretrain: non-finite loss at step " + std::to_string(step_));
      }

      if (strat_.trainable()) {
        // Offline form of the provisional step: the anchor batch is drawn at
        // random, and its last interactions feed the provisional update.
        Rng pick(Rng::mix(seed_blast_, static_cast<std::uint64_t>(epoch), b));
        MiniBatch anchor;
        for (int k = 0; k < opt_.batch_size; ++k) {
          anchor.interactions.push_back(stream[pick.below(stream.size())]);
        }
        const MiniBatch b_last = derive_last(anchor);
        PreliminaryResult prelim = preliminary_update(b_last);
        meta_update(prelim, batch);
      }
      recommender_update(batch, grads);
      ++step_;
    }
  }
  online_phase_ = true;
}

void Trainer::maybe_capture(const LearningRateMatrix& rates) {
  if (opt_.capture_step < 0 || !online_phase_) return;
  if (step_ != static_cast<std::uint64_t>(opt_.capture_step) || captured_) return;

  // Embedding columns only (row-addressed ranges), capped.
  std::vector<std::size_t> columns;
  for (const auto& row : rates.rows) {
    for (const auto& range : row.slice.ranges) {
      if (range.row < 0) continue;
      const std::size_t base = rec_.params().global_index(range);
      for (std::size_t k = 0; k < range.size(); ++k) columns.push_back(base + k);
    }
  }
  std::sort(columns.begin(), columns.end());
  columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
  if (columns.size() > opt_.capture_max_cols) columns.resize(opt_.capture_max_cols);

  CaptureResult cap;
  cap.step = step_;
  cap.columns = columns;
  cap.dense = rates.densify(LearningRateMatrix::Fill::Zero, rec_.params(), &columns);
  captured_ = std::move(cap);
}

void Trainer::checkpoint(const std::string& tag) const {
  if (opt_.checkpoint_dir.empty()) return;
  fs::create_directories(opt_.checkpoint_dir);
  rec_.params().save((fs::path(opt_.checkpoint_dir) / ("rec_" + tag + ".snap")).string(),
                     rec_.kind());
  if (ParamStore* phi = strat_.meta_params()) {
    phi->save((fs::path(opt_.checkpoint_dir) / ("meta_" + tag + ".snap")).string(),
              strat_.name());
  }
}

AggregateReport aggregate(std::span<const MetricsRow> rows, std::span<const int> ks,
                          std::uint64_t eval_digest) {
  AggregateReport rep;
  rep.ks.assign(ks.begin(), ks.end());
  rep.hr.assign(ks.size(), 0.0);
  rep.ndcg.assign(ks.size(), 0.0);
  rep.batches = rows.size();
  rep.eval_digest = eval_digest;
  if (rows.empty()) return rep;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < ks.size(); ++k) {
      rep.hr[k] += r.hr[k];
      rep.ndcg[k] += r.ndcg[k];
    }
    rep.mean_loss += r.mean_loss;
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t k = 0; k < ks.size(); ++k) {
    rep.hr[k] /= n;
    rep.ndcg[k] /= n;
  }
  rep.mean_loss /= n;
  return rep;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows,
                       std::span<const int> ks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("metrics: cannot write " + path);
  out << "step,batch_size";
  for (int k : ks) out << ",hr@" << k;
  for (int k : ks) out << ",ndcg@" << k;
  out << ",mean_loss,wall_ms\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.step << ',' << r.batch_size;
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    };
    for (double v : r.hr) put(v);
    for (double v : r.ndcg) put(v);
    put(r.mean_loss);
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
    out << ',' << buf << '\n';
  }
}

void write_report_json(const std::string& path, const AggregateReport& report,
                       const std::string& strategy, const std::string& model) {
  json j{{"strategy", strategy},
         {"model", model},
         {"batches", report.batches},
         {"mean_loss", report.mean_loss},
         {"eval_negatives_digest", report.eval_digest}};
  for (std::size_t k = 0; k < report.ks.size(); ++k) {
    j["hr@" + std::to_string(report.ks[k])] = report.hr[k];
    j["ndcg@" + std::to_string(report.ks[k])] = report.ndcg[k];
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("report: cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace melon
