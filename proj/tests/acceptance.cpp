// Acceptance suite: one line per criterion, nonzero exit if any required
// criterion fails. Criterion 10 is a performance flag, not a failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "melon/config.hpp"
#include "melon/rank_analysis.hpp"
#include "melon/synthetic.hpp"
#include "support/oracles.hpp"

using namespace melon;
using melon::testing::fd_gradients;
using melon::testing::max_rel_err;
using melon::testing::rel_err;

namespace {

struct Criterion {
  int id;
  bool passed;
  bool required;
  std::string detail;
  double seconds;
};

std::vector<Criterion> g_results;

void report(int id, bool passed, bool required, const std::string& detail, double seconds) {
  g_results.push_back({id, passed, required, detail, seconds});
  std::printf("[%s] %2d. %s (%.1fs)\n", passed ? "PASS" : (required ? "FAIL" : "FLAG"), id,
              detail.c_str(), seconds);
  std::fflush(stdout);
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// 1. Gradient correctness of every op and both recommenders.

struct OpProbe {
  const char* name;
  bool kinked;
  std::vector<Shape> shapes;
  std::function<int(Tape&, const std::vector<int>&)> build;
};

std::vector<OpProbe> op_probes() {
  return {
      {"add", false, {{3}, {3}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.mul(t.add(v[0], v[1]), v[0]));
       }},
      {"sub", false, {{3}, {3}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.mul(t.sub(v[0], v[1]), v[1]));
       }},
      {"mul", false, {{4}, {4}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.mul(v[0], v[1]));
       }},
      {"matmul", false, {{2, 3}, {3, 2}}, [](Tape& t, const std::vector<int>& v) {
         return t.mean(t.sigmoid(t.matmul(v[0], v[1])));
       }},
      {"concat", false, {{2, 2}, {2, 3}}, [](Tape& t, const std::vector<int>& v) {
         const int c = t.concat(std::vector<int>{v[0], v[1]}, 1);
         return t.mean(t.mul(c, c));
       }},
      {"sum", false, {{5}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.mul(v[0], v[0]));
       }},
      {"mean", false, {{2, 3}}, [](Tape& t, const std::vector<int>& v) {
         return t.mean(t.mul(v[0], v[0]));
       }},
      {"sigmoid", false, {{4}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.sigmoid(v[0]));
       }},
      {"softmax", false, {{3, 4}}, [](Tape& t, const std::vector<int>& v) {
         const int s = t.softmax(v[0]);
         return t.mean(t.mul(s, v[0]));
       }},
      {"softplus", false, {{4}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.softplus(v[0]));
       }},
      {"neg", false, {{4}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.sigmoid(t.neg(v[0])));
       }},
      {"exp-log", false, {{4}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.log_op(t.exp_op(v[0])));
       }},
      {"broadcast", false, {{3}, {4, 3}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.mul(t.broadcast(v[0], {4, 3}), v[1]));
       }},
      {"reshape", false, {{2, 3}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.matmul(v[0], t.reshape(v[0], {3, 2})));
       }},
      {"relu", true, {{5}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.relu(v[0]));
       }},
      {"leaky_relu", true, {{5}}, [](Tape& t, const std::vector<int>& v) {
         return t.sum(t.leaky_relu(v[0], 0.2));
       }},
  };
}

double check_probe(const OpProbe& probe, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> leaves;
  for (const auto& s : probe.shapes) {
    Tensor x(s);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      double v = rng.uniform(-2.0, 2.0);
      if (probe.kinked) {
        while (std::abs(v) < 1e-3) v = rng.uniform(-2.0, 2.0);
      }
      x[i] = v;
    }
    leaves.push_back(std::move(x));
  }
  Tape t;
  std::vector<int> ids;
  for (const auto& l : leaves) ids.push_back(t.leaf(l));
  t.backward(probe.build(t, ids));

  const auto fd = fd_gradients(
      [&](const std::vector<Tensor>& ls) {
        Tape t2;
        std::vector<int> v;
        for (const auto& l : ls) v.push_back(t2.leaf(l));
        return t2.value_scalar(probe.build(t2, v));
      },
      leaves);
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    worst = std::max(worst, max_rel_err(t.adjoint(ids[l]), fd[l], 1e-6));
  }
  return worst;
}

double check_model(const char* kind, std::uint64_t seed) {
  RecommenderConfig cfg;
  cfg.num_users = 2;
  cfg.num_items = 3;
  cfg.embed_dim = 2;
  cfg.ncf_tower = {4, 3, 2};
  cfg.seed = seed;
  auto rec = make_recommender(kind, cfg);
  // Check at a generic point: fresh-init embeddings are tiny and leave whole
  // ReLU layers inactive with pre-activations exactly on the kink, where the
  // loss is not differentiable and central differences are meaningless.
  Rng noise(Rng::mix(seed, 999));
  for (int p = 0; p < rec->params().count(); ++p) {
    Tensor& t = rec->params().tensor(p);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = noise.uniform(-0.5, 0.5);
  }
  MiniBatch b;
  b.interactions = {{1, 0, 0}, {2, 1, 2}};
  b.negatives = {{1}, {0}};
  const auto grads = per_interaction_grads(*rec, b);

  std::vector<Tensor> dense;
  for (int p = 0; p < rec->params().count(); ++p) dense.emplace_back(rec->params().tensor(p).shape());
  for (const auto& g : grads) {
    std::size_t pos = 0;
    for (const auto& r : g.slice.ranges) {
      for (std::size_t k = 0; k < r.size(); ++k) {
        dense[static_cast<std::size_t>(r.param)][r.begin + k] += g.grad[pos + k];
      }
      pos += r.size();
    }
  }

  std::vector<Tensor> leaves;
  for (int p = 0; p < rec->params().count(); ++p) leaves.push_back(rec->params().tensor(p));
  const auto fd = fd_gradients(
      [&](const std::vector<Tensor>& ls) {
        auto m2 = make_recommender(kind, cfg);
        for (int p = 0; p < m2->params().count(); ++p) m2->params().tensor(p) = ls[p];
        double total = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) {
          const auto& x = b.interactions[j];
          total += ranking_loss(m2->score(x.u, x.i), m2->score(x.u, b.negatives[j][0]));
        }
        return total;
      },
      leaves);
  double worst = 0.0;
  for (int p = 0; p < rec->params().count(); ++p) {
    worst = std::max(worst, max_rel_err(dense[static_cast<std::size_t>(p)],
                                        fd[static_cast<std::size_t>(p)], 1e-6));
  }
  return worst;
}

void criterion_1() {
  Timer timer;
  const auto probes = op_probes();
  double worst_smooth = 0.0, worst_kink = 0.0, worst_bpr = 0.0, worst_ncf = 0.0;
  int seeds = 0;
  for (std::uint64_t seed = 0; seed < 68; ++seed, ++seeds) {
    const auto& p = probes[seed % probes.size()];
    const double err = check_probe(p, 1000 + seed);
    (p.kinked ? worst_kink : worst_smooth) = std::max(p.kinked ? worst_kink : worst_smooth, err);
  }
  for (std::uint64_t seed = 0; seed < 32; ++seed, ++seeds) {
    if (seed % 2) {
      worst_ncf = std::max(worst_ncf, check_model("ncf", 2000 + seed));
    } else {
      worst_bpr = std::max(worst_bpr, check_model("bpr", 2000 + seed));
    }
  }
  // The scorer with ReLU layers gets the near-kink tolerance; the bilinear
  // one is held to the generic bound.
  const bool pass = worst_smooth < 1e-6 && worst_kink < 1e-4 && worst_bpr < 1e-6 &&
                    worst_ncf < 1e-4 && seeds >= 100 && timer.seconds() < 30.0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "gradient correctness: %d seeds, worst rel err %.2e (ops), %.2e (kinked ops), "
                "%.2e (bpr), %.2e (ncf)",
                seeds, worst_smooth, worst_kink, worst_bpr, worst_ncf);
  report(1, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 2. Meta-gradient against finite differences on a 3x3 toy scorer.

void criterion_2() {
  Timer timer;
  RecommenderConfig rc;
  rc.num_users = 3;
  rc.num_items = 3;
  rc.embed_dim = 2;
  rc.seed = 15;
  BprModel rec(rc);
  MelonOptions mo;
  mo.embed_dim = 2;
  mo.seed = 5;
  MelonStrategy strat(mo);
  TrainerOptions opt;
  opt.batch_size = 8;
  opt.eta = 0.01;
  opt.weight_decay = 0.0;
  opt.seed = 5;
  Trainer trainer(rec, strat, opt);
  Rng hist_rng(29);
  std::vector<Interaction> hist;
  for (int t = 0; t < 30; ++t) {
    hist.push_back({t, static_cast<int>(hist_rng.below(3)), static_cast<int>(hist_rng.below(3))});
  }
  trainer.seed_history(hist);

  MiniBatch b_last;
  b_last.interactions = {{100, 0, 1}, {101, 1, 2}};
  b_last.negatives = {{2}, {0}};
  MiniBatch b_t;
  b_t.interactions = {{102, 0, 0}, {102, 1, 1}, {103, 2, 2}};
  b_t.negatives = {{1}, {2}, {0}};

  auto prelim = trainer.preliminary_update(b_last);
  const auto analytic = trainer.meta_gradients(prelim, b_t);
  const auto grads_last = per_interaction_grads(rec, b_last);

  ParamStore& phi = *strat.meta_params();
  Rng rng(31);
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const int p = static_cast<int>(rng.below(static_cast<std::uint64_t>(phi.count())));
    Tensor& t = phi.tensor(p);
    const std::size_t i = rng.below(t.numel());
    const double saved = t[i];
    const double h = 1e-5;
    t[i] = saved + h;
    const double up = trainer.tilde_objective(b_last, grads_last, b_t);
    t[i] = saved - h;
    const double down = trainer.tilde_objective(b_last, grads_last, b_t);
    t[i] = saved;
    worst = std::max(worst,
                     rel_err(analytic[static_cast<std::size_t>(p)][i], (up - down) / (2 * h), 1e-6));
  }
  const bool pass = worst < 1e-4 && timer.seconds() < 10.0;
  char buf[256];
  std::snprintf(buf, sizeof buf, "meta-gradient vs finite differences: worst rel err %.2e over 20 coords",
                worst);
  report(2, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 3. Rank-1 structure for the one-directional strategies; flexibility beyond
//    rank 1 for the two-directional one.

void criterion_3() {
  Timer timer;
  RecommenderConfig rc;
  rc.num_users = 12;
  rc.num_items = 10;
  rc.embed_dim = 4;
  rc.seed = 7;
  BprModel rec(rc);
  HistoryStore hist(12, 10);
  Rng hr(100);
  for (int t = 0; t < 50; ++t) {
    hist.append({t, static_cast<int>(hr.below(12)), static_cast<int>(hr.below(10))});
  }

  DefaultStrategy dflt;
  EalsStrategy eals(4.0);
  MwnetStrategy mwnet(50, 21);
  MetaSgdStrategy metasgd(rec.params(), 0.001);
  {
    ParamStore& p = *metasgd.meta_params();
    Rng r(5);
    for (int q = 0; q < p.count(); ++q) {
      Tensor& t = p.tensor(q);
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.uniform(-7.0, 0.0);
    }
  }
  MelonOptions mo;
  mo.embed_dim = 4;
  mo.seed = 31;
  MelonStrategy melon(mo);

  Rng seeds(404);
  double worst_one_dir = 0.0;
  int melon_flexible = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    MiniBatch b;
    for (int j = 0; j < 6; ++j) {
      const int u = static_cast<int>(seeds.below(12));
      const int pos = static_cast<int>(seeds.below(10));
      int neg = static_cast<int>(seeds.below(10));
      if (neg == pos) neg = (neg + 1) % 10;
      b.interactions.push_back({200 + j, u, pos});
      b.negatives.push_back({neg});
    }
    const auto grads = per_interaction_grads(rec, b);
    StrategyContext ctx{b, grads, rec, hist, 0.001, true, seeds.next()};

    for (auto* strat : std::initializer_list<Strategy*>{&dflt, &eals, &mwnet}) {
      worst_one_dir = std::max(
          worst_one_dir,
          rank_ratio(strat->rates(ctx).densify(LearningRateMatrix::Fill::RowConstant,
                                               rec.params())));
    }
    worst_one_dir = std::max(
        worst_one_dir, rank_ratio(metasgd.rates(ctx).densify(
                           LearningRateMatrix::Fill::ColumnConstant, rec.params())));
    if (rank_ratio(melon.rates(ctx).densify(LearningRateMatrix::Fill::Zero, rec.params())) >
        1e-6) {
      ++melon_flexible;
    }
  }
  const bool pass = worst_one_dir < 1e-10 && melon_flexible >= 95;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "rank structure on %d batches: one-directional worst sigma2/sigma1 %.2e, "
                "two-directional flexible on %d/100",
                trials, worst_one_dir, melon_flexible);
  report(3, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 4. Truncated-SVD error equals sigma_{k+1}.

void criterion_4() {
  Timer timer;
  Rng rng(777);
  double worst = 0.0;
  int trials = 0;
  while (trials < 100) {
    const std::size_t n = 4 + rng.below(29);  // up to 32
    const std::size_t m = 4 + rng.below(61);  // up to 64
    Tensor a({n, m});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-1.0, 1.0);
    const auto s = svd(a);
    const int rank = s.spectrum.numerical_rank(1e-12);
    if (rank < 2) continue;
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(rank - 1)));
    const Tensor ak = truncate_rank(s, k);
    Tensor diff({n, m});
    for (std::size_t i = 0; i < a.numel(); ++i) diff[i] = a[i] - ak[i];
    worst = std::max(worst,
                     std::abs(spectral_norm(diff) - s.spectrum.sigma[static_cast<std::size_t>(k)]));
    ++trials;
  }
  const bool pass = worst < 1e-10;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "best rank-k error vs sigma_{k+1}: worst residual %.2e on 100 matrices up to 32x64",
                worst);
  report(4, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 5. Optimality-gap ordering on planted matrices.

void criterion_5() {
  Timer timer;
  const auto analysis = run_rank_analysis(100, 424242);
  int held = 0;
  for (const auto& t : analysis.trials) held += t.holds ? 1 : 0;
  const bool pass = analysis.all_hold && analysis.trials.size() == 100 && timer.seconds() < 60.0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "optimality-gap ordering: %d/100 planted matrices hold (structured gap >= "
                "sigma2, dense fit below)",
                held);
  report(5, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 6. Metric oracles on handcrafted trials.

void criterion_6() {
  Timer timer;
  Rng rng(55);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // construct scores with deliberate ties
    const double pos = rng.below(8) * 0.125;
    std::vector<double> negs(99);
    for (auto& s : negs) s = rng.below(8) * 0.125;
    const int rank = rank_of_positive(pos, negs);

    int above = 1;
    for (double s : negs) {
      if (s >= pos) ++above;
    }
    if (rank != above) ++mismatches;

    for (int k : {5, 10, 20}) {
      const double hr_expect = rank <= k ? 1.0 : 0.0;
      const double ndcg_expect = rank <= k ? 1.0 / std::log2(rank + 1.0) : 0.0;
      if (hit_rate(rank, k) != hr_expect) ++mismatches;
      if (ndcg(rank, k) != ndcg_expect) ++mismatches;
    }
  }
  const bool pass = mismatches == 0;
  char buf[256];
  std::snprintf(buf, sizeof buf, "metric oracles: %d mismatches over 1000 handcrafted trials",
                mismatches);
  report(6, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 7. Pinned-constant reduction to default fine-tuning.

void criterion_7() {
  Timer timer;
  DriftSpec spec;
  spec.users = 30;
  spec.items = 20;
  spec.interactions = 700;
  spec.seed = 3;
  const auto stream = drift_dataset(spec);
  const std::span<const Interaction> pre(stream.data(), 300);
  const std::span<const Interaction> test(stream.data() + 300, 400);

  const int n = 8;
  const double eta = 0.01;

  RecommenderConfig rc;
  rc.num_users = spec.users;
  rc.num_items = spec.items;
  rc.embed_dim = 8;
  rc.seed = 17;
  BprModel rec_a(rc), rec_b(rc);

  MelonOptions mo;
  mo.embed_dim = 8;
  MelonStrategy frozen(mo, eta / n);
  DefaultStrategy dflt;

  TrainerOptions oa;
  oa.batch_size = n;
  oa.eta = eta;
  oa.eval_negatives = 9;
  oa.seed = 23;
  TrainerOptions ob = oa;
  ob.rec_optimizer = TrainerOptions::RecOptimizer::Sgd;
  Trainer ta(rec_a, frozen, oa);
  Trainer tb(rec_b, dflt, ob);
  ta.seed_history(pre);
  tb.seed_history(pre);

  double worst = 0.0;
  int steps = 0;
  for (; steps < 50; ++steps) {
    const auto chunk = test.subspan(static_cast<std::size_t>(steps) * n, n);
    ta.run_online(chunk);
    tb.run_online(chunk);
    for (int p = 0; p < rec_a.params().count(); ++p) {
      for (std::size_t i = 0; i < rec_a.params().tensor(p).numel(); ++i) {
        worst = std::max(worst,
                         std::abs(rec_a.params().tensor(p)[i] - rec_b.params().tensor(p)[i]));
      }
    }
    if (worst >= 1e-12) break;
  }
  const bool pass = worst < 1e-12 && steps == 50;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "pinned-rate reduction: max |theta difference| %.2e after %d lockstep steps",
                worst, steps);
  report(7, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 8. Synthetic-drift end to end: the two-directional strategy adapts faster.

double drift_run(const std::string& kind, std::uint64_t seed) {
  DriftSpec spec;
  spec.seed = seed;  // 50 users, 40 items, 5000 interactions, switch at 50%
  const auto stream = drift_dataset(spec);
  const auto parts = split(stream, SplitSpec{0.5, 0.0, 0.5});

  RecommenderConfig rc;
  rc.num_users = spec.users;
  rc.num_items = spec.items;
  rc.embed_dim = 16;
  rc.seed = Rng::mix(seed, 0xabc);
  BprModel rec(rc);

  StrategyConfig sc;
  sc.kind = kind;
  sc.eta = 0.001;
  sc.seed = Rng::mix(seed, 0xdef);
  sc.melon.embed_dim = 16;
  sc.melon.forget_gate = false;  // pure subtractive updates for this check
  auto strat = make_strategy(sc, rec.params());

  TrainerOptions opt;
  opt.batch_size = 64;
  opt.epochs = 12;
  opt.eta = 0.001;
  opt.eta_meta = 0.001;
  opt.eval_negatives = 99;
  opt.seed = seed;
  Trainer trainer(rec, *strat, opt);
  trainer.pretrain(parts.pretrain);
  const auto rows = trainer.run_online(parts.test);
  const auto rep = aggregate(rows, opt.eval_ks, 0);
  return rep.hr[0];
}

void criterion_8() {
  Timer timer;
  int beats_default = 0, beats_both = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double melon = drift_run("melon", seed);
    const double dflt = drift_run("default", seed);
    const double only_i = drift_run("melon_i", seed);
    const double only_p = drift_run("melon_p", seed);
    if (melon > dflt) ++beats_default;
    if (melon > only_i && melon > only_p) ++beats_both;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s[s%llu m%.3f d%.3f i%.3f p%.3f]",
                  seed > 1 ? " " : "", static_cast<unsigned long long>(seed), melon, dflt,
                  only_i, only_p);
    detail += buf;
  }
  const bool pass = beats_default >= 4 && beats_both >= 3;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "drift adaptation: hr@5 beats default %d/5, beats both ablations %d/5 %s",
                beats_default, beats_both, detail.c_str());
  report(8, pass, true, buf, timer.seconds());
}

// ---------------------------------------------------------------------------
// 9. No temporal leakage: corrupting future data leaves earlier metrics
//    bit-identical.

void criterion_9() {
  Timer timer;
  DriftSpec spec;
  spec.users = 25;
  spec.items = 20;
  spec.interactions = 1200;
  spec.seed = 6;
  const auto stream = drift_dataset(spec);
  std::vector<Interaction> test(stream.begin() + 600, stream.end());

  auto run = [&](const std::vector<Interaction>& data) {
    RecommenderConfig rc;
    rc.num_users = spec.users;
    rc.num_items = spec.items;
    rc.embed_dim = 8;
    rc.seed = 4;
    BprModel rec(rc);
    MelonOptions mo;
    mo.embed_dim = 8;
    mo.seed = 9;
    MelonStrategy strat(mo);
    TrainerOptions opt;
    opt.batch_size = 32;
    opt.eval_negatives = 19;
    opt.seed = 12;
    Trainer trainer(rec, strat, opt);
    trainer.seed_history(std::span<const Interaction>(stream.data(), 600));
    return trainer.run_online(data);
  };

  std::vector<Interaction> corrupted = test;
  for (std::size_t k = 64; k < corrupted.size(); ++k) {  // after batch 2
    corrupted[k].u = (corrupted[k].u + 7) % spec.users;
    corrupted[k].i = (corrupted[k].i + 3) % spec.items;
    corrupted[k].t += 5000;
  }
  const auto a = run(test);
  const auto b = run(corrupted);
  bool identical = true;
  for (std::size_t r = 0; r < 2; ++r) {
    identical = identical && a[r].mean_loss == b[r].mean_loss;
    for (std::size_t k = 0; k < a[r].hr.size(); ++k) {
      identical = identical && a[r].hr[k] == b[r].hr[k] && a[r].ndcg[k] == b[r].ndcg[k];
    }
  }
  report(9, identical, true,
         "temporal isolation: corrupting post-batch-2 data leaves batches 1-2 bit-identical",
         timer.seconds());
}

// ---------------------------------------------------------------------------
// 10. Throughput (flag only).

void criterion_10() {
  Timer timer;
  DriftSpec spec;
  spec.users = 600;
  spec.items = 300;
  spec.interactions = 3000;
  spec.seed = 9;
  const auto stream = drift_dataset(spec);
  const auto parts = split(stream, SplitSpec{0.6, 0.0, 0.4});

  auto time_strategy = [&](const std::string& kind) {
    RecommenderConfig rc;
    rc.num_users = spec.users;
    rc.num_items = spec.items;
    rc.embed_dim = 32;
    rc.seed = 2;
    BprModel rec(rc);
    StrategyConfig sc;
    sc.kind = kind;
    sc.melon.embed_dim = 32;
    auto strat = make_strategy(sc, rec.params());
    TrainerOptions opt;
    opt.batch_size = 256;
    opt.eval_negatives = 99;
    opt.seed = 5;
    Trainer trainer(rec, *strat, opt);
    trainer.seed_history(parts.pretrain);
    const auto rows = trainer.run_online(parts.test);
    double worst = 0.0;
    for (std::size_t r = 1; r < rows.size(); ++r) {  // exclude allocator warm-up
      worst = std::max(worst, rows[r].wall_ms);
    }
    return worst;
  };

  const double melon_ms = time_strategy("melon");
  const double default_ms = time_strategy("default");
  const bool pass = melon_ms < 250.0 && default_ms < 20.0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "throughput (flag only): melon step max %.1f ms (budget 250), default %.2f ms "
                "(budget 20), batch 256, d=32",
                melon_ms, default_ms);
  report(10, pass, /*required=*/false, buf, timer.seconds());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();

  int required = 0, passed = 0, flags = 0;
  for (const auto& c : g_results) {
    if (c.required) {
      ++required;
      if (c.passed) ++passed;
    } else if (!c.passed) {
      ++flags;
    }
  }
  std::printf("RESULT: %d/%d required criteria passed, %d performance flag(s)\n", passed,
              required, flags);
  return passed == required ? 0 : 1;
}
