#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "melon/config.hpp"
#include "melon/error.hpp"
#include "melon/rank_analysis.hpp"
#include "melon/synthetic.hpp"
#include "melon/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace melon;

namespace {

struct Dataset {
  LoadedData data;
  std::size_t boundary1 = 0, boundary2 = 0;

  std::span<const Interaction> pretrain() const {
    return {data.stream.data(), boundary1};
  }
  std::span<const Interaction> valid() const {
    return {data.stream.data() + boundary1, boundary2 - boundary1};
  }
  std::span<const Interaction> test() const {
    return {data.stream.data() + boundary2, data.stream.size() - boundary2};
  }
};

FileFormat parse_format(const std::string& f) {
  if (f == "csv") return FileFormat::Csv;
  if (f == "tsv") return FileFormat::Tsv;
  return FileFormat::Auto;
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.data_path.empty()) {
    // No dataset configured: desk-scale synthetic drift stream.
    DriftSpec spec;
    spec.seed = cfg.seed;
    const auto stream = drift_dataset(spec);
    ds.data.stream = stream;
    for (int u = 0; u < spec.users; ++u) ds.data.user_ids.push_back("u" + std::to_string(u));
    for (int i = 0; i < spec.items; ++i) ds.data.item_ids.push_back("i" + std::to_string(i));
    const auto parts = split(ds.data.stream, cfg.split);
    ds.boundary1 = parts.boundary1;
    ds.boundary2 = parts.boundary2;
    std::fprintf(stderr, "[melon] no dataset path given; using a synthetic drift stream\n");
    return ds;
  }
  if (is_canonical_dir(cfg.data_path)) {
    const auto canon = read_canonical(cfg.data_path);
    ds.data = canon.data;
    ds.boundary1 = canon.boundary1;
    ds.boundary2 = canon.boundary2;
    return ds;
  }
  ds.data = filter_min_interactions(load(cfg.data_path, parse_format(cfg.data_format)),
                                    cfg.filter_min);
  const auto parts = split(ds.data.stream, cfg.split);
  ds.boundary1 = parts.boundary1;
  ds.boundary2 = parts.boundary2;
  return ds;
}

void write_run_info(const RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "config.json", std::ios::binary);
    out << cfg.serialize();
  }
  json info{{"version", kVersion},
            {"git", kGitDescribe},
            {"command", command},
            {"seed", cfg.seed},
            {"strategy", cfg.strategy},
            {"model", cfg.model}};
  std::ofstream out(fs::path(cfg.out_dir) / "run-info.json", std::ios::binary);
  out << info.dump(2) << '\n';
}

struct Run {
  std::unique_ptr<Recommender> rec;
  std::unique_ptr<Strategy> strat;
  std::unique_ptr<Trainer> trainer;
};

Run make_run(const RunConfig& cfg, const Dataset& ds) {
  Run r;
  r.rec = make_recommender(cfg.model, cfg.recommender_config(ds.data.num_users(),
                                                             ds.data.num_items()));
  r.strat = make_strategy(cfg.strategy_config(), r.rec->params());
  TrainerOptions opt = cfg.trainer_options();
  opt.checkpoint_dir = (fs::path(cfg.out_dir) / "checkpoints").string();
  r.trainer = std::make_unique<Trainer>(*r.rec, *r.strat, opt);
  return r;
}

int cmd_preprocess(const RunConfig& cfg, const std::string& input) {
  RunConfig resolved = cfg;
  if (!input.empty()) resolved.data_path = input;
  if (resolved.data_path.empty()) throw ConfigError("preprocess: no input file given");
  const auto data = filter_min_interactions(
      load(resolved.data_path, parse_format(resolved.data_format)), resolved.filter_min);
  write_canonical(resolved.out_dir, data, resolved.split);
  write_run_info(resolved, "preprocess");
  const auto parts = split(data.stream, resolved.split);
  std::printf("preprocess: %d users, %d items, %zu interactions -> %s\n", data.num_users(),
              data.num_items(), data.stream.size(), resolved.out_dir.c_str());
  std::printf("splits: pretrain %zu, valid %zu, test %zu\n", parts.pretrain.size(),
              parts.valid.size(), parts.test.size());
  return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg);
  Run run = make_run(cfg, ds);
  write_run_info(cfg, "pretrain");
  run.trainer->pretrain(ds.pretrain());

  run.rec->params().save((fs::path(cfg.out_dir) / "rec.snap").string(), cfg.model,
                         {{"seed", std::to_string(cfg.seed)}});
  if (ParamStore* phi = run.strat->meta_params()) {
    phi->save((fs::path(cfg.out_dir) / "meta.snap").string(), cfg.strategy,
              {{"seed", std::to_string(cfg.seed)}});
  }
  std::printf("pretrain: %d epochs over %zu interactions, %llu steps -> %s\n", cfg.epochs,
              ds.pretrain().size(), static_cast<unsigned long long>(run.trainer->step()),
              cfg.out_dir.c_str());
  return 0;
}

int cmd_online(const RunConfig& cfg, const std::string& snapshot) {
  const Dataset ds = load_dataset(cfg);
  Run run = make_run(cfg, ds);
  write_run_info(cfg, "online");
  if (!snapshot.empty()) {
    run.rec->params().load_from((fs::path(snapshot) / "rec.snap").string());
    if (ParamStore* phi = run.strat->meta_params()) {
      const auto meta_path = fs::path(snapshot) / "meta.snap";
      if (fs::exists(meta_path)) phi->load_from(meta_path.string());
    }
  }
  run.trainer->seed_history(ds.pretrain());
  run.trainer->seed_history(ds.valid());

  const auto rows = run.trainer->run_online(ds.test());
  write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), rows, cfg.eval_ks);
  const auto report = aggregate(rows, cfg.eval_ks, run.trainer->eval_digest());
  write_report_json((fs::path(cfg.out_dir) / "report.json").string(), report, cfg.strategy,
                    cfg.model);
  if (run.trainer->captured()) {
    write_heatmap_csv((fs::path(cfg.out_dir) / "w-heatmap.csv").string(),
                      run.trainer->captured()->dense);
  }
  std::printf("online: %zu batches", rows.size());
  for (std::size_t k = 0; k < cfg.eval_ks.size(); ++k) {
    std::printf(", hr@%d %.4f", cfg.eval_ks[k], report.hr[k]);
  }
  std::printf(" -> %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_analyze_rank(const RunConfig& cfg, const std::string& snapshot) {
  write_run_info(cfg, "analyze-rank");
  const RankAnalysis analysis = run_rank_analysis(cfg.rank_trials, cfg.seed);
  const std::string report_path = (fs::path(cfg.out_dir) / "rank-report.json").string();
  write_rank_report(report_path, analysis);

  // Capture one densified rate matrix from an online batch.
  RunConfig capture_cfg = cfg;
  if (capture_cfg.capture_step < 0) capture_cfg.capture_step = 0;
  const Dataset ds = load_dataset(capture_cfg);
  Run run = make_run(capture_cfg, ds);
  if (!snapshot.empty()) {
    run.rec->params().load_from((fs::path(snapshot) / "rec.snap").string());
    if (ParamStore* phi = run.strat->meta_params()) {
      const auto meta_path = fs::path(snapshot) / "meta.snap";
      if (fs::exists(meta_path)) phi->load_from(meta_path.string());
    }
  }
  run.trainer->seed_history(ds.pretrain());
  run.trainer->seed_history(ds.valid());
  const std::size_t want =
      std::min<std::size_t>(ds.test().size(),
                            static_cast<std::size_t>(capture_cfg.capture_step + 1) *
                                static_cast<std::size_t>(capture_cfg.batch_size));
  run.trainer->run_online(ds.test().subspan(0, want));
  if (run.trainer->captured()) {
    const CaptureResult& cap = *run.trainer->captured();
    write_heatmap_csv((fs::path(cfg.out_dir) / "w-heatmap.csv").string(), cap.dense);

    // Attach the captured matrix's spectrum to the report.
    json report = json::parse(std::ifstream(report_path));
    const auto spectrum = svd(cap.dense).spectrum;
    std::vector<double> top(spectrum.sigma.begin(),
                            spectrum.sigma.begin() +
                                std::min<std::size_t>(spectrum.sigma.size(), 8));
    report["captured"] = {{"strategy", cfg.strategy},
                          {"step", cap.step},
                          {"rows", cap.dense.rows()},
                          {"cols", cap.dense.cols()},
                          {"sigma_top", top},
                          {"sigma2_over_sigma1", rank_ratio(cap.dense)}};
    std::ofstream out(report_path, std::ios::binary);
    out << report.dump(2) << '\n';
  }

  std::printf("analyze-rank: %zu planted trials, all_hold=%s, max EY residual %.3e -> %s\n",
              analysis.trials.size(), analysis.all_hold ? "true" : "false",
              analysis.max_ey_residual, cfg.out_dir.c_str());
  if (!analysis.all_hold) return 4;
  return 0;
}

int cmd_bench(const RunConfig& cfg, int max_batches, int warmup) {
  write_run_info(cfg, "bench");
  const Dataset ds = load_dataset(cfg);
  json out = json::array();
  for (const std::string kind : {"default", "eals", "mwnet", "metasgd", "melon"}) {
    RunConfig c = cfg;
    c.strategy = kind;
    Run run = make_run(c, ds);
    run.trainer->seed_history(ds.pretrain());
    run.trainer->seed_history(ds.valid());
    const std::size_t want = std::min<std::size_t>(
        ds.test().size(),
        static_cast<std::size_t>(max_batches) * static_cast<std::size_t>(cfg.batch_size));
    const auto rows = run.trainer->run_online(ds.test().subspan(0, want));

    std::vector<double> times;
    for (std::size_t r = static_cast<std::size_t>(warmup); r < rows.size(); ++r) {
      times.push_back(rows[r].wall_ms);
    }
    if (times.empty()) continue;
    std::sort(times.begin(), times.end());
    double mean = 0.0;
    for (double t : times) mean += t;
    mean /= static_cast<double>(times.size());
    const double median = times[times.size() / 2];
    const double p95 = times[std::min(times.size() - 1,
                                      static_cast<std::size_t>(times.size() * 0.95))];
    std::printf("bench %-8s mean %8.3f ms  median %8.3f ms  p95 %8.3f ms  (%zu batches)\n",
                kind.c_str(), mean, median, p95, times.size());
    out.push_back({{"strategy", kind},
                   {"mean_ms", mean},
                   {"median_ms", median},
                   {"p95_ms", p95},
                   {"batches", times.size()},
                   {"warmup_excluded", warmup}});
  }
  std::ofstream f(fs::path(cfg.out_dir) / "bench.json", std::ios::binary);
  f << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned online recommender updates"};
  app.require_subcommand(1);

  std::string config_path, input, snapshot, out_override, strategy_override, model_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int bench_batches = 20, bench_warmup = 2;

  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed_override, "master seed override")->each([&](std::string) {
    seed_set = true;
  });
  app.add_option("--strategy", strategy_override, "update strategy override");
  app.add_option("--model", model_override, "recommender override (bpr|ncf)");
  app.add_option("--out", out_override, "output directory override");

  auto* pre = app.add_subcommand("preprocess", "load, filter, split, dump canonical data");
  pre->fallthrough();
  pre->add_option("--input", input, "raw interaction log (csv/tsv)");
  auto* train = app.add_subcommand("pretrain", "offline pretraining, writes snapshots");
  train->fallthrough();
  auto* online = app.add_subcommand("online", "prequential online evaluation + training");
  online->fallthrough();
  online->add_option("--snapshot", snapshot, "snapshot directory from pretrain");
  auto* rank = app.add_subcommand("analyze-rank", "rate-matrix rank validation and capture");
  rank->fallthrough();
  rank->add_option("--snapshot", snapshot, "snapshot directory (optional)");
  auto* bench = app.add_subcommand("bench", "per-strategy online step timings");
  bench->fallthrough();
  bench->add_option("--batches", bench_batches, "online batches to time");
  bench->add_option("--warmup", bench_warmup, "warm-up batches excluded from stats");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_json_file(config_path);
    if (seed_set) cfg.seed = seed_override;
    if (!strategy_override.empty()) cfg.strategy = strategy_override;
    if (!model_override.empty()) cfg.model = model_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();

    if (pre->parsed()) return cmd_preprocess(cfg, input);
    if (train->parsed()) return cmd_pretrain(cfg);
    if (online->parsed()) return cmd_online(cfg, snapshot);
    if (rank->parsed()) return cmd_analyze_rank(cfg, snapshot);
    if (bench->parsed()) return cmd_bench(cfg, bench_batches, bench_warmup);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
