#include "melon/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "melon/error.hpp"

namespace melon {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: bad JSON: ") + e.what());
  }

  RunConfig cfg;
  require_keys(j, "", {"dataset", "split", "model", "strategy", "train", "meta", "eval",
                       "analyze", "seed", "out"});
  read(j, "seed", cfg.seed);
  read(j, "out", cfg.out_dir);

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    require_keys(d, "dataset", {"path", "format", "filter_min_interactions"});
    read(d, "path", cfg.data_path);
    read(d, "format", cfg.data_format);
    read(d, "filter_min_interactions", cfg.filter_min);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    require_keys(s, "split", {"pretrain", "valid", "test"});
    read(s, "pretrain", cfg.split.pretrain_frac);
    read(s, "valid", cfg.split.valid_frac);
    read(s, "test", cfg.split.test_frac);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    require_keys(m, "model", {"kind", "embed_dim", "ncf_tower"});
    read(m, "kind", cfg.model);
    read(m, "embed_dim", cfg.embed_dim);
    read(m, "ncf_tower", cfg.ncf_tower);
  }
  if (j.contains("strategy")) {
    const auto& s = j["strategy"];
    require_keys(s, "strategy",
                 {"kind", "eals_boost", "mwnet_hidden", "forget_gate", "frozen_rate"});
    read(s, "kind", cfg.strategy);
    read(s, "eals_boost", cfg.eals_boost);
    read(s, "mwnet_hidden", cfg.mwnet_hidden);
    read(s, "forget_gate", cfg.forget_gate);
    if (s.contains("frozen_rate") && !s["frozen_rate"].is_null()) {
      cfg.frozen_rate = s["frozen_rate"].get<double>();
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    require_keys(t, "train",
                 {"batch_size", "epochs", "eta", "eta_meta", "weight_decay", "rec_optimizer",
                  "train_negatives", "checkpoint_every"});
    read(t, "batch_size", cfg.batch_size);
    read(t, "epochs", cfg.epochs);
    read(t, "eta", cfg.eta);
    read(t, "eta_meta", cfg.eta_meta);
    read(t, "weight_decay", cfg.weight_decay);
    read(t, "rec_optimizer", cfg.rec_optimizer);
    read(t, "train_negatives", cfg.train_negatives);
    read(t, "checkpoint_every", cfg.checkpoint_every);
  }
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    require_keys(m, "meta",
                 {"repr_dim", "role_layers", "preprocess_p", "neighbor_cap", "leaky_slope",
                  "include_item_last"});
    read(m, "repr_dim", cfg.repr_dim);
    read(m, "role_layers", cfg.role_layers);
    read(m, "preprocess_p", cfg.preprocess_p);
    read(m, "neighbor_cap", cfg.neighbor_cap);
    read(m, "leaky_slope", cfg.leaky_slope);
    read(m, "include_item_last", cfg.include_item_last);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    require_keys(e, "eval", {"negatives", "ks"});
    read(e, "negatives", cfg.eval_negatives);
    read(e, "ks", cfg.eval_ks);
  }
  if (j.contains("analyze")) {
    const auto& a = j["analyze"];
    require_keys(a, "analyze", {"rank_trials", "capture_step"});
    read(a, "rank_trials", cfg.rank_trials);
    read(a, "capture_step", cfg.capture_step);
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  split.validate();
  if (model != "bpr" && model != "ncf") throw ConfigError("config: model must be bpr or ncf");
  const std::set<std::string> strategies{"default", "eals",  "mwnet", "metasgd",
                                         "melon",   "melon_i", "melon_p"};
  if (!strategies.count(strategy)) throw ConfigError("config: unknown strategy " + strategy);
  if (rec_optimizer != "adam" && rec_optimizer != "sgd") {
    throw ConfigError("config: rec_optimizer must be adam or sgd");
  }
  if (data_format != "auto" && data_format != "csv" && data_format != "tsv") {
    throw ConfigError("config: format must be auto, csv, or tsv");
  }
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (eta <= 0 || eta_meta <= 0) throw ConfigError("config: learning rates must be > 0");
  if (embed_dim < 1) throw ConfigError("config: embed_dim must be >= 1");
  if (eval_negatives < 1) throw ConfigError("config: eval negatives must be >= 1");
  if (eval_ks.empty()) throw ConfigError("config: eval ks must not be empty");
  if (filter_min < 1) throw ConfigError("config: filter_min_interactions must be >= 1");
  if (role_layers < 1) throw ConfigError("config: role_layers must be >= 1");
  if (neighbor_cap < 1) throw ConfigError("config: neighbor_cap must be >= 1");
  if (train_negatives < 1) throw ConfigError("config: train_negatives must be >= 1");
}

std::string RunConfig::serialize() const {
  json j{
      {"dataset",
       {{"path", data_path}, {"format", data_format}, {"filter_min_interactions", filter_min}}},
      {"split",
       {{"pretrain", split.pretrain_frac},
        {"valid", split.valid_frac},
        {"test", split.test_frac}}},
      {"model", {{"kind", model}, {"embed_dim", embed_dim}, {"ncf_tower", ncf_tower}}},
      {"strategy",
       {{"kind", strategy},
        {"eals_boost", eals_boost},
        {"mwnet_hidden", mwnet_hidden},
        {"forget_gate", forget_gate},
        {"frozen_rate", frozen_rate ? json(*frozen_rate) : json(nullptr)}}},
      {"train",
       {{"batch_size", batch_size},
        {"epochs", epochs},
        {"eta", eta},
        {"eta_meta", eta_meta},
        {"weight_decay", weight_decay},
        {"rec_optimizer", rec_optimizer},
        {"train_negatives", train_negatives},
        {"checkpoint_every", checkpoint_every}}},
      {"meta",
       {{"repr_dim", repr_dim},
        {"role_layers", role_layers},
        {"preprocess_p", preprocess_p},
        {"neighbor_cap", neighbor_cap},
        {"leaky_slope", leaky_slope},
        {"include_item_last", include_item_last}}},
      {"eval", {{"negatives", eval_negatives}, {"ks", eval_ks}}},
      {"analyze", {{"rank_trials", rank_trials}, {"capture_step", capture_step}}},
      {"seed", seed},
      {"out", out_dir},
  };
  return j.dump(2) + "\n";
}

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions opt;
  opt.batch_size = batch_size;
  opt.epochs = epochs;
  opt.eta = eta;
  opt.eta_meta = eta_meta;
  opt.weight_decay = weight_decay;
  opt.rec_optimizer = rec_optimizer == "sgd" ? TrainerOptions::RecOptimizer::Sgd
                                             : TrainerOptions::RecOptimizer::Adam;
  opt.train_negatives = train_negatives;
  opt.eval_negatives = eval_negatives;
  opt.eval_ks = eval_ks;
  opt.checkpoint_every = checkpoint_every;
  opt.seed = seed;
  opt.include_item_last = include_item_last;
  opt.capture_step = capture_step;
  return opt;
}

RecommenderConfig RunConfig::recommender_config(int num_users, int num_items) const {
  RecommenderConfig rc;
  rc.num_users = num_users;
  rc.num_items = num_items;
  rc.embed_dim = embed_dim;
  rc.ncf_tower = ncf_tower;
  rc.seed = Rng::mix(seed, 0x726563ull);
  return rc;
}

StrategyConfig RunConfig::strategy_config() const {
  StrategyConfig sc;
  sc.kind = strategy;
  sc.eals_boost = eals_boost;
  sc.mwnet_hidden = mwnet_hidden;
  sc.frozen_rate = frozen_rate;
  sc.eta = eta;
  sc.seed = Rng::mix(seed, 0x737472ull);
  sc.melon.embed_dim = embed_dim;
  sc.melon.repr_dim = repr_dim;
  sc.melon.role_layers = role_layers;
  sc.melon.preprocess_p = preprocess_p;
  sc.melon.neighbor_cap = neighbor_cap;
  sc.melon.leaky_slope = leaky_slope;
  sc.melon.forget_gate = forget_gate;
  return sc;
}

}  // namespace melon
