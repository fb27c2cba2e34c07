#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "melon/dataset.hpp"
#include "melon/recommender.hpp"
#include "melon/strategies.hpp"
#include "melon/trainer.hpp"

namespace melon {

// Fully-resolved run configuration. Loaded from JSON (unknown keys are
// rejected), overridable from the command line, and serialized verbatim into
// every output directory.
struct RunConfig {
  std::string data_path;
  std::string data_format = "auto";  // auto|csv|tsv
  SplitSpec split;
  int filter_min = 20;

  std::string model = "bpr";  // bpr|ncf
  int embed_dim = 32;
  std::vector<int> ncf_tower = {64, 32, 16};

  std::string strategy = "melon";  // default|eals|mwnet|metasgd|melon|melon_i|melon_p
  double eals_boost = 4.0;
  int mwnet_hidden = 100;
  bool forget_gate = true;
  std::optional<double> frozen_rate;

  int batch_size = 256;
  int epochs = 100;
  double eta = 0.001;
  double eta_meta = 0.001;
  double weight_decay = 0.001;
  std::string rec_optimizer = "adam";  // adam|sgd
  int train_negatives = 1;
  int checkpoint_every = 0;

  int repr_dim = 0;  // 0 -> embed_dim
  int role_layers = 2;
  double preprocess_p = 10.0;
  int neighbor_cap = 10;
  double leaky_slope = 0.2;
  bool include_item_last = false;

  int eval_negatives = 99;
  std::vector<int> eval_ks = {5, 10, 20};

  int rank_trials = 100;
  long long capture_step = -1;

  std::uint64_t seed = 17;
  std::string out_dir = "runs/out";

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string serialize() const;
  void validate() const;

  TrainerOptions trainer_options() const;
  RecommenderConfig recommender_config(int num_users, int num_items) const;
  StrategyConfig strategy_config() const;
};

}  // namespace melon
