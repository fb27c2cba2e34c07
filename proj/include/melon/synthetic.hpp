#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melon/dataset.hpp"

namespace melon {

// Two-regime preference stream: users and items carry latent groups; before
// the switch every user favors its own group's items, afterwards the
// preferred group rotates. Timestamps are the positions.
struct DriftSpec {
  int users = 50;
  int items = 40;
  int interactions = 5000;
  double switch_frac = 0.5;
  double affinity = 0.9;       // probability of drawing from the preferred group
  double drift_user_frac = 1.0;  // fraction of users whose preference rotates
  int groups = 2;
  std::uint64_t seed = 1;
};

std::vector<Interaction> drift_dataset(const DriftSpec& spec);

// Writes the stream as `timestamp,u<id>,i<id>` rows so it round-trips
// through the normal loader.
void write_interactions_csv(const std::string& path, std::span<const Interaction> stream);

}  // namespace melon
