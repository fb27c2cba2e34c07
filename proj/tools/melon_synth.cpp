// Writes a synthetic two-regime interaction log for desk-scale experiments.

#include <cstdio>

#include <CLI11.hpp>

#include "melon/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic drift dataset generator"};
  melon::DriftSpec spec;
  std::string out = "drift.csv";
  app.add_option("--out", out, "output csv path");
  app.add_option("--users", spec.users);
  app.add_option("--items", spec.items);
  app.add_option("--interactions", spec.interactions);
  app.add_option("--switch-frac", spec.switch_frac, "position of the preference switch");
  app.add_option("--affinity", spec.affinity, "probability of an in-group interaction");
  app.add_option("--groups", spec.groups);
  app.add_option("--seed", spec.seed);
  CLI11_PARSE(app, argc, argv);

  try {
    const auto stream = melon::drift_dataset(spec);
    melon::write_interactions_csv(out, stream);
    std::printf("wrote %zu interactions (%d users, %d items, switch at %d) to %s\n",
                stream.size(), spec.users, spec.items,
                static_cast<int>(spec.switch_frac * spec.interactions), out.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
