#include "melon/synthetic.hpp"

#include <fstream>

#include "melon/error.hpp"
#include "melon/rng.hpp"

namespace melon {

std::vector<Interaction> drift_dataset(const DriftSpec& spec) {
  if (spec.users < 1 || spec.items < spec.groups || spec.groups < 2) {
    throw ConfigError("drift: need >= 1 user and >= groups items");
  }
  Rng rng(Rng::mix(spec.seed, 0x64726966ull));
  const int switch_at = static_cast<int>(spec.switch_frac * spec.interactions);

  std::vector<Interaction> out;
  out.reserve(static_cast<std::size_t>(spec.interactions));
  const int drifters = static_cast<int>(spec.drift_user_frac * spec.users);
  for (int t = 0; t < spec.interactions; ++t) {
    const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.users)));
    const int rotate = (t >= switch_at && u < drifters) ? 1 : 0;
    const int preferred = (u + rotate) % spec.groups;
    int i;
    if (rng.uniform() < spec.affinity) {
      // uniform over the preferred group's items
      const int per_group = (spec.items + spec.groups - 1) / spec.groups;
      do {
        i = preferred + spec.groups * static_cast<int>(rng.below(static_cast<std::uint64_t>(per_group)));
      } while (i >= spec.items);
    } else {
      i = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.items)));
    }
    out.push_back({t, u, i});
  }
  return out;
}

void write_interactions_csv(const std::string& path, std::span<const Interaction> stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("synthetic: cannot write " + path);
  for (const auto& x : stream) {
    out << x.t << ",u" << x.u << ",i" << x.i << '\n';
  }
}

}  // namespace melon
