#include "melon/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "melon/error.hpp"
#include "melon/history.hpp"

namespace melon {

namespace fs = std::filesystem;
using nlohmann::json;

void SplitSpec::validate() const {
  for (double f : {pretrain_frac, valid_frac, test_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("split: fraction out of [0,1]: " + std::to_string(f));
    }
  }
  const double sum = pretrain_frac + valid_frac + test_frac;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split: fractions sum to " + std::to_string(sum) + ", expected 1");
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && !s.empty();
}

int dense_id(std::unordered_map<std::string, int>& map, std::vector<std::string>& names,
             const std::string& token) {
  auto [it, inserted] = map.emplace(token, static_cast<int>(names.size()));
  if (inserted) names.push_back(token);
  return it->second;
}

// floor(frac * n) with protection against 0.95*1000 = 949.999... artifacts.
std::size_t boundary_index(double frac, std::size_t n) {
  const double v = frac * static_cast<double>(n);
  const double r = std::llround(v);
  if (std::abs(v - r) < 1e-6) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::floor(v));
}

}  // namespace

LoadedData load(const std::string& path, FileFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("load: cannot open " + path);

  char delim = ',';
  if (format == FileFormat::Tsv) {
    delim = '\t';
  } else if (format == FileFormat::Auto) {
    const auto ext = fs::path(path).extension().string();
    if (ext == ".tsv") delim = '\t';
  }

  LoadedData data;
  std::unordered_map<std::string, int> user_map, item_map;
  std::string line;
  std::size_t line_no = 0;
  bool saw_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    if (format == FileFormat::Auto && line_no == 1 && line.find('\t') != std::string::npos) {
      delim = '\t';
    }
    auto fields = split_fields(line, delim);
    std::int64_t t = 0;
    if (!parse_int64(fields[0], t)) {
      if (line_no == 1) continue;  // header row
      throw DataError("load: line " + std::to_string(line_no) + ": bad timestamp '" +
                      fields[0] + "'");
    }
    if (fields.size() < 3 || fields[2].empty()) {
      throw DataError("load: line " + std::to_string(line_no) + ": missing item column");
    }
    if (fields.size() > 4) {
      throw DataError("load: line " + std::to_string(line_no) + ": too many columns (" +
                      std::to_string(fields.size()) + ")");
    }
    if (fields[1].empty()) {
      throw DataError("load: line " + std::to_string(line_no) + ": empty user column");
    }
    // Column 4, when present, is a rating; any rated row is a positive.
    Interaction x;
    x.t = t;
    x.u = dense_id(user_map, data.user_ids, fields[1]);
    x.i = dense_id(item_map, data.item_ids, fields[2]);
    data.stream.push_back(x);
    saw_data = true;
  }
  if (!saw_data) throw DataError("load: no interactions in " + path);
  std::stable_sort(data.stream.begin(), data.stream.end(),
                   [](const Interaction& a, const Interaction& b) { return a.t < b.t; });
  return data;
}

LoadedData filter_min_interactions(const LoadedData& data, int k) {
  if (k < 1) throw ConfigError("filter: threshold must be >= 1");

  std::vector<char> user_alive(data.user_ids.size(), 1);
  std::vector<char> item_alive(data.item_ids.size(), 1);
  for (;;) {
    std::vector<int> user_count(data.user_ids.size(), 0);
    std::vector<int> item_count(data.item_ids.size(), 0);
    for (const auto& x : data.stream) {
      if (user_alive[x.u] && item_alive[x.i]) {
        ++user_count[x.u];
        ++item_count[x.i];
      }
    }
    bool removed = false;
    for (std::size_t u = 0; u < user_alive.size(); ++u) {
      if (user_alive[u] && user_count[u] < k) {
        user_alive[u] = 0;
        removed = true;
      }
    }
    for (std::size_t i = 0; i < item_alive.size(); ++i) {
      if (item_alive[i] && item_count[i] < k) {
        item_alive[i] = 0;
        removed = true;
      }
    }
    if (!removed) break;
  }

  LoadedData out;
  std::vector<int> user_remap(data.user_ids.size(), -1);
  std::vector<int> item_remap(data.item_ids.size(), -1);
  for (std::size_t u = 0; u < user_alive.size(); ++u) {
    if (user_alive[u]) {
      user_remap[u] = static_cast<int>(out.user_ids.size());
      out.user_ids.push_back(data.user_ids[u]);
    }
  }
  for (std::size_t i = 0; i < item_alive.size(); ++i) {
    if (item_alive[i]) {
      item_remap[i] = static_cast<int>(out.item_ids.size());
      out.item_ids.push_back(data.item_ids[i]);
    }
  }
  for (const auto& x : data.stream) {
    if (user_alive[x.u] && item_alive[x.i]) {
      out.stream.push_back({x.t, user_remap[x.u], item_remap[x.i]});
    }
  }
  if (out.stream.empty()) throw DataError("filter: dataset exhausted by filtering");
  return out;
}

SplitResult split(std::span<const Interaction> stream, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = stream.size();
  SplitResult r;
  r.boundary1 = boundary_index(spec.pretrain_frac, n);
  r.boundary2 = boundary_index(spec.pretrain_frac + spec.valid_frac, n);
  r.boundary1 = std::min(r.boundary1, n);
  r.boundary2 = std::min(std::max(r.boundary2, r.boundary1), n);
  r.pretrain = stream.subspan(0, r.boundary1);
  r.valid = stream.subspan(r.boundary1, r.boundary2 - r.boundary1);
  r.test = stream.subspan(r.boundary2);
  if (r.pretrain.empty() || r.valid.empty() || r.test.empty()) {
    std::fprintf(stderr, "[melon] warning: split produced an empty part (%zu/%zu/%zu)\n",
                 r.pretrain.size(), r.valid.size(), r.test.size());
  }
  return r;
}

NegativeSampler::NegativeSampler(const HistoryStore& hist) : hist_(hist) {}

std::vector<int> NegativeSampler::sample(int u, std::int64_t t, int count, Rng& rng) const {
  const int num_items = hist_.num_items();
  std::unordered_set<int> prior;
  for (int i : hist_.user_history(u, t, 0, 0)) prior.insert(i);
  const std::size_t available = static_cast<std::size_t>(num_items) - prior.size();

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  if (available == 0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::fprintf(stderr,
                   "[melon] warning: user %d interacted with every item before t=%lld; "
                   "sampling negatives uniformly over all items (reported once)\n",
                   u, static_cast<long long>(t));
    }
    ++fallbacks_;
    for (int c = 0; c < count; ++c) out.push_back(static_cast<int>(rng.below(num_items)));
    return out;
  }

  if (prior.size() * 4 >= static_cast<std::size_t>(num_items) * 3) {
    // Dense prior set: enumerate the complement once, draw from it.
    std::vector<int> complement;
    complement.reserve(available);
    for (int i = 0; i < num_items; ++i) {
      if (!prior.count(i)) complement.push_back(i);
    }
    for (int c = 0; c < count; ++c) {
      out.push_back(complement[rng.below(complement.size())]);
    }
    return out;
  }

  for (int c = 0; c < count; ++c) {
    for (;;) {
      const int candidate = static_cast<int>(rng.below(num_items));
      if (!prior.count(candidate)) {
        out.push_back(candidate);
        break;
      }
    }
  }
  return out;
}

std::vector<MiniBatch> make_batches(std::span<const Interaction> stream, int batch_size,
                                    int neg_per_pos, std::uint64_t seed,
                                    const HistoryStore& exclusion, std::size_t index_base) {
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
  if (neg_per_pos < 1) throw ConfigError("batches: neg_per_pos must be >= 1");

  NegativeSampler sampler(exclusion);
  std::vector<MiniBatch> out;
  for (std::size_t pos = 0; pos < stream.size(); pos += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(stream.size(), pos + static_cast<std::size_t>(batch_size));
    MiniBatch b;
    b.interactions.assign(stream.begin() + pos, stream.begin() + end);
    b.negatives.reserve(b.interactions.size());
    for (std::size_t j = 0; j < b.interactions.size(); ++j) {
      const auto& x = b.interactions[j];
      Rng rng(seed ^ static_cast<std::uint64_t>(index_base + pos + j));
      b.negatives.push_back(sampler.sample(x.u, x.t, neg_per_pos, rng));
    }
    out.push_back(std::move(b));
  }
  return out;
}

void write_canonical(const std::string& dir, const LoadedData& data, const SplitSpec& spec) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "interactions.tsv", std::ios::binary);
    if (!out) throw DataError("write_canonical: cannot write to " + dir);
    for (const auto& x : data.stream) {
      out << x.t << '\t' << x.u << '\t' << x.i << '\n';
    }
  }
  const auto parts = split(data.stream, spec);
  json sidecar{
      {"num_users", data.num_users()},
      {"num_items", data.num_items()},
      {"num_interactions", data.stream.size()},
      {"split_boundaries", {parts.boundary1, parts.boundary2}},
      {"user_ids", data.user_ids},
      {"item_ids", data.item_ids},
  };
  std::ofstream out(fs::path(dir) / "sidecar.json", std::ios::binary);
  out << sidecar.dump(2) << '\n';
}

bool is_canonical_dir(const std::string& path) {
  return fs::is_directory(path) && fs::exists(fs::path(path) / "sidecar.json");
}

CanonicalData read_canonical(const std::string& dir) {
  std::ifstream sc(fs::path(dir) / "sidecar.json");
  if (!sc) throw DataError("read_canonical: missing sidecar.json in " + dir);
  json sidecar = json::parse(sc, nullptr, true);

  CanonicalData out;
  out.data.user_ids = sidecar.at("user_ids").get<std::vector<std::string>>();
  out.data.item_ids = sidecar.at("item_ids").get<std::vector<std::string>>();
  out.boundary1 = sidecar.at("split_boundaries").at(0).get<std::size_t>();
  out.boundary2 = sidecar.at("split_boundaries").at(1).get<std::size_t>();

  std::ifstream in(fs::path(dir) / "interactions.tsv");
  if (!in) throw DataError("read_canonical: missing interactions.tsv in " + dir);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_fields(line, '\t');
    Interaction x;
    std::int64_t u = 0, i = 0;
    if (fields.size() != 3 || !parse_int64(fields[0], x.t) || !parse_int64(fields[1], u) ||
        !parse_int64(fields[2], i)) {
      throw DataError("read_canonical: bad row at line " + std::to_string(line_no));
    }
    x.u = static_cast<std::int32_t>(u);
    x.i = static_cast<std::int32_t>(i);
    out.data.stream.push_back(x);
  }
  const auto expected = sidecar.at("num_interactions").get<std::size_t>();
  if (out.data.stream.size() != expected) {
    throw DataError("read_canonical: interaction count mismatch");
  }
  return out;
}

}  // namespace melon
