#include "melon/params.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "melon/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "snapshot io assumes a little-endian host");

namespace melon {

namespace fs = std::filesystem;
using nlohmann::json;

int ParamStore::add(std::string name, Tensor value) {
  if (find(name) >= 0) throw NumericError("params: duplicate parameter '" + name + "'");
  Entry e{std::move(name), std::move(value), total_};
  total_ += e.value.numel();
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size() - 1);
}

int ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int ParamStore::require(std::string_view name) const {
  const int p = find(name);
  if (p < 0) throw NumericError("params: unknown parameter '" + std::string(name) + "'");
  return p;
}

std::span<double> ParamStore::flat(const FlatRange& r) {
  Tensor& t = entries_[r.param].value;
  if (r.end > t.numel() || r.begin > r.end) {
    throw NumericError("params: range out of bounds for '" + entries_[r.param].name + "'");
  }
  return {t.data() + r.begin, r.size()};
}

std::span<const double> ParamStore::flat(const FlatRange& r) const {
  const Tensor& t = entries_[r.param].value;
  if (r.end > t.numel() || r.begin > r.end) {
    throw NumericError("params: range out of bounds for '" + entries_[r.param].name + "'");
  }
  return {t.data() + r.begin, r.size()};
}

FlatRange ParamStore::row_range(int p, std::size_t row) const {
  const Tensor& t = entries_[p].value;
  const std::size_t c = t.cols();
  if (row >= t.rows()) {
    throw NumericError("params: row " + std::to_string(row) + " out of bounds for '" +
                       entries_[p].name + "'");
  }
  return {p, row * c, (row + 1) * c, static_cast<std::ptrdiff_t>(row)};
}

FlatRange ParamStore::whole_range(int p) const {
  return {p, 0, entries_[p].value.numel(), -1};
}

void ParamStore::save(const std::string& path, const std::string& kind,
                      const std::map<std::string, std::string>& manifest_extra) const {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("params: cannot write snapshot " + path);

  const char magic[8] = {'M', 'L', 'N', 'S', 'N', 'A', 'P', '1'};
  out.write(magic, 8);
  const std::uint32_t count = static_cast<std::uint32_t>(entries_.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& e : entries_) {
    const std::uint32_t nlen = static_cast<std::uint32_t>(e.name.size());
    out.write(reinterpret_cast<const char*>(&nlen), 4);
    out.write(e.name.data(), nlen);
    const std::uint32_t nd = static_cast<std::uint32_t>(e.value.ndim());
    out.write(reinterpret_cast<const char*>(&nd), 4);
    for (std::size_t d : e.value.shape()) {
      const std::uint64_t dim = d;
      out.write(reinterpret_cast<const char*>(&dim), 8);
    }
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.numel() * sizeof(double)));
  }

  json manifest{{"kind", kind}, {"tensors", json::array()}};
  for (const auto& e : entries_) {
    manifest["tensors"].push_back({{"name", e.name}, {"shape", e.value.shape()}});
  }
  for (const auto& [k, v] : manifest_extra) manifest[k] = v;
  std::ofstream mf(path + ".json", std::ios::binary);
  mf << manifest.dump(2) << '\n';
}

ParamStore ParamStore::load(const std::string& path, std::string* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("params: cannot open snapshot " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, "MLNSNAP1", 8) != 0) {
    throw DataError("params: bad snapshot magic in " + path);
  }
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    std::uint32_t nd = 0;
    in.read(reinterpret_cast<char*>(&nd), 4);
    Shape shape(nd);
    for (auto& d : shape) {
      std::uint64_t dim = 0;
      in.read(reinterpret_cast<char*>(&dim), 8);
      d = static_cast<std::size_t>(dim);
    }
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw DataError("params: truncated snapshot " + path);
    store.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (kind) {
    std::ifstream mf(path + ".json");
    if (mf) {
      json manifest = json::parse(mf, nullptr, true);
      *kind = manifest.value("kind", "");
    }
  }
  return store;
}

void ParamStore::load_from(const std::string& path) {
  const ParamStore other = load(path);
  if (other.count() != count()) {
    throw DataError("params: snapshot " + path + " carries " + std::to_string(other.count()) +
                    " tensors, expected " + std::to_string(count()));
  }
  for (int p = 0; p < count(); ++p) {
    const int q = other.find(name(p));
    if (q < 0 || other.tensor(q).shape() != tensor(p).shape()) {
      throw DataError("params: snapshot " + path + " does not match parameter '" + name(p) + "'");
    }
    entries_[static_cast<std::size_t>(p)].value = other.tensor(q);
  }
}

int ParamLookup::row(int param, std::size_t r) {
  const std::pair<int, std::ptrdiff_t> key{param, static_cast<std::ptrdiff_t>(r)};
  if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const FlatRange range = store_.row_range(param, r);
  const auto data = store_.flat(range);
  const int node = tape_.leaf(Tensor({range.size()}, {data.begin(), data.end()}));
  cache_[key] = node;
  leaves_.push_back({param, key.second, node});
  return node;
}

int ParamLookup::whole(int param) {
  const std::pair<int, std::ptrdiff_t> key{param, -1};
  if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const int node = tape_.leaf(store_.tensor(param));
  cache_[key] = node;
  leaves_.push_back({param, -1, node});
  return node;
}

void ParamLookup::override_row(int param, std::size_t r, int node) {
  overrides_[{param, static_cast<std::ptrdiff_t>(r)}] = node;
}

void ParamLookup::override_whole(int param, int node) { overrides_[{param, -1}] = node; }

int ParamLookup::find_leaf(int param, std::ptrdiff_t row) const {
  if (auto it = cache_.find({param, row}); it != cache_.end()) return it->second;
  return -1;
}

std::vector<Tensor> ParamLookup::collect_adjoints() const {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(store_.count()));
  for (int p = 0; p < store_.count(); ++p) out.emplace_back(store_.tensor(p).shape());
  for (const auto& rec : leaves_) {
    const Tensor& adj = tape_.adjoint(rec.node);
    Tensor& dst = out[static_cast<std::size_t>(rec.param)];
    if (rec.row < 0) {
      for (std::size_t i = 0; i < adj.numel(); ++i) dst[i] += adj[i];
    } else {
      const std::size_t cols = dst.cols();
      const std::size_t base = static_cast<std::size_t>(rec.row) * cols;
      for (std::size_t i = 0; i < adj.numel(); ++i) dst[base + i] += adj[i];
    }
  }
  return out;
}

}  // namespace melon
