#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "melon/tape.hpp"
#include "melon/tensor.hpp"

namespace melon {

// Contiguous coordinate range inside one named parameter (flattened,
// row-major). Embedding rows are one range each (row >= 0); dense layers are
// a single whole-tensor range (row == -1).
struct FlatRange {
  int param = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::ptrdiff_t row = -1;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const FlatRange&, const FlatRange&) = default;
};

// The parameters one interaction's forward pass touches. Gradients outside
// the slice are exactly zero for that interaction's loss.
struct DependentSlice {
  std::vector<FlatRange> ranges;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& r : ranges) n += r.size();
    return n;
  }
};

// Named parameter set addressable per tensor, per row, and per flat index.
class ParamStore {
 public:
  int add(std::string name, Tensor value);
  int find(std::string_view name) const;  // -1 when absent
  int require(std::string_view name) const;

  int count() const { return static_cast<int>(entries_.size()); }
  const std::string& name(int p) const { return entries_[p].name; }
  Tensor& tensor(int p) { return entries_[p].value; }
  const Tensor& tensor(int p) const { return entries_[p].value; }

  // Flat layout: parameters packed in registration order.
  std::size_t offset(int p) const { return entries_[p].offset; }
  std::size_t total_size() const { return total_; }
  std::size_t global_index(const FlatRange& r) const { return offset(r.param) + r.begin; }

  std::span<double> flat(const FlatRange& r);
  std::span<const double> flat(const FlatRange& r) const;

  // Row r of a 2-D parameter as a flat range.
  FlatRange row_range(int p, std::size_t row) const;
  FlatRange whole_range(int p) const;

  // Snapshot: little-endian binary tensors plus a JSON manifest.
  void save(const std::string& path, const std::string& kind,
            const std::map<std::string, std::string>& manifest_extra = {}) const;
  static ParamStore load(const std::string& path, std::string* kind = nullptr);
  // Loads a snapshot into this store; names and shapes must match.
  void load_from(const std::string& path);

 private:
  struct Entry {
    std::string name;
    Tensor value;
    std::size_t offset;
  };
  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

// Resolves (param, row) pairs to tape leaves, one leaf per distinct slot,
// with optional node overrides (used to run a forward pass under a
// preliminary-updated parameter set without touching the store).
class ParamLookup {
 public:
  ParamLookup(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  int row(int param, std::size_t r);
  int whole(int param);

  void override_row(int param, std::size_t r, int node);
  void override_whole(int param, int node);

  struct LeafRec {
    int param;
    std::ptrdiff_t row;  // -1 for whole tensors
    int node;
  };
  const std::vector<LeafRec>& leaves() const { return leaves_; }
  int find_leaf(int param, std::ptrdiff_t row) const;

  // Per-parameter adjoint tensors (zeros where no leaf was created). Call
  // after Tape::backward.
  std::vector<Tensor> collect_adjoints() const;

  Tape& tape() { return tape_; }
  const ParamStore& store() const { return store_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::pair<int, std::ptrdiff_t>, int> cache_;
  std::map<std::pair<int, std::ptrdiff_t>, int> overrides_;
  std::vector<LeafRec> leaves_;
};

}  // namespace melon
