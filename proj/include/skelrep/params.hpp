#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "skelrep/rng.hpp"
#include "skelrep/tensor.hpp"

namespace skelrep {

// Named tensors with a stable flat layout (insertion order). The flat view is
// what gradients, SGD and the finite-difference checker operate on.
class ParameterStore {
 public:
  int add(std::string name, Tensor t, bool kernel);

  int index_of(std::string_view name) const;  // -1 when absent
  bool contains(std::string_view name) const { return index_of(name) >= 0; }

  int count() const { return static_cast<int>(entries_.size()); }
  const std::string& name(int i) const { return entries_[i].name; }
  Tensor& tensor(int i) { return entries_[i].t; }
  const Tensor& tensor(int i) const { return entries_[i].t; }
  Tensor& tensor(std::string_view name);
  const Tensor& tensor(std::string_view name) const;
  bool is_kernel(int i) const { return entries_[i].kernel; }

  std::size_t flat_size() const { return flat_size_; }
  std::size_t offset(int i) const { return entries_[i].offset; }

  double get_flat(std::size_t i) const;
  void set_flat(std::size_t i, double v);
  void copy_flat(std::vector<double>& out) const;
  void load_flat(const std::vector<double>& in);
  // (entry index, offset within entry) for a flat coordinate.
  std::pair<int, std::size_t> entry_at(std::size_t flat) const { return locate(flat); }

 private:
  struct Entry {
    std::string name;
    Tensor t;
    std::size_t offset;
    bool kernel;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
  std::size_t flat_size_ = 0;

  std::pair<int, std::size_t> locate(std::size_t flat) const;
};

// Kernel init: uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)), fan_in = cols.
// gain 1 is the conservative recurrent-cell bound; sqrt(3) makes the layer
// variance-preserving (uniform(-b, b) has variance b^2/3), which feedforward
// stacks need to keep signals and gradients from decaying geometrically.
// The stream is derived from (seed, name) so creation order is irrelevant.
int add_kernel(ParameterStore& s, const std::string& name, std::size_t rows, std::size_t cols,
               std::uint64_t seed, double gain = 1.0);
// Bias init: zeros.
int add_bias(ParameterStore& s, const std::string& name, std::size_t n);
int add_bias(ParameterStore& s, const std::string& name, std::vector<double> values,
             std::vector<std::size_t> shape);

// Checkpoint file: {"format_version":1, "config":{...}, "params":{name:{"shape","values"}}}.
// Doubles are serialized so the decimal round trip is value-exact.
void save_checkpoint(const ParameterStore& s, const nlohmann::json& config,
                     const std::string& path);
// Loads values into a store that already has the full architecture registered;
// name sets and shapes must match exactly. Returns the embedded config.
nlohmann::json load_checkpoint_into(ParameterStore& s, const std::string& path);
// Reads only the config block.
nlohmann::json read_checkpoint_config(const std::string& path);

}  // namespace skelrep
