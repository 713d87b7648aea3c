#include "skelrep/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace skelrep {

int ParameterStore::add(std::string name, Tensor t, bool kernel) {
  if (index_.count(name)) throw std::invalid_argument("parameter name not unique: " + name);
  int idx = count();
  index_.emplace(name, idx);
  std::size_t off = flat_size_;
  flat_size_ += t.size();
  entries_.push_back({std::move(name), std::move(t), off, kernel});
  return idx;
}

int ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

Tensor& ParameterStore::tensor(std::string_view name) {
  int i = index_of(name);
  if (i < 0) throw std::invalid_argument("no such parameter: " + std::string(name));
  return entries_[i].t;
}

const Tensor& ParameterStore::tensor(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->tensor(name);
}

std::pair<int, std::size_t> ParameterStore::locate(std::size_t flat) const {
  if (flat >= flat_size_) throw std::out_of_range("flat parameter index out of range");
  int lo = 0, hi = count() - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (entries_[mid].offset <= flat)
      lo = mid;
    else
      hi = mid - 1;
  }
  return {lo, flat - entries_[lo].offset};
}

double ParameterStore::get_flat(std::size_t i) const {
  auto [e, k] = locate(i);
  return entries_[e].t.v[k];
}

void ParameterStore::set_flat(std::size_t i, double v) {
  auto [e, k] = locate(i);
  entries_[e].t.v[k] = v;
}

void ParameterStore::copy_flat(std::vector<double>& out) const {
  out.resize(flat_size_);
  for (const auto& e : entries_)
    std::copy(e.t.v.begin(), e.t.v.end(), out.begin() + static_cast<std::ptrdiff_t>(e.offset));
}

void ParameterStore::load_flat(const std::vector<double>& in) {
  if (in.size() != flat_size_) throw std::invalid_argument("load_flat: size mismatch");
  for (auto& e : entries_)
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(e.offset),
              in.begin() + static_cast<std::ptrdiff_t>(e.offset + e.t.size()), e.t.v.begin());
}

int add_kernel(ParameterStore& s, const std::string& name, std::size_t rows, std::size_t cols,
               std::uint64_t seed, double gain) {
  Tensor t({rows, cols});
  double bound = gain / std::sqrt(static_cast<double>(cols));
  Rng rng = Rng::substream(seed, fnv1a(name));
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
  return s.add(name, std::move(t), true);
}

int add_bias(ParameterStore& s, const std::string& name, std::size_t n) {
  return s.add(name, Tensor({n}), false);
}

int add_bias(ParameterStore& s, const std::string& name, std::vector<double> values,
             std::vector<std::size_t> shape) {
  return s.add(name, Tensor(std::move(shape), std::move(values)), false);
}

void save_checkpoint(const ParameterStore& s, const nlohmann::json& config,
                     const std::string& path) {
  nlohmann::json params = nlohmann::json::object();
  for (int i = 0; i < s.count(); ++i) {
    const Tensor& t = s.tensor(i);
    params[s.name(i)] = {{"shape", t.shape}, {"values", t.v}};
  }
  nlohmann::json j = {{"format_version", 1}, {"config", config}, {"params", params}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f << j.dump();
  f << "\n";
  if (!f.good()) throw std::runtime_error("checkpoint write failed: " + path);
}

static nlohmann::json parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read file: " + path);
  nlohmann::json j;
  f >> j;
  return j;
}

nlohmann::json load_checkpoint_into(ParameterStore& s, const std::string& path) {
  nlohmann::json j = parse_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported format_version in " + path);
  const auto& params = j.at("params");
  if (params.size() != static_cast<std::size_t>(s.count()))
    throw std::runtime_error("checkpoint: parameter set size mismatch");
  for (int i = 0; i < s.count(); ++i) {
    const std::string& name = s.name(i);
    if (!params.contains(name)) throw std::runtime_error("checkpoint: missing parameter " + name);
    const auto& p = params.at(name);
    auto shape = p.at("shape").get<std::vector<std::size_t>>();
    Tensor& t = s.tensor(i);
    if (shape != t.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    auto vals = p.at("values").get<std::vector<double>>();
    if (vals.size() != t.v.size())
      throw std::runtime_error("checkpoint: value count mismatch for " + name);
    t.v = std::move(vals);
  }
  return j.at("config");
}

nlohmann::json read_checkpoint_config(const std::string& path) {
  return parse_file(path).at("config");
}

}  // namespace skelrep
