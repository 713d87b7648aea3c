#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace skelrep {

// Dense row-major tensor of doubles, rank 1 or 2. Rank-1 tensors act as
// column vectors wherever a 2-D view is needed.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(count(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> vals)
      : shape(std::move(s)), v(std::move(vals)) {
    if (v.size() != count(shape)) throw std::invalid_argument("tensor: shape/value size mismatch");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    if (s.empty() || s.size() > 2) throw std::invalid_argument("tensor: rank must be 1 or 2");
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return v.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : 1; }

  double& at(std::size_t i, std::size_t j) { return v[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace skelrep
