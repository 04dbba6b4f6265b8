#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "loupe/common.hpp"

namespace loupe {

// Dense row-major tensor. Rank 1 and 2 cover every layer in this library;
// higher-rank parameters are registered pre-flattened.
template <typename S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shp)
      : shape(std::move(shp)), data(numel_of(shape), S(0)) {}

  Tensor(std::vector<std::size_t> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str_of(shape) + " needs " +
                       std::to_string(numel_of(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<std::size_t> shp, S v) {
    Tensor t(std::move(shp));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor vec(std::initializer_list<S> values) {
    return Tensor({values.size()}, std::vector<S>(values));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = S(1);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor " + shape_str() + " is not rank 2");
    return shape[0];
  }
  std::size_t cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor " + shape_str() + " is not rank 2");
    return shape[1];
  }

  S& at(std::size_t i) { return data[i]; }
  S at(std::size_t i) const { return data[i]; }
  S& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  S at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(S v) {
    for (auto& x : data) x = v;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  std::string shape_str() const { return shape_str_of(shape); }

  static std::string shape_str_of(const std::vector<std::size_t>& shp) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shp.size(); ++i) {
      if (i) os << "x";
      os << shp[i];
    }
    os << "]";
    return os.str();
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (auto d : shp) n *= d;
    return n;
  }
};

template <typename S>
inline void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " do not match");
  }
}

}  // namespace loupe
