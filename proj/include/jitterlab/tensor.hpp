#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace jitterlab {

// Global float width. Tests and acceptance runs use the 64-bit default;
// -DJITTERLAB_FLOAT32=ON rebuilds everything at 32 bits for speed.
#ifdef JITTERLAB_FLOAT32
using real = float;
#else
using real = double;
#endif

constexpr int float_width_bits() { return static_cast<int>(sizeof(real) * 8); }

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};
struct NonPositiveTemperature : NumericsError {
  NonPositiveTemperature() : NumericsError("NonPositiveTemperature") {}
};
struct NonFiniteLogit : NumericsError {
  NonFiniteLogit() : NumericsError("NonFiniteLogit") {}
};
struct ShapeMismatch : NumericsError {
  explicit ShapeMismatch(const std::string& detail) : NumericsError("ShapeMismatch: " + detail) {}
};
struct NonScalarLoss : NumericsError {
  NonScalarLoss() : NumericsError("NonScalarLoss") {}
};

// Dense row-major tensor. Rank 1 and 2 cover everything this project needs.
struct Tensor {
  std::vector<int> shape;
  std::vector<real> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(numel_of(shape)), real(0));
  }
  Tensor(std::vector<int> s, std::vector<real> v) : shape(std::move(s)), values(std::move(v)) {
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
      throw ShapeMismatch("tensor init: shape/value length disagree");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  static Tensor scalar(real v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return numel() == 1; }

  real& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  real at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace jitterlab
