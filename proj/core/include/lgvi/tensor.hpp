#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lgvi/rng.hpp"

namespace lgvi {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor of float or double. All layout conventions
// (NCHW activations, row-major matrices) are fixed by the ops that
// consume it; Tensor itself is just shape + storage.
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)), data(shape_numel(shape), S(0)) {}
  Tensor(Shape sh, S fill) : shape(std::move(sh)), data(shape_numel(shape), fill) {}

  static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
  static Tensor full(Shape sh, S v) { return Tensor(std::move(sh), v); }

  static Tensor randn(Shape sh, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(sh));
    for (auto& v : t.data) v = static_cast<S>(rng.normal() * stddev);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[i < 0 ? shape.size() + i : static_cast<size_t>(i)]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  Tensor reshaped(Shape sh) const {
    if (shape_numel(sh) != numel())
      throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape) + " -> " + shape_str(sh));
    Tensor t = *this;
    t.shape = std::move(sh);
    return t;
  }

  template <class S2>
  Tensor<S2> cast() const {
    Tensor<S2> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<S2>(data[i]);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class S>
inline void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace lgvi
