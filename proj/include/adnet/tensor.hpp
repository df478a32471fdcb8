#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "adnet/error.hpp"

namespace adnet {

// Dense row-major tensor of doubles. Activations use N x H x W x C layout
// (channels innermost), kernels use kH x kW x Cin x Cout.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size())
      throw ContractViolation("tensor: data length does not match shape");
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int e : s) {
      if (e <= 0) throw ContractViolation("tensor: non-positive extent");
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 4-D accessors for the N x H x W x C convention.
  std::size_t idx4(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c;
  }
  double& at4(int n, int y, int x, int c) { return data[idx4(n, y, x, c)]; }
  double at4(int n, int y, int x, int c) const { return data[idx4(n, y, x, c)]; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ContractViolation(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                            b.shape_str());
}

}  // namespace adnet
