#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <unordered_map>

#include "adnet/tensor.hpp"

namespace adnet {

// One named learnable (or buffer) array with its gradient slot.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool learnable = true;
};

// Owns all parameters and running-stat buffers of a model, in creation order.
// Names are hierarchical dotted paths ("encoder.stage3.conv_a.kernel") and
// stable across versions; the checkpoint container relies on that.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init, bool learnable = true) {
    if (index_.count(name)) throw ContractViolation("param already registered: " + name);
    params_.push_back(Param{name, std::move(init), Tensor(), learnable});
    Param& p = params_.back();
    p.grad = Tensor::zeros(p.value.shape);
    index_[name] = &p;
    return p;
  }

  Param* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }

  void zero_grad() {
    for (Param& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }

  // Scalar learnables only; running stats excluded.
  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (const Param& p : params_)
      if (p.learnable) n += p.value.size();
    return n;
  }

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }

 private:
  std::deque<Param> params_;  // deque keeps addresses stable
  std::unordered_map<std::string, Param*> index_;
};

}  // namespace adnet
