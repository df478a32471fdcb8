#pragma once

#include <functional>
#include <vector>

#include "adnet/tape.hpp"

namespace adnet {

// Builds a scalar node from leaf nodes created for each input tensor.
using ScalarFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckReport {
  // max over elements of |g_ad - g_fd| / (||g_fd||_inf + 1e-12), per input
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central finite differences against the recorded backward rules. Inputs are
// evaluated in double precision; callers should keep probe points away from
// activation kinks by more than `step`.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           double step = 1e-3, double tolerance = 1e-4);

}  // namespace adnet
