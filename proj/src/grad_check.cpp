#include "adnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace adnet {

namespace {

double eval(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape t;
  std::vector<NodeId> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& in : inputs) leaves.push_back(t.constant(in));
  NodeId out = f(t, leaves);
  if (t.value(out).size() != 1) throw ContractViolation("grad_check: function is not scalar");
  return t.value(out).data[0];
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step,
                           double tolerance) {
  // analytic gradients
  Tape t;
  std::vector<NodeId> leaves;
  for (const Tensor& in : inputs) leaves.push_back(t.leaf(in));
  NodeId out = f(t, leaves);
  t.backward(out);

  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double>& g_ad = t.grad(leaves[k]);
    double max_abs_fd = 0.0, max_diff = 0.0;
    std::vector<double> g_fd(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = probe[k].data[i];
      probe[k].data[i] = saved + step;
      const double fp = eval(f, probe);
      probe[k].data[i] = saved - step;
      const double fm = eval(f, probe);
      probe[k].data[i] = saved;
      g_fd[i] = (fp - fm) / (2.0 * step);
      max_abs_fd = std::max(max_abs_fd, std::abs(g_fd[i]));
    }
    const double ad0 = g_ad.empty() ? 0.0 : 1.0;  // leaf unreachable from loss -> zero grad
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double a = g_ad.empty() ? 0.0 : g_ad[i] * ad0;
      max_diff = std::max(max_diff, std::abs(a - g_fd[i]));
    }
    report.rel_error.push_back(max_diff / (max_abs_fd + 1e-12));
  }
  report.max_rel_error = *std::max_element(report.rel_error.begin(), report.rel_error.end());
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace adnet
