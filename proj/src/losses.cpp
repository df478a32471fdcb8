#include "adnet/losses.hpp"

#include <cmath>

#include "adnet/ops.hpp"

namespace adnet::losses {

namespace {

double clamp01(double v, double eps) { return v < eps ? eps : (v > 1.0 - eps ? 1.0 - eps : v); }

}  // namespace

void LossConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) throw ParameterError("loss: alpha and beta must be >= 0");
  if (gamma < 1.0 || gamma > 3.0) throw ParameterError("loss: gamma must lie in [1,3]");
  if (epsilon <= 0.0) throw ParameterError("loss: epsilon must be > 0");
}

double bce_loss(const Tensor& yhat, const Tensor& y, double epsilon) {
  require_same_shape(yhat, y, "bce_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = clamp01(yhat.data[i], epsilon);
    acc -= y.data[i] * std::log(p) + (1.0 - y.data[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(y.size());
}

double jaccard_loss(const Tensor& yhat, const Tensor& y, double epsilon) {
  require_same_shape(yhat, y, "jaccard_loss");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = yhat.data[i], g = y.data[i];
    inter += p * g;
    uni += p + g - p * g;
  }
  return 1.0 - inter / (uni + epsilon);
}

double dice_loss(const Tensor& yhat, const Tensor& y, double epsilon) {
  require_same_shape(yhat, y, "dice_loss");
  double inter = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = yhat.data[i], g = y.data[i];
    inter += p * g;
    denom += p * p + g * g;  // squared-magnitude denominator
  }
  return 1.0 - 2.0 * inter / (denom + epsilon);
}

double tversky_index(const Tensor& yhat, const Tensor& y, double alpha, double beta,
                     double epsilon) {
  require_same_shape(yhat, y, "tversky_index");
  double tp = 0.0, fn = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = yhat.data[i], g = y.data[i];
    tp += p * g;
    fn += g * (1.0 - p);
    fp += (1.0 - g) * p;
  }
  return tp / (tp + alpha * fn + beta * fp + epsilon);
}

double focal_tversky_loss(const Tensor& yhat, const Tensor& y, const LossConfig& cfg) {
  cfg.validate();
  const double ti = tversky_index(yhat, y, cfg.alpha, cfg.beta, cfg.epsilon);
  return std::pow(1.0 - ti, 1.0 / cfg.gamma);
}

NodeId bce_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon) {
  const Tensor& p = t.value(yhat);
  require_same_shape(p, y, "bce_loss");
  const double loss = bce_loss(p, y, epsilon);
  auto bw = [y, epsilon](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId pi = me.parents[0];
    if (!tp.node(pi).requires_grad) return;
    const Tensor& pv = tp.value(pi);
    double* dp = tp.grad_buf(pi).data();
    const double g = me.grad[0] / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double raw = pv.data[i];
      if (raw < epsilon || raw > 1.0 - epsilon) continue;  // clamped: zero slope
      dp[i] += g * (-y.data[i] / raw + (1.0 - y.data[i]) / (1.0 - raw));
    }
  };
  return t.record(Tensor::scalar(loss), "bce_loss", {yhat}, bw);
}

NodeId jaccard_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon) {
  const Tensor& p = t.value(yhat);
  require_same_shape(p, y, "jaccard_loss");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    inter += p.data[i] * y.data[i];
    uni += p.data[i] + y.data[i] - p.data[i] * y.data[i];
  }
  const double denom = uni + epsilon;
  const double loss = 1.0 - inter / denom;
  auto bw = [y, inter, denom](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId pi = me.parents[0];
    if (!tp.node(pi).requires_grad) return;
    double* dp = tp.grad_buf(pi).data();
    const double g = me.grad[0];
    const double inv2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < y.size(); ++i) {
      // d/dp [I/D] with dI/dp = y_i, dD/dp = 1 - y_i
      dp[i] += -g * (y.data[i] * denom - inter * (1.0 - y.data[i])) * inv2;
    }
  };
  return t.record(Tensor::scalar(loss), "jaccard_loss", {yhat}, bw);
}

NodeId dice_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon) {
  const Tensor& p = t.value(yhat);
  require_same_shape(p, y, "dice_loss");
  double inter = 0.0, denom = epsilon;
  for (std::size_t i = 0; i < y.size(); ++i) {
    inter += p.data[i] * y.data[i];
    denom += p.data[i] * p.data[i] + y.data[i] * y.data[i];
  }
  const double loss = 1.0 - 2.0 * inter / denom;
  auto bw = [y, inter, denom](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId pi = me.parents[0];
    if (!tp.node(pi).requires_grad) return;
    const Tensor& pv = tp.value(pi);
    double* dp = tp.grad_buf(pi).data();
    const double g = me.grad[0];
    const double inv2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < y.size(); ++i)
      dp[i] += -g * 2.0 * (y.data[i] * denom - inter * 2.0 * pv.data[i]) * inv2;
  };
  return t.record(Tensor::scalar(loss), "dice_loss", {yhat}, bw);
}

NodeId focal_tversky_node(Tape& t, NodeId yhat, const Tensor& y, const LossConfig& cfg) {
  cfg.validate();
  const Tensor& p = t.value(yhat);
  require_same_shape(p, y, "focal_tversky_loss");
  double tpv = 0.0, fnv = 0.0, fpv = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    tpv += p.data[i] * y.data[i];
    fnv += y.data[i] * (1.0 - p.data[i]);
    fpv += (1.0 - y.data[i]) * p.data[i];
  }
  const double denom = tpv + cfg.alpha * fnv + cfg.beta * fpv + cfg.epsilon;
  const double ti = tpv / denom;
  const double loss = std::pow(1.0 - ti, 1.0 / cfg.gamma);
  const double alpha = cfg.alpha, beta = cfg.beta, gamma = cfg.gamma;
  auto bw = [y, tpv, denom, ti, alpha, beta, gamma](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId pi = me.parents[0];
    if (!tp.node(pi).requires_grad) return;
    double* dp = tp.grad_buf(pi).data();
    const double one_m = 1.0 - ti;
    // d loss / d TI; at TI == 1 with gamma > 1 the derivative limit is 0
    double dl_dti;
    if (one_m <= 0.0)
      dl_dti = gamma >= 1.0 && gamma != 1.0 ? 0.0 : -1.0;
    else
      dl_dti = -(1.0 / gamma) * std::pow(one_m, 1.0 / gamma - 1.0);
    const double g = me.grad[0] * dl_dti;
    const double inv2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double dtp = y.data[i];
      const double ddenom = y.data[i] - alpha * y.data[i] + beta * (1.0 - y.data[i]);
      dp[i] += g * (dtp * denom - tpv * ddenom) * inv2;
    }
  };
  return t.record(Tensor::scalar(loss), "focal_tversky_loss", {yhat}, bw);
}

NodeId total_loss(Tape& t, NodeId final_out, const std::vector<NodeId>& guided, const Tensor& y,
                  const LossConfig& cfg, LossBreakdown* breakdown) {
  cfg.validate();
  std::vector<NodeId> terms;
  NodeId bce = bce_node(t, final_out, y, cfg.epsilon);
  NodeId region = cfg.variant == Variant::A ? focal_tversky_node(t, final_out, y, cfg)
                                            : dice_node(t, final_out, y, cfg.epsilon);
  terms.push_back(bce);
  terms.push_back(region);
  LossBreakdown bd;
  bd.bce = t.value(bce).data[0];
  bd.region = t.value(region).data[0];
  for (std::size_t i = 0; i < guided.size(); ++i) {
    NodeId j = jaccard_node(t, guided[i], y, cfg.epsilon);
    if (cfg.guided_weight != 1.0) j = ops::scale_scalar(t, j, cfg.guided_weight);
    if (i < bd.jaccard_head.size()) bd.jaccard_head[i] = t.value(j).data[0];
    terms.push_back(j);
  }
  NodeId total = ops::add_scalars(t, terms);
  bd.total = t.value(total).data[0];
  if (breakdown) *breakdown = bd;
  return total;
}

}  // namespace adnet::losses
