#pragma once

#include <array>
#include <vector>

#include "adnet/tape.hpp"

namespace adnet::losses {

enum class Variant { A, B };  // A = BCE + focal Tversky, B = BCE + Dice

struct LossConfig {
  double alpha = 0.7;       // Tversky false-negative weight
  double beta = 0.3;        // Tversky false-positive weight
  double gamma = 4.0 / 3.0; // focal exponent, valid range [1, 3]
  double epsilon = 1e-6;    // ratio smoothing and BCE clamp
  Variant variant = Variant::A;
  double guided_weight = 1.0;

  void validate() const;
};

// Plain scalar evaluations (used by tests and the evaluation side).
double bce_loss(const Tensor& yhat, const Tensor& y, double epsilon = 1e-6);
double jaccard_loss(const Tensor& yhat, const Tensor& y, double epsilon = 1e-6);
double dice_loss(const Tensor& yhat, const Tensor& y, double epsilon = 1e-6);
double tversky_index(const Tensor& yhat, const Tensor& y, double alpha, double beta,
                     double epsilon = 1e-6);
double focal_tversky_loss(const Tensor& yhat, const Tensor& y, const LossConfig& cfg);

// Differentiable tape versions; the target is a constant.
NodeId bce_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon = 1e-6);
NodeId jaccard_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon = 1e-6);
NodeId dice_node(Tape& t, NodeId yhat, const Tensor& y, double epsilon = 1e-6);
NodeId focal_tversky_node(Tape& t, NodeId yhat, const Tensor& y, const LossConfig& cfg);

struct LossBreakdown {
  double bce = 0.0;
  double region = 0.0;  // focal Tversky (variant A) or Dice (variant B)
  std::array<double, 4> jaccard_head{0.0, 0.0, 0.0, 0.0};
  double total = 0.0;
};

// L_A = BCE + FTL + sum_i w * Jaccard(head_i); L_B swaps FTL for Dice.
NodeId total_loss(Tape& t, NodeId final_out, const std::vector<NodeId>& guided, const Tensor& y,
                  const LossConfig& cfg, LossBreakdown* breakdown = nullptr);

}  // namespace adnet::losses
