#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "adnet/losses.hpp"
#include "adnet/ops.hpp"
#include "adnet/params.hpp"
#include "adnet/rng.hpp"
#include "adnet/tape.hpp"

namespace adnet::model {

using ops::Mode;

struct ModelConfig {
  int input_size = 256;
  int input_channels = 3;
  int base_width = 16;
  double width_multiplier = 1.0;
  std::array<int, 4> encoder_dilations{1, 1, 2, 4};
  int bottleneck_dilation = 4;
  double leaky_slope = 0.3;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  bool guided = true;
  bool asfeb = true;
  losses::Variant loss_variant = losses::Variant::A;
  std::uint64_t seed = 0;

  // Encoder stage widths double per stage: stage 0..3, stage 4 = bottleneck.
  int stage_width(int stage) const;
  void validate() const;
};

// Two dilated 3x3 convs with BN / leaky ReLU plus a 1x1 dilated residual path.
class DcrBlock {
 public:
  void build(ParamStore& store, const std::string& prefix, int cin, int cout, int dilation,
             const ModelConfig& cfg, SplitMix64& rng);
  NodeId forward(Tape& t, NodeId x, Mode mode) const;
  int out_channels() const { return cout_; }

 private:
  Param *kernel_a_ = nullptr, *bias_a_ = nullptr;
  Param *gamma_a_ = nullptr, *beta_a_ = nullptr, *rm_a_ = nullptr, *rv_a_ = nullptr;
  Param *kernel_b_ = nullptr, *bias_b_ = nullptr;
  Param *gamma_b_ = nullptr, *beta_b_ = nullptr, *rm_b_ = nullptr, *rv_b_ = nullptr;
  Param *kernel_res_ = nullptr, *bias_res_ = nullptr;
  Param *gamma_res_ = nullptr, *beta_res_ = nullptr, *rm_res_ = nullptr, *rv_res_ = nullptr;
  int dilation_ = 1;
  int cout_ = 0;
  double slope_ = 0.3, momentum_ = 0.99, epsilon_ = 1e-3;
};

// Skip-connection refinement: parallel 3x3 max/avg pooled features fused by a
// conv, gated by a sigmoid attention vector from GAP, plus a residual add.
class AsfebBlock {
 public:
  void build(ParamStore& store, const std::string& prefix, int channels, const ModelConfig& cfg,
             SplitMix64& rng);
  NodeId forward(Tape& t, NodeId x, Mode mode) const;

 private:
  Param *kernel_in_ = nullptr, *bias_in_ = nullptr;
  Param *gamma_in_ = nullptr, *beta_in_ = nullptr, *rm_in_ = nullptr, *rv_in_ = nullptr;
  Param *kernel_fuse_ = nullptr, *bias_fuse_ = nullptr;
  Param *gamma_fuse_ = nullptr, *beta_fuse_ = nullptr, *rm_fuse_ = nullptr, *rv_fuse_ = nullptr;
  Param *kernel_gate_ = nullptr, *bias_gate_ = nullptr;
  Param *gamma_gate_ = nullptr, *beta_gate_ = nullptr, *rm_gate_ = nullptr, *rv_gate_ = nullptr;
  int channels_ = 0;
  double momentum_ = 0.99, epsilon_ = 1e-3;
};

// 1x1 conv -> sigmoid -> nearest upsample to the input resolution.
class GuidedHead {
 public:
  void build(ParamStore& store, const std::string& prefix, int channels, const ModelConfig& cfg,
             SplitMix64& rng);
  NodeId forward(Tape& t, NodeId x, int target_size) const;

 private:
  Param *kernel_ = nullptr, *bias_ = nullptr;
};

struct ForwardResult {
  NodeId final_out;              // N x S x S x 1, values in (0,1)
  std::vector<NodeId> guided;    // 4 heads (deepest decoder stage first) when enabled
};

class AdNet {
 public:
  explicit AdNet(const ModelConfig& cfg);

  // Per-stage pre-pool skip tensors plus the pooled bottleneck input.
  std::pair<std::vector<NodeId>, NodeId> encoder_forward(Tape& t, NodeId x, Mode mode) const;

  ForwardResult forward(Tape& t, NodeId x, Mode mode) const;

  std::size_t parameter_count() const { return store_.learnable_count(); }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::array<DcrBlock, 4> encoder_;
  std::array<AsfebBlock, 4> asfeb_;
  DcrBlock bottleneck_;
  struct UpLayer {
    Param *kernel = nullptr, *bias = nullptr;
  };
  std::array<UpLayer, 4> up_;        // index 3 = deepest decoder stage
  std::array<DcrBlock, 4> decoder_;  // same indexing
  std::array<GuidedHead, 4> guided_heads_;
  Param *final_kernel_ = nullptr, *final_bias_ = nullptr;
};

// Fan-in-scaled uniform kernel initializer, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor init_conv_kernel(int kh, int kw, int cin, int cout, SplitMix64& rng);

}  // namespace adnet::model
