#include "adnet/model.hpp"

#include <cmath>

namespace adnet::model {

using namespace ops;

int ModelConfig::stage_width(int stage) const {
  const double base = static_cast<double>(base_width) * static_cast<double>(1 << stage);
  const long w = std::lround(base * width_multiplier);
  return w < 1 ? 1 : static_cast<int>(w);
}

void ModelConfig::validate() const {
  if (input_size < 16 || input_size % 16 != 0)
    throw ParameterError("model: input_size must be a positive multiple of 16");
  if (base_width < 1) throw ParameterError("model: base_width must be >= 1");
  if (width_multiplier <= 0.0) throw ParameterError("model: width_multiplier must be > 0");
  if (leaky_slope <= 0.0 || leaky_slope >= 1.0)
    throw ParameterError("model: leaky_slope must be in (0,1)");
  for (int d : encoder_dilations)
    if (d < 1) throw ParameterError("model: dilation must be >= 1");
  if (bottleneck_dilation < 1) throw ParameterError("model: dilation must be >= 1");
}

Tensor init_conv_kernel(int kh, int kw, int cin, int cout, SplitMix64& rng) {
  Tensor k({kh, kw, cin, cout});
  const double limit = std::sqrt(6.0 / (static_cast<double>(kh) * kw * cin));
  for (double& v : k.data) v = rng.uniform(-limit, limit);
  return k;
}

namespace {

struct BnParams {
  Param *gamma, *beta, *rm, *rv;
};

BnParams make_bn(ParamStore& store, const std::string& prefix, int c) {
  BnParams bn;
  bn.gamma = &store.create(prefix + ".gamma", Tensor::full({c}, 1.0));
  bn.beta = &store.create(prefix + ".beta", Tensor::zeros({c}));
  bn.rm = &store.create(prefix + ".running_mean", Tensor::zeros({c}), /*learnable=*/false);
  bn.rv = &store.create(prefix + ".running_var", Tensor::full({c}, 1.0), /*learnable=*/false);
  return bn;
}

}  // namespace

void DcrBlock::build(ParamStore& store, const std::string& prefix, int cin, int cout, int dilation,
                     const ModelConfig& cfg, SplitMix64& rng) {
  dilation_ = dilation;
  cout_ = cout;
  slope_ = cfg.leaky_slope;
  momentum_ = cfg.bn_momentum;
  epsilon_ = cfg.bn_epsilon;
  kernel_a_ = &store.create(prefix + ".conv_a.kernel", init_conv_kernel(3, 3, cin, cout, rng));
  bias_a_ = &store.create(prefix + ".conv_a.bias", Tensor::zeros({cout}));
  auto bn_a = make_bn(store, prefix + ".bn_a", cout);
  gamma_a_ = bn_a.gamma; beta_a_ = bn_a.beta; rm_a_ = bn_a.rm; rv_a_ = bn_a.rv;
  kernel_b_ = &store.create(prefix + ".conv_b.kernel", init_conv_kernel(3, 3, cout, cout, rng));
  bias_b_ = &store.create(prefix + ".conv_b.bias", Tensor::zeros({cout}));
  auto bn_b = make_bn(store, prefix + ".bn_b", cout);
  gamma_b_ = bn_b.gamma; beta_b_ = bn_b.beta; rm_b_ = bn_b.rm; rv_b_ = bn_b.rv;
  kernel_res_ = &store.create(prefix + ".conv_res.kernel", init_conv_kernel(1, 1, cin, cout, rng));
  bias_res_ = &store.create(prefix + ".conv_res.bias", Tensor::zeros({cout}));
  auto bn_r = make_bn(store, prefix + ".bn_res", cout);
  gamma_res_ = bn_r.gamma; beta_res_ = bn_r.beta; rm_res_ = bn_r.rm; rv_res_ = bn_r.rv;
}

NodeId DcrBlock::forward(Tape& t, NodeId x, Mode mode) const {
  // main path: conv -> BN -> conv -> leaky -> BN
  NodeId h = conv2d(t, x, t.param(*kernel_a_), t.param(*bias_a_), 1, dilation_, Padding::Same);
  h = batch_norm2d(t, h, t.param(*gamma_a_), t.param(*beta_a_), rm_a_->value, rv_a_->value, mode,
                   momentum_, epsilon_);
  h = conv2d(t, h, t.param(*kernel_b_), t.param(*bias_b_), 1, dilation_, Padding::Same);
  h = activation(t, h, Activation::LeakyRelu, slope_);
  h = batch_norm2d(t, h, t.param(*gamma_b_), t.param(*beta_b_), rm_b_->value, rv_b_->value, mode,
                   momentum_, epsilon_);
  // residual path: 1x1 conv -> BN -> leaky
  NodeId r = conv2d(t, x, t.param(*kernel_res_), t.param(*bias_res_), 1, dilation_, Padding::Same);
  r = batch_norm2d(t, r, t.param(*gamma_res_), t.param(*beta_res_), rm_res_->value, rv_res_->value,
                   mode, momentum_, epsilon_);
  r = activation(t, r, Activation::LeakyRelu, slope_);
  return add(t, h, r);
}

void AsfebBlock::build(ParamStore& store, const std::string& prefix, int channels,
                       const ModelConfig& cfg, SplitMix64& rng) {
  channels_ = channels;
  momentum_ = cfg.bn_momentum;
  epsilon_ = cfg.bn_epsilon;
  kernel_in_ = &store.create(prefix + ".conv_in.kernel", init_conv_kernel(3, 3, channels, channels, rng));
  bias_in_ = &store.create(prefix + ".conv_in.bias", Tensor::zeros({channels}));
  auto bn_i = make_bn(store, prefix + ".bn_in", channels);
  gamma_in_ = bn_i.gamma; beta_in_ = bn_i.beta; rm_in_ = bn_i.rm; rv_in_ = bn_i.rv;
  kernel_fuse_ =
      &store.create(prefix + ".conv_fuse.kernel", init_conv_kernel(3, 3, 2 * channels, channels, rng));
  bias_fuse_ = &store.create(prefix + ".conv_fuse.bias", Tensor::zeros({channels}));
  auto bn_f = make_bn(store, prefix + ".bn_fuse", channels);
  gamma_fuse_ = bn_f.gamma; beta_fuse_ = bn_f.beta; rm_fuse_ = bn_f.rm; rv_fuse_ = bn_f.rv;
  kernel_gate_ =
      &store.create(prefix + ".conv_gate.kernel", init_conv_kernel(3, 3, channels, channels, rng));
  bias_gate_ = &store.create(prefix + ".conv_gate.bias", Tensor::zeros({channels}));
  auto bn_g = make_bn(store, prefix + ".bn_gate", channels);
  gamma_gate_ = bn_g.gamma; beta_gate_ = bn_g.beta; rm_gate_ = bn_g.rm; rv_gate_ = bn_g.rv;
}

NodeId AsfebBlock::forward(Tape& t, NodeId x, Mode mode) const {
  if (t.value(x).dim(3) != channels_)
    throw ContractViolation("asfeb: input channels " + std::to_string(t.value(x).dim(3)) +
                            " do not match block width " + std::to_string(channels_));
  NodeId t1 = conv2d(t, x, t.param(*kernel_in_), t.param(*bias_in_), 1, 1, Padding::Same);
  t1 = batch_norm2d(t, t1, t.param(*gamma_in_), t.param(*beta_in_), rm_in_->value, rv_in_->value,
                    mode, momentum_, epsilon_);
  t1 = activation(t, t1, Activation::Relu);
  NodeId f1 = pool2d(t, t1, PoolKind::Max);
  NodeId f2 = pool2d(t, t1, PoolKind::Avg);
  NodeId f3 = concat_channels(t, f1, f2);
  NodeId f4 = conv2d(t, f3, t.param(*kernel_fuse_), t.param(*bias_fuse_), 1, 1, Padding::Same);
  f4 = batch_norm2d(t, f4, t.param(*gamma_fuse_), t.param(*beta_fuse_), rm_fuse_->value,
                    rv_fuse_->value, mode, momentum_, epsilon_);
  f4 = activation(t, f4, Activation::Relu);
  NodeId f5 = global_avg_pool(t, x);
  NodeId f6 = conv2d(t, f5, t.param(*kernel_gate_), t.param(*bias_gate_), 1, 1, Padding::Same);
  f6 = batch_norm2d(t, f6, t.param(*gamma_gate_), t.param(*beta_gate_), rm_gate_->value,
                    rv_gate_->value, mode, momentum_, epsilon_);
  f6 = activation(t, f6, Activation::Sigmoid);
  NodeId f8 = mul(t, f4, f6);  // attention weights broadcast over H, W
  return add(t, f8, x);
}

void GuidedHead::build(ParamStore& store, const std::string& prefix, int channels,
                       const ModelConfig& cfg, SplitMix64& rng) {
  (void)cfg;
  kernel_ = &store.create(prefix + ".conv.kernel", init_conv_kernel(1, 1, channels, 1, rng));
  bias_ = &store.create(prefix + ".conv.bias", Tensor::zeros({1}));
}

NodeId GuidedHead::forward(Tape& t, NodeId x, int target_size) const {
  NodeId h = conv2d(t, x, t.param(*kernel_), t.param(*bias_), 1, 1, Padding::Same);
  h = activation(t, h, Activation::Sigmoid);
  return upsample_nearest(t, h, target_size, target_size);
}

AdNet::AdNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  SplitMix64 rng(cfg_.seed ^ 0xadbe7000ULL);
  int cin = cfg_.input_channels;
  for (int i = 0; i < 4; ++i) {
    const int w = cfg_.stage_width(i);
    encoder_[i].build(store_, "encoder.stage" + std::to_string(i + 1), cin, w,
                      cfg_.encoder_dilations[i], cfg_, rng);
    cin = w;
  }
  bottleneck_.build(store_, "bottleneck", cfg_.stage_width(3), cfg_.stage_width(4),
                    cfg_.bottleneck_dilation, cfg_, rng);
  if (cfg_.asfeb)
    for (int i = 0; i < 4; ++i)
      asfeb_[i].build(store_, "asfeb.stage" + std::to_string(i + 1), cfg_.stage_width(i), cfg_, rng);
  int prev = cfg_.stage_width(4);
  for (int i = 3; i >= 0; --i) {
    const int w = cfg_.stage_width(i);
    const std::string prefix = "decoder.stage" + std::to_string(i + 1);
    up_[i].kernel = &store_.create(prefix + ".up.kernel", init_conv_kernel(2, 2, prev, w, rng));
    up_[i].bias = &store_.create(prefix + ".up.bias", Tensor::zeros({w}));
    decoder_[i].build(store_, prefix + ".dcr", 2 * w, w, cfg_.encoder_dilations[i], cfg_, rng);
    prev = w;
  }
  if (cfg_.guided)
    for (int i = 3; i >= 0; --i)
      guided_heads_[i].build(store_, "guided.stage" + std::to_string(i + 1), cfg_.stage_width(i),
                             cfg_, rng);
  final_kernel_ =
      &store_.create("head.conv.kernel", init_conv_kernel(1, 1, cfg_.stage_width(0), 1, rng));
  final_bias_ = &store_.create("head.conv.bias", Tensor::zeros({1}));
}

std::pair<std::vector<NodeId>, NodeId> AdNet::encoder_forward(Tape& t, NodeId x, Mode mode) const {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 4 || xv.dim(1) != cfg_.input_size || xv.dim(2) != cfg_.input_size ||
      xv.dim(3) != cfg_.input_channels)
    throw ContractViolation("encoder: expected N x " + std::to_string(cfg_.input_size) + " x " +
                            std::to_string(cfg_.input_size) + " x " +
                            std::to_string(cfg_.input_channels) + " input, got " + xv.shape_str());
  std::vector<NodeId> skips;
  NodeId h = x;
  for (int i = 0; i < 4; ++i) {
    h = encoder_[i].forward(t, h, mode);
    skips.push_back(h);
    h = max_pool_downsample(t, h);
  }
  return {skips, h};
}

ForwardResult AdNet::forward(Tape& t, NodeId x, Mode mode) const {
  auto [skips, bottleneck_in] = encoder_forward(t, x, mode);
  NodeId h = bottleneck_.forward(t, bottleneck_in, mode);
  ForwardResult out;
  for (int i = 3; i >= 0; --i) {
    h = conv_transpose2d(t, h, t.param(*up_[i].kernel), t.param(*up_[i].bias));
    NodeId skip = cfg_.asfeb ? asfeb_[i].forward(t, skips[i], mode) : skips[i];
    h = concat_channels(t, h, skip);
    h = decoder_[i].forward(t, h, mode);
    if (cfg_.guided) out.guided.push_back(guided_heads_[i].forward(t, h, cfg_.input_size));
  }
  NodeId f = conv2d(t, h, t.param(*final_kernel_), t.param(*final_bias_), 1, 1, Padding::Same);
  out.final_out = activation(t, f, Activation::Sigmoid);
  return out;
}

}  // namespace adnet::model
