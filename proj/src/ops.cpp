#include "adnet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace adnet::ops {

namespace {

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ContractViolation(std::string(what) + ": expected rank-4 tensor, got " + t.shape_str());
}

bool wants_grad(const Tape& t, NodeId id) {
  return t.node(id).requires_grad;
}

}  // namespace

NodeId conv2d(Tape& t, NodeId x, NodeId kernel, NodeId bias, int stride, int dilation,
              Padding padding) {
  const Tensor& xv = t.value(x);
  const Tensor& kv = t.value(kernel);
  const Tensor& bv = t.value(bias);
  require_rank4(xv, "conv2d input");
  require_rank4(kv, "conv2d kernel");
  if (dilation < 1) throw ParameterError("conv2d: dilation must be >= 1");
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), Cin = xv.dim(3);
  const int kH = kv.dim(0), kW = kv.dim(1), Cout = kv.dim(3);
  if (kv.dim(2) != Cin)
    throw ContractViolation("conv2d: kernel Cin " + std::to_string(kv.dim(2)) +
                            " does not match input channels " + std::to_string(Cin));
  if (bv.size() != static_cast<std::size_t>(Cout))
    throw ContractViolation("conv2d: bias length does not match Cout");
  if (padding == Padding::Same && (kH % 2 == 0 || kW % 2 == 0))
    throw ContractViolation("conv2d: same padding requires odd kernel extents");

  const int padH = padding == Padding::Same ? dilation * (kH - 1) / 2 : 0;
  const int padW = padding == Padding::Same ? dilation * (kW - 1) / 2 : 0;
  const int Ho = (H + 2 * padH - dilation * (kH - 1) - 1) / stride + 1;
  const int Wo = (W + 2 * padW - dilation * (kW - 1) - 1) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ContractViolation("conv2d: kernel larger than padded input");

  Tensor out({N, Ho, Wo, Cout});
  const double* xd = xv.data.data();
  const double* kd = kv.data.data();
  double* od = out.data.data();
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double* acc = od + ((static_cast<std::size_t>(n) * Ho + oy) * Wo + ox) * Cout;
        for (int co = 0; co < Cout; ++co) acc[co] = bv.data[co];
        for (int ky = 0; ky < kH; ++ky) {
          const int iy = oy * stride + dilation * ky - padH;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kW; ++kx) {
            const int ix = ox * stride + dilation * kx - padW;
            if (ix < 0 || ix >= W) continue;
            const double* xrow = xd + ((static_cast<std::size_t>(n) * H + iy) * W + ix) * Cin;
            const double* krow = kd + (static_cast<std::size_t>(ky) * kW + kx) * Cin * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              const double xvv = xrow[ci];
              const double* kr = krow + static_cast<std::size_t>(ci) * Cout;
              for (int co = 0; co < Cout; ++co) acc[co] += xvv * kr[co];
            }
          }
        }
      }

  auto bw = [stride, dilation, padH, padW](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId xi = me.parents[0], ki = me.parents[1], bi = me.parents[2];
    const Tensor& xv2 = tp.value(xi);
    const Tensor& kv2 = tp.value(ki);
    const int N = xv2.dim(0), H = xv2.dim(1), W = xv2.dim(2), Cin = xv2.dim(3);
    const int kH = kv2.dim(0), kW = kv2.dim(1), Cout = kv2.dim(3);
    const int Ho = me.value.dim(1), Wo = me.value.dim(2);
    const std::vector<double>& g = me.grad;
    const bool gx = wants_grad(tp, xi), gk = wants_grad(tp, ki), gb = wants_grad(tp, bi);
    double* dx = gx ? tp.grad_buf(xi).data() : nullptr;
    double* dk = gk ? tp.grad_buf(ki).data() : nullptr;
    double* db = gb ? tp.grad_buf(bi).data() : nullptr;
    const double* xd = xv2.data.data();
    const double* kd = kv2.data.data();
    for (int n = 0; n < N; ++n)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double* gr = g.data() + ((static_cast<std::size_t>(n) * Ho + oy) * Wo + ox) * Cout;
          if (db)
            for (int co = 0; co < Cout; ++co) db[co] += gr[co];
          for (int ky = 0; ky < kH; ++ky) {
            const int iy = oy * stride + dilation * ky - padH;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < kW; ++kx) {
              const int ix = ox * stride + dilation * kx - padW;
              if (ix < 0 || ix >= W) continue;
              const std::size_t xoff = ((static_cast<std::size_t>(n) * H + iy) * W + ix) * Cin;
              const std::size_t koff = (static_cast<std::size_t>(ky) * kW + kx) * Cin * Cout;
              for (int ci = 0; ci < Cin; ++ci) {
                const double* kr = kd + koff + static_cast<std::size_t>(ci) * Cout;
                if (dx) {
                  double a = 0.0;
                  for (int co = 0; co < Cout; ++co) a += gr[co] * kr[co];
                  dx[xoff + ci] += a;
                }
                if (dk) {
                  const double xvv = xd[xoff + ci];
                  double* dkr = dk + koff + static_cast<std::size_t>(ci) * Cout;
                  for (int co = 0; co < Cout; ++co) dkr[co] += xvv * gr[co];
                }
              }
            }
          }
        }
  };
  return t.record(std::move(out), "conv2d", {x, kernel, bias}, bw);
}

NodeId conv_transpose2d(Tape& t, NodeId x, NodeId kernel, NodeId bias) {
  const Tensor& xv = t.value(x);
  const Tensor& kv = t.value(kernel);
  const Tensor& bv = t.value(bias);
  require_rank4(xv, "conv_transpose2d input");
  require_rank4(kv, "conv_transpose2d kernel");
  if (kv.dim(0) != 2 || kv.dim(1) != 2)
    throw ContractViolation("conv_transpose2d: kernel must be 2x2");
  const int N = xv.dim(0), h = xv.dim(1), w = xv.dim(2), Cin = xv.dim(3);
  const int Cout = kv.dim(3);
  if (kv.dim(2) != Cin) throw ContractViolation("conv_transpose2d: kernel Cin mismatch");
  if (bv.size() != static_cast<std::size_t>(Cout))
    throw ContractViolation("conv_transpose2d: bias length mismatch");

  Tensor out({N, 2 * h, 2 * w, Cout});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            double* orow = out.data.data() + out.idx4(n, 2 * i + a, 2 * j + b, 0);
            const double* xrow = xv.data.data() + xv.idx4(n, i, j, 0);
            const double* krow = kv.data.data() + (static_cast<std::size_t>(a) * 2 + b) * Cin * Cout;
            for (int co = 0; co < Cout; ++co) orow[co] = bv.data[co];
            for (int ci = 0; ci < Cin; ++ci) {
              const double xvv = xrow[ci];
              const double* kr = krow + static_cast<std::size_t>(ci) * Cout;
              for (int co = 0; co < Cout; ++co) orow[co] += xvv * kr[co];
            }
          }

  auto bw = [](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId xi = me.parents[0], ki = me.parents[1], bi = me.parents[2];
    const Tensor& xv2 = tp.value(xi);
    const Tensor& kv2 = tp.value(ki);
    const int N = xv2.dim(0), h = xv2.dim(1), w = xv2.dim(2), Cin = xv2.dim(3);
    const int Cout = kv2.dim(3);
    const bool gx = wants_grad(tp, xi), gk = wants_grad(tp, ki), gb = wants_grad(tp, bi);
    double* dx = gx ? tp.grad_buf(xi).data() : nullptr;
    double* dk = gk ? tp.grad_buf(ki).data() : nullptr;
    double* db = gb ? tp.grad_buf(bi).data() : nullptr;
    for (int n = 0; n < N; ++n)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              const double* gr =
                  me.grad.data() + me.value.idx4(n, 2 * i + a, 2 * j + b, 0);
              const double* krow =
                  kv2.data.data() + (static_cast<std::size_t>(a) * 2 + b) * Cin * Cout;
              const std::size_t xoff = xv2.idx4(n, i, j, 0);
              if (db)
                for (int co = 0; co < Cout; ++co) db[co] += gr[co];
              for (int ci = 0; ci < Cin; ++ci) {
                const double* kr = krow + static_cast<std::size_t>(ci) * Cout;
                if (dx) {
                  double acc = 0.0;
                  for (int co = 0; co < Cout; ++co) acc += gr[co] * kr[co];
                  dx[xoff + ci] += acc;
                }
                if (dk) {
                  const double xvv = xv2.data[xoff + ci];
                  double* dkr = dk + (static_cast<std::size_t>(a) * 2 + b) * Cin * Cout +
                                static_cast<std::size_t>(ci) * Cout;
                  for (int co = 0; co < Cout; ++co) dkr[co] += xvv * gr[co];
                }
              }
            }
  };
  return t.record(std::move(out), "conv_transpose2d", {x, kernel, bias}, bw);
}

NodeId batch_norm2d(Tape& t, NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                    Tensor& running_var, Mode mode, double momentum, double epsilon) {
  const Tensor& xv = t.value(x);
  require_rank4(xv, "batch_norm2d input");
  if (epsilon <= 0.0) throw ParameterError("batch_norm2d: epsilon must be > 0");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  if (t.value(gamma).size() != static_cast<std::size_t>(C) ||
      t.value(beta).size() != static_cast<std::size_t>(C) ||
      running_mean.size() != static_cast<std::size_t>(C) ||
      running_var.size() != static_cast<std::size_t>(C))
    throw ContractViolation("batch_norm2d: channel count mismatch");

  const std::size_t spatial = static_cast<std::size_t>(N) * H * W;
  std::vector<double> mean(C), invstd(C);
  if (mode == Mode::Train) {
    std::vector<double> var(C, 0.0);
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < xv.size(); i += C)
      for (int c = 0; c < C; ++c) mean[c] += xv.data[i + c];
    for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(spatial);
    for (std::size_t i = 0; i < xv.size(); i += C)
      for (int c = 0; c < C; ++c) {
        const double d = xv.data[i + c] - mean[c];
        var[c] += d * d;
      }
    for (int c = 0; c < C; ++c) {
      var[c] /= static_cast<double>(spatial);
      invstd[c] = 1.0 / std::sqrt(var[c] + epsilon);
      running_mean.data[c] = momentum * running_mean.data[c] + (1.0 - momentum) * mean[c];
      running_var.data[c] = momentum * running_var.data[c] + (1.0 - momentum) * var[c];
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data[c];
      invstd[c] = 1.0 / std::sqrt(running_var.data[c] + epsilon);
    }
  }

  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  Tensor out(xv.shape);
  std::vector<double> xhat(xv.size());
  for (std::size_t i = 0; i < xv.size(); i += C)
    for (int c = 0; c < C; ++c) {
      const double xh = (xv.data[i + c] - mean[c]) * invstd[c];
      xhat[i + c] = xh;
      out.data[i + c] = gv.data[c] * xh + bv.data[c];
    }

  const bool train = mode == Mode::Train;
  auto bw = [xhat = std::move(xhat), invstd, C, spatial, train](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId xi = me.parents[0], gi = me.parents[1], bi = me.parents[2];
    const std::vector<double>& g = me.grad;
    const Tensor& gv2 = tp.value(gi);
    if (wants_grad(tp, gi)) {
      double* dg = tp.grad_buf(gi).data();
      for (std::size_t i = 0; i < g.size(); i += C)
        for (int c = 0; c < C; ++c) dg[c] += g[i + c] * xhat[i + c];
    }
    if (wants_grad(tp, bi)) {
      double* db = tp.grad_buf(bi).data();
      for (std::size_t i = 0; i < g.size(); i += C)
        for (int c = 0; c < C; ++c) db[c] += g[i + c];
    }
    if (wants_grad(tp, xi)) {
      double* dx = tp.grad_buf(xi).data();
      if (train) {
        std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
        for (std::size_t i = 0; i < g.size(); i += C)
          for (int c = 0; c < C; ++c) {
            sum_g[c] += g[i + c];
            sum_gx[c] += g[i + c] * xhat[i + c];
          }
        const double inv_m = 1.0 / static_cast<double>(spatial);
        for (std::size_t i = 0; i < g.size(); i += C)
          for (int c = 0; c < C; ++c)
            dx[i + c] += gv2.data[c] * invstd[c] *
                         (g[i + c] - inv_m * sum_g[c] - xhat[i + c] * inv_m * sum_gx[c]);
      } else {
        for (std::size_t i = 0; i < g.size(); i += C)
          for (int c = 0; c < C; ++c) dx[i + c] += g[i + c] * gv2.data[c] * invstd[c];
      }
    }
  };
  return t.record(std::move(out), "batch_norm2d", {x, gamma, beta}, bw);
}

NodeId activation(Tape& t, NodeId x, Activation kind, double slope) {
  const Tensor& xv = t.value(x);
  if (kind == Activation::LeakyRelu && (slope <= 0.0 || slope >= 1.0))
    throw ParameterError("activation: leaky slope must be in (0,1)");
  Tensor out(xv.shape);
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = xv.data[i] > 0.0 ? xv.data[i] : 0.0;
      break;
    case Activation::LeakyRelu:
      for (std::size_t i = 0; i < xv.size(); ++i)
        out.data[i] = xv.data[i] >= 0.0 ? xv.data[i] : slope * xv.data[i];
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-xv.data[i]));
      break;
  }
  auto bw = [kind, slope](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId xi = me.parents[0];
    if (!wants_grad(tp, xi)) return;
    double* dx = tp.grad_buf(xi).data();
    const Tensor& xv2 = tp.value(xi);
    const std::vector<double>& g = me.grad;
    // derivative at the kink takes the x >= 0 branch
    switch (kind) {
      case Activation::Relu:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += xv2.data[i] >= 0.0 ? g[i] : 0.0;
        break;
      case Activation::LeakyRelu:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (xv2.data[i] >= 0.0 ? 1.0 : slope);
        break;
      case Activation::Sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = me.value.data[i];
          dx[i] += g[i] * y * (1.0 - y);
        }
        break;
    }
  };
  return t.record(std::move(out), "activation", {x}, bw);
}

NodeId pool2d(Tape& t, NodeId x, PoolKind kind) {
  const Tensor& xv = t.value(x);
  require_rank4(xv, "pool2d input");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  Tensor out(xv.shape);
  std::vector<int> argmax;
  if (kind == PoolKind::Max) argmax.assign(out.size(), -1);
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < H; ++oy)
      for (int ox = 0; ox < W; ++ox)
        for (int c = 0; c < C; ++c) {
          const std::size_t oi = out.idx4(n, oy, ox, c);
          if (kind == PoolKind::Max) {
            double best = 0.0;
            int best_i = -1;
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int iy = oy + ky, ix = ox + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const std::size_t ii = xv.idx4(n, iy, ix, c);
                if (best_i < 0 || xv.data[ii] > best) {  // first index wins on ties
                  best = xv.data[ii];
                  best_i = static_cast<int>(ii);
                }
              }
            out.data[oi] = best;
            argmax[oi] = best_i;
          } else {
            double acc = 0.0;
            int cnt = 0;
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int iy = oy + ky, ix = ox + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += xv.at4(n, iy, ix, c);
                ++cnt;
              }
            out.data[oi] = acc / cnt;
          }
        }
  auto bw = [kind, argmax = std::move(argmax)](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId xi = me.parents[0];
    if (!wants_grad(tp, xi)) return;
    double* dx = tp.grad_buf(xi).data();
    const std::vector<double>& g = me.grad;
    if (kind == PoolKind::Max) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[argmax[i]] += g[i];
    } else {
      const Tensor& ov = me.value;
      const int N = ov.dim(0), H = ov.dim(1), W = ov.dim(2), C = ov.dim(3);
      for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < H; ++oy)
          for (int ox = 0; ox < W; ++ox) {
            int cnt = 0;
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int iy = oy + ky, ix = ox + kx;
                if (iy >= 0 && iy < H && ix >= 0 && ix < W) ++cnt;
              }
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const int iy = oy + ky, ix = ox + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                for (int c = 0; c < C; ++c)
                  dx[ov.idx4(n, iy, ix, c)] += g[ov.idx4(n, oy, ox, c)] / cnt;
              }
          }
    }
  };
  return t.record(std::move(out), kind == PoolKind::Max ? "max_pool3" : "avg_pool3", {x}, bw);
}

NodeId max_pool_downsample(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  require_rank4(xv, "max_pool_downsample input");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ContractViolation("max_pool_downsample: spatial extents must be even, got " + xv.shape_str());
  Tensor out({N, H / 2, W / 2, C});
  std::vector<int> argmax(out.size(), -1);
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < H / 2; ++oy)
      for (int ox = 0; ox < W / 2; ++ox)
        for (int c = 0; c < C; ++c) {
          const std::size_t oi = out.idx4(n, oy, ox, c);
          double best = 0.0;
          int best_i = -1;
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              const std::size_t ii = xv.idx4(n, 2 * oy + ky, 2 * ox + kx, c);
              if (best_i < 0 || xv.data[ii] > best) {
                best = xv.data[ii];
                best_i = static_cast<int>(ii);
              }
            }
          out.data[oi] = best;
          argmax[oi] = best_i;
        }
  auto bw = [argmax = std::move(argmax)](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    if (!wants_grad(tp, me.parents[0])) return;
    double* dx = tp.grad_buf(me.parents[0]).data();
    for (std::size_t i = 0; i < me.grad.size(); ++i) dx[argmax[i]] += me.grad[i];
  };
  return t.record(std::move(out), "max_pool_downsample", {x}, bw);
}

NodeId global_avg_pool(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  require_rank4(xv, "global_avg_pool input");
  const int N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  Tensor out({N, 1, 1, C});
  const double inv = 1.0 / (static_cast<double>(H) * W);
  for (int n = 0; n < N; ++n) {
    double* orow = out.data.data() + static_cast<std::size_t>(n) * C;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const double* xrow = xv.data.data() + xv.idx4(n, y, xx, 0);
        for (int c = 0; c < C; ++c) orow[c] += xrow[c];
      }
    for (int c = 0; c < C; ++c) orow[c] *= inv;
  }
  auto bw = [](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    if (!wants_grad(tp, me.parents[0])) return;
    const Tensor& xv2 = tp.value(me.parents[0]);
    const int N = xv2.dim(0), H = xv2.dim(1), W = xv2.dim(2), C = xv2.dim(3);
    double* dx = tp.grad_buf(me.parents[0]).data();
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int n = 0; n < N; ++n) {
      const double* gr = me.grad.data() + static_cast<std::size_t>(n) * C;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double* dxr = dx + xv2.idx4(n, y, xx, 0);
          for (int c = 0; c < C; ++c) dxr[c] += gr[c] * inv;
        }
    }
  };
  return t.record(std::move(out), "global_avg_pool", {x}, bw);
}

NodeId concat_channels(Tape& t, NodeId a, NodeId b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank4(av, "concat_channels a");
  require_rank4(bv, "concat_channels b");
  if (av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw ContractViolation("concat_channels: spatial mismatch " + av.shape_str() + " vs " +
                            bv.shape_str());
  const int N = av.dim(0), H = av.dim(1), W = av.dim(2), Ca = av.dim(3), Cb = bv.dim(3);
  Tensor out({N, H, W, Ca + Cb});
  const std::size_t pixels = static_cast<std::size_t>(N) * H * W;
  for (std::size_t p = 0; p < pixels; ++p) {
    double* orow = out.data.data() + p * (Ca + Cb);
    const double* ar = av.data.data() + p * Ca;
    const double* br = bv.data.data() + p * Cb;
    std::copy(ar, ar + Ca, orow);
    std::copy(br, br + Cb, orow + Ca);
  }
  auto bw = [Ca, Cb, pixels](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId ai = me.parents[0], bi = me.parents[1];
    double* da = wants_grad(tp, ai) ? tp.grad_buf(ai).data() : nullptr;
    double* db = wants_grad(tp, bi) ? tp.grad_buf(bi).data() : nullptr;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double* gr = me.grad.data() + p * (Ca + Cb);
      if (da)
        for (int c = 0; c < Ca; ++c) da[p * Ca + c] += gr[c];
      if (db)
        for (int c = 0; c < Cb; ++c) db[p * Cb + c] += gr[Ca + c];
    }
  };
  return t.record(std::move(out), "concat_channels", {a, b}, bw);
}

namespace {

// Shared add/mul with the N x 1 x 1 x C broadcast case for b.
NodeId elementwise(Tape& t, NodeId a, NodeId b, bool is_mul) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const bool broadcast = !av.same_shape(bv);
  if (broadcast) {
    if (av.rank() != 4 || bv.rank() != 4 || bv.dim(0) != av.dim(0) || bv.dim(1) != 1 ||
        bv.dim(2) != 1 || bv.dim(3) != av.dim(3))
      throw ContractViolation(std::string(is_mul ? "mul" : "add") + ": incompatible shapes " +
                              av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out(av.shape);
  const int C = broadcast ? av.dim(3) : 0;
  const std::size_t per_n = broadcast ? av.size() / av.dim(0) : 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double bvv = broadcast ? bv.data[(i / per_n) * C + (i % C)] : bv.data[i];
    out.data[i] = is_mul ? av.data[i] * bvv : av.data[i] + bvv;
  }
  auto bw = [is_mul, broadcast, C, per_n](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    const NodeId ai = me.parents[0], bi = me.parents[1];
    const Tensor& av2 = tp.value(ai);
    const Tensor& bv2 = tp.value(bi);
    const std::vector<double>& g = me.grad;
    double* da = wants_grad(tp, ai) ? tp.grad_buf(ai).data() : nullptr;
    double* db = wants_grad(tp, bi) ? tp.grad_buf(bi).data() : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t bidx = broadcast ? (i / per_n) * C + (i % C) : i;
      if (da) da[i] += is_mul ? g[i] * bv2.data[bidx] : g[i];
      if (db) db[bidx] += is_mul ? g[i] * av2.data[i] : g[i];
    }
  };
  return t.record(std::move(out), is_mul ? "mul" : "add", {a, b}, bw);
}

}  // namespace

NodeId add(Tape& t, NodeId a, NodeId b) { return elementwise(t, a, b, false); }
NodeId mul(Tape& t, NodeId a, NodeId b) { return elementwise(t, a, b, true); }

NodeId upsample_nearest(Tape& t, NodeId x, int target_h, int target_w) {
  const Tensor& xv = t.value(x);
  require_rank4(xv, "upsample_nearest input");
  const int N = xv.dim(0), h = xv.dim(1), w = xv.dim(2), C = xv.dim(3);
  if (target_h < h || target_w < w || target_h % h != 0 || target_w % w != 0)
    throw ContractViolation("upsample_nearest: target " + std::to_string(target_h) + "x" +
                            std::to_string(target_w) + " is not an integer upscale of " +
                            xv.shape_str());
  const int sy = target_h / h, sx = target_w / w;
  Tensor out({N, target_h, target_w, C});
  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < target_h; ++oy)
      for (int ox = 0; ox < target_w; ++ox) {
        const double* xrow = xv.data.data() + xv.idx4(n, oy / sy, ox / sx, 0);
        double* orow = out.data.data() + out.idx4(n, oy, ox, 0);
        std::copy(xrow, xrow + C, orow);
      }
  auto bw = [sy, sx](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    if (!wants_grad(tp, me.parents[0])) return;
    const Tensor& xv2 = tp.value(me.parents[0]);
    const int N = xv2.dim(0), C = xv2.dim(3);
    const int H = me.value.dim(1), W = me.value.dim(2);
    double* dx = tp.grad_buf(me.parents[0]).data();
    for (int n = 0; n < N; ++n)
      for (int oy = 0; oy < H; ++oy)
        for (int ox = 0; ox < W; ++ox) {
          const double* gr = me.grad.data() + me.value.idx4(n, oy, ox, 0);
          double* dxr = dx + xv2.idx4(n, oy / sy, ox / sx, 0);
          for (int c = 0; c < C; ++c) dxr[c] += gr[c];
        }
  };
  return t.record(std::move(out), "upsample_nearest", {x}, bw);
}

NodeId sum(Tape& t, NodeId x) {
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  auto bw = [](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    if (!wants_grad(tp, me.parents[0])) return;
    double* dx = tp.grad_buf(me.parents[0]).data();
    const double g = me.grad[0];
    const std::size_t n = tp.value(me.parents[0]).size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += g;
  };
  return t.record(Tensor::scalar(acc), "sum", {x}, bw);
}

NodeId add_scalars(Tape& t, const std::vector<NodeId>& terms) {
  if (terms.empty()) throw ContractViolation("add_scalars: no terms");
  double acc = 0.0;
  for (NodeId id : terms) {
    if (t.value(id).size() != 1) throw ContractViolation("add_scalars: non-scalar term");
    acc += t.value(id).data[0];
  }
  auto bw = [](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    for (NodeId p : me.parents)
      if (wants_grad(tp, p)) tp.grad_buf(p)[0] += me.grad[0];
  };
  return t.record(Tensor::scalar(acc), "add_scalars", terms, bw);
}

NodeId scale_scalar(Tape& t, NodeId x, double factor) {
  if (t.value(x).size() != 1) throw ContractViolation("scale_scalar: non-scalar input");
  auto bw = [factor](Tape& tp, NodeId self) {
    const Tape::Node& me = tp.node(self);
    if (wants_grad(tp, me.parents[0])) tp.grad_buf(me.parents[0])[0] += factor * me.grad[0];
  };
  return t.record(Tensor::scalar(factor * t.value(x).data[0]), "scale_scalar", {x}, bw);
}

}  // namespace adnet::ops
