#pragma once
// Minimal trainable layer stack: conv / transposed conv / batchnorm / maxpool /
// pixel-shuffle / relu / elu, plus Adam. Backward passes are hand-written for
// this fixed op set (no general autodiff) and every one of them is pinned by
// central finite-difference tests.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace hqnoise {

using Batch = std::vector<Tensor>;

// ----------------------------------------------------------------- params --

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment

  Parameter() = default;
  Parameter(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(Tensor::zeros_like(value)),
        m(Tensor::zeros_like(value)),
        v(Tensor::zeros_like(value)) {}

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; t is the 1-based step count.
inline void adam_step(Parameter& p, const AdamConfig& cfg, int64_t t) {
  if (t < 1) throw TrainingError("adam_step: step count must be >= 1");
  if (!p.grad.all_finite())
    throw TrainingError("adam_step: non-finite gradient in " + p.name);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
    p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = p.m[i] / bc1;
    const double vhat = p.v[i] / bc2;
    p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t steps() const { return t_; }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    for (Parameter* p : params_) adam_step(*p, cfg_, t_);
  }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// --------------------------------------------------------------- free ops --

inline Tensor pad2d(const Tensor& in, int pad) {
  if (pad == 0) return in;
  Tensor out({in.dim(0), in.dim(1) + 2 * pad, in.dim(2) + 2 * pad});
  for (int c = 0; c < in.dim(0); ++c)
    for (int y = 0; y < in.dim(1); ++y)
      for (int x = 0; x < in.dim(2); ++x) out.at(c, y + pad, x + pad) = in.at(c, y, x);
  return out;
}

inline Tensor crop2d(const Tensor& in, int pad, int H, int W) {
  if (pad == 0) return in;
  Tensor out({in.dim(0), H, W});
  for (int c = 0; c < in.dim(0); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(c, y, x) = in.at(c, y + pad, x + pad);
  return out;
}

inline void conv2d_check(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  if (input.ndim() != 3)
    throw ShapeError("conv2d: input must be rank 3, got " + shape_str(input.shape()));
  if (kernel.ndim() != 4)
    throw ShapeError("conv2d: kernel must be rank 4, got " + shape_str(kernel.shape()));
  if (kernel.dim(1) != input.dim(0))
    throw ShapeError("conv2d: channel mismatch, input axis 0 is " +
                     std::to_string(input.dim(0)) + " but kernel axis 1 is " +
                     std::to_string(kernel.dim(1)));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (kernel.dim(2) > input.dim(1) + 2 * padding ||
      kernel.dim(3) > input.dim(2) + 2 * padding)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                     " larger than padded input " + shape_str(input.shape()));
}

// out[o,y,x] = sum_{c,ky,kx} in[c, y*s-p+ky, x*s-p+kx] * k[o,c,ky,kx] (+ bias[o])
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding,
                     const Tensor* bias = nullptr) {
  conv2d_check(input, kernel, stride, padding);
  const Tensor xp = pad2d(input, padding);
  const int C = input.dim(0), kh = kernel.dim(2), kw = kernel.dim(3), O = kernel.dim(0);
  const int Ho = (input.dim(1) + 2 * padding - kh) / stride + 1;
  const int Wo = (input.dim(2) + 2 * padding - kw) / stride + 1;
  Tensor out({O, Ho, Wo});
  for (int o = 0; o < O; ++o) {
    if (bias) {
      const double b = (*bias)[static_cast<size_t>(o)];
      double* op = &out.at(o, 0, 0);
      for (int i = 0; i < Ho * Wo; ++i) op[i] = b;
    }
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const double w = kernel.at(o, c, ky, kx);
          for (int y = 0; y < Ho; ++y) {
            const double* row = &xp.at(c, y * stride + ky, kx);
            double* orow = &out.at(o, y, 0);
            for (int x = 0; x < Wo; ++x) orow[x] += w * row[x * stride];
          }
        }
  }
  return out;
}

// dL/d(input) given dL/d(out). Scatter into the padded frame, then crop.
inline Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernel,
                                int stride, int padding, const Shape& input_shape) {
  const int C = input_shape[0], H = input_shape[1], W = input_shape[2];
  const int kh = kernel.dim(2), kw = kernel.dim(3), O = kernel.dim(0);
  Tensor gp({C, H + 2 * padding, W + 2 * padding});
  const int Ho = grad_out.dim(1), Wo = grad_out.dim(2);
  for (int o = 0; o < O; ++o)
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const double w = kernel.at(o, c, ky, kx);
          for (int y = 0; y < Ho; ++y) {
            const double* grow = &grad_out.at(o, y, 0);
            double* prow = &gp.at(c, y * stride + ky, kx);
            for (int x = 0; x < Wo; ++x) prow[x * stride] += w * grow[x];
          }
        }
  return crop2d(gp, padding, H, W);
}

// Accumulates dL/d(kernel) and optionally dL/d(bias).
inline void conv2d_grad_params(const Tensor& grad_out, const Tensor& input,
                               const Shape& kernel_shape, int stride, int padding,
                               Tensor& grad_kernel, Tensor* grad_bias) {
  const Tensor xp = pad2d(input, padding);
  const int O = kernel_shape[0], C = kernel_shape[1], kh = kernel_shape[2], kw = kernel_shape[3];
  const int Ho = grad_out.dim(1), Wo = grad_out.dim(2);
  for (int o = 0; o < O; ++o) {
    if (grad_bias) {
      double b = 0.0;
      const double* gp = &grad_out.at(o, 0, 0);
      for (int i = 0; i < Ho * Wo; ++i) b += gp[i];
      (*grad_bias)[static_cast<size_t>(o)] += b;
    }
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int y = 0; y < Ho; ++y) {
            const double* grow = &grad_out.at(o, y, 0);
            const double* row = &xp.at(c, y * stride + ky, kx);
            for (int x = 0; x < Wo; ++x) acc += grow[x] * row[x * stride];
          }
          grad_kernel.at(o, c, ky, kx) += acc;
        }
  }
}

// (C*r^2, H, W) -> (C, r*H, r*W); channel block c*r^2 + dy*r + dx lands on
// spatial offset (dy, dx).
inline Tensor pixel_shuffle(const Tensor& in, int r) {
  if (r < 1) throw ConfigError("pixel_shuffle: factor must be >= 1");
  if (in.ndim() != 3 || in.dim(0) % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channel count " + std::to_string(in.dim(0)) +
                     " not divisible by r^2=" + std::to_string(r * r));
  const int C = in.dim(0) / (r * r), H = in.dim(1), W = in.dim(2);
  Tensor out({C, r * H, r * W});
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            out.at(c, r * y + dy, r * x + dx) = in.at(c * r * r + dy * r + dx, y, x);
  return out;
}

// Exact inverse of pixel_shuffle; also its gradient map.
inline Tensor pixel_unshuffle(const Tensor& in, int r) {
  if (r < 1) throw ConfigError("pixel_unshuffle: factor must be >= 1");
  if (in.ndim() != 3 || in.dim(1) % r != 0 || in.dim(2) % r != 0)
    throw ShapeError("pixel_unshuffle: spatial dims of " + shape_str(in.shape()) +
                     " not divisible by r=" + std::to_string(r));
  const int C = in.dim(0), H = in.dim(1) / r, W = in.dim(2) / r;
  Tensor out({C * r * r, H, W});
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < r; ++dy)
      for (int dx = 0; dx < r; ++dx)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            out.at(c * r * r + dy * r + dx, y, x) = in.at(c, r * y + dy, r * x + dx);
  return out;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }
inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

inline Tensor map_tensor(const Tensor& t, double (*fn)(double)) {
  Tensor out = Tensor::zeros_like(t);
  for (size_t i = 0; i < t.size(); ++i) out[i] = fn(t[i]);
  return out;
}

// ------------------------------------------------------------------ layers --
// Layers operate on whole batches so BatchNorm can use cross-batch statistics.
// forward(train=true) caches whatever backward() needs; backward accumulates
// parameter gradients and returns input gradients.

inline Tensor kaiming_normal(const Shape& shape, int fan_in, Rng& rng) {
  return Tensor::randn(shape, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch forward(const Batch& x, bool train) = 0;
  virtual Batch backward(const Batch& grad_out) = 0;
  virtual void collect_params(std::vector<Parameter*>& out) {}
  // Non-trainable state serialized with checkpoints (batchnorm running stats).
  virtual void collect_buffers(std::vector<Tensor*>& out) {}
};

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int k, int stride,
              int pad, bool bias, Rng& rng)
      : stride_(stride),
        pad_(pad),
        weight_(name + ".weight", kaiming_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng)) {
    if (bias) bias_ = Parameter(name + ".bias", Tensor({out_ch}));
  }

  Batch forward(const Batch& x, bool train) override {
    if (train) cached_ = x;
    Batch out;
    out.reserve(x.size());
    for (const Tensor& t : x)
      out.push_back(conv2d(t, weight_.value, stride_, pad_, bias_ ? &bias_->value : nullptr));
    return out;
  }

  Batch backward(const Batch& grad_out) override {
    Batch gin;
    gin.reserve(grad_out.size());
    for (size_t i = 0; i < grad_out.size(); ++i) {
      conv2d_grad_params(grad_out[i], cached_[i], weight_.value.shape(), stride_, pad_,
                         weight_.grad, bias_ ? &bias_->grad : nullptr);
      gin.push_back(conv2d_grad_input(grad_out[i], weight_.value, stride_, pad_,
                                      cached_[i].shape()));
    }
    return gin;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

  Parameter& weight() { return weight_; }

 private:
  int stride_, pad_;
  Parameter weight_;
  std::optional<Parameter> bias_;
  Batch cached_;
};

// Transposed conv with kernel (in_ch, out_ch, k, k):
// out[o, y*s+ky, x*s+kx] += in[c,y,x] * w[c,o,ky,kx] (+ bias[o]).
class ConvTranspose2dLayer : public Layer {
 public:
  ConvTranspose2dLayer(const std::string& name, int in_ch, int out_ch, int k, int stride,
                       Rng& rng)
      : k_(k),
        stride_(stride),
        out_ch_(out_ch),
        weight_(name + ".weight", kaiming_normal({in_ch, out_ch, k, k}, in_ch * k * k, rng)),
        bias_(name + ".bias", Tensor({out_ch})) {}

  Batch forward(const Batch& x, bool train) override {
    if (train) cached_ = x;
    Batch out;
    out.reserve(x.size());
    for (const Tensor& t : x) out.push_back(forward_one(t));
    return out;
  }

  Batch backward(const Batch& grad_out) override {
    Batch gin;
    gin.reserve(grad_out.size());
    for (size_t i = 0; i < grad_out.size(); ++i) gin.push_back(backward_one(grad_out[i], cached_[i]));
    return gin;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Tensor forward_one(const Tensor& in) const {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor out({out_ch_, (H - 1) * stride_ + k_, (W - 1) * stride_ + k_});
    for (int o = 0; o < out_ch_; ++o) {
      const double b = bias_.value[static_cast<size_t>(o)];
      double* op = &out.at(o, 0, 0);
      for (int i = 0; i < out.dim(1) * out.dim(2); ++i) op[i] = b;
    }
    for (int c = 0; c < C; ++c)
      for (int o = 0; o < out_ch_; ++o)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            const double w = weight_.value.at(c, o, ky, kx);
            for (int y = 0; y < H; ++y)
              for (int x = 0; x < W; ++x)
                out.at(o, y * stride_ + ky, x * stride_ + kx) += w * in.at(c, y, x);
          }
    return out;
  }

  Tensor backward_one(const Tensor& gout, const Tensor& in) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor gin({C, H, W});
    for (int o = 0; o < out_ch_; ++o) {
      double b = 0.0;
      const double* gp = &gout.at(o, 0, 0);
      for (int i = 0; i < gout.dim(1) * gout.dim(2); ++i) b += gp[i];
      bias_.grad[static_cast<size_t>(o)] += b;
    }
    for (int c = 0; c < C; ++c)
      for (int o = 0; o < out_ch_; ++o)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            const double w = weight_.value.at(c, o, ky, kx);
            double wg = 0.0;
            for (int y = 0; y < H; ++y)
              for (int x = 0; x < W; ++x) {
                const double g = gout.at(o, y * stride_ + ky, x * stride_ + kx);
                gin.at(c, y, x) += w * g;
                wg += g * in.at(c, y, x);
              }
            weight_.grad.at(c, o, ky, kx) += wg;
          }
    return gin;
  }

  int k_, stride_, out_ch_;
  Parameter weight_;
  Parameter bias_;
  Batch cached_;
};

// Per-channel affine normalization; batch statistics (population variance)
// while training, running statistics at inference, momentum 0.1, eps 1e-5.
class BatchNorm2dLayer : public Layer {
 public:
  BatchNorm2dLayer(const std::string& name, int channels, double momentum = 0.1,
                   double eps = 1e-5)
      : C_(channels),
        momentum_(momentum),
        eps_(eps),
        gamma_(name + ".weight", Tensor({channels}, 1.0)),
        beta_(name + ".bias", Tensor({channels})),
        running_mean_({channels}),
        running_var_({channels}, 1.0) {}

  Batch forward(const Batch& x, bool train) override {
    if (x.empty()) throw DataError("batchnorm: empty batch");
    for (const Tensor& t : x)
      if (t.dim(0) != C_)
        throw ShapeError("batchnorm: expected " + std::to_string(C_) + " channels, got " +
                         shape_str(t.shape()));
    const int H = x[0].dim(1), W = x[0].dim(2);
    const double n = static_cast<double>(x.size() * H * W);
    Tensor mean({C_}), var({C_});
    if (train) {
      for (int c = 0; c < C_; ++c) {
        double s = 0.0;
        for (const Tensor& t : x) {
          const double* p = &t.at(c, 0, 0);
          for (int i = 0; i < H * W; ++i) s += p[i];
        }
        mean[c] = s / n;
        double v = 0.0;
        for (const Tensor& t : x) {
          const double* p = &t.at(c, 0, 0);
          for (int i = 0; i < H * W; ++i) v += (p[i] - mean[c]) * (p[i] - mean[c]);
        }
        var[c] = v / n;
        running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
        running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
      }
    } else {
      mean = running_mean_;
      var = running_var_;
    }
    Batch out(x.size());
    if (train) {
      cached_xhat_.assign(x.size(), Tensor());
      inv_std_ = Tensor({C_});
      batch_n_ = n;
    }
    for (int c = 0; c < C_; ++c) {
      const double is = 1.0 / std::sqrt(var[c] + eps_);
      if (train) inv_std_[c] = is;
      const double g = gamma_.value[c], b = beta_.value[c], mu = mean[c];
      for (size_t i = 0; i < x.size(); ++i) {
        if (out[i].empty()) out[i] = Tensor::zeros_like(x[i]);
        if (train && cached_xhat_[i].empty()) cached_xhat_[i] = Tensor::zeros_like(x[i]);
        const double* p = &x[i].at(c, 0, 0);
        double* q = &out[i].at(c, 0, 0);
        double* xh = train ? &cached_xhat_[i].at(c, 0, 0) : nullptr;
        for (int j = 0; j < H * W; ++j) {
          const double xhat = (p[j] - mu) * is;
          if (xh) xh[j] = xhat;
          q[j] = g * xhat + b;
        }
      }
    }
    return out;
  }

  Batch backward(const Batch& gout) override {
    const int H = gout[0].dim(1), W = gout[0].dim(2);
    const double n = batch_n_;
    Batch gin(gout.size());
    for (size_t i = 0; i < gout.size(); ++i) gin[i] = Tensor::zeros_like(gout[i]);
    for (int c = 0; c < C_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (size_t i = 0; i < gout.size(); ++i) {
        const double* gy = &gout[i].at(c, 0, 0);
        const double* xh = &cached_xhat_[i].at(c, 0, 0);
        for (int j = 0; j < H * W; ++j) {
          sum_dy += gy[j];
          sum_dy_xhat += gy[j] * xh[j];
        }
      }
      beta_.grad[c] += sum_dy;
      gamma_.grad[c] += sum_dy_xhat;
      const double g = gamma_.value[c], is = inv_std_[c];
      // dx = (g*is/n) * (n*dy - sum_dy - xhat * sum_dy_xhat)
      for (size_t i = 0; i < gout.size(); ++i) {
        const double* gy = &gout[i].at(c, 0, 0);
        const double* xh = &cached_xhat_[i].at(c, 0, 0);
        double* gx = &gin[i].at(c, 0, 0);
        for (int j = 0; j < H * W; ++j)
          gx[j] = g * is / n * (n * gy[j] - sum_dy - xh[j] * sum_dy_xhat);
      }
    }
    return gin;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_buffers(std::vector<Tensor*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  int C_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Batch cached_xhat_;
  Tensor inv_std_;
  double batch_n_ = 0.0;
};

// 2x2 max pooling, stride 2. Ties route to the first maximum in scan order.
class MaxPool2dLayer : public Layer {
 public:
  Batch forward(const Batch& x, bool train) override {
    Batch out;
    out.reserve(x.size());
    if (train) argmax_.assign(x.size(), {});
    for (size_t i = 0; i < x.size(); ++i) {
      const Tensor& t = x[i];
      if (t.dim(1) % 2 != 0 || t.dim(2) % 2 != 0)
        throw ShapeError("maxpool: spatial dims of " + shape_str(t.shape()) + " must be even");
      const int C = t.dim(0), Ho = t.dim(1) / 2, Wo = t.dim(2) / 2;
      Tensor o({C, Ho, Wo});
      if (train) {
        argmax_[i].assign(o.size(), 0);
        in_shapes_.resize(x.size());
        in_shapes_[i] = t.shape();
      }
      size_t oi = 0;
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx, ++oi) {
            double best = t.at(c, 2 * y, 2 * xx);
            int by = 2 * y, bx = 2 * xx;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const double v = t.at(c, 2 * y + dy, 2 * xx + dx);
                if (v > best) {
                  best = v;
                  by = 2 * y + dy;
                  bx = 2 * xx + dx;
                }
              }
            o[oi] = best;
            if (train)
              argmax_[i][oi] = (static_cast<size_t>(c) * t.dim(1) + by) * t.dim(2) + bx;
          }
      out.push_back(std::move(o));
    }
    return out;
  }

  Batch backward(const Batch& gout) override {
    Batch gin(gout.size());
    for (size_t i = 0; i < gout.size(); ++i) {
      gin[i] = Tensor(in_shapes_[i]);
      for (size_t j = 0; j < gout[i].size(); ++j) gin[i][argmax_[i][j]] += gout[i][j];
    }
    return gin;
  }

 private:
  std::vector<std::vector<size_t>> argmax_;
  std::vector<Shape> in_shapes_;
};

class PixelShuffleLayer : public Layer {
 public:
  explicit PixelShuffleLayer(int r) : r_(r) {}

  Batch forward(const Batch& x, bool) override {
    Batch out;
    out.reserve(x.size());
    for (const Tensor& t : x) out.push_back(pixel_shuffle(t, r_));
    return out;
  }

  Batch backward(const Batch& gout) override {
    Batch gin;
    gin.reserve(gout.size());
    for (const Tensor& g : gout) gin.push_back(pixel_unshuffle(g, r_));
    return gin;
  }

 private:
  int r_;
};

class ReluLayer : public Layer {
 public:
  Batch forward(const Batch& x, bool train) override {
    if (train) cached_ = x;
    Batch out;
    out.reserve(x.size());
    for (const Tensor& t : x) out.push_back(map_tensor(t, relu));
    return out;
  }

  Batch backward(const Batch& gout) override {
    Batch gin(gout.size());
    for (size_t i = 0; i < gout.size(); ++i) {
      gin[i] = Tensor::zeros_like(gout[i]);
      for (size_t j = 0; j < gout[i].size(); ++j)
        gin[i][j] = gout[i][j] * relu_grad(cached_[i][j]);
    }
    return gin;
  }

 private:
  Batch cached_;
};

class EluLayer : public Layer {
 public:
  Batch forward(const Batch& x, bool train) override {
    if (train) cached_ = x;
    Batch out;
    out.reserve(x.size());
    for (const Tensor& t : x) out.push_back(map_tensor(t, elu));
    return out;
  }

  Batch backward(const Batch& gout) override {
    Batch gin(gout.size());
    for (size_t i = 0; i < gout.size(); ++i) {
      gin[i] = Tensor::zeros_like(gout[i]);
      for (size_t j = 0; j < gout[i].size(); ++j)
        gin[i][j] = gout[i][j] * elu_grad(cached_[i][j]);
    }
    return gin;
  }

 private:
  Batch cached_;
};

// Applies a list of layers in order; used for the sequential chunks of models.
class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }

  Batch forward(const Batch& x, bool train) override {
    Batch cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }

  Batch backward(const Batch& gout) override {
    Batch g = gout;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }

  void collect_buffers(std::vector<Tensor*>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace hqnoise
