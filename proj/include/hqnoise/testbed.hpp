#pragma once
// Closed-form denoiser testbed: a Gaussian-mixture world over latent tensors
// whose exact posterior mean stands in for a trained denoiser U-Net. The
// conditional branch knows which mixture component (view) is being generated;
// the unconditional branch marginalizes over all of them, so the gap between
// the two is a genuine semantic direction.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "guidance.hpp"
#include "nn.hpp"
#include "scheduler.hpp"
#include "tensor.hpp"

namespace hqnoise {

struct GaussianComponent {
  Tensor mean;
  double std = 1.0;
  double weight = 1.0;
};

struct ToyWorldConfig {
  Shape latent_shape{4, 16, 16};
  int views = 2;
  uint64_t pattern_seed = 7;
  double amplitude = 0.8;     // peak value of the per-view mean patterns
  double component_std = 0.15;
  double phase_step = 0.5;    // per-view phase shift of the patterns, radians
};

// Mixture of Gaussians whose components play the role of the views of one
// object: smooth per-channel sinusoid patterns, phase-shifted per view.
class ToyWorld {
 public:
  static ToyWorld make(const ToyWorldConfig& cfg) {
    if (cfg.views < 1) throw ConfigError("toy world: views must be >= 1");
    if (cfg.latent_shape.size() != 3) throw ConfigError("toy world: latent must be rank 3");
    if (!(cfg.component_std > 0.0)) throw ConfigError("toy world: component std must be > 0");
    const int C = cfg.latent_shape[0], H = cfg.latent_shape[1], W = cfg.latent_shape[2];
    Rng prng(Rng(cfg.pattern_seed).child(0x70617474ull).seed());
    std::vector<double> fx(C), fy(C), phase(C);
    for (int c = 0; c < C; ++c) {
      fx[c] = 1.0 + std::floor(prng.uniform() * 3.0);
      fy[c] = 1.0 + std::floor(prng.uniform() * 3.0);
      phase[c] = prng.uniform() * 6.283185307179586;
    }
    std::vector<GaussianComponent> comps;
    comps.reserve(cfg.views);
    for (int v = 0; v < cfg.views; ++v) {
      Tensor mean(cfg.latent_shape);
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            mean.at(c, y, x) = cfg.amplitude *
                               std::sin(6.283185307179586 *
                                            (fx[c] * x / W + fy[c] * y / H) +
                                        phase[c] + cfg.phase_step * v);
      comps.push_back({std::move(mean), cfg.component_std, 1.0 / cfg.views});
    }
    return ToyWorld(std::move(comps));
  }

  static ToyWorld from_components(std::vector<GaussianComponent> comps) {
    return ToyWorld(std::move(comps));
  }

  int num_views() const { return static_cast<int>(comps_.size()); }

  const GaussianComponent& component(int v) const {
    if (v < 0 || v >= num_views())
      throw ConfigError("toy world: view " + std::to_string(v) + " outside [0, " +
                        std::to_string(num_views()) + ")");
    return comps_[static_cast<size_t>(v)];
  }

  const Shape& latent_shape() const { return comps_[0].mean.shape(); }

  Tensor mixture_mean() const {
    Tensor m = Tensor::zeros_like(comps_[0].mean);
    for (const auto& c : comps_) m.axpy(c.weight, c.mean);
    return m;
  }

  // Draw x from component v.
  Tensor sample_view(int v, Rng& rng) const {
    const GaussianComponent& c = component(v);
    Tensor x = Tensor::randn(c.mean.shape(), rng, c.std);
    x += c.mean;
    return x;
  }

  // Draw x from the mixture.
  Tensor sample(Rng& rng) const {
    double u = rng.uniform(), acc = 0.0;
    int pick = num_views() - 1;
    for (int k = 0; k < num_views(); ++k) {
      acc += comps_[static_cast<size_t>(k)].weight;
      if (u < acc) {
        pick = k;
        break;
      }
    }
    return sample_view(pick, rng);
  }

 private:
  explicit ToyWorld(std::vector<GaussianComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw ConfigError("toy world: need at least one component");
    double wsum = 0.0;
    for (const auto& c : comps_) {
      if (!(c.weight > 0.0)) throw ConfigError("toy world: weights must be positive");
      if (!(c.std > 0.0)) throw ConfigError("toy world: component std must be > 0");
      c.mean.require_same_shape(comps_[0].mean, "toy world components");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
      throw ConfigError("toy world: weights must sum to 1, got " + std::to_string(wsum));
  }

  std::vector<GaussianComponent> comps_;
};

// Conditioning context handed to predictors. c is the reference latent (the
// conditioned component's mean in the pipeline); the empty prompt is all-zeros
// with is_null set.
struct PromptContext {
  Tensor c;
  int view = 0;
  bool is_null = false;

  static PromptContext null_like(const PromptContext& p) {
    return PromptContext{empty_prompt_like(p.c), p.view, true};
  }
};

// E[x | z] for a single Gaussian component under z = x + sigma * eps.
inline Tensor gaussian_posterior_mean(const Tensor& z, double sigma, const Tensor& mean,
                                      double std) {
  if (!(std > 0.0)) throw DataError("gaussian_posterior_mean: std must be > 0");
  if (!(sigma >= 0.0)) throw ScheduleError("gaussian_posterior_mean: sigma must be >= 0");
  z.require_same_shape(mean, "gaussian_posterior_mean");
  const double s2 = std * std, g2 = sigma * sigma;
  Tensor out = mean * (g2 / (s2 + g2));
  out.axpy(s2 / (s2 + g2), z);
  return out;
}

// E[x | z] under the mixture: responsibility-weighted component posteriors,
// responsibilities from the marginal z ~ N(m_k, (s_k^2 + sigma^2) I).
inline Tensor mixture_posterior_mean(const Tensor& z, double sigma, const ToyWorld& world) {
  const int K = world.num_views();
  const double D = static_cast<double>(z.size());
  std::vector<double> logw(static_cast<size_t>(K));
  double lmax = -1e300;
  for (int k = 0; k < K; ++k) {
    const GaussianComponent& c = world.component(k);
    z.require_same_shape(c.mean, "mixture_posterior_mean");
    const double var = c.std * c.std + sigma * sigma;
    Tensor d = z;
    d -= c.mean;
    logw[static_cast<size_t>(k)] =
        std::log(c.weight) - 0.5 * d.dot(d) / var - 0.5 * D * std::log(var);
    if (logw[static_cast<size_t>(k)] > lmax) lmax = logw[static_cast<size_t>(k)];
  }
  double norm = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - lmax);
    norm += lw;
  }
  Tensor out = Tensor::zeros_like(z);
  for (int k = 0; k < K; ++k) {
    const GaussianComponent& c = world.component(k);
    const double r = logw[static_cast<size_t>(k)] / norm;
    out.axpy(r, gaussian_posterior_mean(z, sigma, c.mean, c.std));
  }
  return out;
}

// Parameterization bridge, defined by the property that feeding the result
// into the v-form Euler step reproduces the epsilon-form step for every
// sigma_prev <= sigma:  v = sqrt(sigma^2+1) * eps - sigma * z / sqrt(sigma^2+1).
inline Tensor v_from_epsilon(const Tensor& z, const Tensor& eps, double sigma) {
  z.require_same_shape(eps, "v_from_epsilon");
  const double root = std::sqrt(sigma * sigma + 1.0);
  Tensor out = eps * root;
  out.axpy(-sigma / root, z);
  return out;
}

// Anything that can stand in for the denoising U-Net: the closed-form world,
// constant mocks (theory harness), or the tiny trained conv denoiser.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  // z_scaled is the descaled latent z' = z / sqrt(sigma^2+1); the output is in
  // epsilon or v space per `kind`.
  virtual Tensor predict(const PromptContext& prompt, const Tensor& z_scaled, double sigma,
                         PredictionType kind) const = 0;
};

namespace detail {
inline Tensor denoised_to_output(const Tensor& z, const Tensor& denoised, double sigma,
                                 PredictionType kind) {
  if (!(sigma > 0.0))
    throw ScheduleError("predict: epsilon/v output undefined at sigma == 0");
  Tensor eps = z;
  eps -= denoised;
  eps *= 1.0 / sigma;
  if (kind == PredictionType::kEpsilon) return eps;
  return v_from_epsilon(z, eps, sigma);
}
}  // namespace detail

// Exact posterior-mean denoiser over a ToyWorld. The conditional branch uses
// the component selected by the prompt's view; the unconditional branch uses
// the full mixture.
class ToyPredictor : public NoisePredictor {
 public:
  explicit ToyPredictor(const ToyWorld& world) : world_(&world) {}

  Tensor predict(const PromptContext& prompt, const Tensor& z_scaled, double sigma,
                 PredictionType kind) const override {
    Tensor z = z_scaled * std::sqrt(sigma * sigma + 1.0);
    Tensor denoised = prompt.is_null
                          ? mixture_posterior_mean(z, sigma, *world_)
                          : gaussian_posterior_mean(z, sigma,
                                                    world_->component(prompt.view).mean,
                                                    world_->component(prompt.view).std);
    return detail::denoised_to_output(z, denoised, sigma, kind);
  }

  // Denoised-space prediction (x-space posterior mean), used by the
  // semantic-direction diagnostics.
  Tensor denoised(const PromptContext& prompt, const Tensor& z, double sigma) const {
    return prompt.is_null ? mixture_posterior_mean(z, sigma, *world_)
                          : gaussian_posterior_mean(z, sigma,
                                                    world_->component(prompt.view).mean,
                                                    world_->component(prompt.view).std);
  }

 private:
  const ToyWorld* world_;
};

// Two-conv-layer trainable denoiser (optional stand-in exercising the layer
// stack end to end). Conditioning arrives as extra input channels holding the
// component mean; the empty prompt is all-zeros there, mirroring CFG.
class TinyConvDenoiser : public NoisePredictor {
 public:
  TinyConvDenoiser(const Shape& latent_shape, int hidden, uint64_t seed)
      : latent_shape_(latent_shape) {
    Rng rng(Rng(seed).child(0x74696E79ull).seed());
    const int C = latent_shape[0];
    conv1_ = std::make_unique<Conv2dLayer>("tiny.conv1", 2 * C, hidden, 3, 1, 1, true, rng);
    act_ = std::make_unique<EluLayer>();
    conv2_ = std::make_unique<Conv2dLayer>("tiny.conv2", hidden, C, 3, 1, 1, true, rng);
  }

  // Forward in denoised (x) space.
  Batch denoise_batch(const Batch& z, const Batch& cond, bool train) {
    Batch joined;
    joined.reserve(z.size());
    for (size_t i = 0; i < z.size(); ++i) joined.push_back(concat_channels(z[i], cond[i]));
    return conv2_->forward(act_->forward(conv1_->forward(joined, train), train), train);
  }

  void backward(const Batch& grad_out) {
    conv1_->backward(act_->backward(conv2_->backward(grad_out)));
  }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> out;
    conv1_->collect_params(out);
    conv2_->collect_params(out);
    return out;
  }

  Tensor predict(const PromptContext& prompt, const Tensor& z_scaled, double sigma,
                 PredictionType kind) const override {
    Tensor z = z_scaled * std::sqrt(sigma * sigma + 1.0);
    Tensor cond = prompt.is_null ? Tensor(latent_shape_) : prompt.c;
    Batch out = const_cast<TinyConvDenoiser*>(this)->denoise_batch({z}, {cond}, false);
    return detail::denoised_to_output(z, out[0], sigma, kind);
  }

 private:
  Shape latent_shape_;
  std::unique_ptr<Conv2dLayer> conv1_;
  std::unique_ptr<EluLayer> act_;
  std::unique_ptr<Conv2dLayer> conv2_;
};

struct TinyTrainResult {
  double mse_net = 0.0;     // held-out conditional MSE of the trained net
  double mse_closed = 0.0;  // exact posterior mean's MSE on the same samples
  int rounds = 0;           // training rounds consumed before convergence
};

// Denoising-score-matching trainer for TinyConvDenoiser at one noise level:
// rounds of Adam steps with a halving learning rate until the held-out
// conditional MSE is within 10% of the closed-form posterior mean's MSE.
// Throws TrainingError if the budget of rounds is exhausted first.
inline TinyTrainResult train_tiny_denoiser(TinyConvDenoiser& net, const ToyWorld& world,
                                           double sigma, int steps_per_round, int batch,
                                           double lr, uint64_t seed, int max_rounds = 6) {
  Rng rng(Rng(seed).child(0x7473646Dull).seed());
  Rng eval_rng(Rng(seed).child(0x7465766Cull).seed());

  // Fixed held-out set: the evaluation never consumes training randomness.
  const int eval_n = 128;
  Batch eval_z, eval_x, eval_cond;
  std::vector<int> eval_view(eval_n);
  for (int i = 0; i < eval_n; ++i) {
    const int v = static_cast<int>(eval_rng.next_u64() % world.num_views());
    Tensor x = world.sample_view(v, eval_rng);
    eval_z.push_back(x + Tensor::randn(x.shape(), eval_rng, sigma));
    eval_x.push_back(std::move(x));
    eval_cond.push_back(world.component(v).mean);
    eval_view[static_cast<size_t>(i)] = v;
  }
  double mse_closed = 0.0;
  for (int i = 0; i < eval_n; ++i) {
    const GaussianComponent& c = world.component(eval_view[static_cast<size_t>(i)]);
    Tensor dc = gaussian_posterior_mean(eval_z[i], sigma, c.mean, c.std) - eval_x[i];
    mse_closed += dc.dot(dc) / dc.size();
  }
  mse_closed /= eval_n;

  auto eval_net = [&]() {
    double mse = 0.0;
    for (int i = 0; i < eval_n; ++i) {
      Batch out = net.denoise_batch({eval_z[i]}, {eval_cond[i]}, false);
      Tensor dn = out[0] - eval_x[i];
      mse += dn.dot(dn) / dn.size();
    }
    return mse / eval_n;
  };

  Adam opt(net.params(), AdamConfig{lr});
  for (int round = 1; round <= max_rounds; ++round) {
    opt.set_lr(lr * std::pow(0.5, round - 1));
    for (int s = 0; s < steps_per_round; ++s) {
      Batch zs, conds, targets;
      for (int b = 0; b < batch; ++b) {
        const int v = static_cast<int>(rng.next_u64() % world.num_views());
        Tensor x = world.sample_view(v, rng);
        Tensor z = x + Tensor::randn(x.shape(), rng, sigma);
        zs.push_back(std::move(z));
        conds.push_back(world.component(v).mean);
        targets.push_back(std::move(x));
      }
      opt.zero_grad();
      Batch pred = net.denoise_batch(zs, conds, true);
      Batch grads(pred.size());
      for (size_t i = 0; i < pred.size(); ++i) {
        Tensor d = pred[i];
        d -= targets[i];
        grads[i] = d * (2.0 / (d.size() * pred.size()));
      }
      net.backward(grads);
      opt.step();
    }
    const double mse_net = eval_net();
    if (mse_net <= 1.1 * mse_closed) return {mse_net, mse_closed, round};
  }
  throw TrainingError("tiny denoiser did not reach 110% of the closed-form MSE in " +
                      std::to_string(max_rounds) + " rounds");
}

}  // namespace hqnoise
