#pragma once
// Encoder-decoder network (EDN): maps the channel concatenation of terminal
// noise z_T and reference latent I to predicted semantic information S_pred,
// so that z_T + S_pred approximates the enriched noise z~_T. Encoder: a
// ResNet-style stem plus one identity block and two downsampling blocks with
// parallel 1x1 branches. Decoder: conv + ELU + pixel-shuffle stages (or
// transposed convolutions, config-selectable) with skip concatenations of the
// stage-2 then stage-1 feature maps, and a linear output head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "collector.hpp"
#include "io.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace hqnoise {

struct EdnConfig {
  Shape latent{4, 16, 16};  // (C, H, W) of one noise tensor; input is 2C channels
  int c1 = 64, c2 = 64, c3 = 128;
  enum class Upsample : uint8_t { kPixelShuffle = 0, kTransposedConv = 1 };
  Upsample upsample = Upsample::kPixelShuffle;

  void validate() const {
    if (latent.size() != 3) throw ConfigError("edn: latent shape must be rank 3");
    if (latent[0] < 1 || latent[1] < 8 || latent[2] < 8)
      throw ConfigError("edn: latent must be at least (1, 8, 8)");
    if (latent[1] % 8 != 0 || latent[2] % 8 != 0)
      throw ConfigError("edn: latent height and width must be divisible by 8");
    if (c1 < 1 || c2 < 1 || c3 < 1) throw ConfigError("edn: channels must be positive");
  }
};

inline uint8_t upsample_code(EdnConfig::Upsample u) { return static_cast<uint8_t>(u); }

inline EdnConfig::Upsample upsample_from_code(uint8_t code) {
  if (code > 1) throw ProtocolError("edn: unknown upsample mode code");
  return static_cast<EdnConfig::Upsample>(code);
}

inline std::string to_string(EdnConfig::Upsample u) {
  return u == EdnConfig::Upsample::kPixelShuffle ? "pixel_shuffle" : "transposed_conv";
}

inline EdnConfig::Upsample upsample_from(const std::string& s) {
  if (s == "pixel_shuffle") return EdnConfig::Upsample::kPixelShuffle;
  if (s == "transposed_conv") return EdnConfig::Upsample::kTransposedConv;
  throw ConfigError("edn: unknown upsample mode '" + s + "'");
}

// Identity residual block: x + BN(conv(ReLU(BN(conv(x))))), then ReLU.
class BasicResBlock : public Layer {
 public:
  BasicResBlock(const std::string& name, int ch, Rng& rng)
      : conv1_(name + ".conv1", ch, ch, 3, 1, 1, false, rng),
        bn1_(name + ".bn1", ch),
        conv2_(name + ".conv2", ch, ch, 3, 1, 1, false, rng),
        bn2_(name + ".bn2", ch) {}

  Batch forward(const Batch& x, bool train) override {
    Batch m = bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train), train), train);
    for (size_t i = 0; i < m.size(); ++i) m[i] += x[i];
    return relu_out_.forward(m, train);
  }

  Batch backward(const Batch& gout) override {
    Batch gs = relu_out_.backward(gout);
    Batch gm = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(gs)))));
    for (size_t i = 0; i < gm.size(); ++i) gm[i] += gs[i];
    return gm;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
  }

  void collect_buffers(std::vector<Tensor*>& out) override {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
  }

 private:
  Conv2dLayer conv1_;
  BatchNorm2dLayer bn1_;
  ReluLayer relu1_;
  Conv2dLayer conv2_;
  BatchNorm2dLayer bn2_;
  ReluLayer relu_out_;
};

// Stride-2 residual block with a parallel branch: the main path is
// conv3x3/s2-BN-ReLU-conv3x3-BN, the branch is a 1x1/s2 conv + BN, and the two
// are summed before the output ReLU.
class DownsampleResBlock : public Layer {
 public:
  DownsampleResBlock(const std::string& name, int in_ch, int out_ch, Rng& rng)
      : conv1_(name + ".conv1", in_ch, out_ch, 3, 2, 1, false, rng),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, false, rng),
        bn2_(name + ".bn2", out_ch),
        branch_conv_(name + ".branch.conv", in_ch, out_ch, 1, 2, 0, false, rng),
        branch_bn_(name + ".branch.bn", out_ch) {}

  Batch forward(const Batch& x, bool train) override {
    Batch m = bn2_.forward(conv2_.forward(relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train), train), train);
    Batch b = branch_bn_.forward(branch_conv_.forward(x, train), train);
    for (size_t i = 0; i < m.size(); ++i) m[i] += b[i];
    return relu_out_.forward(m, train);
  }

  Batch backward(const Batch& gout) override {
    Batch gs = relu_out_.backward(gout);
    Batch gmain = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(gs)))));
    Batch gbranch = branch_conv_.backward(branch_bn_.backward(gs));
    for (size_t i = 0; i < gmain.size(); ++i) gmain[i] += gbranch[i];
    return gmain;
  }

  void collect_params(std::vector<Parameter*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    branch_conv_.collect_params(out);
    branch_bn_.collect_params(out);
  }

  void collect_buffers(std::vector<Tensor*>& out) override {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    branch_bn_.collect_buffers(out);
  }

 private:
  Conv2dLayer conv1_;
  BatchNorm2dLayer bn1_;
  ReluLayer relu1_;
  Conv2dLayer conv2_;
  BatchNorm2dLayer bn2_;
  Conv2dLayer branch_conv_;
  BatchNorm2dLayer branch_bn_;
  ReluLayer relu_out_;
};

// One 2x upsampling stage. Pixel-shuffle mode: conv to 4x the target channels,
// ELU, then depth-to-space. Transposed-conv mode: a 2x2/stride-2 transposed
// convolution, then ELU. The output head uses `linear` to drop the activation.
class UpsampleStage : public Layer {
 public:
  UpsampleStage(const std::string& name, int in_ch, int out_ch, EdnConfig::Upsample mode,
                bool linear, Rng& rng)
      : mode_(mode), linear_(linear), shuffle_(2) {
    if (mode_ == EdnConfig::Upsample::kPixelShuffle)
      conv_.emplace(name + ".conv", in_ch, 4 * out_ch, 3, 1, 1, true, rng);
    else
      tconv_.emplace(name + ".tconv", in_ch, out_ch, 2, 2, rng);
  }

  Batch forward(const Batch& x, bool train) override {
    if (mode_ == EdnConfig::Upsample::kPixelShuffle) {
      Batch h = conv_->forward(x, train);
      if (!linear_) h = elu_.forward(h, train);
      return shuffle_.forward(h, train);
    }
    Batch h = tconv_->forward(x, train);
    if (!linear_) h = elu_.forward(h, train);
    return h;
  }

  Batch backward(const Batch& gout) override {
    if (mode_ == EdnConfig::Upsample::kPixelShuffle) {
      Batch g = shuffle_.backward(gout);
      if (!linear_) g = elu_.backward(g);
      return conv_->backward(g);
    }
    Batch g = gout;
    if (!linear_) g = elu_.backward(g);
    return tconv_->backward(g);
  }

  void collect_params(std::vector<Parameter*>& out) override {
    if (conv_) conv_->collect_params(out);
    if (tconv_) tconv_->collect_params(out);
  }

 private:
  EdnConfig::Upsample mode_;
  bool linear_;
  std::optional<Conv2dLayer> conv_;
  std::optional<ConvTranspose2dLayer> tconv_;
  EluLayer elu_;
  PixelShuffleLayer shuffle_;
};

class EdnModel {
 public:
  explicit EdnModel(const EdnConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng(seed).child(0x65646E77ull);
    const int cin = 2 * cfg_.latent[0];
    stem_conv_.emplace("stem.conv", cin, cfg_.c1, 3, 1, 1, false, rng);
    stem_bn_.emplace("stem.bn", cfg_.c1);
    block1_.emplace("enc1", cfg_.c1, rng);
    down2_.emplace("enc2", cfg_.c1, cfg_.c2, rng);
    down3_.emplace("enc3", cfg_.c2, cfg_.c3, rng);
    up1_.emplace("dec1", cfg_.c3, cfg_.c2, cfg_.upsample, false, rng);
    up2_.emplace("dec2", 2 * cfg_.c2, cfg_.c1, cfg_.upsample, false, rng);
    head_.emplace("head", 2 * cfg_.c1, cfg_.latent[0], cfg_.upsample, true, rng);
  }

  const EdnConfig& config() const { return cfg_; }

  // x: batch of (2C, H, W) concatenations of z_T and I. Returns S_pred.
  Batch forward(const Batch& x, bool train) {
    const Shape want{2 * cfg_.latent[0], cfg_.latent[1], cfg_.latent[2]};
    for (const Tensor& t : x)
      if (t.shape() != want)
        throw ShapeError("edn forward: expected input " + shape_str(want) + ", got " +
                         shape_str(t.shape()));
    Batch f0 = stem_pool_.forward(
        stem_relu_.forward(stem_bn_->forward(stem_conv_->forward(x, train), train), train),
        train);
    Batch f1 = block1_->forward(f0, train);
    Batch f2 = down2_->forward(f1, train);
    Batch f3 = down3_->forward(f2, train);
    Batch u1 = up1_->forward(f3, train);
    Batch cat1(u1.size());
    for (size_t i = 0; i < u1.size(); ++i) cat1[i] = concat_channels(u1[i], f2[i]);
    Batch u2 = up2_->forward(cat1, train);
    Batch cat2(u2.size());
    for (size_t i = 0; i < u2.size(); ++i) cat2[i] = concat_channels(u2[i], f1[i]);
    return head_->forward(cat2, train);
  }

  // Reverse-mode pass; must follow a forward(..., train=true) on the same batch.
  Batch backward(const Batch& gout) {
    Batch gcat2 = head_->backward(gout);
    Batch gu2(gcat2.size()), gf1(gcat2.size());
    for (size_t i = 0; i < gcat2.size(); ++i) {
      auto [a, b] = split_channels(gcat2[i], cfg_.c1);
      gu2[i] = std::move(a);
      gf1[i] = std::move(b);
    }
    Batch gcat1 = up2_->backward(gu2);
    Batch gu1(gcat1.size()), gf2(gcat1.size());
    for (size_t i = 0; i < gcat1.size(); ++i) {
      auto [a, b] = split_channels(gcat1[i], cfg_.c2);
      gu1[i] = std::move(a);
      gf2[i] = std::move(b);
    }
    Batch gf3 = up1_->backward(gu1);
    Batch gf2b = down3_->backward(gf3);
    for (size_t i = 0; i < gf2.size(); ++i) gf2[i] += gf2b[i];
    Batch gf1b = down2_->backward(gf2);
    for (size_t i = 0; i < gf1.size(); ++i) gf1[i] += gf1b[i];
    Batch gf0 = block1_->backward(gf1);
    return stem_conv_->backward(
        stem_bn_->backward(stem_relu_.backward(stem_pool_.backward(gf0))));
  }

  // S_pred for one (z_T, I) pair; eval mode (running batch-norm statistics).
  Tensor predict(const Tensor& z_T, const Tensor& I) {
    Batch out = forward({concat_channels(z_T, I)}, false);
    return std::move(out[0]);
  }

  // Parameters and batch-norm buffers in declaration order (the checkpoint
  // layout contract).
  std::vector<Parameter*> params() {
    std::vector<Parameter*> out;
    stem_conv_->collect_params(out);
    stem_bn_->collect_params(out);
    block1_->collect_params(out);
    down2_->collect_params(out);
    down3_->collect_params(out);
    up1_->collect_params(out);
    up2_->collect_params(out);
    head_->collect_params(out);
    return out;
  }

  std::vector<Tensor*> buffers() {
    std::vector<Tensor*> out;
    stem_bn_->collect_buffers(out);
    block1_->collect_buffers(out);
    down2_->collect_buffers(out);
    down3_->collect_buffers(out);
    return out;
  }

 private:
  EdnConfig cfg_;
  // optional<> defers construction until the config is validated.
  std::optional<Conv2dLayer> stem_conv_;
  std::optional<BatchNorm2dLayer> stem_bn_;
  ReluLayer stem_relu_;
  MaxPool2dLayer stem_pool_;
  std::optional<BasicResBlock> block1_;
  std::optional<DownsampleResBlock> down2_;
  std::optional<DownsampleResBlock> down3_;
  std::optional<UpsampleStage> up1_;
  std::optional<UpsampleStage> up2_;
  std::optional<UpsampleStage> head_;
};

// Smooth L1 (Huber, beta = 1), mean over elements.
inline double smooth_l1(const Tensor& pred, const Tensor& target) {
  pred.require_same_shape(target, "smooth_l1");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    const double a = std::abs(d);
    acc += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  return acc / static_cast<double>(pred.size());
}

// d(smooth_l1)/d(pred): clamp(pred - target, -1, 1) / numel.
inline Tensor smooth_l1_grad(const Tensor& pred, const Tensor& target) {
  pred.require_same_shape(target, "smooth_l1_grad");
  Tensor g = Tensor::zeros_like(pred);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    g[i] = (d > 1.0 ? 1.0 : d < -1.0 ? -1.0 : d) * inv_n;
  }
  return g;
}

struct TrainConfig {
  double lr = 0.0003;
  int batch = 8;
  int epochs = 600;
  double decay = 0.8;
  int decay_every = 200;
  uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(decay > 0.0)) throw ConfigError("train: decay must be positive");
    if (decay_every < 1) throw ConfigError("train: decay interval must be >= 1");
  }
};

// Stepped decay: lr * decay^floor(epoch / every), epochs counted from 1.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 1) throw ConfigError("lr_at_epoch: epochs are counted from 1");
  return cfg.lr * std::pow(cfg.decay, epoch / cfg.decay_every);
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
  std::vector<double> epoch_lr;
};

// Supervised training on collected pairs: input concat(z_T, I), target
// S_gt = z~_T - z_T, Smooth L1 objective, Adam with stepped lr decay.
// Deterministic for a fixed config. If a non-finite loss or gradient appears,
// the model is restored to the end of the last completed epoch and a
// TrainingError is thrown.
inline TrainResult train_edn(EdnModel& model, const std::vector<NoisePair>& data,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("train_edn: empty dataset");
  Batch inputs, targets;
  inputs.reserve(data.size());
  targets.reserve(data.size());
  for (const NoisePair& p : data) {
    inputs.push_back(concat_channels(p.z_T, p.I));
    targets.push_back(p.z_tilde_T - p.z_T);
  }

  std::vector<Parameter*> params = model.params();
  std::vector<Tensor*> buffers = model.buffers();
  auto snapshot = [&]() {
    std::vector<Tensor> s;
    s.reserve(params.size() + buffers.size());
    for (Parameter* p : params) s.push_back(p->value);
    for (Tensor* b : buffers) s.push_back(*b);
    return s;
  };
  auto restore = [&](const std::vector<Tensor>& s) {
    size_t i = 0;
    for (Parameter* p : params) p->value = s[i++];
    for (Tensor* b : buffers) *b = s[i++];
  };

  Adam opt(params, AdamConfig{cfg.lr});
  Rng shuffle_rng = Rng(cfg.seed).child(0x73687566ull);
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  std::vector<Tensor> last_good = snapshot();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    opt.set_lr(lr);
    if (cfg.shuffle) {
      for (size_t i = order.size(); i > 1; --i) {
        const size_t j = shuffle_rng.next_u64() % i;
        std::swap(order[i - 1], order[j]);
      }
    }
    double loss_sum = 0.0;
    try {
      for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch)) {
        const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch));
        Batch bx, bt;
        for (size_t i = begin; i < end; ++i) {
          bx.push_back(inputs[order[i]]);
          bt.push_back(targets[order[i]]);
        }
        opt.zero_grad();
        Batch pred = model.forward(bx, true);
        Batch grads(pred.size());
        double batch_loss = 0.0;
        const double inv_b = 1.0 / static_cast<double>(pred.size());
        for (size_t i = 0; i < pred.size(); ++i) {
          batch_loss += smooth_l1(pred[i], bt[i]);
          grads[i] = smooth_l1_grad(pred[i], bt[i]) * inv_b;
        }
        if (!std::isfinite(batch_loss))
          throw TrainingError("non-finite loss in epoch " + std::to_string(epoch));
        model.backward(grads);
        opt.step();
        loss_sum += batch_loss;  // per-sample losses; normalized once per epoch
      }
    } catch (const TrainingError& e) {
      restore(last_good);
      throw TrainingError(std::string(e.what()) + "; model restored to end of epoch " +
                          std::to_string(epoch - 1));
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    result.epoch_lr.push_back(lr);
    last_good = snapshot();
  }
  return result;
}

// Stage III insertion: the enriched starting noise for standard inference.
inline Tensor apply_edn(EdnModel& model, const Tensor& z_T, const Tensor& I) {
  Tensor s = model.predict(z_T, I);
  return z_T + s;
}

// ---------------------------------------------------------------- checkpoint

// Layout: "EDNM" | u16 version | u32 latent C,H,W | u32 c1,c2,c3 | u8 upsample
// | f32[] parameters then batch-norm buffers, declaration order, little-endian.
inline void save_edn(EdnModel& model, const std::string& path) {
  std::ofstream os = io::open_out(path);
  io::write_magic(os, "EDNM");
  io::write_u16(os, 1);
  const EdnConfig& cfg = model.config();
  for (int i = 0; i < 3; ++i) io::write_u32(os, static_cast<uint32_t>(cfg.latent[i]));
  io::write_u32(os, static_cast<uint32_t>(cfg.c1));
  io::write_u32(os, static_cast<uint32_t>(cfg.c2));
  io::write_u32(os, static_cast<uint32_t>(cfg.c3));
  io::write_u8(os, upsample_code(cfg.upsample));
  for (Parameter* p : model.params())
    for (size_t i = 0; i < p->value.size(); ++i)
      io::write_f32(os, static_cast<float>(p->value[i]));
  for (Tensor* b : model.buffers())
    for (size_t i = 0; i < b->size(); ++i) io::write_f32(os, static_cast<float>((*b)[i]));
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

inline EdnModel load_edn(const std::string& path) {
  std::ifstream is = io::open_in(path);
  io::expect_magic(is, "EDNM", "checkpoint");
  const uint16_t version = io::read_u16(is);
  if (version != 1)
    throw ProtocolError("checkpoint: unsupported version " + std::to_string(version));
  EdnConfig cfg;
  cfg.latent = {static_cast<int>(io::read_u32(is)), static_cast<int>(io::read_u32(is)),
                static_cast<int>(io::read_u32(is))};
  cfg.c1 = static_cast<int>(io::read_u32(is));
  cfg.c2 = static_cast<int>(io::read_u32(is));
  cfg.c3 = static_cast<int>(io::read_u32(is));
  cfg.upsample = upsample_from_code(io::read_u8(is));
  cfg.validate();
  EdnModel model(cfg, 0);
  for (Parameter* p : model.params())
    for (size_t i = 0; i < p->value.size(); ++i)
      p->value[i] = static_cast<double>(io::read_f32(is));
  for (Tensor* b : model.buffers())
    for (size_t i = 0; i < b->size(); ++i)
      (*b)[i] = static_cast<double>(io::read_f32(is));
  if (is.peek() != EOF) throw ProtocolError("checkpoint: trailing bytes after parameters");
  return model;
}

}  // namespace hqnoise
