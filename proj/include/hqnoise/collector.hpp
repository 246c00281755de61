#pragma once
// Noise-pair collection: an n-step guided inference pass that records scalar
// distribution statistics at every step, followed by the aligned inversion
// pass that walks back up to the terminal level with a weaker guidance scale.
// The inversion injects the conditional/unconditional semantic gap into the
// terminal noise; alignment keeps every intermediate in distribution.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "guidance.hpp"
#include "scheduler.hpp"
#include "testbed.hpp"
#include "workers.hpp"

namespace hqnoise {

struct ScalarStats {
  double mean = 0.0;
  double std = 0.0;
};

inline ScalarStats stats_of(const Tensor& t) { return {t.mean(), t.std_pop()}; }

// Match z to target mean/std: sigma_x * (z - mu_z) / sigma_z + mu_x.
inline Tensor align(const Tensor& z, const ScalarStats& target) {
  const double mu = z.mean();
  const double sd = z.std_pop();
  if (!(sd > 0.0)) throw DataError("align: input has zero standard deviation");
  if (!(target.std >= 0.0)) throw DataError("align: negative target std");
  Tensor out = z;
  out += -mu;
  out *= target.std / sd;
  out += target.mean;
  return out;
}

// Per-step statistics recorded during inference, consumed by the inversion.
struct StepStats {
  int t = 0;                // timestep of the inference step that produced these
  ScalarStats z_scaled;     // stats of z_t' (descaled input)
  ScalarStats mu_cond;      // stats of the conditional predictor output at z_t'
  ScalarStats mu_uncond;    // stats of the unconditional predictor output at z_t'
  ScalarStats z;            // stats of z_t before the step
};

class StatRecord {
 public:
  void add(StepStats s) { steps_.push_back(s); }

  const StepStats& at(int t) const {
    for (const StepStats& s : steps_)
      if (s.t == t) return s;
    throw ProtocolError("no inference statistics recorded for timestep " +
                        std::to_string(t));
  }

  const std::vector<StepStats>& steps() const { return steps_; }

 private:
  std::vector<StepStats> steps_;
};

struct InferenceResult {
  Tensor z_end;       // z_{T-n}
  StatRecord stats;
};

// Guided inference from timestep t_start down through n Euler steps,
// recording the scalar stats the inversion will align against.
inline InferenceResult inference_phase(const Tensor& z_start, const NoisePredictor& pred,
                                       const PromptContext& prompt,
                                       const SigmaSchedule& schedule, int n, double gamma1,
                                       PredictionType kind,
                                       int t_start = -1) {
  const int T = t_start < 0 ? schedule.max_timestep() : t_start;
  if (n < 1) throw ConfigError("inference_phase: n must be >= 1");
  if (n > T) throw ConfigError("inference_phase: n = " + std::to_string(n) +
                               " exceeds available timesteps " + std::to_string(T));
  const PromptContext null_prompt = PromptContext::null_like(prompt);
  InferenceResult res;
  Tensor z = z_start;
  for (int t = T; t > T - n; --t) {
    const double sigma_t = schedule.sigma(t);
    const double sigma_prev = schedule.sigma(t - 1);
    StepStats st;
    st.t = t;
    st.z = stats_of(z);
    Tensor z_scaled = descale(z, sigma_t);
    st.z_scaled = stats_of(z_scaled);
    Tensor mu_c = pred.predict(prompt, z_scaled, sigma_t, kind);
    Tensor mu_u = pred.predict(null_prompt, z_scaled, sigma_t, kind);
    st.mu_cond = stats_of(mu_c);
    st.mu_uncond = stats_of(mu_u);
    res.stats.add(st);
    Tensor out = combine_cfg(mu_c, mu_u, gamma1);
    z = euler_step(z, out, sigma_t, sigma_prev, kind);
    z.require_finite("inference_phase step output");
  }
  res.z_end = std::move(z);
  return res;
}

// Aligned inversion from z_{T-n} back up to timestep t_top. At loop index t:
// descale the current state by its own level sigma_{t-1}, align it to the
// recorded stats of z_t', query both predictor branches at sigma_t, align each
// to its recorded stats, CFG-combine with gamma2, invert the Euler step, and
// align the result to the recorded stats of z_t.
inline Tensor inversion_phase(const Tensor& z_low, const StatRecord& stats,
                              const NoisePredictor& pred, const PromptContext& prompt,
                              const SigmaSchedule& schedule, int n, double gamma2,
                              PredictionType kind, bool align_enabled,
                              int t_top = -1) {
  const int T = t_top < 0 ? schedule.max_timestep() : t_top;
  if (n < 1) throw ConfigError("inversion_phase: n must be >= 1");
  if (n > T) throw ConfigError("inversion_phase: n exceeds available timesteps");
  const PromptContext null_prompt = PromptContext::null_like(prompt);
  Tensor z = z_low;
  for (int t = T - n + 1; t <= T; ++t) {
    const double sigma_t = schedule.sigma(t);
    const double sigma_prev = schedule.sigma(t - 1);
    const StepStats& st = stats.at(t);
    Tensor z_scaled = descale(z, sigma_prev);
    if (align_enabled) z_scaled = align(z_scaled, st.z_scaled);
    Tensor mu_c = pred.predict(prompt, z_scaled, sigma_t, kind);
    Tensor mu_u = pred.predict(null_prompt, z_scaled, sigma_t, kind);
    if (align_enabled) {
      mu_c = align(mu_c, st.mu_cond);
      mu_u = align(mu_u, st.mu_uncond);
    }
    Tensor out = combine_cfg(mu_c, mu_u, gamma2);
    z = invert_step(z, out, sigma_t, sigma_prev, kind);
    if (align_enabled) z = align(z, st.z);
    z.require_finite("inversion_phase step output");
  }
  return z;
}

struct CollectionConfig {
  int n = 16;
  CfgSchedule gamma1 = CfgSchedule::triangular(6.0, 2.5);
  double gamma2 = 0.0;
  PredictionType kind = PredictionType::kVPrediction;
  bool align_enabled = true;
  uint64_t seed_begin = 1;    // pairs are collected for seeds [begin, end)
  uint64_t seed_end = 201;
};

// One collected training example: terminal noise, its semantically enriched
// counterpart, the reference latent, and provenance.
struct NoisePair {
  uint64_t seed = 0;
  int view = 0;
  int n = 0;
  double gamma1 = 0.0;  // view-resolved guidance scale used during inference
  double gamma2 = 0.0;
  Tensor z_T;
  Tensor z_tilde_T;
  Tensor I;
  std::optional<double> s_rd;  // generation score starting from z_T
  std::optional<double> s_hq;  // generation score starting from z_tilde_T
};

// Collect the pair for one object seed. The conditioned view cycles through
// the world's views by seed so a seed range exercises the whole gamma1
// schedule; the reference latent is the conditioned component's mean.
inline NoisePair collect_pair(uint64_t seed, const ToyWorld& world,
                              const CollectionConfig& cfg, const SigmaSchedule& schedule,
                              const NoisePredictor& pred) {
  if (cfg.n < 1 || cfg.n > schedule.max_timestep())
    throw ConfigError("collect_pair: n must lie in [1, schedule steps]");
  const int view = static_cast<int>(seed % static_cast<uint64_t>(world.num_views()));
  const double g1 = gamma_at_view(cfg.gamma1, view, world.num_views());
  PromptContext prompt{world.component(view).mean, view, false};
  NoisePair pair;
  pair.seed = seed;
  pair.view = view;
  pair.n = cfg.n;
  pair.gamma1 = g1;
  pair.gamma2 = cfg.gamma2;
  pair.I = prompt.c;
  pair.z_T = initial_noise(world.latent_shape(), seed, schedule.q());
  InferenceResult inf =
      inference_phase(pair.z_T, pred, prompt, schedule, cfg.n, g1, cfg.kind);
  pair.z_tilde_T = inversion_phase(inf.z_end, inf.stats, pred, prompt, schedule, cfg.n,
                                   cfg.gamma2, cfg.kind, cfg.align_enabled);
  return pair;
}

struct CollectOutcome {
  std::vector<NoisePair> pairs;  // in ascending seed order
  std::vector<std::pair<uint64_t, std::string>> failures;
};

// Fan a seed range out across workers; per-seed work is independent and
// deterministic, results are merged in seed order, failures are isolated with
// a per-seed diagnostic instead of aborting the batch.
inline CollectOutcome collect_batch(const ToyWorld& world, const CollectionConfig& cfg,
                                    const SigmaSchedule& schedule,
                                    const NoisePredictor& pred, int workers) {
  if (cfg.seed_end < cfg.seed_begin)
    throw ConfigError("collect_batch: seed range end before begin");
  const size_t count = static_cast<size_t>(cfg.seed_end - cfg.seed_begin);
  std::vector<std::optional<NoisePair>> slots(count);
  std::vector<std::optional<std::string>> errors(count);
  parallel_for(count, workers, [&](size_t i) {
    const uint64_t seed = cfg.seed_begin + i;
    try {
      slots[i] = collect_pair(seed, world, cfg, schedule, pred);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  CollectOutcome out;
  for (size_t i = 0; i < count; ++i) {
    if (slots[i])
      out.pairs.push_back(std::move(*slots[i]));
    else
      out.failures.emplace_back(cfg.seed_begin + i, errors[i] ? *errors[i] : "unknown error");
  }
  return out;
}

}  // namespace hqnoise
