#pragma once
// Generation and evaluation around the collected pairs: full-schedule guided
// denoising of a whole orbit from one starting noise, per-view quality
// metrics against the toy ground truth, the filter scorer (one score per
// starting noise), inference-mode dispatch (standard / inversion / with-edn),
// CSV export, and the paired one-sided sign test.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "collector.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "edn.hpp"
#include "quality.hpp"

namespace hqnoise {

// Denoise the full schedule (sigma_T down to 0) from z_start for one view.
inline Tensor generate_view(const Tensor& z_start, const NoisePredictor& pred,
                            const ToyWorld& world, int view, const SigmaSchedule& schedule,
                            double gamma, PredictionType kind) {
  PromptContext prompt{world.component(view).mean, view, false};
  return inference_phase(z_start, pred, prompt, schedule, schedule.max_timestep(), gamma,
                         kind)
      .z_end;
}

// One generated latent per view, all from the same starting noise, each with
// its view-resolved guidance scale.
inline std::vector<Tensor> generate_orbit(const Tensor& z_start, const NoisePredictor& pred,
                                          const ToyWorld& world,
                                          const SigmaSchedule& schedule,
                                          const CfgSchedule& gamma, PredictionType kind) {
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(world.num_views()));
  for (int v = 0; v < world.num_views(); ++v)
    out.push_back(generate_view(z_start, pred, world, v, schedule,
                                gamma_at_view(gamma, v, world.num_views()), kind));
  return out;
}

inline std::vector<Tensor> ground_truth_orbit(const ToyWorld& world) {
  std::vector<Tensor> gts;
  gts.reserve(static_cast<size_t>(world.num_views()));
  for (int v = 0; v < world.num_views(); ++v) gts.push_back(world.component(v).mean);
  return gts;
}

// Signal range used by the SSIM-family metrics: twice the largest component
// excursion (|mean|_inf + 3 std), a fixed convention so scores are comparable
// across runs of the same world.
inline double toy_dynamic_range(const ToyWorld& world) {
  double r = 0.0;
  for (int v = 0; v < world.num_views(); ++v) {
    const GaussianComponent& c = world.component(v);
    double m = 0.0;
    for (size_t i = 0; i < c.mean.size(); ++i) m = std::max(m, std::abs(c.mean[i]));
    r = std::max(r, m + 3.0 * c.std);
  }
  return 2.0 * r;
}

// Orbit score for one starting noise: mean per-view perceptual proxy
// (distance, lower is better) against the component means.
inline double orbit_score(const Tensor& z_start, const NoisePredictor& pred,
                          const ToyWorld& world, const SigmaSchedule& schedule,
                          const CfgSchedule& gamma, PredictionType kind) {
  const std::vector<Tensor> orbit = generate_orbit(z_start, pred, world, schedule, gamma, kind);
  return perceptual_score(orbit, ground_truth_orbit(world), toy_dynamic_range(world));
}

// Fill s_rd / s_hq for every pair by generating from both noises. Fan-out is
// per pair; per-pair work is deterministic, so worker count cannot change
// results.
inline void score_pairs(std::vector<NoisePair>& pairs, const NoisePredictor& pred,
                        const ToyWorld& world, const SigmaSchedule& schedule,
                        const CfgSchedule& gamma, PredictionType kind, int workers) {
  parallel_for(pairs.size(), workers, [&](size_t i) {
    pairs[i].s_rd = orbit_score(pairs[i].z_T, pred, world, schedule, gamma, kind);
    pairs[i].s_hq = orbit_score(pairs[i].z_tilde_T, pred, world, schedule, gamma, kind);
  });
}

struct ViewMetricsRow {
  int view = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double proxy = 0.0;
};

struct InferReport {
  InferMode mode = InferMode::kStandard;
  uint64_t seed = 0;
  std::vector<ViewMetricsRow> rows;
  double mean_proxy = 0.0;
};

// Starting noise for one object seed under the given mode. The conditioned
// view and reference latent derive from the seed exactly as collection does.
// `edn` is required only for with-edn mode.
inline Tensor initial_noise_for_mode(uint64_t seed, InferMode mode, const ToyWorld& world,
                                     const CollectionConfig& collect,
                                     const SigmaSchedule& schedule,
                                     const NoisePredictor& pred, EdnModel* edn) {
  Tensor z_T = initial_noise(world.latent_shape(), seed, schedule.q());
  switch (mode) {
    case InferMode::kStandard:
      return z_T;
    case InferMode::kInversion:
      return collect_pair(seed, world, collect, schedule, pred).z_tilde_T;
    case InferMode::kWithEdn: {
      if (edn == nullptr)
        throw ConfigError("with-edn inference requires a checkpoint");
      if (edn->config().latent != world.latent_shape())
        throw ConfigError("checkpoint latent " + shape_str(edn->config().latent) +
                          " does not match world latent " +
                          shape_str(world.latent_shape()));
      const int view = static_cast<int>(seed % static_cast<uint64_t>(world.num_views()));
      return apply_edn(*edn, z_T, world.component(view).mean);
    }
  }
  throw ConfigError("unknown inference mode");
}

// Generate the orbit from the mode's starting noise and measure every view
// against the toy ground truth.
inline InferReport run_infer(uint64_t seed, InferMode mode, const ToyWorld& world,
                             const CollectionConfig& collect, const SigmaSchedule& schedule,
                             const NoisePredictor& pred, EdnModel* edn) {
  InferReport rep;
  rep.mode = mode;
  rep.seed = seed;
  Tensor start =
      initial_noise_for_mode(seed, mode, world, collect, schedule, pred, edn);
  const std::vector<Tensor> orbit =
      generate_orbit(start, pred, world, schedule, collect.gamma1, collect.kind);
  const std::vector<Tensor> gts = ground_truth_orbit(world);
  const double range = toy_dynamic_range(world);
  double acc = 0.0;
  for (int v = 0; v < world.num_views(); ++v) {
    ViewMetricsRow row;
    row.view = v;
    row.psnr = psnr(orbit[static_cast<size_t>(v)], gts[static_cast<size_t>(v)], range);
    row.ssim = ssim(orbit[static_cast<size_t>(v)], gts[static_cast<size_t>(v)], range);
    row.proxy = lpips_proxy(orbit[static_cast<size_t>(v)], gts[static_cast<size_t>(v)], range);
    acc += row.proxy;
    rep.rows.push_back(row);
  }
  rep.mean_proxy = acc / static_cast<double>(world.num_views());
  return rep;
}

// --------------------------------------------------------------- CSV export

inline void write_metrics_csv(const std::string& path, const InferReport& rep) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open metrics file '" + path + "'");
  os << "view,psnr,ssim,proxy\n";
  os.precision(17);
  for (const ViewMetricsRow& r : rep.rows)
    os << r.view << ',' << r.psnr << ',' << r.ssim << ',' << r.proxy << '\n';
  if (!os) throw IoError("failed writing metrics file '" + path + "'");
}

inline void write_loss_csv(const std::string& path, const TrainResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open loss file '" + path + "'");
  os << "epoch,lr,mean_loss\n";
  os.precision(17);
  for (size_t e = 0; e < result.epoch_loss.size(); ++e)
    os << e + 1 << ',' << result.epoch_lr[e] << ',' << result.epoch_loss[e] << '\n';
  if (!os) throw IoError("failed writing loss file '" + path + "'");
}

// ----------------------------------------------------------------- sign test

// One-sided paired sign test: probability of >= wins successes in n fair coin
// flips. Ties must be counted as losses by the caller (conservative).
inline double sign_test_p(int wins, int n) {
  if (n < 1) throw ConfigError("sign_test_p: n must be >= 1");
  if (wins < 0 || wins > n) throw ConfigError("sign_test_p: wins outside [0, n]");
  const double log_half_n = -static_cast<double>(n) * std::log(2.0);
  double p = 0.0;
  for (int i = wins; i <= n; ++i) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1.0) -
                         std::lgamma(static_cast<double>(i) + 1.0) -
                         std::lgamma(static_cast<double>(n - i) + 1.0);
    p += std::exp(log_c + log_half_n);
  }
  return p < 1.0 ? p : 1.0;
}

}  // namespace hqnoise
