#pragma once
// Classifier-free guidance: the linear combine of conditional/unconditional
// predictor outputs and the per-view guidance-scale schedule used by orbit
// generation (strong guidance at the reference-facing view, weak at the back).

#include <cmath>
#include <string>

#include "tensor.hpp"

namespace hqnoise {

// out = mu_uncond + gamma * (mu_cond - mu_uncond). Exact passthrough at the
// endpoints: gamma == 0 returns mu_uncond bitwise, gamma == 1 mu_cond bitwise.
inline Tensor combine_cfg(const Tensor& mu_cond, const Tensor& mu_uncond, double gamma) {
  mu_cond.require_same_shape(mu_uncond, "combine_cfg");
  if (!std::isfinite(gamma)) throw ConfigError("combine_cfg: gamma must be finite");
  if (gamma == 0.0) return mu_uncond;
  if (gamma == 1.0) return mu_cond;
  Tensor out = mu_uncond;
  Tensor diff = mu_cond;
  diff -= mu_uncond;
  out.axpy(gamma, diff);
  return out;
}

// The empty prompt: an all-zeros tensor shaped like the conditioning input.
inline Tensor empty_prompt_like(const Tensor& c) { return Tensor::zeros_like(c); }

struct CfgSchedule {
  enum class Mode { kConstant, kTriangular };
  Mode mode = Mode::kConstant;
  double gamma_front = 1.0;
  double gamma_back = 1.0;

  static CfgSchedule constant(double gamma) {
    return CfgSchedule{Mode::kConstant, gamma, gamma};
  }
  static CfgSchedule triangular(double front, double back) {
    return CfgSchedule{Mode::kTriangular, front, back};
  }
};

// Guidance scale for view i of num_views on a closed orbit. Triangular mode is
// linear from gamma_front at view 0 to gamma_back at the back view
// floor(num_views/2) and back up; equivalently linear in the circular distance
// min(i, num_views - i), which gives gamma(i) == gamma(num_views - i).
inline double gamma_at_view(const CfgSchedule& s, int view, int num_views) {
  if (num_views < 1) throw ConfigError("gamma_at_view: num_views must be >= 1");
  if (view < 0 || view >= num_views)
    throw ConfigError("gamma_at_view: view " + std::to_string(view) + " outside [0, " +
                      std::to_string(num_views) + ")");
  if (s.mode == CfgSchedule::Mode::kConstant) return s.gamma_front;
  if (num_views < 2) throw ConfigError("gamma_at_view: triangular mode needs >= 2 views");
  const int back = num_views / 2;
  const int dist = view <= num_views - view ? view : num_views - view;
  return s.gamma_front +
         (s.gamma_back - s.gamma_front) * static_cast<double>(dist) / static_cast<double>(back);
}

}  // namespace hqnoise
