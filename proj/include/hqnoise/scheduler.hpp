#pragma once
// Discretized Euler machinery: Karras rho-ramp sigma schedule, the input
// descaler z' = z / sqrt(sigma^2 + 1), the v/epsilon Euler update, and its
// exact algebraic inversion. The inversion shares the step coefficients with
// the forward update so a roundtrip with identical model output cancels to
// floating-point roundoff.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hqnoise {

enum class PredictionType { kEpsilon, kVPrediction };

inline std::string to_string(PredictionType k) {
  return k == PredictionType::kEpsilon ? "epsilon" : "v_prediction";
}

inline PredictionType prediction_type_from(const std::string& s) {
  if (s == "epsilon") return PredictionType::kEpsilon;
  if (s == "v_prediction") return PredictionType::kVPrediction;
  throw ConfigError("unknown prediction type '" + s + "'");
}

struct ScheduleConfig {
  int steps = 25;
  double sigma_min = 0.002;
  double sigma_max = 700.0;
  double rho = 7.0;
};

// Noise levels indexed by timestep: sigma(0) == 0 < sigma(1) == sigma_min
// < ... < sigma(T) == sigma_max, T == steps.
class SigmaSchedule {
 public:
  static SigmaSchedule karras(const ScheduleConfig& cfg) {
    if (cfg.steps < 1) throw ConfigError("schedule: steps must be >= 1");
    if (!(cfg.sigma_min > 0.0) || !(cfg.sigma_max > cfg.sigma_min))
      throw ConfigError("schedule: need 0 < sigma_min < sigma_max");
    if (!(cfg.rho > 0.0)) throw ConfigError("schedule: rho must be positive");
    std::vector<double> desc;
    desc.reserve(cfg.steps + 1);
    if (cfg.steps == 1) {
      desc.push_back(cfg.sigma_max);
    } else {
      const double max_inv = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
      const double min_inv = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
      for (int i = 0; i < cfg.steps; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(cfg.steps - 1);
        desc.push_back(std::pow(max_inv + f * (min_inv - max_inv), cfg.rho));
      }
    }
    desc.push_back(0.0);
    std::vector<double> asc(desc.rbegin(), desc.rend());
    return SigmaSchedule(std::move(asc));
  }

  // Explicit levels, ascending by timestep, first must be exactly 0.
  static SigmaSchedule from_sigmas(std::vector<double> ascending) {
    return SigmaSchedule(std::move(ascending));
  }

  int max_timestep() const { return static_cast<int>(sigmas_.size()) - 1; }

  double sigma(int t) const {
    if (t < 0 || t > max_timestep())
      throw ScheduleError("sigma(" + std::to_string(t) + ") outside [0, " +
                          std::to_string(max_timestep()) + "]");
    return sigmas_[static_cast<size_t>(t)];
  }

  // Scale of the terminal latent: q = sqrt(sigma_T^2 + 1).
  double q() const {
    const double st = sigmas_.back();
    return std::sqrt(st * st + 1.0);
  }

  const std::vector<double>& sigmas() const { return sigmas_; }

 private:
  explicit SigmaSchedule(std::vector<double> ascending) : sigmas_(std::move(ascending)) {
    if (sigmas_.size() < 2) throw ConfigError("schedule: need at least [0, sigma_T]");
    if (sigmas_.front() != 0.0) throw ConfigError("schedule: sigma(0) must be 0");
    for (size_t i = 1; i < sigmas_.size(); ++i) {
      if (!(sigmas_[i] > sigmas_[i - 1]))
        throw ConfigError("schedule: sigma levels must be strictly increasing by timestep");
      if (!std::isfinite(sigmas_[i])) throw ConfigError("schedule: non-finite sigma");
    }
  }

  std::vector<double> sigmas_;
};

// z' = z / sqrt(sigma^2 + 1). Identity at sigma == 0.
inline Tensor descale(const Tensor& z, double sigma) {
  if (!(sigma >= 0.0)) throw ScheduleError("descale: sigma must be >= 0");
  return z * (1.0 / std::sqrt(sigma * sigma + 1.0));
}

// Terminal noise z_T = q * N(0, I); deterministic in (shape, seed).
inline Tensor initial_noise(const Shape& shape, uint64_t seed, double q) {
  Rng rng(Rng(seed).child(0x6E6F6973ull).seed());  // fixed "nois" salt
  Tensor t = Tensor::randn(shape, rng, 1.0);
  t *= q;
  return t;
}

namespace detail {
inline void check_step_sigmas(double sigma_t, double sigma_prev, const char* op) {
  if (!(sigma_t > 0.0)) throw ScheduleError(std::string(op) + ": sigma_t must be > 0");
  if (!(sigma_prev >= 0.0) || sigma_prev > sigma_t)
    throw ScheduleError(std::string(op) + ": need 0 <= sigma_prev <= sigma_t");
}

// v-form update coefficients: z_prev = a * z + b * v.
inline void v_coeffs(double sigma_t, double sigma_prev, double& a, double& b) {
  a = (1.0 + sigma_t * sigma_prev) / (sigma_t * sigma_t + 1.0);
  b = (sigma_prev - sigma_t) / std::sqrt(sigma_t * sigma_t + 1.0);
}
}  // namespace detail

// One deterministic Euler update from level sigma_t down to sigma_prev.
//   epsilon: z_prev = z + (sigma_prev - sigma_t) * out
//   v:       z_prev = (1 + s_t s_p)/(s_t^2+1) * z + (s_p - s_t)/sqrt(s_t^2+1) * out
inline Tensor euler_step(const Tensor& z_t, const Tensor& model_out, double sigma_t,
                         double sigma_prev, PredictionType kind) {
  detail::check_step_sigmas(sigma_t, sigma_prev, "euler_step");
  z_t.require_same_shape(model_out, "euler_step");
  if (kind == PredictionType::kEpsilon) {
    Tensor out = z_t;
    out.axpy(sigma_prev - sigma_t, model_out);
    return out;
  }
  double a, b;
  detail::v_coeffs(sigma_t, sigma_prev, a, b);
  Tensor out = z_t * a;
  out.axpy(b, model_out);
  return out;
}

// Exact algebraic inverse of euler_step for a shared model output:
//   epsilon: z_t = z_prev - (sigma_prev - sigma_t) * out
//   v:       z_t = (z_prev - b * out) / a
inline Tensor invert_step(const Tensor& z_prev, const Tensor& model_out, double sigma_t,
                          double sigma_prev, PredictionType kind) {
  detail::check_step_sigmas(sigma_t, sigma_prev, "invert_step");
  z_prev.require_same_shape(model_out, "invert_step");
  if (kind == PredictionType::kEpsilon) {
    Tensor out = z_prev;
    out.axpy(-(sigma_prev - sigma_t), model_out);
    return out;
  }
  double a, b;
  detail::v_coeffs(sigma_t, sigma_prev, a, b);
  Tensor out = z_prev;
  out.axpy(-b, model_out);
  out *= 1.0 / a;
  return out;
}

// Closed-form roundtrip coefficient: with model outputs out1 (forward) and
// out2 (inverse), invert(euler(z, out1), out2) - z == coeff * (out1 - out2).
inline double roundtrip_coeff(double sigma_t, double sigma_prev, PredictionType kind) {
  detail::check_step_sigmas(sigma_t, sigma_prev, "roundtrip_coeff");
  if (kind == PredictionType::kEpsilon) return sigma_prev - sigma_t;
  double a, b;
  detail::v_coeffs(sigma_t, sigma_prev, a, b);
  return b / a;
}

}  // namespace hqnoise
