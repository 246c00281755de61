#pragma once
// Numerical verification of the roundtrip/injection identities behind the
// collector. With a constant predictor the guided inference + weaker-guidance
// inversion displaces the terminal noise by exactly
//   coefficient * (gamma1 - gamma2) * (mu_cond - mu_uncond),
// where the coefficient is the closed-form one-step (or telescoped n-step)
// roundtrip factor of the Euler update. The harness runs the real collector
// phases with alignment disabled (the identities contain no Align steps),
// compares against the closed form, and emits plain-text and JSON reports.

#include <cfloat>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "collector.hpp"
#include <nlohmann/json.hpp>

namespace hqnoise {

// Constant two-branch predictor: output depends only on the prompt branch,
// never on the input or the noise level. This makes the locally-constant
// approximation in the identities exact.
class MockPredictor : public NoisePredictor {
 public:
  MockPredictor(Tensor mu_cond, Tensor mu_uncond)
      : mu_cond_(std::move(mu_cond)), mu_uncond_(std::move(mu_uncond)) {
    mu_cond_.require_same_shape(mu_uncond_, "MockPredictor");
  }

  Tensor predict(const PromptContext& prompt, const Tensor&, double,
                 PredictionType) const override {
    return prompt.is_null ? mu_uncond_ : mu_cond_;
  }

  const Tensor& mu_cond() const { return mu_cond_; }
  const Tensor& mu_uncond() const { return mu_uncond_; }

 private:
  Tensor mu_cond_;
  Tensor mu_uncond_;
};

// invert_step(euler_step(z_t, out1), out2) - z_t. Closed form:
// roundtrip_coeff(sigma_t, sigma_prev, kind) * (out1 - out2), elementwise.
inline Tensor roundtrip_delta(const Tensor& z_t, const Tensor& out1, const Tensor& out2,
                              double sigma_t, double sigma_prev, PredictionType kind) {
  Tensor down = euler_step(z_t, out1, sigma_t, sigma_prev, kind);
  Tensor back = invert_step(down, out2, sigma_t, sigma_prev, kind);
  back -= z_t;
  return back;
}

// The injected direction: (gamma1 - gamma2) * (mu_cond - mu_uncond).
inline Tensor semantic_injection_term(const Tensor& mu_cond, const Tensor& mu_uncond,
                                      double gamma1, double gamma2) {
  mu_cond.require_same_shape(mu_uncond, "semantic_injection_term");
  if (!std::isfinite(gamma1) || !std::isfinite(gamma2))
    throw ConfigError("semantic_injection_term: gammas must be finite");
  Tensor out = mu_cond;
  out -= mu_uncond;
  out *= gamma1 - gamma2;
  return out;
}

// Telescoped coefficient for n forward steps followed by n exact inversion
// steps sharing one constant (out1, out2) pair: a perturbation injected while
// stepping sigma_t -> sigma_{t-1} contributes its one-step coefficient
// amplified by 1/a for every level it is carried back through, so
//   total = sum_t (b_t / a_t) / prod_{t' > t} a_{t'}
// over the steps t = t_top .. t_top-n+1 (epsilon steps have a == 1 and the sum
// telescopes to sigma_bottom - sigma_top).
inline double nstep_roundtrip_coeff(const SigmaSchedule& schedule, int n, PredictionType kind,
                                    int t_top = -1) {
  const int T = t_top < 0 ? schedule.max_timestep() : t_top;
  if (n < 1) throw ConfigError("nstep_roundtrip_coeff: n must be >= 1");
  if (n > T) throw ConfigError("nstep_roundtrip_coeff: n exceeds available timesteps");
  double total = 0.0;
  double prod_after = 1.0;  // product of a over steps already taken (t' > t)
  for (int t = T; t > T - n; --t) {
    const double sigma_t = schedule.sigma(t);
    const double sigma_prev = schedule.sigma(t - 1);
    double a = 1.0, b = sigma_prev - sigma_t;
    if (kind == PredictionType::kVPrediction) detail::v_coeffs(sigma_t, sigma_prev, a, b);
    total += (b / a) / prod_after;
    prod_after *= a;
  }
  return total;
}

struct AppendixReport {
  PredictionType kind = PredictionType::kEpsilon;
  int steps = 1;
  double sigma_top = 0.0;     // level where the roundtrip starts and ends
  double sigma_bottom = 0.0;  // lowest level reached by the inference phase
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double coefficient = 0.0;  // closed-form roundtrip coefficient over the steps
  Tensor measured;           // z_tilde - z from the collector phases, alignment off
  Tensor expected;           // coefficient * semantic injection term
  double expected_norm = 0.0;  // max-norm of `expected`
  double max_abs_dev = 0.0;    // max |measured - expected|
  double rel_dev = 0.0;        // max_abs_dev / expected_norm (0 when both vanish)
  double tolerance = 1e-10;
  bool pass = false;

  std::string text() const {
    std::ostringstream os;
    os.precision(17);
    os << "roundtrip identity check: " << (pass ? "PASS" : "FAIL") << "\n"
       << "  prediction: " << to_string(kind) << "  steps: " << steps << "\n"
       << "  sigma: " << sigma_top << " -> " << sigma_bottom << " -> " << sigma_top << "\n"
       << "  gamma1: " << gamma1 << "  gamma2: " << gamma2 << "\n"
       << "  coefficient: " << coefficient << "\n"
       << "  |expected|_inf: " << expected_norm << "\n"
       << "  max |measured - expected|: " << max_abs_dev << "\n"
       << "  relative deviation: " << rel_dev << "  (tolerance " << tolerance << ")\n";
    if (!pass) {
      os << "  first elements (measured vs expected):\n";
      const size_t show = measured.size() < 4 ? measured.size() : 4;
      for (size_t i = 0; i < show; ++i)
        os << "    [" << i << "] " << measured[i] << " vs " << expected[i] << "\n";
    }
    return os.str();
  }

  std::string json_summary() const {
    nlohmann::json j{
        {"pass", pass},
        {"prediction", to_string(kind)},
        {"steps", steps},
        {"sigma_top", sigma_top},
        {"sigma_bottom", sigma_bottom},
        {"gamma1", gamma1},
        {"gamma2", gamma2},
        {"coefficient", coefficient},
        {"expected_norm", expected_norm},
        {"max_abs_dev", max_abs_dev},
        {"tolerance", tolerance},
    };
    j["rel_dev"] = std::isfinite(rel_dev) ? nlohmann::json(rel_dev) : nlohmann::json(nullptr);
    return j.dump(2);
  }
};

// Run n guided inference steps and n weaker-guidance inversion steps through
// the collector phases with alignment off, and compare the measured terminal
// displacement against the closed form.
inline AppendixReport verify_appendix_schedule(const Tensor& z_top, const MockPredictor& mock,
                                               double gamma1, double gamma2,
                                               const SigmaSchedule& schedule, int n,
                                               PredictionType kind) {
  AppendixReport r;
  r.kind = kind;
  r.steps = n;
  r.gamma1 = gamma1;
  r.gamma2 = gamma2;
  r.sigma_top = schedule.sigma(schedule.max_timestep());
  r.sigma_bottom = schedule.sigma(schedule.max_timestep() - n);

  PromptContext prompt{mock.mu_cond(), 0, false};
  InferenceResult inf = inference_phase(z_top, mock, prompt, schedule, n, gamma1, kind);
  Tensor z_back = inversion_phase(inf.z_end, inf.stats, mock, prompt, schedule, n, gamma2,
                                  kind, /*align_enabled=*/false);
  r.measured = z_back - z_top;

  r.coefficient = nstep_roundtrip_coeff(schedule, n, kind);
  r.expected = semantic_injection_term(mock.mu_cond(), mock.mu_uncond(), gamma1, gamma2);
  r.expected *= r.coefficient;

  for (size_t i = 0; i < r.expected.size(); ++i) {
    const double e = std::abs(r.expected[i]);
    const double d = std::abs(r.measured[i] - r.expected[i]);
    if (e > r.expected_norm) r.expected_norm = e;
    if (d > r.max_abs_dev) r.max_abs_dev = d;
  }
  double z_norm = 0.0;
  for (size_t i = 0; i < z_top.size(); ++i)
    if (std::abs(z_top[i]) > z_norm) z_norm = std::abs(z_top[i]);
  const double abs_floor = 1e-12 * (z_norm > 1.0 ? z_norm : 1.0);
  if (r.expected_norm >= DBL_MIN)
    r.rel_dev = r.max_abs_dev / r.expected_norm;
  else
    r.rel_dev = r.max_abs_dev <= abs_floor ? 0.0 : std::numeric_limits<double>::infinity();
  r.pass = r.max_abs_dev <= abs_floor || r.rel_dev < r.tolerance;
  return r;
}

// Single roundtrip step at (sigma_t -> sigma_prev -> sigma_t).
inline AppendixReport verify_appendix(const Tensor& z_t, const MockPredictor& mock,
                                      double gamma1, double gamma2, double sigma_t,
                                      double sigma_prev, PredictionType kind) {
  detail::check_step_sigmas(sigma_t, sigma_prev, "verify_appendix");
  std::vector<double> levels;
  if (sigma_prev == 0.0)
    levels = {0.0, sigma_t};
  else
    levels = {0.0, sigma_prev, sigma_t};
  SigmaSchedule schedule = SigmaSchedule::from_sigmas(std::move(levels));
  return verify_appendix_schedule(z_t, mock, gamma1, gamma2, schedule, 1, kind);
}

}  // namespace hqnoise
