// Quality metrics and the score-based pair filter. Expected values marked
// "oracle" were computed with an independent Python implementation (NumPy
// SSIM reference with an 11-tap Gaussian window) and frozen here.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "hqnoise/quality.hpp"

using namespace hqnoise;

namespace {

// Smooth 1-channel 16x16 pair with a known SSIM (oracle construction).
std::pair<Tensor, Tensor> frozen_pair() {
  Tensor a({1, 16, 16}), b({1, 16, 16});
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const double av = 0.4 * std::sin(0.5 * j + 0.25 * i) + 0.1 * std::cos(1.3 * i);
      a.at(0, i, j) = av;
      b.at(0, i, j) = av + 0.07 * std::sin(0.45 * j + 0.2) * std::cos(0.35 * i);
    }
  return {a, b};
}

}  // namespace

TEST_CASE("psnr") {
  Tensor a({2, 4, 4}, 0.25);
  REQUIRE(std::isinf(psnr(a, a, 1.0)));
  REQUIRE(psnr(a, a, 1.0) > 0.0);

  // oracle: MSE = 1 at max 255 -> 20*log10(255) = 48.1308036086791
  Tensor z({4}, 0.0);
  Tensor o({4}, 1.0);
  REQUIRE(psnr(o, z, 255.0) == Catch::Approx(48.1308036086791).margin(1e-10));

  // MSE == max^2 -> exactly 0 dB
  Tensor f({4}, 3.0);
  REQUIRE(psnr(f, z, 3.0) == Catch::Approx(0.0).margin(1e-12));

  Tensor bad({5}, 0.0);
  REQUIRE_THROWS_AS(psnr(z, bad, 1.0), ShapeError);
  REQUIRE_THROWS_AS(psnr(z, o, 0.0), ConfigError);
}

TEST_CASE("ssim window") {
  const std::vector<double>& w = detail::ssim_window();
  REQUIRE(w.size() == 121);
  double sum = 0.0;
  for (double v : w) sum += v;
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  // oracle: normalized center tap of the 11x11 sigma=1.5 Gaussian
  REQUIRE(w[5 * 11 + 5] == Catch::Approx(0.07076223776394697).margin(1e-15));
  // symmetric in both axes
  REQUIRE(w[0] == Catch::Approx(w[120]).margin(1e-18));
  REQUIRE(w[5 * 11 + 0] == Catch::Approx(w[5 * 11 + 10]).margin(1e-18));
}

TEST_CASE("ssim frozen and closed-form cases") {
  auto [a, b] = frozen_pair();
  // oracle: independent reference implementation on the same inputs
  REQUIRE(ssim(a, b, 2.0) == Catch::Approx(0.9254028844239548).margin(1e-12));
  REQUIRE(ssim(a, a, 2.0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ssim(a, b, 2.0) == Catch::Approx(ssim(b, a, 2.0)).margin(1e-12));

  // constant images: variance terms vanish, SSIM = C1 / (d^2 + C1)
  Tensor c0({1, 16, 16}, 0.0);
  Tensor c5({1, 16, 16}, 0.5);
  REQUIRE(ssim(c5, c0, 1.0) == Catch::Approx(0.0003998400639744103).margin(1e-15));

  Tensor small({1, 8, 8}, 0.0);
  REQUIRE_THROWS_AS(ssim(small, small, 1.0), ShapeError);
  Tensor mismatched({1, 16, 12}, 0.0);
  REQUIRE_THROWS_AS(ssim(a, mismatched, 1.0), ShapeError);
}

TEST_CASE("perceptual proxy score") {
  auto [a, b] = frozen_pair();
  // oracle: (1 - 0.9254028844239548) / 2
  REQUIRE(lpips_proxy(a, b, 2.0) == Catch::Approx(0.0372985577880226).margin(1e-12));

  // identical orbit -> 0
  REQUIRE(perceptual_score({a, b}, {a, b}, 2.0) == Catch::Approx(0.0).margin(1e-15));

  // mean over views with a stub metric
  int calls = 0;
  ViewMetric stub = [&calls](const Tensor&, const Tensor&) {
    return ++calls == 1 ? 0.2 : 0.4;
  };
  REQUIRE(perceptual_score({a, b}, {b, a}, stub) == Catch::Approx(0.3).margin(1e-15));

  // the default metric is exactly the per-view proxy mean
  const double direct = (lpips_proxy(a, b, 2.0) + lpips_proxy(b, a, 2.0)) / 2.0;
  REQUIRE(perceptual_score({a, b}, {b, a}, 2.0) == Catch::Approx(direct).margin(1e-15));

  REQUIRE_THROWS_AS(perceptual_score({}, {}, 2.0), DataError);
  REQUIRE_THROWS_AS(perceptual_score({a}, {a, b}, 2.0), ShapeError);
}

TEST_CASE("filter retention rule") {
  REQUIRE(filter_retains(0.5, 0.3, 0.0));
  REQUIRE_FALSE(filter_retains(0.3, 0.3, 0.0));  // strict inequality
  REQUIRE(filter_retains(0.32, 0.3, 0.005));     // 0.32 > 0.305
  REQUIRE_FALSE(filter_retains(0.3, 0.32, 0.0));
  REQUIRE_FALSE(filter_retains(0.305, 0.3, 0.005));

  REQUIRE_THROWS_AS(filter_retains(0.5, 0.3, -0.1), ConfigError);
  REQUIRE_THROWS_AS(filter_retains(std::nan(""), 0.3, 0.0), DataError);
}

TEST_CASE("filtering rate and report formatting") {
  // oracle: 100 * 359/1765 = 20.339943342776206, printed as "20.34"
  REQUIRE(filtering_rate(359, 1765) == Catch::Approx(20.339943342776206).margin(1e-12));
  REQUIRE(format_rate(filtering_rate(359, 1765)) == "20.34");
  REQUIRE(format_rate(filtering_rate(0, 10)) == "0.00");
  REQUIRE(format_rate(filtering_rate(10, 10)) == "100.00");
  REQUIRE_THROWS_AS(filtering_rate(1, 0), DataError);
  REQUIRE_THROWS_AS(filtering_rate(11, 10), DataError);
}
