#include <cmath>

#include "cvc/bdrate.hpp"
#include "cvc/metrics.hpp"
#include "cvc/synth.hpp"
#include "doctest.h"

using namespace cvc;

TEST_CASE("psnr: sentinel, analytic case, direct-summation oracle") {
  Rng rng(50);
  Tensor a = rng.uniform_tensor({1, 3, 32, 32}, 0, 1);
  CHECK(std::isinf(psnr(a, a)));

  Tensor b = a;
  for (auto& v : b.v) v += 0.1;  // uniform difference of 0.1 -> exactly 20 dB
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

  Tensor c = rng.uniform_tensor({1, 3, 32, 32}, 0, 1);
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) mse += std::pow(a.v[size_t(i)] - c.v[size_t(i)], 2);
  mse /= double(a.numel());
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

  CHECK_THROWS_AS((void)psnr(a, Tensor::zeros({1, 3, 32, 31})), ContractViolation);
}

TEST_CASE("ms_ssim: self-similarity, symmetry, strict bound, size contract") {
  SyntheticClip clip = generate_synthetic_clip(MotionFamily::Elastic,
                                               SynthParams{2, 160, 160, 2.0}, 51);
  const Tensor& a = clip.frames[0];
  const Tensor& b = clip.frames[1];
  CHECK(ms_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ms_ssim(a, b) < 1.0);
  CHECK(ms_ssim(a, b) == doctest::Approx(ms_ssim(b, a)).epsilon(1e-9));
  CHECK_THROWS_WITH_AS((void)ms_ssim(Tensor::zeros({1, 3, 128, 160}), Tensor::zeros({1, 3, 128, 160})),
                       doctest::Contains("160"), ContractViolation);
}

TEST_CASE("ms_ssim: matches an independent single-scale SSIM on a flat-ish pair") {
  // Approximate oracle: heavy smoothing makes every scale and the luminance
  // term computable by the plain SSIM formula with global statistics.
  Tensor a({1, 1, 160, 160});
  Tensor b({1, 1, 160, 160});
  for (int y = 0; y < 160; ++y)
    for (int x = 0; x < 160; ++x) {
      a.at(0, 0, y, x) = 0.5;
      b.at(0, 0, y, x) = 0.6;
    }
  // For constant images: cs = C2/C2 = 1 at every scale; luminance term is
  // (2*0.5*0.6 + C1) / (0.25 + 0.36 + C1), weighted by 0.1333.
  const double c1 = 1e-4;
  const double lum = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
  CHECK(ms_ssim(a, b) == doctest::Approx(std::pow(lum, 0.1333)).epsilon(1e-9));
}

TEST_CASE("bd_rate: identity, doubling, inverse relation") {
  std::vector<RDCurvePoint> anchor = {{0.10, 30.0}, {0.18, 32.5}, {0.33, 35.0}, {0.61, 37.5}};
  CHECK(bd_rate_percent(anchor, anchor) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<RDCurvePoint> doubled = anchor;
  for (auto& p : doubled) p.rate *= 2.0;
  CHECK(bd_rate_percent(anchor, doubled) == doctest::Approx(100.0).epsilon(0.001));
  // Anti-symmetry through the ratio: (1+a)(1+b) = 1.
  const double back = bd_rate_percent(doubled, anchor);
  CHECK((1.0 + back / 100.0) * 2.0 == doctest::Approx(1.0).epsilon(1e-9));

  std::vector<RDCurvePoint> three = {anchor[0], anchor[1], anchor[2]};
  CHECK_THROWS_AS((void)bd_rate_percent(anchor, three), ContractViolation);
  std::vector<RDCurvePoint> disjoint = {{0.1, 50}, {0.2, 52}, {0.3, 54}, {0.4, 56}};
  CHECK_THROWS_AS((void)bd_rate_percent(anchor, disjoint), ContractViolation);
}

TEST_CASE("bd_rate: agrees with a fine-grid trapezoid oracle") {
  Rng rng(52);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<RDCurvePoint> anchor, test;
    double q = 28.0 + rng.uniform(0, 2);
    double ra = 0.08 + rng.uniform(0, 0.04), rt = ra * rng.uniform(0.6, 1.2);
    for (int i = 0; i < 5; ++i) {
      anchor.push_back({ra, q});
      test.push_back({rt, q + rng.uniform(-0.3, 0.3)});
      q += rng.uniform(1.5, 3.0);
      ra *= rng.uniform(1.6, 2.2);
      rt *= rng.uniform(1.6, 2.2);
    }
    const double bd = bd_rate_percent(anchor, test);

    // Oracle: trapezoid integration of the same monotone interpolants on a
    // dense grid.
    auto fit = [](std::vector<RDCurvePoint> pts) {
      std::sort(pts.begin(), pts.end(),
                [](const RDCurvePoint& a, const RDCurvePoint& b) { return a.quality < b.quality; });
      std::vector<double> x, y;
      for (const auto& p : pts) {
        x.push_back(p.quality);
        y.push_back(std::log10(p.rate));
      }
      return Pchip(x, y);
    };
    Pchip pa = fit(anchor), pt = fit(test);
    const double lo = std::max(pa.x_min(), pt.x_min());
    const double hi = std::min(pa.x_max(), pt.x_max());
    const int grid = 20000;
    double ia = 0, it = 0;
    for (int i = 0; i < grid; ++i) {
      const double x0 = lo + (hi - lo) * i / grid;
      const double x1 = lo + (hi - lo) * (i + 1) / grid;
      ia += 0.5 * (pa.eval(x0) + pa.eval(x1)) * (x1 - x0);
      it += 0.5 * (pt.eval(x0) + pt.eval(x1)) * (x1 - x0);
    }
    const double oracle = (std::pow(10.0, (it - ia) / (hi - lo)) - 1.0) * 100.0;
    CHECK(bd == doctest::Approx(oracle).epsilon(0.0005));
  }
}

TEST_CASE("pchip: monotone data gives monotone interpolant") {
  std::vector<double> x = {30, 32, 34, 38};
  std::vector<double> y = {-1.0, -0.7, -0.5, -0.1};
  Pchip p(x, y);
  double prev = p.eval(30);
  for (int i = 1; i <= 200; ++i) {
    double cur = p.eval(30 + 8.0 * i / 200.0);
    CHECK(cur >= prev - 1e-12);
    prev = cur;
  }
}
