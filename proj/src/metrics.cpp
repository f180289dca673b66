#include "cvc/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace cvc {

double psnr(const Tensor& a, const Tensor& b) {
  check_contract(a.shape == b.shape, "psnr: dim mismatch " + a.shape.str() + " vs " + b.shape.str());
  double mse = 0.0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double d = a.v[size_t(i)] - b.v[size_t(i)];
    mse += d * d;
  }
  mse /= double(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
const std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const {
    y = std::min(std::max(y, 0), h - 1);
    x = std::min(std::max(x, 0), w - 1);
    return v[size_t(y) * size_t(w) + size_t(x)];
  }
};

std::array<double, kWin> gaussian_kernel() {
  std::array<double, kWin> k{};
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    k[size_t(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[size_t(i)];
  }
  for (auto& x : k) x /= sum;
  return k;
}

Plane blur(const Plane& p) {
  static const std::array<double, kWin> k = gaussian_kernel();
  Plane tmp{p.h, p.w, std::vector<double>(size_t(p.h) * p.w)};
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[size_t(i)] * p.at(y, x + i - kWin / 2);
      tmp.v[size_t(y) * size_t(p.w) + size_t(x)] = acc;
    }
  Plane out{p.h, p.w, std::vector<double>(size_t(p.h) * p.w)};
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += k[size_t(i)] * tmp.at(y + i - kWin / 2, x);
      out.v[size_t(y) * size_t(p.w) + size_t(x)] = acc;
    }
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, std::vector<double>(size_t(p.h / 2) * size_t(p.w / 2))};
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out.v[size_t(y) * size_t(out.w) + size_t(x)] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                  p.at(2 * y + 1, 2 * x + 1));
  return out;
}

// Mean SSIM and contrast-structure terms of one scale.
void ssim_terms(const Plane& a, const Plane& b, double* luminance_ssim, double* cs) {
  Plane mu_a = blur(a), mu_b = blur(b);
  Plane aa{a.h, a.w, std::vector<double>(size_t(a.h) * a.w)};
  Plane bb = aa, ab = aa;
  for (size_t i = 0; i < aa.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  Plane saa = blur(aa), sbb = blur(bb), sab = blur(ab);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (size_t i = 0; i < aa.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = saa.v[i] - ma * ma;
    const double vb = sbb.v[i] - mb * mb;
    const double cov = sab.v[i] - ma * mb;
    const double cs_i = (2.0 * cov + kC2) / (va + vb + kC2);
    const double l_i = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
    ssim_sum += l_i * cs_i;
    cs_sum += cs_i;
  }
  *luminance_ssim = ssim_sum / double(aa.v.size());
  *cs = cs_sum / double(aa.v.size());
}

double ms_ssim_plane(Plane a, Plane b) {
  double result = 1.0;
  for (int s = 0; s < 5; ++s) {
    double lum = 0.0, cs = 0.0;
    ssim_terms(a, b, &lum, &cs);
    if (s < 4) {
      result *= std::pow(std::max(cs, 0.0), kWeights[size_t(s)]);
      a = downsample2(a);
      b = downsample2(b);
    } else {
      result *= std::pow(std::max(lum, 0.0), kWeights[4]);
    }
  }
  return result;
}

}  // namespace

double ms_ssim(const Tensor& a, const Tensor& b) {
  check_contract(a.shape == b.shape, "ms_ssim: dim mismatch");
  const Shape s = a.shape;
  if (s.h < kMsSsimMinSize || s.w < kMsSsimMinSize)
    throw ContractViolation("ms_ssim: inputs must be at least " + std::to_string(kMsSsimMinSize) +
                            " px per side for 5 dyadic scales, got " + s.str());
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      Plane pa{s.h, s.w, std::vector<double>(size_t(s.h) * s.w)};
      Plane pb = pa;
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          pa.v[size_t(y) * size_t(s.w) + size_t(x)] = a.at(n, c, y, x);
          pb.v[size_t(y) * size_t(s.w) + size_t(x)] = b.at(n, c, y, x);
        }
      acc += ms_ssim_plane(std::move(pa), std::move(pb));
    }
  return std::min(acc / double(s.n * s.c), 1.0);
}

}  // namespace cvc
