#include <cmath>

#include "cvc/ops.hpp"

namespace cvc {

namespace {

constexpr double kProbFloor = 0x1.0p-15;  // 2^-15 per-symbol probability floor
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvLn2 = 1.4426950408889634074;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

double gaussian_bits_value(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
  check_contract(y.shape == mu.shape && y.shape == sigma.shape, "gaussian_bits: shape mismatch");
  double bits = 0.0;
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double d = y.v[size_t(i)] - mu.v[size_t(i)];
    const double s = sigma.v[size_t(i)];
    const double p = normal_cdf((d + 0.5) / s) - normal_cdf((d - 0.5) / s);
    bits -= std::log(std::max(p, kProbFloor)) * kInvLn2;
  }
  return bits;
}

Var gaussian_bits(const Var& y, const Var& mu, const Var& sigma) {
  double bits = gaussian_bits_value(y->val, mu->val, sigma->val);
  return make_node(Tensor::scalar(bits), {y, mu, sigma}, [y, mu, sigma](Node& node) {
    const double g = node.grad.v[0];
    const int64_t n = y->val.numel();
    const bool ny = y->requires_grad, nm = mu->requires_grad, ns = sigma->requires_grad;
    if (ny) y->ensure_grad();
    if (nm) mu->ensure_grad();
    if (ns) sigma->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      const double d = y->val.v[size_t(i)] - mu->val.v[size_t(i)];
      const double s = sigma->val.v[size_t(i)];
      const double a = (d + 0.5) / s, b = (d - 0.5) / s;
      const double p = normal_cdf(a) - normal_cdf(b);
      if (p <= kProbFloor) continue;  // flat where the floor is active
      const double dbits_dp = -g * kInvLn2 / p;
      const double pa = normal_pdf(a), pb = normal_pdf(b);
      const double dp_dd = (pa - pb) / s;
      if (ny) y->grad.v[size_t(i)] += dbits_dp * dp_dd;
      if (nm) mu->grad.v[size_t(i)] -= dbits_dp * dp_dd;
      if (ns) sigma->grad.v[size_t(i)] += dbits_dp * (-(pa * a - pb * b) / s);
    }
  });
}

}  // namespace cvc
