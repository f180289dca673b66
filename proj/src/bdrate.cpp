#include "cvc/bdrate.hpp"

#include <algorithm>
#include <cmath>

namespace cvc {

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  check_contract(x_.size() == y_.size() && x_.size() >= 2, "Pchip: need >= 2 points");
  for (size_t i = 1; i < x_.size(); ++i)
    check_contract(x_[i] > x_[i - 1], "Pchip: x must be strictly increasing");

  const size_t n = x_.size();
  d_.assign(n, 0.0);
  std::vector<double> h(n - 1), delta(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    delta[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  if (n == 2) {
    d_[0] = d_[1] = delta[0];
    return;
  }
  // Interior slopes: weighted harmonic mean where the secants agree in sign.
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      d_[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  // One-sided endpoint slopes with the standard monotonicity clamp.
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::fabs(d) > 3.0 * std::fabs(d0)) return 3.0 * d0;
    return d;
  };
  d_[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double Pchip::eval(double q) const {
  check_contract(q >= x_.front() - 1e-12 && q <= x_.back() + 1e-12, "Pchip::eval out of range");
  q = std::clamp(q, x_.front(), x_.back());
  size_t i = size_t(std::upper_bound(x_.begin(), x_.end(), q) - x_.begin());
  i = std::clamp<size_t>(i, 1, x_.size() - 1) - 1;
  const double h = x_[i + 1] - x_[i];
  const double t = (q - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] +
         (-2 * t3 + 3 * t2) * y_[i + 1] + (t3 - t2) * h * d_[i + 1];
}

double Pchip::integrate(double lo, double hi) const {
  check_contract(lo >= x_.front() - 1e-12 && hi <= x_.back() + 1e-12 && lo <= hi,
                 "Pchip::integrate out of range");
  lo = std::clamp(lo, x_.front(), x_.back());
  hi = std::clamp(hi, x_.front(), x_.back());
  // Antiderivatives of the Hermite basis on the unit interval.
  auto acc = [&](size_t i, double t0, double t1) {
    const double h = x_[i + 1] - x_[i];
    auto H00 = [](double t) { return 0.5 * t * t * t * t - t * t * t + t; };
    auto H10 = [](double t) { return 0.25 * t * t * t * t - 2.0 / 3.0 * t * t * t + 0.5 * t * t; };
    auto H01 = [](double t) { return -0.5 * t * t * t * t + t * t * t; };
    auto H11 = [](double t) { return 0.25 * t * t * t * t - t * t * t / 3.0; };
    return h * (y_[i] * (H00(t1) - H00(t0)) + h * d_[i] * (H10(t1) - H10(t0)) +
                y_[i + 1] * (H01(t1) - H01(t0)) + h * d_[i + 1] * (H11(t1) - H11(t0)));
  };
  double total = 0.0;
  for (size_t i = 0; i + 1 < x_.size(); ++i) {
    const double a = std::max(lo, x_[i]);
    const double b = std::min(hi, x_[i + 1]);
    if (b <= a) continue;
    const double h = x_[i + 1] - x_[i];
    total += acc(i, (a - x_[i]) / h, (b - x_[i]) / h);
  }
  return total;
}

double bd_rate_percent(std::vector<RDCurvePoint> anchor, std::vector<RDCurvePoint> test) {
  check_contract(anchor.size() >= 4 && test.size() >= 4, "bd_rate: need at least 4 points per curve");
  auto prepare = [](std::vector<RDCurvePoint>& pts, std::vector<double>* q, std::vector<double>* lr) {
    std::sort(pts.begin(), pts.end(),
              [](const RDCurvePoint& a, const RDCurvePoint& b) { return a.quality < b.quality; });
    for (const auto& p : pts) {
      check_contract(p.rate > 0.0, "bd_rate: rates must be positive");
      q->push_back(p.quality);
      lr->push_back(std::log10(p.rate));
    }
  };
  std::vector<double> qa, la, qt, lt;
  prepare(anchor, &qa, &la);
  prepare(test, &qt, &lt);
  Pchip pa(qa, la), pt(qt, lt);
  const double lo = std::max(pa.x_min(), pt.x_min());
  const double hi = std::min(pa.x_max(), pt.x_max());
  if (hi <= lo) throw ContractViolation("bd_rate: curves have no overlapping quality range");
  const double avg = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

}  // namespace cvc
