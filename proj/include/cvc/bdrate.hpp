#ifndef CVC_BDRATE_HPP
#define CVC_BDRATE_HPP

#include <vector>

#include "cvc/common.hpp"

namespace cvc {

// Monotone piecewise-cubic interpolant (Fritsch-Carlson slopes), with exact
// segment integration. Used for Bjontegaard rate curves, where plain cubic
// fits tend to oscillate on 4-point inputs.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);  // x strictly increasing

  double eval(double q) const;
  double integrate(double lo, double hi) const;  // lo/hi inside [x front, x back]

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

 private:
  std::vector<double> x_, y_, d_;
};

struct RDCurvePoint {
  double rate = 0;     // bits per pixel (> 0)
  double quality = 0;  // PSNR dB or MS-SSIM
};

// Average log-rate difference of `test` against `anchor` over the overlapping
// quality interval, as a percentage. Negative = test saves bits. Requires at
// least 4 points per curve and a nonempty quality overlap.
double bd_rate_percent(std::vector<RDCurvePoint> anchor, std::vector<RDCurvePoint> test);

}  // namespace cvc

#endif
