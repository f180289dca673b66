#ifndef CVC_METRICS_HPP
#define CVC_METRICS_HPP

#include "cvc/tensor.hpp"

namespace cvc {

// PSNR in dB for frames in [0,1]; identical frames return +infinity.
double psnr(const Tensor& a, const Tensor& b);

// 5-scale MS-SSIM with the canonical scale weights, an 11x11 Gaussian window
// (sigma 1.5, replicate-padded) and 2x average-pool between scales, averaged
// over the color channels. Requires both spatial dims >= 160 (throws
// ContractViolation naming the minimum otherwise).
double ms_ssim(const Tensor& a, const Tensor& b);

inline constexpr int kMsSsimMinSize = 160;

}  // namespace cvc

#endif
