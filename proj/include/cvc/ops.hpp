#ifndef CVC_OPS_HPP
#define CVC_OPS_HPP

#include <vector>

#include "cvc/autograd.hpp"

namespace cvc {

// ---------------------------------------------------------------------------
// Conventions shared by every op in this file:
//   * Tensors are NCHW. Spatial coordinates are (x right, y down).
//   * Motion fields have 2 channels: channel 0 = horizontal displacement,
//     channel 1 = vertical, in pixels at the field's own scale.
//   * All sampling uses bilinear interpolation with border replication
//     (coordinates clamped to [0, W-1] x [0, H-1]).
//   * Resizing uses the half-pixel convention (align_corners = false):
//     src = (dst + 0.5) / factor - 0.5.
//   * Rounding is nearest-integer with ties away from zero (std::round).
// ---------------------------------------------------------------------------

// -- elementwise ------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var square(const Var& a);
Var sqrt_op(const Var& a);
Var abs_op(const Var& a);
// Hard clamp; gradient passes through inside [lo, hi], zero outside.
Var clamp(const Var& a, double lo, double hi);

// Broadcast a (1,C,1,1) tensor over (N,C,H,W).
Var add_bias(const Var& x, const Var& bias);
Var mul_channel(const Var& x, const Var& gain);
Var expand_c(const Var& param, Shape target);
// Broadcast a (N,1,H,W) map over channels.
Var mul_map(const Var& x, const Var& map);

// -- reductions / structure --------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);
Var concat_c(const std::vector<Var>& xs);
Var slice_c(const Var& x, int c0, int c1);  // channels [c0, c1)
Var global_avg_pool(const Var& x);          // (N,C,1,1)
Var global_max_pool(const Var& x);          // (N,C,1,1)
Var channel_mean_map(const Var& x);         // (N,1,H,W)
Var channel_max_map(const Var& x);          // (N,1,H,W)

// -- resampling ---------------------------------------------------------------
Var avg_pool(const Var& x, int factor);
Var upsample_bilinear(const Var& x, int factor);

// -- convolutions -------------------------------------------------------------
// weight (Cout, Cin, K, K); bias (1, Cout, 1, 1) or nullptr.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// Transposed conv, weight (Cin, Cout, K, K); output dims (H-1)*s - 2p + K.
Var conv2d_transpose(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// Depthwise 3x3, weight (C, 1, K, K), stride 1, same padding.
Var dwconv2d(const Var& x, const Var& weight, const Var& bias, int pad);

// -- motion / deformable sampling ----------------------------------------------
// out(p) = x sampled at p + flow(p). Differentiable in x and flow.
Var bilinear_warp(const Var& x, const Var& flow);

// Average-pool a flow by `factor` and rescale displacements into the coarser
// pixel grid (divide by factor). factor in {2, 4}; dims must divide evenly.
Var flow_downsample(const Var& flow, int factor);

// Bilinear 2x upsample of a packed offset field (2*G*K*K displacement channels
// followed by G*K*K mask channels). Displacements are doubled, masks are not.
Var offset_upsample(const Var& offsets, int factor, int displacement_channels);

struct DeformKernelSpec {
  int kernel = 3;
  int groups = 8;
  bool modulated = true;

  int taps() const { return kernel * kernel; }
  int displacement_channels() const { return 2 * groups * taps(); }
  int mask_channels() const { return modulated ? groups * taps() : 0; }
  int offset_channels() const { return displacement_channels() + mask_channels(); }
};

// Flow-guided deformable sampling. For output position p, group g, tap k the
// input is sampled at p + p_k + base_flow(p) + delta_{g,k}(p), scaled by the
// modulation mask 2*sigmoid(mask_{g,k}(p)), and taps are combined with a dense
// kernel `weight` (Cout, Cin, K, K). Tap order is row-major over the K x K
// grid; displacement channels are laid out [g][k][dx,dy], mask channels [g][k]
// (this layout is part of the offset-coding contract).
// base_flow may be null (treated as zero). residual carries displacement and,
// when spec.modulated, mask channels at x's resolution.
Var deform_sample(const Var& x, const Var& base_flow, const Var& residual, const Var& weight,
                  const Var& bias, const DeformKernelSpec& spec);

// Mean over groups and taps of a packed offset field's displacement channels,
// yielding a single (N,2,H,W) displacement map.
Var offset_mean_displacement(const Var& offsets, int groups, int taps);

// -- quantization surrogates -----------------------------------------------------
enum class QuantMode { Round, Noise };
// Round: nearest integer (ties away from zero), pass-through gradient.
Var quantize_ste(const Var& y, QuantMode mode, Rng* rng = nullptr);

// -- normalization / attention -----------------------------------------------------
// Per-position LayerNorm over channels with affine (gamma, beta are (1,C,1,1)).
Var layer_norm_c(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// Channel-transposed multi-head cross attention. Q, K, V are (1,C,H,W); per
// head the C/heads channel rows are L2-normalized along the token axis (of
// length H*W), the head's (d x d) attention map is softmax(tau * Qn Kn^T) and
// the output is A V. tau is (1,heads,1,1).
Var channel_cross_attention(const Var& q, const Var& k, const Var& v, const Var& tau, int heads);

// -- rate terms -----------------------------------------------------------------
// Total bits of y under elementwise Gaussian(mu, sigma) integrated over
// [y - 0.5, y + 0.5), with the per-symbol probability floored at 2^-15.
// Differentiable in all three inputs. Returns a scalar Var.
Var gaussian_bits(const Var& y, const Var& mu, const Var& sigma);

// Plain (non-autograd) evaluation of the same quantity.
double gaussian_bits_value(const Tensor& y, const Tensor& mu, const Tensor& sigma);

// -- padding ---------------------------------------------------------------------
Var reflect_pad(const Var& x, int right, int bottom);
Var replicate_pad(const Var& x, int left, int right, int top, int bottom);
Var crop(const Var& x, int height, int width);

// -- plain-tensor helpers (no autograd) --------------------------------------------
Tensor bilinear_warp_value(const Tensor& x, const Tensor& flow);
Tensor upsample_bilinear_value(const Tensor& x, int factor);

}  // namespace cvc

#endif
