#include <Eigen/Dense>
#include <cmath>

#include "cvc/ops.hpp"

namespace cvc {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

// Bilinear taps at continuous position (u, v), border-replicated.
struct SampleTaps {
  int x0, x1, y0, y1;
  double wx, wy;     // weights of x1 / y1
  bool du_live, dv_live;  // false where the border clamp saturates
};

SampleTaps make_taps(double u, double v, int w, int h) {
  SampleTaps t;
  t.du_live = u > 0.0 && u < double(w - 1);
  t.dv_live = v > 0.0 && v < double(h - 1);
  u = std::min(std::max(u, 0.0), double(w - 1));
  v = std::min(std::max(v, 0.0), double(h - 1));
  t.x0 = int(std::floor(u));
  t.y0 = int(std::floor(v));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = u - double(t.x0);
  t.wy = v - double(t.y0);
  return t;
}

double sample_plane(const double* p, int w, const SampleTaps& t) {
  const double v00 = p[t.y0 * w + t.x0], v01 = p[t.y0 * w + t.x1];
  const double v10 = p[t.y1 * w + t.x0], v11 = p[t.y1 * w + t.x1];
  return (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) + t.wy * ((1 - t.wx) * v10 + t.wx * v11);
}

// d(sample)/du and d(sample)/dv before clamp masking.
void sample_plane_grad(const double* p, int w, const SampleTaps& t, double* du, double* dv) {
  const double v00 = p[t.y0 * w + t.x0], v01 = p[t.y0 * w + t.x1];
  const double v10 = p[t.y1 * w + t.x0], v11 = p[t.y1 * w + t.x1];
  *du = (1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10);
  *dv = (1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01);
}

void scatter_plane(double* p, int w, const SampleTaps& t, double g) {
  p[t.y0 * w + t.x0] += (1 - t.wy) * (1 - t.wx) * g;
  p[t.y0 * w + t.x1] += (1 - t.wy) * t.wx * g;
  p[t.y1 * w + t.x0] += t.wy * (1 - t.wx) * g;
  p[t.y1 * w + t.x1] += t.wy * t.wx * g;
}

void check_flow_shape(const Shape& xs, const Shape& fs, const char* op) {
  check_contract(fs.c == 2 && fs.n == xs.n && fs.h == xs.h && fs.w == xs.w,
                 std::string(op) + ": flow must be (N,2,H,W) matching input, got " + fs.str() +
                     " for input " + xs.str());
}

}  // namespace

Tensor bilinear_warp_value(const Tensor& x, const Tensor& flow) {
  check_contract(flow.shape.c == 2 && flow.shape.h == x.shape.h && flow.shape.w == x.shape.w &&
                     flow.shape.n == x.shape.n,
                 "bilinear_warp: shape mismatch");
  const Shape s = x.shape;
  Tensor out(s);
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const double* fx = flow.data() + int64_t(n) * 2 * plane;
    const double* fy = fx + plane;
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) {
        const int64_t i = int64_t(y) * s.w + xx;
        SampleTaps t = make_taps(xx + fx[i], y + fy[i], s.w, s.h);
        for (int c = 0; c < s.c; ++c)
          out.v[size_t((int64_t(n) * s.c + c) * plane + i)] =
              sample_plane(x.data() + (int64_t(n) * s.c + c) * plane, s.w, t);
      }
  }
  return out;
}

Var bilinear_warp(const Var& x, const Var& flow) {
  check_flow_shape(x->val.shape, flow->val.shape, "bilinear_warp");
  Tensor out = bilinear_warp_value(x->val, flow->val);
  return make_node(std::move(out), {x, flow}, [x, flow](Node& node) {
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    const bool need_x = x->requires_grad, need_f = flow->requires_grad;
    if (need_x) x->ensure_grad();
    if (need_f) flow->ensure_grad();
    for (int n = 0; n < s.n; ++n) {
      const double* fx = flow->val.data() + int64_t(n) * 2 * plane;
      const double* fy = fx + plane;
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          const int64_t i = int64_t(y) * s.w + xx;
          SampleTaps t = make_taps(xx + fx[i], y + fy[i], s.w, s.h);
          double du_acc = 0.0, dv_acc = 0.0;
          for (int c = 0; c < s.c; ++c) {
            const int64_t off = (int64_t(n) * s.c + c) * plane;
            const double g = node.grad.v[size_t(off + i)];
            if (g == 0.0) continue;
            if (need_x) scatter_plane(x->ensure_grad().data() + off, s.w, t, g);
            if (need_f) {
              double du, dv;
              sample_plane_grad(x->val.data() + off, s.w, t, &du, &dv);
              du_acc += g * du;
              dv_acc += g * dv;
            }
          }
          if (need_f) {
            Tensor& gf = flow->ensure_grad();
            if (t.du_live) gf.v[size_t(int64_t(n) * 2 * plane + i)] += du_acc;
            if (t.dv_live) gf.v[size_t(int64_t(n) * 2 * plane + plane + i)] += dv_acc;
          }
        }
    }
  });
}

Var flow_downsample(const Var& flow, int factor) {
  check_contract(flow->val.shape.c == 2, "flow_downsample: flow must have 2 channels");
  check_contract(factor == 2 || factor == 4, "flow_downsample: factor must be 2 or 4");
  // Pool, then rescale displacements into the coarser pixel grid.
  return scale(avg_pool(flow, factor), 1.0 / double(factor));
}

Var offset_upsample(const Var& offsets, int factor, int displacement_channels) {
  check_contract(factor == 2, "offset_upsample: factor must be 2");
  const int c = offsets->val.shape.c;
  check_contract(displacement_channels <= c, "offset_upsample: displacement channel count too large");
  Var up = upsample_bilinear(offsets, factor);
  if (displacement_channels == c) return scale(up, double(factor));
  Var disp = scale(slice_c(up, 0, displacement_channels), double(factor));
  Var masks = slice_c(up, displacement_channels, c);
  return concat_c({disp, masks});
}

Var offset_mean_displacement(const Var& offsets, int groups, int taps) {
  const Shape s = offsets->val.shape;
  const int gk = groups * taps;
  check_contract(s.c >= 2 * gk, "offset_mean_displacement: too few channels");
  const int64_t plane = int64_t(s.h) * s.w;
  Tensor out(Shape{s.n, 2, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int d = 0; d < 2; ++d) {
      double* dst = out.data() + (int64_t(n) * 2 + d) * plane;
      for (int j = 0; j < gk; ++j) {
        const double* src = offsets->val.data() + (int64_t(n) * s.c + 2 * j + d) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
      for (int64_t i = 0; i < plane; ++i) dst[i] /= double(gk);
    }
  return make_node(std::move(out), {offsets}, [offsets, groups, taps](Node& node) {
    if (!offsets->requires_grad) return;
    Tensor& g = offsets->ensure_grad();
    const Shape s = offsets->val.shape;
    const int gk = groups * taps;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int d = 0; d < 2; ++d) {
        const double* src = node.grad.data() + (int64_t(n) * 2 + d) * plane;
        for (int j = 0; j < gk; ++j) {
          double* dst = g.data() + (int64_t(n) * s.c + 2 * j + d) * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] += src[i] / double(gk);
        }
      }
  });
}

Var deform_sample(const Var& x, const Var& base_flow, const Var& residual, const Var& weight,
                  const Var& bias, const DeformKernelSpec& spec) {
  const Shape xs = x->val.shape;
  const Shape rs = residual->val.shape;
  const Shape ws = weight->val.shape;
  const int k = spec.kernel, kk = spec.taps(), groups = spec.groups;
  check_contract(xs.c % groups == 0, "deform_sample: channels not divisible by groups");
  check_contract(rs.c == spec.offset_channels(),
                 "deform_sample: residual has " + std::to_string(rs.c) + " channels, spec needs " +
                     std::to_string(spec.offset_channels()));
  check_contract(rs.h == xs.h && rs.w == xs.w && rs.n == xs.n,
                 "deform_sample: residual resolution must match input");
  check_contract(ws.c == xs.c && ws.h == k && ws.w == k, "deform_sample: weight must be (Cout,Cin,K,K)");
  if (base_flow) check_flow_shape(xs, base_flow->val.shape, "deform_sample");

  const int c_in = xs.c, c_out = ws.n, cpg = c_in / groups;
  const int64_t plane = int64_t(xs.h) * xs.w;
  const int64_t kdim = int64_t(c_in) * kk;
  const int half = (k - 1) / 2;
  const int disp_ch = spec.displacement_channels();

  // col[(c*kk + t), p] = mask * sample(x_c at p + p_t + base(p) + delta(p)).
  auto build_col = [=](const Tensor& xv, const Tensor& rv, const Tensor* bv, int n, double* col) {
    const double* bx = bv ? bv->data() + int64_t(n) * 2 * plane : nullptr;
    const double* by = bv ? bx + plane : nullptr;
    for (int g = 0; g < groups; ++g)
      for (int t = 0; t < kk; ++t) {
        const int pky = t / k - half, pkx = t % k - half;
        const double* dx = rv.data() + (int64_t(n) * rs.c + 2 * (g * kk + t)) * plane;
        const double* dy = dx + plane;
        const double* mk =
            spec.modulated ? rv.data() + (int64_t(n) * rs.c + disp_ch + g * kk + t) * plane : nullptr;
        for (int y = 0; y < xs.h; ++y)
          for (int xx = 0; xx < xs.w; ++xx) {
            const int64_t i = int64_t(y) * xs.w + xx;
            const double u = xx + pkx + (bx ? bx[i] : 0.0) + dx[i];
            const double v = y + pky + (by ? by[i] : 0.0) + dy[i];
            SampleTaps taps = make_taps(u, v, xs.w, xs.h);
            const double m = mk ? 2.0 / (1.0 + std::exp(-mk[i])) : 1.0;
            for (int cc = 0; cc < cpg; ++cc) {
              const int c = g * cpg + cc;
              col[(int64_t(c) * kk + t) * plane + i] =
                  m * sample_plane(xv.data() + (int64_t(n) * c_in + c) * plane, xs.w, taps);
            }
          }
      }
  };

  Tensor out(Shape{xs.n, c_out, xs.h, xs.w});
  std::vector<double> col(size_t(kdim * plane));
  for (int n = 0; n < xs.n; ++n) {
    build_col(x->val, residual->val, base_flow ? &base_flow->val : nullptr, n, col.data());
    MapM ymat(out.data() + int64_t(n) * c_out * plane, c_out, plane);
    ymat.noalias() = MapCM(weight->val.data(), c_out, kdim) * MapCM(col.data(), kdim, plane);
    if (bias) {
      for (int c = 0; c < c_out; ++c) {
        const double b = bias->val.v[size_t(c)];
        double* p = out.data() + (int64_t(n) * c_out + c) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += b;
      }
    }
  }

  std::vector<Var> parents{x, residual, weight};
  if (base_flow) parents.push_back(base_flow);
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), parents, [x, base_flow, residual, weight, bias, spec,
                                             build_col](Node& node) {
    const Shape xs = x->val.shape;
    const Shape rs = residual->val.shape;
    const int k = spec.kernel, kk = spec.taps(), groups = spec.groups;
    const int c_in = xs.c, c_out = weight->val.shape.n, cpg = c_in / groups;
    const int64_t plane = int64_t(xs.h) * xs.w;
    const int64_t kdim = int64_t(c_in) * kk;
    const int half = (k - 1) / 2;
    const int disp_ch = spec.displacement_channels();

    std::vector<double> col(size_t(kdim * plane));
    std::vector<double> dcol(size_t(kdim * plane));
    for (int n = 0; n < xs.n; ++n) {
      MapCM gy(node.grad.data() + int64_t(n) * c_out * plane, c_out, plane);
      build_col(x->val, residual->val, base_flow ? &base_flow->val : nullptr, n, col.data());
      if (weight->requires_grad) {
        MapM gw(weight->ensure_grad().data(), c_out, kdim);
        gw.noalias() += gy * MapCM(col.data(), kdim, plane).transpose();
      }
      if (bias && bias->requires_grad) {
        Tensor& gb = bias->ensure_grad();
        const double* gyp = node.grad.data() + int64_t(n) * c_out * plane;
        for (int c = 0; c < c_out; ++c) {
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += gyp[int64_t(c) * plane + i];
          gb.v[size_t(c)] += acc;
        }
      }

      const bool need_x = x->requires_grad;
      const bool need_r = residual->requires_grad;
      const bool need_b = base_flow && base_flow->requires_grad;
      if (!(need_x || need_r || need_b)) continue;
      MapM(dcol.data(), kdim, plane).noalias() =
          MapCM(weight->val.data(), c_out, kdim).transpose() * gy;

      const double* bx = base_flow ? base_flow->val.data() + int64_t(n) * 2 * plane : nullptr;
      const double* by = bx ? bx + plane : nullptr;
      for (int g = 0; g < groups; ++g)
        for (int t = 0; t < kk; ++t) {
          const int pky = t / k - half, pkx = t % k - half;
          const int64_t dxo = (int64_t(n) * rs.c + 2 * (g * kk + t)) * plane;
          const int64_t mko = (int64_t(n) * rs.c + disp_ch + g * kk + t) * plane;
          for (int y = 0; y < xs.h; ++y)
            for (int xx = 0; xx < xs.w; ++xx) {
              const int64_t i = int64_t(y) * xs.w + xx;
              const double u = xx + pkx + (bx ? bx[i] : 0.0) + residual->val.v[size_t(dxo + i)];
              const double v =
                  y + pky + (by ? by[i] : 0.0) + residual->val.v[size_t(dxo + plane + i)];
              SampleTaps taps = make_taps(u, v, xs.w, xs.h);
              double sig = 1.0, m = 1.0;
              if (spec.modulated) {
                sig = 1.0 / (1.0 + std::exp(-residual->val.v[size_t(mko + i)]));
                m = 2.0 * sig;
              }
              double du_acc = 0.0, dv_acc = 0.0, dm_acc = 0.0;
              for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                const double a = dcol[(int64_t(c) * kk + t) * plane + i];
                if (a == 0.0) continue;
                const int64_t off = (int64_t(n) * c_in + c) * plane;
                const double* xp = x->val.data() + off;
                if (spec.modulated && need_r) dm_acc += a * sample_plane(xp, xs.w, taps);
                const double am = a * m;
                if (need_x) scatter_plane(x->ensure_grad().data() + off, xs.w, taps, am);
                if (need_r || need_b) {
                  double du, dv;
                  sample_plane_grad(xp, xs.w, taps, &du, &dv);
                  du_acc += am * du;
                  dv_acc += am * dv;
                }
              }
              if (!taps.du_live) du_acc = 0.0;
              if (!taps.dv_live) dv_acc = 0.0;
              if (need_r) {
                Tensor& gr = residual->ensure_grad();
                gr.v[size_t(dxo + i)] += du_acc;
                gr.v[size_t(dxo + plane + i)] += dv_acc;
                if (spec.modulated) gr.v[size_t(mko + i)] += dm_acc * 2.0 * sig * (1.0 - sig);
              }
              if (need_b) {
                Tensor& gb = base_flow->ensure_grad();
                gb.v[size_t(int64_t(n) * 2 * plane + i)] += du_acc;
                gb.v[size_t(int64_t(n) * 2 * plane + plane + i)] += dv_acc;
              }
            }
        }
    }
  });
}

}  // namespace cvc
