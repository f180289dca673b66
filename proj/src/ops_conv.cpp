#include <Eigen/Dense>

#include "cvc/ops.hpp"

namespace cvc {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

int out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col is (Cin*K*K) x (OH*OW); zero padding outside the input.
void im2col(const double* x, int c_in, int h, int w, int k, int stride, int pad, double* col) {
  const int oh = out_dim(h, k, stride, pad), ow = out_dim(w, k, stride, pad);
  const int64_t ohw = int64_t(oh) * ow;
  for (int c = 0; c < c_in; ++c) {
    const double* xc = x + int64_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (int64_t(c) * k * k + ky * k + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + int64_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, ow, 0.0);
            continue;
          }
          const double* src = xc + int64_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
  }
}

// Transpose of im2col: scatter-add col back onto the (c_in, h, w) image.
void col2im_add(const double* col, int c_in, int h, int w, int k, int stride, int pad, double* x) {
  const int oh = out_dim(h, k, stride, pad), ow = out_dim(w, k, stride, pad);
  const int64_t ohw = int64_t(oh) * ow;
  for (int c = 0; c < c_in; ++c) {
    double* xc = x + int64_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (int64_t(c) * k * k + ky * k + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = xc + int64_t(iy) * w;
          const double* src = row + int64_t(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
  }
}

void add_bias_rows(double* y, const double* bias, int c_out, int64_t plane) {
  for (int c = 0; c < c_out; ++c) {
    const double b = bias[c];
    double* p = y + int64_t(c) * plane;
    for (int64_t i = 0; i < plane; ++i) p[i] += b;
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x->val.shape;
  const Shape ws = weight->val.shape;
  check_contract(ws.c == xs.c, "conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                                   std::to_string(xs.c));
  check_contract(ws.h == ws.w, "conv2d: non-square kernel");
  const int k = ws.h, c_out = ws.n, c_in = xs.c;
  const int oh = out_dim(xs.h, k, stride, pad), ow = out_dim(xs.w, k, stride, pad);
  check_contract(oh >= 1 && ow >= 1, "conv2d: output would be empty");
  const int64_t ohw = int64_t(oh) * ow;
  const int64_t kdim = int64_t(c_in) * k * k;

  Tensor out(Shape{xs.n, c_out, oh, ow});
  std::vector<double> col(size_t(kdim * ohw));
  MapCM wmat(weight->val.data(), c_out, kdim);
  for (int n = 0; n < xs.n; ++n) {
    im2col(x->val.data() + int64_t(n) * c_in * xs.h * xs.w, c_in, xs.h, xs.w, k, stride, pad,
           col.data());
    MapM ymat(out.data() + int64_t(n) * c_out * ohw, c_out, ohw);
    ymat.noalias() = wmat * MapCM(col.data(), kdim, ohw);
    if (bias) add_bias_rows(out.data() + int64_t(n) * c_out * ohw, bias->val.data(), c_out, ohw);
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, weight, bias} : std::vector<Var>{x, weight};
  return make_node(std::move(out), parents, [x, weight, bias, stride, pad](Node& node) {
    const Shape xs = x->val.shape;
    const Shape ws = weight->val.shape;
    const Shape os = node.val.shape;
    const int k = ws.h, c_out = ws.n, c_in = xs.c;
    const int64_t ohw = int64_t(os.h) * os.w;
    const int64_t kdim = int64_t(c_in) * k * k;
    MapCM wmat(weight->val.data(), c_out, kdim);
    std::vector<double> col(size_t(kdim * ohw));
    std::vector<double> dcol(size_t(kdim * ohw));
    for (int n = 0; n < xs.n; ++n) {
      MapCM gy(node.grad.data() + int64_t(n) * c_out * ohw, c_out, ohw);
      if (weight->requires_grad) {
        im2col(x->val.data() + int64_t(n) * c_in * xs.h * xs.w, c_in, xs.h, xs.w, k, stride, pad,
               col.data());
        MapM gw(weight->ensure_grad().data(), c_out, kdim);
        gw.noalias() += gy * MapCM(col.data(), kdim, ohw).transpose();
      }
      if (x->requires_grad) {
        MapM(dcol.data(), kdim, ohw).noalias() = wmat.transpose() * gy;
        col2im_add(dcol.data(), c_in, xs.h, xs.w, k, stride, pad,
                   x->ensure_grad().data() + int64_t(n) * c_in * xs.h * xs.w);
      }
      if (bias && bias->requires_grad) {
        Tensor& gb = bias->ensure_grad();
        const double* gyp = node.grad.data() + int64_t(n) * c_out * ohw;
        for (int c = 0; c < c_out; ++c) {
          double acc = 0.0;
          for (int64_t i = 0; i < ohw; ++i) acc += gyp[int64_t(c) * ohw + i];
          gb.v[size_t(c)] += acc;
        }
      }
    }
  });
}

Var conv2d_transpose(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x->val.shape;
  const Shape ws = weight->val.shape;  // (Cin, Cout, K, K)
  check_contract(ws.n == xs.c, "conv2d_transpose: weight expects " + std::to_string(ws.n) +
                                   " input channels, got " + std::to_string(xs.c));
  check_contract(ws.h == ws.w, "conv2d_transpose: non-square kernel");
  const int k = ws.h, c_in = xs.c, c_out = ws.c;
  const int oh = (xs.h - 1) * stride - 2 * pad + k;
  const int ow = (xs.w - 1) * stride - 2 * pad + k;
  check_contract(oh >= 1 && ow >= 1, "conv2d_transpose: output would be empty");
  const int64_t ihw = int64_t(xs.h) * xs.w;
  const int64_t kdim = int64_t(c_out) * k * k;

  Tensor out(Shape{xs.n, c_out, oh, ow});
  std::vector<double> col(size_t(kdim * ihw));
  MapCM wmat(weight->val.data(), c_in, kdim);
  for (int n = 0; n < xs.n; ++n) {
    MapCM xmat(x->val.data() + int64_t(n) * c_in * ihw, c_in, ihw);
    MapM(col.data(), kdim, ihw).noalias() = wmat.transpose() * xmat;
    // Scatter: the col2im grid here is the *output* image sampled on the
    // input's stride lattice.
    col2im_add(col.data(), c_out, oh, ow, k, stride, pad, out.data() + int64_t(n) * c_out * oh * ow);
    if (bias)
      add_bias_rows(out.data() + int64_t(n) * c_out * oh * ow, bias->val.data(), c_out,
                    int64_t(oh) * ow);
  }

  std::vector<Var> parents = bias ? std::vector<Var>{x, weight, bias} : std::vector<Var>{x, weight};
  return make_node(std::move(out), parents, [x, weight, bias, stride, pad](Node& node) {
    const Shape xs = x->val.shape;
    const Shape ws = weight->val.shape;
    const Shape os = node.val.shape;
    const int k = ws.h, c_in = xs.c, c_out = ws.c;
    const int64_t ihw = int64_t(xs.h) * xs.w;
    const int64_t kdim = int64_t(c_out) * k * k;
    std::vector<double> gcol(size_t(kdim * ihw));
    for (int n = 0; n < xs.n; ++n) {
      // dcol = im2col(dy); dx = W * dcol; dW = x * dcol^T.
      im2col(node.grad.data() + int64_t(n) * c_out * os.h * os.w, c_out, os.h, os.w, k, stride, pad,
             gcol.data());
      MapCM gcolm(gcol.data(), kdim, ihw);
      if (x->requires_grad) {
        MapM gx(x->ensure_grad().data() + int64_t(n) * c_in * ihw, c_in, ihw);
        gx.noalias() += MapCM(weight->val.data(), c_in, kdim) * gcolm;
      }
      if (weight->requires_grad) {
        MapM gw(weight->ensure_grad().data(), c_in, kdim);
        gw.noalias() += MapCM(x->val.data() + int64_t(n) * c_in * ihw, c_in, ihw) * gcolm.transpose();
      }
      if (bias && bias->requires_grad) {
        Tensor& gb = bias->ensure_grad();
        const int64_t plane = int64_t(os.h) * os.w;
        for (int c = 0; c < c_out; ++c) {
          const double* p = node.grad.data() + (int64_t(n) * c_out + c) * plane;
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += p[i];
          gb.v[size_t(c)] += acc;
        }
      }
    }
  });
}

Var dwconv2d(const Var& x, const Var& weight, const Var& bias, int pad) {
  const Shape xs = x->val.shape;
  const Shape ws = weight->val.shape;  // (C, 1, K, K)
  check_contract(ws.n == xs.c && ws.c == 1, "dwconv2d: weight must be (C,1,K,K)");
  const int k = ws.h;
  const int oh = out_dim(xs.h, k, 1, pad), ow = out_dim(xs.w, k, 1, pad);
  Tensor out(Shape{xs.n, xs.c, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const double* wc = weight->val.data() + int64_t(c) * k * k;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias->val.v[size_t(c)] : 0.0;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy - pad + ky;
            if (iy < 0 || iy >= xs.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox - pad + kx;
              if (ix < 0 || ix >= xs.w) continue;
              acc += wc[ky * k + kx] * x->val.at(n, c, iy, ix);
            }
          }
          out.at(n, c, oy, ox) = acc;
        }
    }
  std::vector<Var> parents = bias ? std::vector<Var>{x, weight, bias} : std::vector<Var>{x, weight};
  return make_node(std::move(out), parents, [x, weight, bias, pad](Node& node) {
    const Shape xs = x->val.shape;
    const Shape os = node.val.shape;
    const int k = weight->val.shape.h;
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c) {
        const double* wc = weight->val.data() + int64_t(c) * k * k;
        for (int oy = 0; oy < os.h; ++oy)
          for (int ox = 0; ox < os.w; ++ox) {
            const double gv = node.grad.at(n, c, oy, ox);
            if (bias && bias->requires_grad) bias->ensure_grad().v[size_t(c)] += gv;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy - pad + ky;
              if (iy < 0 || iy >= xs.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox - pad + kx;
                if (ix < 0 || ix >= xs.w) continue;
                if (x->requires_grad) x->ensure_grad().at(n, c, iy, ix) += wc[ky * k + kx] * gv;
                if (weight->requires_grad)
                  weight->ensure_grad().v[size_t(int64_t(c) * k * k + ky * k + kx)] +=
                      x->val.at(n, c, iy, ix) * gv;
              }
            }
          }
      }
  });
}

}  // namespace cvc
