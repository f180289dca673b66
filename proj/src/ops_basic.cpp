#include <algorithm>
#include <cmath>

#include "cvc/ops.hpp"

namespace cvc {

namespace {

void axpy(Tensor& dst, const Tensor& src, double s) {
  const int64_t n = dst.numel();
  for (int64_t i = 0; i < n; ++i) dst.v[size_t(i)] += s * src.v[size_t(i)];
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  check_contract(a->val.shape == b->val.shape, std::string(op) + ": shape mismatch " +
                                                   a->val.shape.str() + " vs " + b->val.shape.str());
}

// Shared implementation for unary elementwise ops: y = f(x), dx = df(x, y) * dy.
template <class F, class DF>
Var unary_op(const Var& a, F f, DF df) {
  Tensor out(a->val.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.v[size_t(i)] = f(a->val.v[size_t(i)]);
  return make_node(std::move(out), {a}, [a, df](Node& node) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i)
      g.v[size_t(i)] += df(a->val.v[size_t(i)], node.val.v[size_t(i)]) * node.grad.v[size_t(i)];
  });
}

}  // namespace

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->val;
  axpy(out, b->val, 1.0);
  return make_node(std::move(out), {a, b}, [a, b](Node& node) {
    if (a->requires_grad) axpy(a->ensure_grad(), node.grad, 1.0);
    if (b->requires_grad) axpy(b->ensure_grad(), node.grad, 1.0);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->val;
  axpy(out, b->val, -1.0);
  return make_node(std::move(out), {a, b}, [a, b](Node& node) {
    if (a->requires_grad) axpy(a->ensure_grad(), node.grad, 1.0);
    if (b->requires_grad) axpy(b->ensure_grad(), node.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->val.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.v[size_t(i)] = a->val.v[size_t(i)] * b->val.v[size_t(i)];
  return make_node(std::move(out), {a, b}, [a, b](Node& node) {
    const int64_t n = node.val.numel();
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g.v[size_t(i)] += b->val.v[size_t(i)] * node.grad.v[size_t(i)];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g.v[size_t(i)] += a->val.v[size_t(i)] * node.grad.v[size_t(i)];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out(a->val.shape);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.v[size_t(i)] = a->val.v[size_t(i)] / b->val.v[size_t(i)];
  return make_node(std::move(out), {a, b}, [a, b](Node& node) {
    const int64_t n = node.val.numel();
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g.v[size_t(i)] += node.grad.v[size_t(i)] / b->val.v[size_t(i)];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        double bv = b->val.v[size_t(i)];
        g.v[size_t(i)] -= node.grad.v[size_t(i)] * a->val.v[size_t(i)] / (bv * bv);
      }
    }
  });
}

Var scale(const Var& a, double s) {
  return unary_op(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary_op(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp_op(const Var& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_op(const Var& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_op(const Var& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var abs_op(const Var& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var add_bias(const Var& x, const Var& bias) {
  const Shape s = x->val.shape;
  check_contract(bias->val.shape == Shape{1, s.c, 1, 1},
                 "add_bias: bias must be (1,C,1,1), got " + bias->val.shape.str());
  Tensor out = x->val;
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double b = bias->val.v[size_t(c)];
      double* p = out.data() + (int64_t(n) * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += b;
    }
  return make_node(std::move(out), {x, bias}, [x, bias](Node& node) {
    const Shape s = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    if (x->requires_grad) axpy(x->ensure_grad(), node.grad, 1.0);
    if (bias->requires_grad) {
      Tensor& g = bias->ensure_grad();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const double* p = node.grad.data() + (int64_t(n) * s.c + c) * plane;
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += p[i];
          g.v[size_t(c)] += acc;
        }
    }
  });
}

Var mul_channel(const Var& x, const Var& gain) {
  const Shape s = x->val.shape;
  check_contract(gain->val.shape == Shape{s.n, s.c, 1, 1} || gain->val.shape == Shape{1, s.c, 1, 1},
                 "mul_channel: gain must be (N,C,1,1)");
  const bool batched = gain->val.shape.n == s.n;
  Tensor out = x->val;
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double g = gain->val.v[size_t((batched ? n : 0) * s.c + c)];
      double* p = out.data() + (int64_t(n) * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] *= g;
    }
  return make_node(std::move(out), {x, gain}, [x, gain, batched](Node& node) {
    const Shape s = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const size_t gi = size_t((batched ? n : 0) * s.c + c);
        const int64_t base = (int64_t(n) * s.c + c) * plane;
        if (x->requires_grad) {
          Tensor& gx = x->ensure_grad();
          double g = gain->val.v[gi];
          for (int64_t i = 0; i < plane; ++i) gx.v[size_t(base + i)] += g * node.grad.v[size_t(base + i)];
        }
        if (gain->requires_grad) {
          Tensor& gg = gain->ensure_grad();
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i)
            acc += x->val.v[size_t(base + i)] * node.grad.v[size_t(base + i)];
          gg.v[gi] += acc;
        }
      }
  });
}

Var mul_map(const Var& x, const Var& map) {
  const Shape s = x->val.shape;
  check_contract(map->val.shape == Shape{s.n, 1, s.h, s.w}, "mul_map: map must be (N,1,H,W)");
  Tensor out = x->val;
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double* p = out.data() + (int64_t(n) * s.c + c) * plane;
      const double* m = map->val.data() + int64_t(n) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] *= m[i];
    }
  return make_node(std::move(out), {x, map}, [x, map](Node& node) {
    const Shape s = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
      const double* m = map->val.data() + int64_t(n) * plane;
      for (int c = 0; c < s.c; ++c) {
        const int64_t base = (int64_t(n) * s.c + c) * plane;
        if (x->requires_grad) {
          Tensor& gx = x->ensure_grad();
          for (int64_t i = 0; i < plane; ++i) gx.v[size_t(base + i)] += m[i] * node.grad.v[size_t(base + i)];
        }
        if (map->requires_grad) {
          Tensor& gm = map->ensure_grad();
          for (int64_t i = 0; i < plane; ++i)
            gm.v[size_t(int64_t(n) * plane + i)] +=
                x->val.v[size_t(base + i)] * node.grad.v[size_t(base + i)];
        }
      }
    }
  });
}

Var expand_c(const Var& param, Shape target) {
  check_contract(param->val.shape == Shape{1, target.c, 1, 1}, "expand_c: param must be (1,C,1,1)");
  Tensor out(target);
  const int64_t plane = int64_t(target.h) * target.w;
  for (int n = 0; n < target.n; ++n)
    for (int c = 0; c < target.c; ++c) {
      double v = param->val.v[size_t(c)];
      double* p = out.data() + (int64_t(n) * target.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] = v;
    }
  return make_node(std::move(out), {param}, [param](Node& node) {
    if (!param->requires_grad) return;
    Tensor& g = param->ensure_grad();
    const Shape s = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double* p = node.grad.data() + (int64_t(n) * s.c + c) * plane;
        double acc = 0.0;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
        g.v[size_t(c)] += acc;
      }
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double x : a->val.v) acc += x;
  return make_node(Tensor::scalar(acc), {a}, [a](Node& node) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    const double s = node.grad.v[0];
    for (auto& x : g.v) x += s;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / double(a->val.numel())); }

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const int64_t n = a->val.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = a->val.v[size_t(i)] - b->val.v[size_t(i)];
    acc += d * d;
  }
  return make_node(Tensor::scalar(acc / double(n)), {a, b}, [a, b](Node& node) {
    const int64_t n = a->val.numel();
    const double s = 2.0 * node.grad.v[0] / double(n);
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g.v[size_t(i)] += s * (a->val.v[size_t(i)] - b->val.v[size_t(i)]);
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) g.v[size_t(i)] -= s * (a->val.v[size_t(i)] - b->val.v[size_t(i)]);
    }
  });
}

Var concat_c(const std::vector<Var>& xs) {
  check_contract(!xs.empty(), "concat_c: empty input list");
  Shape s = xs[0]->val.shape;
  int ctot = 0;
  for (const auto& x : xs) {
    const Shape& xs_ = x->val.shape;
    check_contract(xs_.n == s.n && xs_.h == s.h && xs_.w == s.w, "concat_c: spatial dims differ");
    ctot += xs_.c;
  }
  Tensor out(Shape{s.n, ctot, s.h, s.w});
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    int co = 0;
    for (const auto& x : xs) {
      const int xc = x->val.shape.c;
      std::copy_n(x->val.data() + int64_t(n) * xc * plane, int64_t(xc) * plane,
                  out.data() + (int64_t(n) * ctot + co) * plane);
      co += xc;
    }
  }
  std::vector<Var> parents = xs;
  return make_node(std::move(out), parents, [parents](Node& node) {
    const Shape s = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
      int co = 0;
      for (const auto& x : parents) {
        const int xc = x->val.shape.c;
        if (x->requires_grad) {
          Tensor& g = x->ensure_grad();
          const double* src = node.grad.data() + (int64_t(n) * s.c + co) * plane;
          double* dst = g.data() + int64_t(n) * xc * plane;
          for (int64_t i = 0; i < int64_t(xc) * plane; ++i) dst[i] += src[i];
        }
        co += xc;
      }
    }
  });
}

Var slice_c(const Var& x, int c0, int c1) {
  const Shape s = x->val.shape;
  check_contract(0 <= c0 && c0 < c1 && c1 <= s.c, "slice_c: bad channel range");
  Tensor out(Shape{s.n, c1 - c0, s.h, s.w});
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x->val.data() + (int64_t(n) * s.c + c0) * plane, int64_t(c1 - c0) * plane,
                out.data() + int64_t(n) * (c1 - c0) * plane);
  return make_node(std::move(out), {x}, [x, c0](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const Shape os = node.val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < os.n; ++n) {
      const double* src = node.grad.data() + int64_t(n) * os.c * plane;
      double* dst = g.data() + (int64_t(n) * s.c + c0) * plane;
      for (int64_t i = 0; i < int64_t(os.c) * plane; ++i) dst[i] += src[i];
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->val.shape;
  Tensor out(Shape{s.n, s.c, 1, 1});
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = x->val.data() + (int64_t(n) * s.c + c) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      out.v[size_t(n * s.c + c)] = acc / double(plane);
    }
  return make_node(std::move(out), {x}, [x](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const double gv = node.grad.v[size_t(n * s.c + c)] / double(plane);
        double* p = g.data() + (int64_t(n) * s.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += gv;
      }
  });
}

Var global_max_pool(const Var& x) {
  const Shape s = x->val.shape;
  Tensor out(Shape{s.n, s.c, 1, 1});
  auto argmax = std::make_shared<std::vector<int64_t>>(size_t(s.n) * s.c);
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = x->val.data() + (int64_t(n) * s.c + c) * plane;
      int64_t best = 0;
      for (int64_t i = 1; i < plane; ++i)
        if (p[i] > p[best]) best = i;
      out.v[size_t(n * s.c + c)] = p[best];
      (*argmax)[size_t(n * s.c + c)] = best;
    }
  return make_node(std::move(out), {x}, [x, argmax](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        g.v[size_t((int64_t(n) * s.c + c) * plane + (*argmax)[size_t(n * s.c + c)])] +=
            node.grad.v[size_t(n * s.c + c)];
  });
}

Var channel_mean_map(const Var& x) {
  const Shape s = x->val.shape;
  Tensor out(Shape{s.n, 1, s.h, s.w});
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (int c = 0; c < s.c; ++c) acc += x->val.v[size_t((int64_t(n) * s.c + c) * plane + i)];
      out.v[size_t(int64_t(n) * plane + i)] = acc / double(s.c);
    }
  return make_node(std::move(out), {x}, [x](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int64_t i = 0; i < plane; ++i) {
        const double gv = node.grad.v[size_t(int64_t(n) * plane + i)] / double(s.c);
        for (int c = 0; c < s.c; ++c) g.v[size_t((int64_t(n) * s.c + c) * plane + i)] += gv;
      }
  });
}

Var channel_max_map(const Var& x) {
  const Shape s = x->val.shape;
  Tensor out(Shape{s.n, 1, s.h, s.w});
  auto argmax = std::make_shared<std::vector<int>>(size_t(s.n) * s.h * s.w);
  const int64_t plane = int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < plane; ++i) {
      int best = 0;
      double bv = x->val.v[size_t(int64_t(n) * s.c * plane + i)];
      for (int c = 1; c < s.c; ++c) {
        double v = x->val.v[size_t((int64_t(n) * s.c + c) * plane + i)];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.v[size_t(int64_t(n) * plane + i)] = bv;
      (*argmax)[size_t(int64_t(n) * plane + i)] = best;
    }
  return make_node(std::move(out), {x}, [x, argmax](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
      for (int64_t i = 0; i < plane; ++i) {
        int c = (*argmax)[size_t(int64_t(n) * plane + i)];
        g.v[size_t((int64_t(n) * s.c + c) * plane + i)] += node.grad.v[size_t(int64_t(n) * plane + i)];
      }
  });
}

Var avg_pool(const Var& x, int factor) {
  const Shape s = x->val.shape;
  check_contract(factor >= 2, "avg_pool: factor must be >= 2");
  check_contract(s.h % factor == 0 && s.w % factor == 0,
                 "avg_pool: dims " + s.str() + " not divisible by " + std::to_string(factor));
  const int oh = s.h / factor, ow = s.w / factor;
  Tensor out(Shape{s.n, s.c, oh, ow});
  const double inv = 1.0 / double(factor * factor);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += x->val.at(n, c, oy * factor + dy, ox * factor + dx);
          out.at(n, c, oy, ox) = acc * inv;
        }
  return make_node(std::move(out), {x}, [x, factor](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape os = node.val.shape;
    const double inv = 1.0 / double(factor * factor);
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int oy = 0; oy < os.h; ++oy)
          for (int ox = 0; ox < os.w; ++ox) {
            const double gv = node.grad.at(n, c, oy, ox) * inv;
            for (int dy = 0; dy < factor; ++dy)
              for (int dx = 0; dx < factor; ++dx)
                g.at(n, c, oy * factor + dy, ox * factor + dx) += gv;
          }
  });
}

namespace {

// Precomputed 1-D interpolation taps for half-pixel bilinear resizing.
struct ResizeTaps {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1 - w1
};

ResizeTaps make_resize_taps(int in_size, int out_size, double factor) {
  ResizeTaps t;
  t.i0.resize(size_t(out_size));
  t.i1.resize(size_t(out_size));
  t.w1.resize(size_t(out_size));
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::min(std::max(src, 0.0), double(in_size - 1));
    int i0 = int(std::floor(src));
    int i1 = std::min(i0 + 1, in_size - 1);
    t.i0[size_t(o)] = i0;
    t.i1[size_t(o)] = i1;
    t.w1[size_t(o)] = src - double(i0);
  }
  return t;
}

}  // namespace

Tensor upsample_bilinear_value(const Tensor& x, int factor) {
  const Shape s = x.shape;
  const int oh = s.h * factor, ow = s.w * factor;
  ResizeTaps ty = make_resize_taps(s.h, oh, double(factor));
  ResizeTaps tx = make_resize_taps(s.w, ow, double(factor));
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = ty.i0[size_t(oy)], y1 = ty.i1[size_t(oy)];
        const double wy = ty.w1[size_t(oy)];
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = tx.i0[size_t(ox)], x1 = tx.i1[size_t(ox)];
          const double wx = tx.w1[size_t(ox)];
          out.at(n, c, oy, ox) = (1 - wy) * ((1 - wx) * x.at(n, c, y0, x0) + wx * x.at(n, c, y0, x1)) +
                                 wy * ((1 - wx) * x.at(n, c, y1, x0) + wx * x.at(n, c, y1, x1));
        }
      }
  return out;
}

Var upsample_bilinear(const Var& x, int factor) {
  Tensor out = upsample_bilinear_value(x->val, factor);
  return make_node(std::move(out), {x}, [x, factor](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const Shape os = node.val.shape;
    ResizeTaps ty = make_resize_taps(s.h, os.h, double(factor));
    ResizeTaps tx = make_resize_taps(s.w, os.w, double(factor));
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int oy = 0; oy < os.h; ++oy) {
          const int y0 = ty.i0[size_t(oy)], y1 = ty.i1[size_t(oy)];
          const double wy = ty.w1[size_t(oy)];
          for (int ox = 0; ox < os.w; ++ox) {
            const int x0 = tx.i0[size_t(ox)], x1 = tx.i1[size_t(ox)];
            const double wx = tx.w1[size_t(ox)];
            const double gv = node.grad.at(n, c, oy, ox);
            g.at(n, c, y0, x0) += (1 - wy) * (1 - wx) * gv;
            g.at(n, c, y0, x1) += (1 - wy) * wx * gv;
            g.at(n, c, y1, x0) += wy * (1 - wx) * gv;
            g.at(n, c, y1, x1) += wy * wx * gv;
          }
        }
  });
}

Var reflect_pad(const Var& x, int right, int bottom) {
  const Shape s = x->val.shape;
  check_contract(right < s.w && bottom < s.h,
                 "reflect_pad: pad must be smaller than the padded dimension");
  if (right == 0 && bottom == 0) return x;
  const int oh = s.h + bottom, ow = s.w + right;
  auto src_y = [&](int y) { return y < s.h ? y : 2 * s.h - 2 - y; };
  auto src_x = [&](int xx) { return xx < s.w ? xx : 2 * s.w - 2 - xx; };
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) out.at(n, c, y, xx) = x->val.at(n, c, src_y(y), src_x(xx));
  return make_node(std::move(out), {x}, [x](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const Shape os = node.val.shape;
    auto src_y = [&](int y) { return y < s.h ? y : 2 * s.h - 2 - y; };
    auto src_x = [&](int xx) { return xx < s.w ? xx : 2 * s.w - 2 - xx; };
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx)
            g.at(n, c, src_y(y), src_x(xx)) += node.grad.at(n, c, y, xx);
  });
}


Var replicate_pad(const Var& x, int left, int right, int top, int bottom) {
  if (left == 0 && right == 0 && top == 0 && bottom == 0) return x;
  const Shape s = x->val.shape;
  const int oh = s.h + top + bottom, ow = s.w + left + right;
  auto src_y = [&](int y) { return std::min(std::max(y - top, 0), s.h - 1); };
  auto src_x = [&](int xx) { return std::min(std::max(xx - left, 0), s.w - 1); };
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) out.at(n, c, y, xx) = x->val.at(n, c, src_y(y), src_x(xx));
  return make_node(std::move(out), {x}, [x, left, top](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape s = x->val.shape;
    const Shape os = node.val.shape;
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) {
            const int sy = std::min(std::max(y - top, 0), s.h - 1);
            const int sx = std::min(std::max(xx - left, 0), s.w - 1);
            g.at(n, c, sy, sx) += node.grad.at(n, c, y, xx);
          }
  });
}

Var crop(const Var& x, int height, int width) {
  const Shape s = x->val.shape;
  check_contract(height <= s.h && width <= s.w, "crop: target larger than input");
  if (height == s.h && width == s.w) return x;
  Tensor out(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y)
        std::copy_n(&x->val.at(n, c, y, 0), width, &out.at(n, c, y, 0));
  return make_node(std::move(out), {x}, [x](Node& node) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    const Shape os = node.val.shape;
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int y = 0; y < os.h; ++y)
          for (int xx = 0; xx < os.w; ++xx) g.at(n, c, y, xx) += node.grad.at(n, c, y, xx);
  });
}

Var quantize_ste(const Var& y, QuantMode mode, Rng* rng) {
  Tensor out = y->val;
  if (mode == QuantMode::Round) {
    for (auto& x : out.v) x = std::round(x);
  } else {
    check_contract(rng != nullptr, "quantize_ste: noise mode needs an Rng");
    for (auto& x : out.v) x += rng->uniform() - 0.5;
  }
  // Pass-through gradient in both modes.
  return make_node(std::move(out), {y}, [y](Node& node) {
    if (y->requires_grad) axpy(y->ensure_grad(), node.grad, 1.0);
  });
}

}  // namespace cvc
