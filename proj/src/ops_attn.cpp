#include <Eigen/Dense>
#include <cmath>

#include "cvc/ops.hpp"

namespace cvc {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

constexpr double kNormEps = 1e-12;

// Reductions below are written as plain serial loops on purpose: Eigen's
// vectorized reductions order their accumulation by pointer alignment, which
// makes results allocation-dependent. GEMM (packed) is deterministic and
// stays on Eigen.

double row_sq_norm(const double* p, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += p[i] * p[i];
  return acc;
}

double dot(const double* a, const double* b, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

MatRM l2_normalize_rows(const MapCM& m, Eigen::VectorXd* norms) {
  MatRM out(m.rows(), m.cols());
  norms->resize(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = std::sqrt(row_sq_norm(m.row(r).data(), m.cols()) + kNormEps);
    (*norms)(r) = n;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r, c) = m(r, c) / n;
  }
  return out;
}

MatRM softmax_rows(const MatRM& s) {
  MatRM a(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double mx = s(r, 0);
    for (Eigen::Index c = 1; c < s.cols(); ++c) mx = std::max(mx, s(r, c));
    double z = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      a(r, c) = std::exp(s(r, c) - mx);
      z += a(r, c);
    }
    for (Eigen::Index c = 0; c < s.cols(); ++c) a(r, c) /= z;
  }
  return a;
}

}  // namespace

Var layer_norm_c(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape s = x->val.shape;
  check_contract(gamma->val.shape == Shape{1, s.c, 1, 1} && beta->val.shape == Shape{1, s.c, 1, 1},
                 "layer_norm_c: affine params must be (1,C,1,1)");
  const int64_t plane = int64_t(s.h) * s.w;
  Tensor out(s);
  auto inv_std = std::make_shared<Tensor>(Shape{s.n, 1, s.h, s.w});
  auto xhat = std::make_shared<Tensor>(s);
  for (int n = 0; n < s.n; ++n)
    for (int64_t i = 0; i < plane; ++i) {
      double mu = 0.0;
      for (int c = 0; c < s.c; ++c) mu += x->val.v[size_t((int64_t(n) * s.c + c) * plane + i)];
      mu /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        double d = x->val.v[size_t((int64_t(n) * s.c + c) * plane + i)] - mu;
        var += d * d;
      }
      var /= s.c;
      const double istd = 1.0 / std::sqrt(var + eps);
      inv_std->v[size_t(int64_t(n) * plane + i)] = istd;
      for (int c = 0; c < s.c; ++c) {
        const size_t idx = size_t((int64_t(n) * s.c + c) * plane + i);
        const double h = (x->val.v[idx] - mu) * istd;
        xhat->v[idx] = h;
        out.v[idx] = gamma->val.v[size_t(c)] * h + beta->val.v[size_t(c)];
      }
    }
  return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, inv_std, xhat](Node& node) {
    const Shape s = x->val.shape;
    const int64_t plane = int64_t(s.h) * s.w;
    std::vector<double> gh(size_t(s.c), 0.0);
    for (int n = 0; n < s.n; ++n)
      for (int64_t i = 0; i < plane; ++i) {
        double gmean = 0.0, gxmean = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const size_t idx = size_t((int64_t(n) * s.c + c) * plane + i);
          const double gy = node.grad.v[idx];
          gh[size_t(c)] = gy * gamma->val.v[size_t(c)];
          gmean += gh[size_t(c)];
          gxmean += gh[size_t(c)] * xhat->v[idx];
          if (gamma->requires_grad) gamma->ensure_grad().v[size_t(c)] += gy * xhat->v[idx];
          if (beta->requires_grad) beta->ensure_grad().v[size_t(c)] += gy;
        }
        if (!x->requires_grad) continue;
        gmean /= s.c;
        gxmean /= s.c;
        const double istd = inv_std->v[size_t(int64_t(n) * plane + i)];
        Tensor& gx = x->ensure_grad();
        for (int c = 0; c < s.c; ++c) {
          const size_t idx = size_t((int64_t(n) * s.c + c) * plane + i);
          gx.v[idx] += (gh[size_t(c)] - gmean - xhat->v[idx] * gxmean) * istd;
        }
      }
  });
}

Var channel_cross_attention(const Var& q, const Var& k, const Var& v, const Var& tau, int heads) {
  const Shape s = q->val.shape;
  check_contract(s.n == 1, "channel_cross_attention: batch must be 1");
  check_contract(k->val.shape == s && v->val.shape == s, "channel_cross_attention: Q/K/V dims differ");
  check_contract(s.c % heads == 0, "channel_cross_attention: channels not divisible by heads");
  check_contract(tau->val.shape == Shape{1, heads, 1, 1}, "channel_cross_attention: tau must be (1,heads,1,1)");
  const int dh = s.c / heads;
  const int64_t tokens = int64_t(s.h) * s.w;

  Tensor out(s);
  auto attn = std::make_shared<std::vector<MatRM>>();  // per-head softmax maps, kept for backward
  attn->reserve(size_t(heads));
  for (int hd = 0; hd < heads; ++hd) {
    MapCM qh(q->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
    MapCM kh(k->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
    MapCM vh(v->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
    Eigen::VectorXd qn_norm, kn_norm;
    MatRM qn = l2_normalize_rows(qh, &qn_norm);
    MatRM kn = l2_normalize_rows(kh, &kn_norm);
    MatRM scores(dh, dh);
    scores.noalias() = qn * kn.transpose();
    scores *= tau->val.v[size_t(hd)];
    MatRM a = softmax_rows(scores);
    MapM(out.data() + int64_t(hd) * dh * tokens, dh, tokens).noalias() = a * vh;
    attn->push_back(std::move(a));
  }

  return make_node(std::move(out), {q, k, v, tau}, [q, k, v, tau, heads, attn](Node& node) {
    const Shape s = q->val.shape;
    const int dh = s.c / heads;
    const int64_t tokens = int64_t(s.h) * s.w;
    for (int hd = 0; hd < heads; ++hd) {
      MapCM qh(q->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
      MapCM kh(k->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
      MapCM vh(v->val.data() + int64_t(hd) * dh * tokens, dh, tokens);
      MapCM go(node.grad.data() + int64_t(hd) * dh * tokens, dh, tokens);
      const MatRM& a = (*attn)[size_t(hd)];
      const double t = tau->val.v[size_t(hd)];

      Eigen::VectorXd qn_norm, kn_norm;
      MatRM qn = l2_normalize_rows(qh, &qn_norm);
      MatRM kn = l2_normalize_rows(kh, &kn_norm);

      if (v->requires_grad) {
        MapM gv(v->ensure_grad().data() + int64_t(hd) * dh * tokens, dh, tokens);
        gv.noalias() += a.transpose() * go;
      }

      MatRM da(dh, dh);
      da.noalias() = go * vh.transpose();
      MatRM ds(dh, dh);
      for (int r = 0; r < dh; ++r) {
        const double d = dot(a.row(r).data(), da.row(r).data(), dh);
        for (int c = 0; c < dh; ++c) ds(r, c) = a(r, c) * (da(r, c) - d);
      }

      if (tau->requires_grad) {
        double acc = 0.0;
        MatRM m(dh, dh);
        m.noalias() = qn * kn.transpose();
        for (int r = 0; r < dh; ++r)
          for (int c = 0; c < dh; ++c) acc += ds(r, c) * m(r, c);
        tau->ensure_grad().v[size_t(hd)] += acc;
      }

      MatRM dqn(dh, tokens), dkn(dh, tokens);
      dqn.noalias() = t * ds * kn;
      dkn.noalias() = t * ds.transpose() * qn;
      if (q->requires_grad) {
        MapM gq(q->ensure_grad().data() + int64_t(hd) * dh * tokens, dh, tokens);
        for (int r = 0; r < dh; ++r) {
          const double n = qn_norm(r);
          const double d = dot(qn.row(r).data(), dqn.row(r).data(), tokens);
          for (int64_t c = 0; c < tokens; ++c) gq(r, c) += (dqn(r, c) - qn(r, c) * d) / n;
        }
      }
      if (k->requires_grad) {
        MapM gk(k->ensure_grad().data() + int64_t(hd) * dh * tokens, dh, tokens);
        for (int r = 0; r < dh; ++r) {
          const double n = kn_norm(r);
          const double d = dot(kn.row(r).data(), dkn.row(r).data(), tokens);
          for (int64_t c = 0; c < tokens; ++c) gk(r, c) += (dkn(r, c) - kn(r, c) * d) / n;
        }
      }
    }
  });
}

}  // namespace cvc
