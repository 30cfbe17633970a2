#pragma once

// Neural-network primitives on top of the autodiff tape: softmax, layer
// normalization, rotary position encoding, streaming-softmax attention,
// and the per-row optimal scale used by scale-invariant losses.

#include <algorithm>
#include <cmath>
#include <limits>

#include "gaitmae/tensor.hpp"

namespace gaitmae {

// Softmax over the last axis.
inline Tensor softmax_lastdim(const Tensor& a) {
  if (a.ndim() < 1) throw std::invalid_argument("softmax: rank must be >= 1");
  const int dim = a.dim(-1);
  if (dim == 0) throw std::invalid_argument("softmax: empty last axis");
  const std::size_t rows = a.numel() / static_cast<std::size_t>(dim);
  std::vector<double> value(a.numel());
  const double* pa = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = pa + r * static_cast<std::size_t>(dim);
    double* y = value.data() + r * static_cast<std::size_t>(dim);
    double mx = x[0];
    for (int k = 1; k < dim; ++k) mx = std::max(mx, x[k]);
    double denom = 0.0;
    for (int k = 0; k < dim; ++k) {
      y[k] = std::exp(x[k] - mx);
      denom += y[k];
    }
    const double inv = 1.0 / denom;
    for (int k = 0; k < dim; ++k) y[k] *= inv;
  }

  NodePtr na = a.node();
  std::vector<double> y_copy = value;
  return autodiff::make_result(
      a.shape(), std::move(value), {na}, [na, y_copy, rows, dim](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = y_copy.data() + r * static_cast<std::size_t>(dim);
          const double* go = g + r * static_cast<std::size_t>(dim);
          double dot = 0.0;
          for (int k = 0; k < dim; ++k) dot += go[k] * y[k];
          double* gi = ga + r * static_cast<std::size_t>(dim);
          for (int k = 0; k < dim; ++k) gi[k] += y[k] * (go[k] - dot);
        }
      });
}

// Layer normalization over the last axis with affine parameters.
// y = (x - mean) / sqrt(var + eps) * gamma + beta, var is the biased variance.
inline Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                        double eps = 1e-8) {
  const int dim = a.dim(-1);
  if (gamma.ndim() != 1 || gamma.dim(0) != dim || beta.ndim() != 1 || beta.dim(0) != dim)
    throw std::invalid_argument("layernorm: gamma/beta must be vectors of the last dim");
  const std::size_t rows = a.numel() / static_cast<std::size_t>(dim);

  std::vector<double> value(a.numel());
  std::vector<double> xhat(a.numel());
  std::vector<double> inv_std(rows);
  const double* pa = a.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = pa + r * static_cast<std::size_t>(dim);
    double mean = 0.0;
    for (int k = 0; k < dim; ++k) mean += x[k];
    mean /= dim;
    double var = 0.0;
    for (int k = 0; k < dim; ++k) var += (x[k] - mean) * (x[k] - mean);
    var /= dim;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* xh = xhat.data() + r * static_cast<std::size_t>(dim);
    double* y = value.data() + r * static_cast<std::size_t>(dim);
    for (int k = 0; k < dim; ++k) {
      xh[k] = (x[k] - mean) * is;
      y[k] = xh[k] * pg[k] + pb[k];
    }
  }

  NodePtr na = a.node(), ng = gamma.node(), nb = beta.node();
  return autodiff::make_result(
      a.shape(), std::move(value), {na, ng, nb},
      [na, ng, nb, xhat, inv_std, rows, dim](TensorNode& out) {
        const double* g = out.grad.data();
        const double* pg = ng->value.data();
        if (ng->requires_grad) ng->ensure_grad();
        if (nb->requires_grad) nb->ensure_grad();
        if (na->requires_grad) na->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = g + r * static_cast<std::size_t>(dim);
          const double* xh = xhat.data() + r * static_cast<std::size_t>(dim);
          if (ng->requires_grad || nb->requires_grad) {
            for (int k = 0; k < dim; ++k) {
              if (ng->requires_grad) ng->grad[static_cast<std::size_t>(k)] += go[k] * xh[k];
              if (nb->requires_grad) nb->grad[static_cast<std::size_t>(k)] += go[k];
            }
          }
          if (na->requires_grad) {
            // dxhat = go * gamma; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int k = 0; k < dim; ++k) {
              const double dxh = go[k] * pg[k];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[k];
            }
            mean_dxh /= dim;
            mean_dxh_xh /= dim;
            double* gi = na->grad.data() + r * static_cast<std::size_t>(dim);
            for (int k = 0; k < dim; ++k) {
              const double dxh = go[k] * pg[k];
              gi[k] += (dxh - mean_dxh - xh[k] * mean_dxh_xh) * inv_std[r];
            }
          }
        }
      });
}

// Rotary position encoding over the last axis, positions along the
// second-to-last axis. Channel pair (2i, 2i+1) rotates by angle
// (p + pos_offset) * base^(-2i/dim). The rotation is orthogonal, so the
// backward pass is the inverse rotation of the incoming gradient.
inline Tensor rope_rotate(const Tensor& a, double pos_offset = 0.0,
                          double base = 10000.0) {
  if (a.ndim() < 2) throw std::invalid_argument("rope: rank must be >= 2");
  const int dim = a.dim(-1);
  const int pos_n = a.dim(-2);
  if (dim % 2 != 0) throw std::invalid_argument("rope: last dim must be even");
  const std::size_t batch =
      a.numel() / (static_cast<std::size_t>(pos_n) * static_cast<std::size_t>(dim));

  const int half = dim / 2;
  std::vector<double> cos_t(static_cast<std::size_t>(pos_n) * static_cast<std::size_t>(half));
  std::vector<double> sin_t(cos_t.size());
  for (int p = 0; p < pos_n; ++p)
    for (int i = 0; i < half; ++i) {
      const double theta =
          (static_cast<double>(p) + pos_offset) *
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      cos_t[static_cast<std::size_t>(p * half + i)] = std::cos(theta);
      sin_t[static_cast<std::size_t>(p * half + i)] = std::sin(theta);
    }

  std::vector<double> value(a.numel());
  const double* pa = a.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (int p = 0; p < pos_n; ++p) {
      const std::size_t row =
          (b * static_cast<std::size_t>(pos_n) + static_cast<std::size_t>(p)) *
          static_cast<std::size_t>(dim);
      for (int i = 0; i < half; ++i) {
        const double c = cos_t[static_cast<std::size_t>(p * half + i)];
        const double s = sin_t[static_cast<std::size_t>(p * half + i)];
        const double x0 = pa[row + static_cast<std::size_t>(2 * i)];
        const double x1 = pa[row + static_cast<std::size_t>(2 * i + 1)];
        value[row + static_cast<std::size_t>(2 * i)] = c * x0 - s * x1;
        value[row + static_cast<std::size_t>(2 * i + 1)] = s * x0 + c * x1;
      }
    }

  NodePtr na = a.node();
  return autodiff::make_result(
      a.shape(), std::move(value), {na},
      [na, cos_t, sin_t, batch, pos_n, half, dim](TensorNode& out) {
        if (!na->requires_grad) return;
        na->ensure_grad();
        double* ga = na->grad.data();
        const double* g = out.grad.data();
        for (std::size_t b = 0; b < batch; ++b)
          for (int p = 0; p < pos_n; ++p) {
            const std::size_t row =
                (b * static_cast<std::size_t>(pos_n) + static_cast<std::size_t>(p)) *
                static_cast<std::size_t>(dim);
            for (int i = 0; i < half; ++i) {
              const double c = cos_t[static_cast<std::size_t>(p * half + i)];
              const double s = sin_t[static_cast<std::size_t>(p * half + i)];
              const double g0 = g[row + static_cast<std::size_t>(2 * i)];
              const double g1 = g[row + static_cast<std::size_t>(2 * i + 1)];
              ga[row + static_cast<std::size_t>(2 * i)] += c * g0 + s * g1;
              ga[row + static_cast<std::size_t>(2 * i + 1)] += -s * g0 + c * g1;
            }
          }
      });
}

// Scaled dot-product attention with a streaming softmax.
//
// q, k, v: [B, N, dh] (B folds batch and heads). Queries are processed in
// blocks of `query_chunk` rows and keys in fixed blocks of 64 with a running
// max/denominator, so memory stays O(chunk * N) and the result is bitwise
// identical for every query_chunk value: each output row consumes the same
// key blocks in the same order regardless of how query rows are grouped.
// The forward saves the output and the per-row logsumexp; the backward
// recomputes probabilities blockwise from those.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int query_chunk = 0) {
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3)
    throw std::invalid_argument("attention: q/k/v must be rank 3");
  const int B = q.dim(0), Nq = q.dim(1), dh = q.dim(2);
  const int Nk = k.dim(1);
  if (k.dim(0) != B || v.dim(0) != B || v.dim(1) != Nk || k.dim(2) != dh ||
      v.dim(2) != dh)
    throw std::invalid_argument("attention: shape mismatch");
  if (query_chunk <= 0) query_chunk = Nq;
  constexpr int kKeyBlock = 64;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> out_v(q.numel());
  std::vector<double> lse(static_cast<std::size_t>(B) * static_cast<std::size_t>(Nq));

  const double* pq = q.data();
  const double* pk = k.data();
  const double* pv = v.data();
  std::vector<double> scores;  // chunk x key-block scratch
  std::vector<double> run_max, run_den;
  for (int b = 0; b < B; ++b) {
    const double* qb = pq + static_cast<std::size_t>(b) * Nq * dh;
    const double* kb = pk + static_cast<std::size_t>(b) * Nk * dh;
    const double* vb = pv + static_cast<std::size_t>(b) * Nk * dh;
    double* ob = out_v.data() + static_cast<std::size_t>(b) * Nq * dh;
    double* lb = lse.data() + static_cast<std::size_t>(b) * Nq;
    for (int q0 = 0; q0 < Nq; q0 += query_chunk) {
      const int qn = std::min(query_chunk, Nq - q0);
      run_max.assign(static_cast<std::size_t>(qn), -std::numeric_limits<double>::infinity());
      run_den.assign(static_cast<std::size_t>(qn), 0.0);
      for (int i = 0; i < qn * dh; ++i) ob[q0 * dh + i] = 0.0;
      for (int k0 = 0; k0 < Nk; k0 += kKeyBlock) {
        const int kn = std::min(kKeyBlock, Nk - k0);
        scores.assign(static_cast<std::size_t>(qn) * static_cast<std::size_t>(kn), 0.0);
        autodiff::mm_nt(qb + static_cast<std::size_t>(q0) * dh,
                        kb + static_cast<std::size_t>(k0) * dh, scores.data(), qn, dh,
                        kn, false);
        for (int r = 0; r < qn; ++r) {
          double* srow = scores.data() + static_cast<std::size_t>(r) * kn;
          double blk_max = -std::numeric_limits<double>::infinity();
          for (int c = 0; c < kn; ++c) {
            srow[c] *= scale;
            blk_max = std::max(blk_max, srow[c]);
          }
          const double new_max = std::max(run_max[static_cast<std::size_t>(r)], blk_max);
          const double correction =
              run_den[static_cast<std::size_t>(r)] == 0.0
                  ? 0.0
                  : std::exp(run_max[static_cast<std::size_t>(r)] - new_max);
          double* orow = ob + static_cast<std::size_t>(q0 + r) * dh;
          if (correction != 1.0)
            for (int d = 0; d < dh; ++d) orow[d] *= correction;
          run_den[static_cast<std::size_t>(r)] *= correction;
          for (int c = 0; c < kn; ++c) {
            const double p = std::exp(srow[c] - new_max);
            run_den[static_cast<std::size_t>(r)] += p;
            const double* vrow = vb + static_cast<std::size_t>(k0 + c) * dh;
            for (int d = 0; d < dh; ++d) orow[d] += p * vrow[d];
          }
          run_max[static_cast<std::size_t>(r)] = new_max;
        }
      }
      for (int r = 0; r < qn; ++r) {
        const double inv = 1.0 / run_den[static_cast<std::size_t>(r)];
        double* orow = ob + static_cast<std::size_t>(q0 + r) * dh;
        for (int d = 0; d < dh; ++d) orow[d] *= inv;
        lb[q0 + r] = run_max[static_cast<std::size_t>(r)] +
                     std::log(run_den[static_cast<std::size_t>(r)]);
      }
    }
  }

  NodePtr nq = q.node(), nk = k.node(), nv = v.node();
  std::vector<double> out_copy = out_v;
  return autodiff::make_result(
      q.shape(), std::move(out_v), {nq, nk, nv},
      [nq, nk, nv, out_copy, lse, B, Nq, Nk, dh, scale](TensorNode& out) {
        const double* g = out.grad.data();
        const double* pq = nq->value.data();
        const double* pk = nk->value.data();
        const double* pv = nv->value.data();
        double* gq = nullptr;
        double* gk = nullptr;
        double* gv = nullptr;
        if (nq->requires_grad) {
          nq->ensure_grad();
          gq = nq->grad.data();
        }
        if (nk->requires_grad) {
          nk->ensure_grad();
          gk = nk->grad.data();
        }
        if (nv->requires_grad) {
          nv->ensure_grad();
          gv = nv->grad.data();
        }
        // D_r = dot(dO_r, O_r); then per key block:
        //   P = exp(S - lse), dV += P^T dO, dP = dO V^T,
        //   dS = P * (dP - D), dQ += dS K, dK += dS^T Q.
        std::vector<double> srow(static_cast<std::size_t>(Nk));
        for (int b = 0; b < B; ++b) {
          const double* qb = pq + static_cast<std::size_t>(b) * Nq * dh;
          const double* kb = pk + static_cast<std::size_t>(b) * Nk * dh;
          const double* vb = pv + static_cast<std::size_t>(b) * Nk * dh;
          const double* gb = g + static_cast<std::size_t>(b) * Nq * dh;
          const double* ob = out_copy.data() + static_cast<std::size_t>(b) * Nq * dh;
          const double* lb = lse.data() + static_cast<std::size_t>(b) * Nq;
          for (int r = 0; r < Nq; ++r) {
            const double* qrow = qb + static_cast<std::size_t>(r) * dh;
            const double* grow = gb + static_cast<std::size_t>(r) * dh;
            const double* orow = ob + static_cast<std::size_t>(r) * dh;
            double D = 0.0;
            for (int d = 0; d < dh; ++d) D += grow[d] * orow[d];
            for (int c = 0; c < Nk; ++c) {
              const double* krow = kb + static_cast<std::size_t>(c) * dh;
              double s = 0.0;
              for (int d = 0; d < dh; ++d) s += qrow[d] * krow[d];
              srow[static_cast<std::size_t>(c)] = s * scale;
            }
            for (int c = 0; c < Nk; ++c) {
              const double p = std::exp(srow[static_cast<std::size_t>(c)] - lb[r]);
              const double* vrow = vb + static_cast<std::size_t>(c) * dh;
              double dp = 0.0;
              for (int d = 0; d < dh; ++d) dp += grow[d] * vrow[d];
              const double ds = p * (dp - D) * scale;
              if (gv) {
                double* gvrow = gv + (static_cast<std::size_t>(b) * Nk +
                                      static_cast<std::size_t>(c)) *
                                         dh;
                for (int d = 0; d < dh; ++d) gvrow[d] += p * grow[d];
              }
              if (gq) {
                const double* krow = kb + static_cast<std::size_t>(c) * dh;
                double* gqrow = gq + (static_cast<std::size_t>(b) * Nq +
                                      static_cast<std::size_t>(r)) *
                                         dh;
                for (int d = 0; d < dh; ++d) gqrow[d] += ds * krow[d];
              }
              if (gk) {
                double* gkrow = gk + (static_cast<std::size_t>(b) * Nk +
                                      static_cast<std::size_t>(c)) *
                                         dh;
                for (int d = 0; d < dh; ++d) gkrow[d] += ds * qrow[d];
              }
            }
          }
        }
      });
}

// Per-row least-squares scale: rows are the first axis, the remaining axes
// are flattened. Returns s with shape [rows], where s_r minimizes
// ||s_r * pred_r - target_r||^2, i.e. s_r = <pred_r, target_r> / <pred_r, pred_r>.
// Rows with (near-)zero prediction norm get s_r = 1 with zero gradient.
inline Tensor row_optimal_scale(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("row_optimal_scale: shape mismatch");
  if (pred.ndim() < 1) throw std::invalid_argument("row_optimal_scale: rank must be >= 1");
  const int rows = pred.dim(0);
  const std::size_t width = pred.numel() / static_cast<std::size_t>(rows);
  constexpr double kTiny = 1e-30;

  std::vector<double> s(static_cast<std::size_t>(rows));
  std::vector<double> dots(static_cast<std::size_t>(rows));
  std::vector<double> norms(static_cast<std::size_t>(rows));
  const double* pp = pred.data();
  const double* pt = target.data();
  for (int r = 0; r < rows; ++r) {
    double pt_dot = 0.0, pp_dot = 0.0;
    const double* p = pp + static_cast<std::size_t>(r) * width;
    const double* t = pt + static_cast<std::size_t>(r) * width;
    for (std::size_t i = 0; i < width; ++i) {
      pt_dot += p[i] * t[i];
      pp_dot += p[i] * p[i];
    }
    dots[static_cast<std::size_t>(r)] = pt_dot;
    norms[static_cast<std::size_t>(r)] = pp_dot;
    s[static_cast<std::size_t>(r)] = pp_dot < kTiny ? 1.0 : pt_dot / pp_dot;
  }

  NodePtr np = pred.node(), nt = target.node();
  return autodiff::make_result(
      {rows}, std::move(s), {np, nt},
      [np, nt, dots, norms, rows, width, kTiny](TensorNode& out) {
        const double* g = out.grad.data();
        const double* pp = np->value.data();
        const double* pt = nt->value.data();
        if (np->requires_grad) np->ensure_grad();
        if (nt->requires_grad) nt->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          const double B = norms[static_cast<std::size_t>(r)];
          if (B < kTiny) continue;
          const double A = dots[static_cast<std::size_t>(r)];
          const double gr = g[static_cast<std::size_t>(r)];
          const double* p = pp + static_cast<std::size_t>(r) * width;
          const double* t = pt + static_cast<std::size_t>(r) * width;
          if (np->requires_grad) {
            double* gp = np->grad.data() + static_cast<std::size_t>(r) * width;
            for (std::size_t i = 0; i < width; ++i)
              gp[i] += gr * (t[i] * B - 2.0 * p[i] * A) / (B * B);
          }
          if (nt->requires_grad) {
            double* gt = nt->grad.data() + static_cast<std::size_t>(r) * width;
            for (std::size_t i = 0; i < width; ++i) gt[i] += gr * p[i] / B;
          }
        }
      });
}

}  // namespace gaitmae
