#pragma once

#include <cmath>
#include <cstring>

#include "lgvi/autograd.hpp"

namespace lgvi {

// Spatial ops use NCHW activations throughout: x [N, C, H, W].

namespace detail {

template <class S>
void im2col(const S* x, int64_t N, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW, S* col) {
  // col [C*kh*kw, N*OH*OW]
  const int64_t cols = N * OH * OW;
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        S* dst = col + ((c * kh + ky) * kw + kx) * cols;
        for (int64_t n = 0; n < N; ++n) {
          const S* xc = x + (n * C + c) * H * W;
          for (int64_t oh = 0; oh < OH; ++oh) {
            int64_t iy = oh * stride - pad + ky;
            S* drow = dst + (n * OH + oh) * OW;
            if (iy < 0 || iy >= H) {
              std::memset(drow, 0, sizeof(S) * OW);
              continue;
            }
            if (stride == 1) {
              // shifted contiguous row: zero the clipped edges, memcpy the rest
              int64_t shift = kx - pad;  // ix = ow + shift
              int64_t lo = std::max<int64_t>(0, -shift);
              int64_t hi = std::min<int64_t>(OW, W - shift);
              if (lo > 0) std::memset(drow, 0, sizeof(S) * lo);
              if (hi > lo) std::memcpy(drow + lo, xc + iy * W + lo + shift, sizeof(S) * (hi - lo));
              if (hi < OW) std::memset(drow + hi, 0, sizeof(S) * (OW - hi));
            } else {
              for (int64_t ow = 0; ow < OW; ++ow) {
                int64_t ix = ow * stride - pad + kx;
                drow[ow] = (ix >= 0 && ix < W) ? xc[iy * W + ix] : S(0);
              }
            }
          }
        }
      }
    }
  }
}

template <class S>
void col2im_acc(const S* col, int64_t N, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t OH, int64_t OW, S* gx) {
  const int64_t cols = N * OH * OW;
  // threads split on c: each channel of gx is written by exactly one thread
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const S* src = col + ((c * kh + ky) * kw + kx) * cols;
        for (int64_t n = 0; n < N; ++n) {
          S* xc = gx + (n * C + c) * H * W;
          for (int64_t oh = 0; oh < OH; ++oh) {
            int64_t iy = oh * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const S* srow = src + (n * OH + oh) * OW;
            for (int64_t ow = 0; ow < OW; ++ow) {
              int64_t ix = ow * stride - pad + kx;
              if (ix >= 0 && ix < W) xc[iy * W + ix] += srow[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, x [N,C,H,W], w [O,C,kh,kw], optional bias [O].
// 1x1/stride-1 convolutions skip im2col entirely; for the general case the
// column matrix is kept alive for the backward pass instead of recomputed.
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int64_t stride = 1,
              int64_t pad = 1) {
  const Shape& sx = x->value.shape;
  const Shape& sw = w->value.shape;
  if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1])
    throw std::invalid_argument("conv2d: shapes " + shape_str(sx) + " w " + shape_str(sw));
  int64_t N = sx[0], C = sx[1], H = sx[2], W = sx[3];
  int64_t O = sw[0], kh = sw[2], kw = sw[3];
  int64_t OH = (H + 2 * pad - kh) / stride + 1;
  int64_t OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: empty output");
  const int64_t K = C * kh * kw, P = OH * OW, cols = N * P;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  Tensor<S> y({N, O, OH, OW});
  auto col = std::make_shared<Tensor<S>>();
  if (pointwise) {
    for (int64_t n = 0; n < N; ++n)
      gemm(false, false, O, P, C, S(1), w->value.ptr(), C, x->value.ptr() + n * C * P, P, S(0),
           y.ptr() + n * O * P, P);
  } else {
    *col = Tensor<S>({K, cols});
    detail::im2col(x->value.ptr(), N, C, H, W, kh, kw, stride, pad, OH, OW, col->ptr());
    Tensor<S> yall({O, cols});
    gemm(false, false, O, cols, K, S(1), w->value.ptr(), K, col->ptr(), cols, S(0), yall.ptr(),
         cols);
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o)
        std::memcpy(y.ptr() + (n * O + o) * P, yall.ptr() + o * cols + n * P, sizeof(S) * P);
  }
  if (bias) {
    const S* pb = bias->value.ptr();
    S* py = y.ptr();
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o) {
        S b = pb[o];
        S* dst = py + (n * O + o) * P;
        for (int64_t p = 0; p < P; ++p) dst[p] += b;
      }
  }

  std::vector<Var<S>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op<S>(std::move(y), std::move(parents),
                    [x, w, bias, col, pointwise, N, C, H, W, O, kh, kw, stride, pad, OH,
                     OW](Node<S>& nn) {
    const int64_t K = C * kh * kw, P = OH * OW, cols = N * P;
    const S* g = nn.grad.ptr();

    if (bias && bias->requires_grad) {
      bias->ensure_grad();
      S* gb = bias->grad.ptr();
      for (int64_t o = 0; o < O; ++o) {
        double s = 0;
        for (int64_t n = 0; n < N; ++n) {
          const S* row = g + (n * O + o) * P;
          for (int64_t i = 0; i < P; ++i) s += row[i];
        }
        gb[o] += static_cast<S>(s);
      }
    }

    if (pointwise) {
      if (w->requires_grad) {
        w->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
          gemm(false, true, O, C, P, S(1), g + n * O * P, P, x->value.ptr() + n * C * P, P,
               S(1), w->grad.ptr(), C);
      }
      if (x->requires_grad) {
        x->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
          gemm(true, false, C, P, O, S(1), w->value.ptr(), C, g + n * O * P, P, S(1),
               x->grad.ptr() + n * C * P, P);
      }
      return;
    }

    // gather dout into [O, N*P]
    Tensor<S> dall({O, cols});
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o)
        std::memcpy(dall.ptr() + o * cols + n * P, g + (n * O + o) * P, sizeof(S) * P);

    if (w->requires_grad) {
      w->ensure_grad();
      gemm(false, true, O, K, cols, S(1), dall.ptr(), cols, col->ptr(), cols, S(1),
           w->grad.ptr(), K);
    }
    if (x->requires_grad) {
      x->ensure_grad();
      Tensor<S> dcol({K, cols});
      gemm(true, false, K, cols, O, S(1), w->value.ptr(), K, dall.ptr(), cols, S(0),
           dcol.ptr(), cols);
      detail::col2im_acc(dcol.ptr(), N, C, H, W, kh, kw, stride, pad, OH, OW, x->grad.ptr());
    }
  });
}

template <class S>
Var<S> upsample_nearest2x(const Var<S>& x) {
  const Shape& s = x->value.shape;
  if (s.size() != 4) throw std::invalid_argument("upsample_nearest2x: rank");
  int64_t N = s[0], C = s[1], H = s[2], W = s[3];
  Tensor<S> y({N, C, 2 * H, 2 * W});
  const S* px = x->value.ptr();
  S* py = y.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xs = px + nc * H * W;
    S* ys = py + nc * 4 * H * W;
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        S v = xs[i * W + j];
        S* d = ys + (2 * i) * 2 * W + 2 * j;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  return make_op<S>(std::move(y), {x}, [x, N, C, H, W](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const S* g = n.grad.ptr();
    S* gx = x->grad.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const S* gs = g + nc * 4 * H * W;
      S* xs = gx + nc * H * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const S* d = gs + (2 * i) * 2 * W + 2 * j;
          xs[i * W + j] += d[0] + d[1] + d[2 * W] + d[2 * W + 1];
        }
    }
  });
}

// Average pooling with square kernel == stride (used by the image encoder).
template <class S>
Var<S> avg_pool2d(const Var<S>& x, int64_t k) {
  const Shape& s = x->value.shape;
  if (s.size() != 4 || s[2] % k || s[3] % k) throw std::invalid_argument("avg_pool2d: shape");
  int64_t N = s[0], C = s[1], H = s[2], W = s[3], OH = H / k, OW = W / k;
  Tensor<S> y({N, C, OH, OW});
  const S* px = x->value.ptr();
  S* py = y.ptr();
  double inv = 1.0 / (k * k);
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xs = px + nc * H * W;
    S* ys = py + nc * OH * OW;
    for (int64_t i = 0; i < OH; ++i)
      for (int64_t j = 0; j < OW; ++j) {
        double acc = 0;
        for (int64_t a = 0; a < k; ++a)
          for (int64_t b = 0; b < k; ++b) acc += xs[(i * k + a) * W + j * k + b];
        ys[i * OW + j] = static_cast<S>(acc * inv);
      }
  }
  return make_op<S>(std::move(y), {x}, [x, N, C, H, W, OH, OW, k](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const S* g = n.grad.ptr();
    S* gx = x->grad.ptr();
    double inv = 1.0 / (k * k);
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const S* gs = g + nc * OH * OW;
      S* xs = gx + nc * H * W;
      for (int64_t i = 0; i < OH; ++i)
        for (int64_t j = 0; j < OW; ++j) {
          S v = static_cast<S>(gs[i * OW + j] * inv);
          for (int64_t a = 0; a < k; ++a)
            for (int64_t b = 0; b < k; ++b) xs[(i * k + a) * W + j * k + b] += v;
        }
    }
  });
}

// GroupNorm over [N,C,H,W]: statistics per (sample, group), affine per channel.
template <class S>
Var<S> group_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, int64_t groups,
                  double eps = 1e-5) {
  const Shape& s = x->value.shape;
  if (s.size() != 4 || s[1] % groups) throw std::invalid_argument("group_norm: shape/groups");
  int64_t N = s[0], C = s[1], HW = s[2] * s[3], Cg = C / groups;
  int64_t m = Cg * HW;

  Tensor<S> y(s);
  Tensor<S> xhat(s);
  std::vector<double> inv_std(N * groups);
  const S* px = x->value.ptr();
  const S* pg = gamma->value.ptr();
  const S* pb = beta->value.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t ng = 0; ng < N * groups; ++ng) {
    int64_t n = ng / groups, g = ng % groups;
    const S* base = px + (n * C + g * Cg) * HW;
    double mean = 0;
    for (int64_t i = 0; i < m; ++i) mean += base[i];
    mean /= m;
    double var = 0;
    for (int64_t i = 0; i < m; ++i) {
      double d = base[i] - mean;
      var += d * d;
    }
    var /= m;
    double istd = 1.0 / std::sqrt(var + eps);
    inv_std[ng] = istd;
    S* ph = xhat.ptr() + (n * C + g * Cg) * HW;
    S* py = y.ptr() + (n * C + g * Cg) * HW;
    for (int64_t cc = 0; cc < Cg; ++cc) {
      int64_t c = g * Cg + cc;
      for (int64_t i = 0; i < HW; ++i) {
        double h = (base[cc * HW + i] - mean) * istd;
        ph[cc * HW + i] = static_cast<S>(h);
        py[cc * HW + i] = static_cast<S>(h * pg[c] + pb[c]);
      }
    }
  }
  auto xhat_p = std::make_shared<Tensor<S>>(std::move(xhat));
  auto istd_p = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make_op<S>(std::move(y), {x, gamma, beta},
                    [x, gamma, beta, xhat_p, istd_p, N, C, HW, Cg, groups](Node<S>& nn) {
    const S* g = nn.grad.ptr();
    const S* xh = xhat_p->ptr();
    const S* pg = gamma->value.ptr();
    int64_t m = Cg * HW;
    if (gamma->requires_grad || beta->requires_grad) {
      gamma->ensure_grad();
      beta->ensure_grad();
      S* ggam = gamma->grad.ptr();
      S* gbet = beta->grad.ptr();
      for (int64_t c = 0; c < C; ++c) {
        double sg = 0, sb = 0;
        for (int64_t n = 0; n < N; ++n) {
          const S* grow = g + (n * C + c) * HW;
          const S* hrow = xh + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            sg += static_cast<double>(grow[i]) * hrow[i];
            sb += grow[i];
          }
        }
        ggam[c] += static_cast<S>(sg);
        gbet[c] += static_cast<S>(sb);
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      S* gx = x->grad.ptr();
#pragma omp parallel for schedule(static)
      for (int64_t ng = 0; ng < N * groups; ++ng) {
        int64_t n = ng / groups, gr = ng % groups;
        double istd = (*istd_p)[ng];
        // ghat = g * gamma; dx = istd*(ghat - mean(ghat) - xhat*mean(ghat*xhat))
        double mean_gh = 0, mean_ghh = 0;
        for (int64_t cc = 0; cc < Cg; ++cc) {
          int64_t c = gr * Cg + cc;
          const S* grow = g + (n * C + c) * HW;
          const S* hrow = xh + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            double gh = static_cast<double>(grow[i]) * pg[c];
            mean_gh += gh;
            mean_ghh += gh * hrow[i];
          }
        }
        mean_gh /= m;
        mean_ghh /= m;
        for (int64_t cc = 0; cc < Cg; ++cc) {
          int64_t c = gr * Cg + cc;
          const S* grow = g + (n * C + c) * HW;
          const S* hrow = xh + (n * C + c) * HW;
          S* xrow = gx + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            double gh = static_cast<double>(grow[i]) * pg[c];
            xrow[i] += static_cast<S>(istd * (gh - mean_gh - hrow[i] * mean_ghh));
          }
        }
      }
    }
  });
}

// LayerNorm over the last dimension; affine [C].
template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, double eps = 1e-5) {
  const Shape& s = x->value.shape;
  int64_t C = s.back();
  int64_t rows = x->value.numel() / C;
  if (gamma->value.numel() != C || beta->value.numel() != C)
    throw std::invalid_argument("layer_norm: affine size");

  Tensor<S> y(s);
  Tensor<S> xhat(s);
  std::vector<double> inv_std(rows);
  const S* px = x->value.ptr();
  const S* pg = gamma->value.ptr();
  const S* pb = beta->value.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const S* row = px + r * C;
    double mean = 0;
    for (int64_t i = 0; i < C; ++i) mean += row[i];
    mean /= C;
    double var = 0;
    for (int64_t i = 0; i < C; ++i) {
      double d = row[i] - mean;
      var += d * d;
    }
    var /= C;
    double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    S* ph = xhat.ptr() + r * C;
    S* py = y.ptr() + r * C;
    for (int64_t i = 0; i < C; ++i) {
      double h = (row[i] - mean) * istd;
      ph[i] = static_cast<S>(h);
      py[i] = static_cast<S>(h * pg[i] + pb[i]);
    }
  }
  auto xhat_p = std::make_shared<Tensor<S>>(std::move(xhat));
  auto istd_p = std::make_shared<std::vector<double>>(std::move(inv_std));
  return make_op<S>(std::move(y), {x, gamma, beta},
                    [x, gamma, beta, xhat_p, istd_p, rows, C](Node<S>& nn) {
    const S* g = nn.grad.ptr();
    const S* xh = xhat_p->ptr();
    const S* pg = gamma->value.ptr();
    if (gamma->requires_grad || beta->requires_grad) {
      gamma->ensure_grad();
      beta->ensure_grad();
      S* ggam = gamma->grad.ptr();
      S* gbet = beta->grad.ptr();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < C; ++i) {
          ggam[i] += static_cast<S>(static_cast<double>(g[r * C + i]) * xh[r * C + i]);
          gbet[i] += g[r * C + i];
        }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      S* gx = x->grad.ptr();
#pragma omp parallel for schedule(static)
      for (int64_t r = 0; r < rows; ++r) {
        const S* grow = g + r * C;
        const S* hrow = xh + r * C;
        S* xrow = gx + r * C;
        double istd = (*istd_p)[r];
        double mean_gh = 0, mean_ghh = 0;
        for (int64_t i = 0; i < C; ++i) {
          double gh = static_cast<double>(grow[i]) * pg[i];
          mean_gh += gh;
          mean_ghh += gh * hrow[i];
        }
        mean_gh /= C;
        mean_ghh /= C;
        for (int64_t i = 0; i < C; ++i) {
          double gh = static_cast<double>(grow[i]) * pg[i];
          xrow[i] += static_cast<S>(istd * (gh - mean_gh - hrow[i] * mean_ghh));
        }
      }
    }
  });
}

// Per-sample per-channel bias over frames: x [(B*T),C,H,W], tb [B,C].
// Frame t of sample b receives tb[b]; used to inject the time embedding.
template <class S>
Var<S> add_time_bias(const Var<S>& x, const Var<S>& tb, int64_t T) {
  const Shape& s = x->value.shape;
  const Shape& st = tb->value.shape;
  if (s.size() != 4 || st.size() != 2 || s[0] != st[0] * T || s[1] != st[1])
    throw std::invalid_argument("add_time_bias: shapes");
  int64_t NT = s[0], C = s[1], HW = s[2] * s[3];
  Tensor<S> y = x->value;
  S* py = y.ptr();
  const S* pt = tb->value.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < NT; ++n) {
    int64_t b = n / T;
    for (int64_t c = 0; c < C; ++c) {
      S v = pt[b * C + c];
      S* row = py + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) row[i] += v;
    }
  }
  return make_op<S>(std::move(y), {x, tb}, [x, tb, NT, C, HW, T](Node<S>& n) {
    const S* g = n.grad.ptr();
    if (x->requires_grad) accumulate(*x, g, n.numel());
    if (tb->requires_grad) {
      tb->ensure_grad();
      S* gt = tb->grad.ptr();
      for (int64_t nn = 0; nn < NT; ++nn) {
        int64_t b = nn / T;
        for (int64_t c = 0; c < C; ++c) {
          double sum = 0;
          const S* row = g + (nn * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) sum += row[i];
          gt[b * C + c] += static_cast<S>(sum);
        }
      }
    }
  });
}

namespace detail {

// tcol [C*k, T*HW] for one sample: row (c, dt) holds x[(t+dt-r), c, :] with
// zero rows outside the clip. All copies are contiguous over HW.
template <class S>
void time_im2col(const S* xb, int64_t T, int64_t C, int64_t HW, int64_t k, S* tcol) {
  const int64_t r = k / 2;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t dt = 0; dt < k; ++dt) {
      S* dst = tcol + (c * k + dt) * T * HW;
      for (int64_t t = 0; t < T; ++t) {
        int64_t tt = t + dt - r;
        if (tt < 0 || tt >= T)
          std::memset(dst + t * HW, 0, sizeof(S) * HW);
        else
          std::memcpy(dst + t * HW, xb + (tt * C + c) * HW, sizeof(S) * HW);
      }
    }
}

}  // namespace detail

// Per-sample channel-wise affine from the time embedding (FiLM-style):
// y = x * (1 + scale) + shift, with ss [B, 2C] = [scale | shift] applied to
// every frame and pixel of sample b.
template <class S>
Var<S> scale_shift_time(const Var<S>& x, const Var<S>& ss, int64_t T) {
  const Shape& sx = x->value.shape;
  const Shape& st = ss->value.shape;
  if (sx.size() != 4 || st.size() != 2 || sx[0] != st[0] * T || st[1] != 2 * sx[1])
    throw std::invalid_argument("scale_shift_time: shapes");
  int64_t NT = sx[0], C = sx[1], HW = sx[2] * sx[3];
  Tensor<S> y = x->value;
  S* py = y.ptr();
  const S* ps = ss->value.ptr();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < NT; ++n) {
    int64_t b = n / T;
    for (int64_t c = 0; c < C; ++c) {
      S sc = S(1) + ps[b * 2 * C + c];
      S sh = ps[b * 2 * C + C + c];
      S* row = py + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) row[i] = row[i] * sc + sh;
    }
  }
  return make_op<S>(std::move(y), {x, ss}, [x, ss, NT, C, HW, T](Node<S>& n) {
    const S* g = n.grad.ptr();
    const S* ps = ss->value.ptr();
    const S* px = x->value.ptr();
    if (x->requires_grad) {
      x->ensure_grad();
      S* gx = x->grad.ptr();
#pragma omp parallel for schedule(static)
      for (int64_t nn = 0; nn < NT; ++nn) {
        int64_t b = nn / T;
        for (int64_t c = 0; c < C; ++c) {
          S sc = S(1) + ps[b * 2 * C + c];
          const S* grow = g + (nn * C + c) * HW;
          S* xrow = gx + (nn * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) xrow[i] += grow[i] * sc;
        }
      }
    }
    if (ss->requires_grad) {
      ss->ensure_grad();
      S* gs = ss->grad.ptr();
      for (int64_t nn = 0; nn < NT; ++nn) {
        int64_t b = nn / T;
        for (int64_t c = 0; c < C; ++c) {
          const S* grow = g + (nn * C + c) * HW;
          const S* xrow = px + (nn * C + c) * HW;
          double dsc = 0, dsh = 0;
          for (int64_t i = 0; i < HW; ++i) {
            dsc += static_cast<double>(grow[i]) * xrow[i];
            dsh += grow[i];
          }
          gs[b * 2 * C + c] += static_cast<S>(dsc);
          gs[b * 2 * C + C + c] += static_cast<S>(dsh);
        }
      }
    }
  });
}

// 1-D convolution along the frame axis at every spatial location.
// x [(B*T),C,H,W], w [O,C,k], bias [O]; zero padding in time. Implemented as
// an im2col over time plus one GEMM per sample.
template <class S>
Var<S> temporal_conv(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int64_t T) {
  const Shape& sx = x->value.shape;
  const Shape& sw = w->value.shape;
  if (sx.size() != 4 || sw.size() != 3 || sx[0] % T || sx[1] != sw[1])
    throw std::invalid_argument("temporal_conv: shapes");
  int64_t B = sx[0] / T, C = sx[1], HW = sx[2] * sx[3];
  int64_t O = sw[0], k = sw[2];
  const int64_t K = C * k, cols = T * HW;

  Tensor<S> y({sx[0], O, sx[2], sx[3]});
  {
    Tensor<S> tcol({K, cols});
    Tensor<S> ymat({O, cols});
    for (int64_t b = 0; b < B; ++b) {
      detail::time_im2col(x->value.ptr() + b * T * C * HW, T, C, HW, k, tcol.ptr());
      gemm(false, false, O, cols, K, S(1), w->value.ptr(), K, tcol.ptr(), cols, S(0),
           ymat.ptr(), cols);
      for (int64_t o = 0; o < O; ++o)
        for (int64_t t = 0; t < T; ++t)
          std::memcpy(y.ptr() + ((b * T + t) * O + o) * HW, ymat.ptr() + o * cols + t * HW,
                      sizeof(S) * HW);
    }
  }
  if (bias) {
    const S* pb = bias->value.ptr();
    S* py = y.ptr();
    for (int64_t n = 0; n < B * T; ++n)
      for (int64_t o = 0; o < O; ++o) {
        S bv = pb[o];
        S* row = py + (n * O + o) * HW;
        for (int64_t i = 0; i < HW; ++i) row[i] += bv;
      }
  }

  std::vector<Var<S>> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_op<S>(std::move(y), std::move(parents),
                    [x, w, bias, B, T, C, HW, O, k](Node<S>& nn) {
    const int64_t K = C * k, cols = T * HW, r = k / 2;
    const S* g = nn.grad.ptr();
    if (bias && bias->requires_grad) {
      bias->ensure_grad();
      S* gb = bias->grad.ptr();
      for (int64_t o = 0; o < O; ++o) {
        double s = 0;
        for (int64_t n = 0; n < B * T; ++n) {
          const S* row = g + (n * O + o) * HW;
          for (int64_t i = 0; i < HW; ++i) s += row[i];
        }
        gb[o] += static_cast<S>(s);
      }
    }
    if (!w->requires_grad && !x->requires_grad) return;
    if (w->requires_grad) w->ensure_grad();
    if (x->requires_grad) x->ensure_grad();

    Tensor<S> tcol({K, cols});
    Tensor<S> dmat({O, cols});
    Tensor<S> dcol({K, cols});
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t o = 0; o < O; ++o)
        for (int64_t t = 0; t < T; ++t)
          std::memcpy(dmat.ptr() + o * cols + t * HW, g + ((b * T + t) * O + o) * HW,
                      sizeof(S) * HW);
      if (w->requires_grad) {
        detail::time_im2col(x->value.ptr() + b * T * C * HW, T, C, HW, k, tcol.ptr());
        gemm(false, true, O, K, cols, S(1), dmat.ptr(), cols, tcol.ptr(), cols, S(1),
             w->grad.ptr(), K);
      }
      if (x->requires_grad) {
        gemm(true, false, K, cols, O, S(1), w->value.ptr(), K, dmat.ptr(), cols, S(0),
             dcol.ptr(), cols);
        S* gx = x->grad.ptr() + b * T * C * HW;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t dt = 0; dt < k; ++dt) {
            const S* src = dcol.ptr() + (c * k + dt) * cols;
            for (int64_t t = 0; t < T; ++t) {
              int64_t tt = t + dt - r;
              if (tt < 0 || tt >= T) continue;
              S* dst = gx + (tt * C + c) * HW;
              const S* s = src + t * HW;
              for (int64_t i = 0; i < HW; ++i) dst[i] += s[i];
            }
          }
      }
    }
  });
}

}  // namespace lgvi
