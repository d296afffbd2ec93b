#pragma once

#include "medvsr/ops_basic.hpp"

namespace medvsr {

// ---- bicubic resampling (Catmull-Rom style kernel, a = -0.5) ----

inline double cubic_kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

struct ResizeTaps {
  int64_t out_size = 0;
  int64_t taps = 0;                // taps per output slot
  std::vector<int64_t> idx;        // [out_size * taps], reflected into range
  std::vector<double> weight;      // [out_size * taps], rows sum to 1
};

// Center-aligned tap table. When minifying with antialias the kernel is
// widened by the inverse scale, matching the convention used by high-quality
// image resamplers.
inline ResizeTaps make_resize_taps(int64_t in_size, int64_t out_size,
                                   bool antialias) {
  require(in_size > 0 && out_size > 0, "resize: empty extent");
  double scale = double(out_size) / double(in_size);
  double kscale = (antialias && scale < 1.0) ? scale : 1.0;
  double radius = 2.0 / kscale;
  int64_t taps = int64_t(std::ceil(radius)) * 2 + 1;
  ResizeTaps t;
  t.out_size = out_size;
  t.taps = taps;
  t.idx.assign(size_t(out_size * taps), 0);
  t.weight.assign(size_t(out_size * taps), 0.0);
  for (int64_t i = 0; i < out_size; ++i) {
    double u = (double(i) + 0.5) / scale - 0.5;
    int64_t j0 = int64_t(std::floor(u)) - taps / 2 + 1;
    double sum = 0.0;
    for (int64_t k = 0; k < taps; ++k) {
      double w = kscale * cubic_kernel((u - double(j0 + k)) * kscale);
      t.idx[size_t(i * taps + k)] = reflect_index(j0 + k, in_size);
      t.weight[size_t(i * taps + k)] = w;
      sum += w;
    }
    require(sum > 0.0, "resize: degenerate kernel row");
    for (int64_t k = 0; k < taps; ++k) t.weight[size_t(i * taps + k)] /= sum;
  }
  return t;
}

template <class T>
Tensor<T> resize_bicubic(const Tensor<T>& x, int64_t out_h, int64_t out_w,
                         bool antialias) {
  require(x.rank() == 3, "resize: expects [C,H,W]");
  int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  ResizeTaps ty = make_resize_taps(H, out_h, antialias);
  ResizeTaps tx = make_resize_taps(W, out_w, antialias);
  // Separable: rows first, then columns.
  Tensor<T> tmp({C, out_h, W});
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < out_h; ++i) {
      const int64_t* ji = ty.idx.data() + i * ty.taps;
      const double* wi = ty.weight.data() + i * ty.taps;
      T* dst = tmp.data() + (c * out_h + i) * W;
      for (int64_t k = 0; k < ty.taps; ++k) {
        const T* src = x.data() + (c * H + ji[k]) * W;
        T w = T(wi[k]);
        for (int64_t col = 0; col < W; ++col) dst[col] += w * src[col];
      }
    }
  }
  Tensor<T> y({C, out_h, out_w});
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < out_h; ++i) {
      const T* src = tmp.data() + (c * out_h + i) * W;
      T* dst = y.data() + (c * out_h + i) * out_w;
      for (int64_t j = 0; j < out_w; ++j) {
        const int64_t* jj = tx.idx.data() + j * tx.taps;
        const double* wj = tx.weight.data() + j * tx.taps;
        T acc = 0;
        for (int64_t k = 0; k < tx.taps; ++k) acc += T(wj[k]) * src[jj[k]];
        dst[j] = acc;
      }
    }
  }
  return y;
}

namespace ag {

// Differentiable bicubic resize; same tap tables as the pure version, so the
// graph path and the data-pipeline path produce identical values.
template <class T>
int resize_bicubic_op(Graph<T>& g, int x, int64_t out_h, int64_t out_w,
                      bool antialias = false) {
  const Tensor<T>& vx = g.val(x);
  Tensor<T> y = resize_bicubic(vx, out_h, out_w, antialias);
  int64_t H = vx.dim(1), W = vx.dim(2);
  auto ty = std::make_shared<ResizeTaps>(make_resize_taps(H, out_h, antialias));
  auto tx = std::make_shared<ResizeTaps>(make_resize_taps(W, out_w, antialias));
  return g.add_node(std::move(y), {x}, [x, ty, tx, H, W](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    Tensor<T>& gx = g.grad_acc(x);
    int64_t C = gx.dim(0), out_h = ty->out_size, out_w = tx->out_size;
    // Transpose of the separable forward: scatter through column taps into a
    // row buffer, then through row taps.
    std::vector<T> row(static_cast<size_t>(W));
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < out_h; ++i) {
        std::fill(row.begin(), row.end(), T(0));
        const T* gyr = gy.data() + (c * out_h + i) * out_w;
        for (int64_t j = 0; j < out_w; ++j) {
          const int64_t* jj = tx->idx.data() + j * tx->taps;
          const double* wj = tx->weight.data() + j * tx->taps;
          T gv = gyr[j];
          for (int64_t k = 0; k < tx->taps; ++k) row[size_t(jj[k])] += T(wj[k]) * gv;
        }
        const int64_t* ji = ty->idx.data() + i * ty->taps;
        const double* wi = ty->weight.data() + i * ty->taps;
        for (int64_t k = 0; k < ty->taps; ++k) {
          T w = T(wi[k]);
          T* dst = gx.data() + (c * H + ji[k]) * W;
          for (int64_t col = 0; col < W; ++col) dst[col] += w * row[size_t(col)];
        }
      }
    }
  });
}

// Samples f [C,H,W] at coords [2,Ho,Wo] (channel 0 = x, 1 = y), bilinear with
// zero extension outside the frame. Gradients flow to both feature values and
// coordinates.
template <class T>
int bilinear_sample(Graph<T>& g, int f, int coords) {
  const Tensor<T>& vf = g.val(f);
  const Tensor<T>& vc = g.val(coords);
  require(vf.rank() == 3, "bilinear_sample: feature must be [C,H,W]");
  require(vc.rank() == 3 && vc.dim(0) == 2, "bilinear_sample: coords must be [2,Ho,Wo]");
  int64_t C = vf.dim(0), H = vf.dim(1), W = vf.dim(2);
  int64_t Ho = vc.dim(1), Wo = vc.dim(2);
  Tensor<T> y({C, Ho, Wo});
  int64_t n = Ho * Wo;
  for (int64_t p = 0; p < n; ++p) {
    T xf = vc[p], yf = vc[n + p];
    if (!(std::isfinite(double(xf)) && std::isfinite(double(yf))))
      throw numeric_error("bilinear_sample: non-finite coordinate");
    int64_t x0 = int64_t(std::floor(xf)), y0 = int64_t(std::floor(yf));
    T wx = xf - T(x0), wy = yf - T(y0);
    for (int64_t dyi = 0; dyi < 2; ++dyi) {
      int64_t yy = y0 + dyi;
      if (yy < 0 || yy >= H) continue;
      T wv_y = dyi ? wy : T(1) - wy;
      for (int64_t dxi = 0; dxi < 2; ++dxi) {
        int64_t xx = x0 + dxi;
        if (xx < 0 || xx >= W) continue;
        T wv = wv_y * (dxi ? wx : T(1) - wx);
        if (wv == T(0)) continue;
        for (int64_t c = 0; c < C; ++c)
          y[c * n + p] += wv * vf[(c * H + yy) * W + xx];
      }
    }
  }
  return g.add_node(std::move(y), {f, coords}, [f, coords](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vf = g.val(f);
    const Tensor<T>& vc = g.val(coords);
    int64_t C = vf.dim(0), H = vf.dim(1), W = vf.dim(2);
    int64_t n = vc.dim(1) * vc.dim(2);
    bool need_f = g.needs_grad(f), need_c = g.needs_grad(coords);
    if (!need_f && !need_c) return;
    Tensor<T>* gf = need_f ? &g.grad_acc(f) : nullptr;
    Tensor<T>* gc = need_c ? &g.grad_acc(coords) : nullptr;
    for (int64_t p = 0; p < n; ++p) {
      T xf = vc[p], yf = vc[n + p];
      int64_t x0 = int64_t(std::floor(xf)), y0 = int64_t(std::floor(yf));
      T wx = xf - T(x0), wy = yf - T(y0);
      T gpx = 0, gpy = 0;
      for (int64_t dyi = 0; dyi < 2; ++dyi) {
        int64_t yy = y0 + dyi;
        if (yy < 0 || yy >= H) continue;
        T wv_y = dyi ? wy : T(1) - wy;
        T sy = dyi ? T(1) : T(-1);
        for (int64_t dxi = 0; dxi < 2; ++dxi) {
          int64_t xx = x0 + dxi;
          if (xx < 0 || xx >= W) continue;
          T wv_x = dxi ? wx : T(1) - wx;
          T sx = dxi ? T(1) : T(-1);
          for (int64_t c = 0; c < C; ++c) {
            T gv = gy[c * n + p];
            if (gv == T(0)) continue;
            T fv = vf[(c * H + yy) * W + xx];
            if (need_f) (*gf)[(c * H + yy) * W + xx] += gv * wv_y * wv_x;
            if (need_c) {
              gpx += gv * wv_y * sx * fv;
              gpy += gv * sy * wv_x * fv;
            }
          }
        }
      }
      if (need_c) {
        (*gc)[p] += gpx;
        (*gc)[n + p] += gpy;
      }
    }
  });
}

// Sub-pixel rearrangement [C*s*s, H, W] -> [C, H*s, W*s] as a gather.
template <class T>
int pixel_shuffle(Graph<T>& g, int x, int64_t s) {
  const Tensor<T>& vx = g.val(x);
  require(vx.rank() == 3, "pixel_shuffle: expects [C,H,W]");
  int64_t Cs = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  require(s >= 1 && Cs % (s * s) == 0, "pixel_shuffle: channels not divisible by s^2");
  int64_t C = Cs / (s * s);
  auto idx = std::make_shared<std::vector<int64_t>>(size_t(Cs * H * W));
  int64_t Ho = H * s, Wo = W * s;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t h = 0; h < Ho; ++h)
      for (int64_t w = 0; w < Wo; ++w) {
        int64_t ci = c * s * s + (h % s) * s + (w % s);
        (*idx)[size_t((c * Ho + h) * Wo + w)] = (ci * H + h / s) * W + w / s;
      }
  return gather(g, x, idx, Shape{C, Ho, Wo});
}

}  // namespace ag
}  // namespace medvsr
