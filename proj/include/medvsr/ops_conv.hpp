#pragma once

#include "medvsr/ops_basic.hpp"

namespace medvsr {
namespace ag {

// 2D convolution, stride 1, zero padding. x [Cin,H,W], w [Cout,Cin/g,K,K],
// optional bias [Cout]. K odd.
template <class T>
int conv2d(Graph<T>& g, int x, int w, int b = -1, int groups = 1) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vw = g.val(w);
  require(vx.rank() == 3 && vw.rank() == 4, "conv2d: expects [C,H,W] and [O,I,K,K]");
  int64_t Cin = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  int64_t Cout = vw.dim(0), Icg = vw.dim(1), K = vw.dim(2);
  require(vw.dim(3) == K && K % 2 == 1, "conv2d: kernel must be odd square");
  require(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
          "conv2d: group count must divide channels");
  require(Icg == Cin / groups, "conv2d: weight input-channel mismatch");
  int64_t pad = K / 2;
  int64_t ocg = Cout / groups;
  Tensor<T> y({Cout, H, W});
  const Tensor<T>* vb = b >= 0 ? &g.val(b) : nullptr;
  if (vb) require(vb->numel() == Cout, "conv2d: bias size mismatch");
  for (int64_t oc = 0; oc < Cout; ++oc) {
    T* yc = y.data() + oc * H * W;
    if (vb) {
      T bias = (*vb)[oc];
      for (int64_t i = 0; i < H * W; ++i) yc[i] = bias;
    }
    int64_t ic0 = (oc / ocg) * Icg;
    for (int64_t icg = 0; icg < Icg; ++icg) {
      const T* xc = vx.data() + (ic0 + icg) * H * W;
      const T* wk = vw.data() + ((oc * Icg + icg) * K) * K;
      for (int64_t kh = 0; kh < K; ++kh) {
        int64_t dy = kh - pad;
        int64_t h0 = std::max<int64_t>(0, -dy), h1 = std::min(H, H - dy);
        for (int64_t kw = 0; kw < K; ++kw) {
          T wv = wk[kh * K + kw];
          if (wv == T(0)) continue;
          int64_t dx = kw - pad;
          int64_t w0 = std::max<int64_t>(0, -dx), w1 = std::min(W, W - dx);
          for (int64_t h = h0; h < h1; ++h) {
            const T* xr = xc + (h + dy) * W + dx;
            T* yr = yc + h * W;
            for (int64_t wi = w0; wi < w1; ++wi) yr[wi] += wv * xr[wi];
          }
        }
      }
    }
  }
  std::vector<int> parents{x, w};
  if (b >= 0) parents.push_back(b);
  return g.add_node(std::move(y), parents, [x, w, b, groups](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    const Tensor<T>& vw = g.val(w);
    int64_t Cin = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
    int64_t Cout = vw.dim(0), Icg = vw.dim(1), K = vw.dim(2);
    int64_t pad = K / 2, ocg = Cout / groups;
    (void)Cin;
    if (b >= 0 && g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t oc = 0; oc < Cout; ++oc) {
        const T* gyc = gy.data() + oc * H * W;
        T acc = 0;
        for (int64_t i = 0; i < H * W; ++i) acc += gyc[i];
        gb[oc] += acc;
      }
    }
    bool need_x = g.needs_grad(x), need_w = g.needs_grad(w);
    if (!need_x && !need_w) return;
    Tensor<T>* gx = need_x ? &g.grad_acc(x) : nullptr;
    Tensor<T>* gw = need_w ? &g.grad_acc(w) : nullptr;
    for (int64_t oc = 0; oc < Cout; ++oc) {
      const T* gyc = gy.data() + oc * H * W;
      int64_t ic0 = (oc / ocg) * Icg;
      for (int64_t icg = 0; icg < Icg; ++icg) {
        int64_t ic = ic0 + icg;
        const T* xc = vx.data() + ic * H * W;
        T* gxc = need_x ? gx->data() + ic * H * W : nullptr;
        const T* wk = vw.data() + ((oc * Icg + icg) * K) * K;
        T* gwk = need_w ? gw->data() + ((oc * Icg + icg) * K) * K : nullptr;
        for (int64_t kh = 0; kh < K; ++kh) {
          int64_t dy = kh - pad;
          int64_t h0 = std::max<int64_t>(0, -dy), h1 = std::min(H, H - dy);
          for (int64_t kw = 0; kw < K; ++kw) {
            int64_t dx = kw - pad;
            int64_t w0 = std::max<int64_t>(0, -dx), w1 = std::min(W, W - dx);
            T wv = wk[kh * K + kw];
            T wacc = 0;
            for (int64_t h = h0; h < h1; ++h) {
              const T* gyr = gyc + h * W;
              const T* xr = xc + (h + dy) * W + dx;
              if (need_w)
                for (int64_t wi = w0; wi < w1; ++wi) wacc += gyr[wi] * xr[wi];
              if (need_x && wv != T(0)) {
                T* gxr = gxc + (h + dy) * W + dx;
                for (int64_t wi = w0; wi < w1; ++wi) gxr[wi] += wv * gyr[wi];
              }
            }
            if (need_w) gwk[kh * K + kw] += wacc;
          }
        }
      }
    }
  });
}

// Depthwise 1D convolution along the token axis of [R,C], zero-padded, with
// R split into independent chunks of `chunk` rows (per-window sequences).
template <class T>
int conv1d_depthwise(Graph<T>& g, int x, int w, int b, int64_t chunk) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vw = g.val(w);
  require(vx.rank() == 2 && vw.rank() == 2, "conv1d: expects [R,C] and [C,k]");
  int64_t R = vx.dim(0), C = vx.dim(1), K = vw.dim(1);
  require(vw.dim(0) == C, "conv1d: channel mismatch");
  require(K % 2 == 1, "conv1d: kernel must be odd");
  require(chunk > 0 && R % chunk == 0, "conv1d: rows not divisible by chunk");
  int64_t pad = K / 2;
  Tensor<T> y({R, C});
  if (b >= 0) {
    const Tensor<T>& vb = g.val(b);
    require(vb.numel() == C, "conv1d: bias size mismatch");
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) y[r * C + c] = vb[c];
  }
  for (int64_t s = 0; s < R; s += chunk) {
    for (int64_t j = 0; j < K; ++j) {
      int64_t dt = j - pad;
      int64_t t0 = std::max<int64_t>(0, -dt), t1 = std::min(chunk, chunk - dt);
      for (int64_t t = t0; t < t1; ++t) {
        T* yr = y.data() + (s + t) * C;
        const T* xr = vx.data() + (s + t + dt) * C;
        const T* wc = vw.data();
        for (int64_t c = 0; c < C; ++c) yr[c] += wc[c * K + j] * xr[c];
      }
    }
  }
  std::vector<int> parents{x, w};
  if (b >= 0) parents.push_back(b);
  return g.add_node(std::move(y), parents, [x, w, b, chunk](Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    const Tensor<T>& vw = g.val(w);
    int64_t R = vx.dim(0), C = vx.dim(1), K = vw.dim(1);
    int64_t pad = K / 2;
    if (b >= 0 && g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
    }
    bool need_x = g.needs_grad(x), need_w = g.needs_grad(w);
    if (!need_x && !need_w) return;
    Tensor<T>* gx = need_x ? &g.grad_acc(x) : nullptr;
    Tensor<T>* gw = need_w ? &g.grad_acc(w) : nullptr;
    for (int64_t s = 0; s < R; s += chunk) {
      for (int64_t j = 0; j < K; ++j) {
        int64_t dt = j - pad;
        int64_t t0 = std::max<int64_t>(0, -dt), t1 = std::min(chunk, chunk - dt);
        for (int64_t t = t0; t < t1; ++t) {
          const T* gyr = gy.data() + (s + t) * C;
          const T* xr = vx.data() + (s + t + dt) * C;
          if (need_w) {
            T* gwc = gw->data();
            for (int64_t c = 0; c < C; ++c) gwc[c * K + j] += gyr[c] * xr[c];
          }
          if (need_x) {
            T* gxr = gx->data() + (s + t + dt) * C;
            const T* wc = vw.data();
            for (int64_t c = 0; c < C; ++c) gxr[c] += wc[c * K + j] * gyr[c];
          }
        }
      }
    }
  });
}

// Learnable positional embedding: depthwise 3x3 convolution over each
// window's rows x cols grid, zero-padded, applied to stacked window tokens
// [(nW*rows*cols), C] in window-major, row-major token order.
template <class T>
int lpe(Graph<T>& g, int x, int w, int b, int64_t n_windows, int64_t rows,
        int64_t cols) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vw = g.val(w);
  require(vx.rank() == 2, "lpe: expects [R,C] tokens");
  int64_t R = vx.dim(0), C = vx.dim(1);
  require(R == n_windows * rows * cols, "lpe: token count mismatch");
  require(vw.rank() == 3 && vw.dim(0) == C && vw.dim(1) == 3 && vw.dim(2) == 3,
          "lpe: weight must be [C,3,3]");
  Tensor<T> y({R, C});
  if (b >= 0) {
    const Tensor<T>& vb = g.val(b);
    require(vb.numel() == C, "lpe: bias size mismatch");
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) y[r * C + c] = vb[c];
  }
  int64_t L = rows * cols;
  for (int64_t n = 0; n < n_windows; ++n) {
    int64_t base = n * L;
    for (int64_t kh = 0; kh < 3; ++kh) {
      int64_t dy = kh - 1;
      int64_t r0 = std::max<int64_t>(0, -dy), r1 = std::min(rows, rows - dy);
      for (int64_t kw = 0; kw < 3; ++kw) {
        int64_t dx = kw - 1;
        int64_t c0 = std::max<int64_t>(0, -dx), c1 = std::min(cols, cols - dx);
        for (int64_t r = r0; r < r1; ++r) {
          for (int64_t c = c0; c < c1; ++c) {
            T* yr = y.data() + (base + r * cols + c) * C;
            const T* xr = vx.data() + (base + (r + dy) * cols + (c + dx)) * C;
            const T* wc = vw.data();
            for (int64_t ch = 0; ch < C; ++ch)
              yr[ch] += wc[(ch * 3 + kh) * 3 + kw] * xr[ch];
          }
        }
      }
    }
  }
  std::vector<int> parents{x, w};
  if (b >= 0) parents.push_back(b);
  return g.add_node(
      std::move(y), parents,
      [x, w, b, n_windows, rows, cols](Graph<T>& g, int self) {
        const Tensor<T>& gy = g.grad(self);
        const Tensor<T>& vx = g.val(x);
        const Tensor<T>& vw = g.val(w);
        int64_t C = vx.dim(1);
        int64_t L = rows * cols;
        if (b >= 0 && g.needs_grad(b)) {
          Tensor<T>& gb = g.grad_acc(b);
          for (int64_t r = 0; r < vx.dim(0); ++r)
            for (int64_t c = 0; c < C; ++c) gb[c] += gy[r * C + c];
        }
        bool need_x = g.needs_grad(x), need_w = g.needs_grad(w);
        if (!need_x && !need_w) return;
        Tensor<T>* gx = need_x ? &g.grad_acc(x) : nullptr;
        Tensor<T>* gw = need_w ? &g.grad_acc(w) : nullptr;
        for (int64_t n = 0; n < n_windows; ++n) {
          int64_t base = n * L;
          for (int64_t kh = 0; kh < 3; ++kh) {
            int64_t dy = kh - 1;
            int64_t r0 = std::max<int64_t>(0, -dy),
                    r1 = std::min(rows, rows - dy);
            for (int64_t kw = 0; kw < 3; ++kw) {
              int64_t dx = kw - 1;
              int64_t c0 = std::max<int64_t>(0, -dx),
                      c1 = std::min(cols, cols - dx);
              for (int64_t r = r0; r < r1; ++r) {
                for (int64_t c = c0; c < c1; ++c) {
                  const T* gyr = gy.data() + (base + r * cols + c) * C;
                  int64_t src = (base + (r + dy) * cols + (c + dx)) * C;
                  if (need_w) {
                    const T* xr = vx.data() + src;
                    T* gwc = gw->data();
                    for (int64_t ch = 0; ch < C; ++ch)
                      gwc[(ch * 3 + kh) * 3 + kw] += gyr[ch] * xr[ch];
                  }
                  if (need_x) {
                    T* gxr = gx->data() + src;
                    const T* wc = vw.data();
                    for (int64_t ch = 0; ch < C; ++ch)
                      gxr[ch] += wc[(ch * 3 + kh) * 3 + kw] * gyr[ch];
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace ag
}  // namespace medvsr
