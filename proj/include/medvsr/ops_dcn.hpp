#pragma once

#include "medvsr/ops_basic.hpp"

namespace medvsr {
namespace detail {

// Zero-extended bilinear read of one channel plane.
template <class T>
inline T bilin_read(const T* plane, int64_t H, int64_t W, T px, T py) {
  int64_t x0 = int64_t(std::floor(px)), y0 = int64_t(std::floor(py));
  T wx = px - T(x0), wy = py - T(y0);
  T acc = 0;
  for (int64_t dy = 0; dy < 2; ++dy) {
    int64_t yy = y0 + dy;
    if (yy < 0 || yy >= H) continue;
    T wv_y = dy ? wy : T(1) - wy;
    for (int64_t dx = 0; dx < 2; ++dx) {
      int64_t xx = x0 + dx;
      if (xx < 0 || xx >= W) continue;
      T wv = wv_y * (dx ? wx : T(1) - wx);
      if (wv != T(0)) acc += wv * plane[yy * W + xx];
    }
  }
  return acc;
}

}  // namespace detail

namespace ag {

// Modulated deformable convolution: x [Cin,H,W], offsets [G*K*K*2,H,W]
// (per offset-group per tap, channel pairs ordered x then y), mask
// [G*K*K,H,W] already in (0,1), w [Cout,Cin,K,K], optional bias [Cout].
// Offset group g serves input channels [g*Cin/G, (g+1)*Cin/G).
template <class T>
int deform_conv2d(Graph<T>& g, int x, int offs, int mask, int w, int b,
                  int64_t groups) {
  const Tensor<T>& vx = g.val(x);
  const Tensor<T>& vo = g.val(offs);
  const Tensor<T>& vm = g.val(mask);
  const Tensor<T>& vw = g.val(w);
  require(vx.rank() == 3 && vw.rank() == 4, "deform_conv2d: bad ranks");
  int64_t Cin = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  int64_t Cout = vw.dim(0), K = vw.dim(2);
  require(vw.dim(1) == Cin && vw.dim(3) == K && K % 2 == 1,
          "deform_conv2d: weight shape mismatch");
  require(groups >= 1 && Cin % groups == 0,
          "deform_conv2d: offset groups must divide input channels");
  int64_t KK = K * K;
  require(vo.rank() == 3 && vo.dim(0) == groups * KK * 2 && vo.dim(1) == H &&
              vo.dim(2) == W,
          "deform_conv2d: offset shape mismatch");
  require(vm.rank() == 3 && vm.dim(0) == groups * KK && vm.dim(1) == H &&
              vm.dim(2) == W,
          "deform_conv2d: mask shape mismatch");
  int64_t pad = K / 2, cg = Cin / groups, n = H * W;
  const Tensor<T>* vb = b >= 0 ? &g.val(b) : nullptr;
  if (vb) require(vb->numel() == Cout, "deform_conv2d: bias size mismatch");

  Tensor<T> y({Cout, H, W});
  std::vector<T> col(size_t(Cin * KK));
  for (int64_t h = 0; h < H; ++h) {
    for (int64_t wp = 0; wp < W; ++wp) {
      int64_t p = h * W + wp;
      for (int64_t gr = 0; gr < groups; ++gr) {
        for (int64_t tap = 0; tap < KK; ++tap) {
          int64_t gk = gr * KK + tap;
          T px = T(wp + tap % K - pad) + vo[(gk * 2 + 0) * n + p];
          T py = T(h + tap / K - pad) + vo[(gk * 2 + 1) * n + p];
          T m = vm[gk * n + p];
          for (int64_t ic = gr * cg; ic < (gr + 1) * cg; ++ic) {
            T val = detail::bilin_read(vx.data() + ic * n, H, W, px, py);
            col[size_t(ic * KK + tap)] = m * val;
          }
        }
      }
      for (int64_t oc = 0; oc < Cout; ++oc) {
        const T* wr = vw.data() + oc * Cin * KK;
        T acc = vb ? (*vb)[oc] : T(0);
        for (int64_t i = 0; i < Cin * KK; ++i) acc += wr[i] * col[size_t(i)];
        y[oc * n + p] = acc;
      }
    }
  }
  std::vector<int> parents{x, offs, mask, w};
  if (b >= 0) parents.push_back(b);
  return g.add_node(std::move(y), parents, [x, offs, mask, w, b, groups](
                                               Graph<T>& g, int self) {
    const Tensor<T>& gy = g.grad(self);
    const Tensor<T>& vx = g.val(x);
    const Tensor<T>& vo = g.val(offs);
    const Tensor<T>& vm = g.val(mask);
    const Tensor<T>& vw = g.val(w);
    int64_t Cin = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
    int64_t Cout = vw.dim(0), K = vw.dim(2);
    int64_t KK = K * K, pad = K / 2, cg = Cin / groups, n = H * W;
    bool need_x = g.needs_grad(x), need_o = g.needs_grad(offs);
    bool need_m = g.needs_grad(mask), need_w = g.needs_grad(w);
    Tensor<T>* gx = need_x ? &g.grad_acc(x) : nullptr;
    Tensor<T>* go = need_o ? &g.grad_acc(offs) : nullptr;
    Tensor<T>* gm = need_m ? &g.grad_acc(mask) : nullptr;
    Tensor<T>* gw = need_w ? &g.grad_acc(w) : nullptr;
    if (b >= 0 && g.needs_grad(b)) {
      Tensor<T>& gb = g.grad_acc(b);
      for (int64_t oc = 0; oc < Cout; ++oc) {
        const T* gyc = gy.data() + oc * n;
        T acc = 0;
        for (int64_t p = 0; p < n; ++p) acc += gyc[p];
        gb[oc] += acc;
      }
    }
    std::vector<T> col(size_t(Cin * KK)), gcol(size_t(Cin * KK));
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t wp = 0; wp < W; ++wp) {
        int64_t p = h * W + wp;
        // Rebuild the sampled column, then pull the output gradient through
        // the weight matrix.
        for (int64_t gr = 0; gr < groups; ++gr) {
          for (int64_t tap = 0; tap < KK; ++tap) {
            int64_t gk = gr * KK + tap;
            T px = T(wp + tap % K - pad) + vo[(gk * 2 + 0) * n + p];
            T py = T(h + tap / K - pad) + vo[(gk * 2 + 1) * n + p];
            T m = vm[gk * n + p];
            for (int64_t ic = gr * cg; ic < (gr + 1) * cg; ++ic) {
              T val = detail::bilin_read(vx.data() + ic * n, H, W, px, py);
              col[size_t(ic * KK + tap)] = m * val;
            }
          }
        }
        std::fill(gcol.begin(), gcol.end(), T(0));
        for (int64_t oc = 0; oc < Cout; ++oc) {
          T gv = gy[oc * n + p];
          if (gv == T(0)) continue;
          const T* wr = vw.data() + oc * Cin * KK;
          T* gwr = need_w ? gw->data() + oc * Cin * KK : nullptr;
          for (int64_t i = 0; i < Cin * KK; ++i) {
            gcol[size_t(i)] += gv * wr[i];
            if (need_w) gwr[i] += gv * col[size_t(i)];
          }
        }
        if (!need_x && !need_o && !need_m) continue;
        for (int64_t gr = 0; gr < groups; ++gr) {
          for (int64_t tap = 0; tap < KK; ++tap) {
            int64_t gk = gr * KK + tap;
            T px = T(wp + tap % K - pad) + vo[(gk * 2 + 0) * n + p];
            T py = T(h + tap / K - pad) + vo[(gk * 2 + 1) * n + p];
            T m = vm[gk * n + p];
            int64_t x0 = int64_t(std::floor(px)), y0 = int64_t(std::floor(py));
            T wx = px - T(x0), wy = py - T(y0);
            T gpx = 0, gpy = 0, gmask_acc = 0;
            for (int64_t ic = gr * cg; ic < (gr + 1) * cg; ++ic) {
              T gc = gcol[size_t(ic * KK + tap)];
              if (gc == T(0)) continue;
              const T* plane = vx.data() + ic * n;
              T* gplane = need_x ? gx->data() + ic * n : nullptr;
              T val = 0;
              for (int64_t dy = 0; dy < 2; ++dy) {
                int64_t yy = y0 + dy;
                if (yy < 0 || yy >= H) continue;
                T wv_y = dy ? wy : T(1) - wy;
                T sy = dy ? T(1) : T(-1);
                for (int64_t dx = 0; dx < 2; ++dx) {
                  int64_t xx = x0 + dx;
                  if (xx < 0 || xx >= W) continue;
                  T wv_x = dx ? wx : T(1) - wx;
                  T sx = dx ? T(1) : T(-1);
                  T fv = plane[yy * W + xx];
                  val += wv_y * wv_x * fv;
                  if (need_x) gplane[yy * W + xx] += gc * m * wv_y * wv_x;
                  if (need_o) {
                    gpx += gc * m * wv_y * sx * fv;
                    gpy += gc * m * sy * wv_x * fv;
                  }
                }
              }
              if (need_m) gmask_acc += gc * val;
            }
            if (need_o) {
              (*go)[(gk * 2 + 0) * n + p] += gpx;
              (*go)[(gk * 2 + 1) * n + p] += gpy;
            }
            if (need_m) (*gm)[gk * n + p] += gmask_acc;
          }
        }
      }
    }
  });
}

}  // namespace ag
}  // namespace medvsr
