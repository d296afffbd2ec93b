#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "medvsr/graph.hpp"
#include "medvsr/ops_basic.hpp"
#include "medvsr/ops_conv.hpp"
#include "medvsr/ops_dcn.hpp"
#include "medvsr/params.hpp"
#include "medvsr/tensor.hpp"

namespace medvsr {

// Token layout for a feature map split into local windows. Each window is an
// l x l tile flattened row-major; maps whose sides are not multiples of l are
// reflect-padded before the split and the padding is stripped on merge. The
// whole-frame variant (grid 1x1, token grid H x W) serves the no-window
// ablation with the same plumbing.
struct WindowGeometry {
  int64_t h = 0, w = 0;            // unpadded map size
  int64_t grid_h = 0, grid_w = 0;  // windows per axis
  int64_t tok_h = 0, tok_w = 0;    // token grid inside one window

  int64_t windows() const { return grid_h * grid_w; }
  int64_t tokens() const { return tok_h * tok_w; }
  int64_t length() const { return windows() * tokens(); }
  bool consistent() const {
    return h >= 1 && w >= 1 && tok_h >= 1 && tok_w >= 1 &&
           grid_h == (h + tok_h - 1) / tok_h &&
           grid_w == (w + tok_w - 1) / tok_w;
  }
};

inline WindowGeometry window_geometry(int64_t H, int64_t W, int64_t l) {
  require(l >= 2, "window side must be >= 2");
  require(H >= 1 && W >= 1, "window_geometry: empty map");
  WindowGeometry geo;
  geo.h = H;
  geo.w = W;
  geo.grid_h = (H + l - 1) / l;
  geo.grid_w = (W + l - 1) / l;
  geo.tok_h = geo.tok_w = l;
  return geo;
}

inline WindowGeometry frame_geometry(int64_t H, int64_t W) {
  require(H >= 1 && W >= 1, "frame_geometry: empty map");
  WindowGeometry geo;
  geo.h = H;
  geo.w = W;
  geo.grid_h = geo.grid_w = 1;
  geo.tok_h = H;
  geo.tok_w = W;
  return geo;
}

namespace ag {

// [C,H,W] -> [windows*tokens, C]; reflect padding fills partial tiles.
template <class T>
int window_partition(Graph<T>& g, int x, const WindowGeometry& geo) {
  const Tensor<T>& v = g.val(x);
  require(v.rank() == 3 && v.dim(1) == geo.h && v.dim(2) == geo.w,
          "window_partition: map does not match geometry");
  int64_t C = v.dim(0), H = geo.h, W = geo.w;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(size_t(geo.length() * C));
  for (int64_t wr = 0; wr < geo.grid_h; ++wr)
    for (int64_t wc = 0; wc < geo.grid_w; ++wc)
      for (int64_t ti = 0; ti < geo.tok_h; ++ti) {
        int64_t ph = reflect_index(wr * geo.tok_h + ti, H);
        for (int64_t tj = 0; tj < geo.tok_w; ++tj) {
          int64_t pw = reflect_index(wc * geo.tok_w + tj, W);
          for (int64_t c = 0; c < C; ++c)
            idx->push_back((c * H + ph) * W + pw);
        }
      }
  return gather(g, x, idx, {geo.length(), C});
}

// Exact inverse of window_partition on the unpadded region.
template <class T>
int window_merge(Graph<T>& g, int grid, const WindowGeometry& geo) {
  require(geo.consistent(), "window_merge: window count inconsistent with map size");
  const Tensor<T>& v = g.val(grid);
  require(v.rank() == 2 && v.dim(0) == geo.length(),
          "window_merge: grid does not match geometry");
  int64_t C = v.dim(1);
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(size_t(C * geo.h * geo.w));
  for (int64_t c = 0; c < C; ++c)
    for (int64_t h = 0; h < geo.h; ++h) {
      int64_t wr = h / geo.tok_h, ti = h % geo.tok_h;
      for (int64_t w = 0; w < geo.w; ++w) {
        int64_t wc = w / geo.tok_w, tj = w % geo.tok_w;
        int64_t r = ((wr * geo.grid_w + wc) * geo.tok_h + ti) * geo.tok_w + tj;
        idx->push_back(r * C + c);
      }
    }
  return gather(g, grid, idx, {C, geo.h, geo.w});
}

}  // namespace ag

// Tokenwise feed-forward: LayerNorm, expand x2, SiLU, contract.
template <class T>
struct MlpBlock {
  Tensor<T> ln_g, ln_b;  // [C]
  Tensor<T> w1, b1;      // [C,2C], [2C]
  Tensor<T> w2, b2;      // [2C,C], [C]

  void init(Rng& rng, int64_t C) {
    ln_g = Tensor<T>({C}, T(1));
    ln_b = Tensor<T>({C}, T(0));
    w1 = init_weight<T>({C, 2 * C}, C, rng);
    b1 = Tensor<T>({2 * C}, T(0));
    w2 = init_weight<T>({2 * C, C}, 2 * C, rng);
    b2 = Tensor<T>({C}, T(0));
  }

  int apply(Graph<T>& g, int x) {
    int u = ag::layer_norm(g, x, g.param(ln_g), g.param(ln_b));
    int h = ag::silu(g, ag::linear(g, u, g.param(w1), g.param(b1)));
    return ag::linear(g, h, g.param(w2), g.param(b2));
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".ln_g", ln_g);
    fn(p + ".ln_b", ln_b);
    fn(p + ".w1", w1);
    fn(p + ".b1", b1);
    fn(p + ".w2", w2);
    fn(p + ".b2", b2);
  }
};

// Convolutional refinement block. The default form is a large-kernel
// separable block: depthwise k x k, then two pointwise convolutions
// (expansion 2) with the activation between them, plus a residual. The
// alternative kinds reproduce the designs it is ablated against.
enum class ConvBlockKind { kLksb, kResBlock, kDwBlock, kPBlock };

inline const char* conv_block_name(ConvBlockKind k) {
  switch (k) {
    case ConvBlockKind::kLksb: return "lksb";
    case ConvBlockKind::kResBlock: return "resblock";
    case ConvBlockKind::kDwBlock: return "dwblock";
    case ConvBlockKind::kPBlock: return "pblock";
  }
  return "?";
}

template <class T>
struct LksbBlock {
  ConvBlockKind kind = ConvBlockKind::kLksb;
  int64_t k = 7;
  Tensor<T> w_a, b_a;  // depthwise / conv3 / pw-expand / partial conv
  Tensor<T> w_m, b_m;  // pw-expand / (unused) / depthwise3 / pw-expand
  Tensor<T> w_o, b_o;  // final conv

  void init(Rng& rng, int64_t C, int64_t kernel,
            ConvBlockKind kd = ConvBlockKind::kLksb) {
    kind = kd;
    k = kernel;
    require(k % 2 == 1 && k >= 1, "kernel size must be odd");
    switch (kind) {
      case ConvBlockKind::kLksb:
        w_a = init_weight<T>({C, 1, k, k}, k * k, rng);
        b_a = Tensor<T>({C}, T(0));
        w_m = init_weight<T>({2 * C, C, 1, 1}, C, rng);
        b_m = Tensor<T>({2 * C}, T(0));
        w_o = init_weight<T>({C, 2 * C, 1, 1}, 2 * C, rng);
        break;
      case ConvBlockKind::kResBlock:
        w_a = init_weight<T>({C, C, 3, 3}, 9 * C, rng);
        b_a = Tensor<T>({C}, T(0));
        w_m = Tensor<T>();
        b_m = Tensor<T>();
        w_o = init_weight<T>({C, C, 3, 3}, 9 * C, rng);
        break;
      case ConvBlockKind::kDwBlock:
        w_a = init_weight<T>({2 * C, C, 1, 1}, C, rng);
        b_a = Tensor<T>({2 * C}, T(0));
        w_m = init_weight<T>({2 * C, 1, 3, 3}, 9, rng);
        b_m = Tensor<T>({2 * C}, T(0));
        w_o = init_weight<T>({C, 2 * C, 1, 1}, 2 * C, rng);
        break;
      case ConvBlockKind::kPBlock: {
        int64_t cp = std::max<int64_t>(1, C / 4);
        w_a = init_weight<T>({cp, cp, 3, 3}, 9 * cp, rng);
        b_a = Tensor<T>({cp}, T(0));
        w_m = init_weight<T>({2 * C, C, 1, 1}, C, rng);
        b_m = Tensor<T>({2 * C}, T(0));
        w_o = init_weight<T>({C, 2 * C, 1, 1}, 2 * C, rng);
        break;
      }
    }
    b_o = Tensor<T>({C}, T(0));
  }

  int apply(Graph<T>& g, int x) {
    int64_t C = g.val(x).dim(0);
    int h = -1;
    switch (kind) {
      case ConvBlockKind::kLksb:
        h = ag::conv2d(g, x, g.param(w_a), g.param(b_a), C);
        h = ag::silu(g, ag::conv2d(g, h, g.param(w_m), g.param(b_m)));
        h = ag::conv2d(g, h, g.param(w_o), g.param(b_o));
        break;
      case ConvBlockKind::kResBlock:
        h = ag::silu(g, ag::conv2d(g, x, g.param(w_a), g.param(b_a)));
        h = ag::conv2d(g, h, g.param(w_o), g.param(b_o));
        break;
      case ConvBlockKind::kDwBlock:
        h = ag::silu(g, ag::conv2d(g, x, g.param(w_a), g.param(b_a)));
        h = ag::silu(g, ag::conv2d(g, h, g.param(w_m), g.param(b_m), 2 * C));
        h = ag::conv2d(g, h, g.param(w_o), g.param(b_o));
        break;
      case ConvBlockKind::kPBlock: {
        int64_t cp = w_a.dim(0);
        int head = ag::conv2d(g, ag::narrow(g, x, 0, 0, cp), g.param(w_a),
                              g.param(b_a));
        int mixed = cp < C
                        ? ag::concat(g, {head, ag::narrow(g, x, 0, cp, C - cp)}, 0)
                        : head;
        h = ag::silu(g, ag::conv2d(g, mixed, g.param(w_m), g.param(b_m)));
        h = ag::conv2d(g, h, g.param(w_o), g.param(b_o));
        break;
      }
    }
    return ag::add(g, x, h);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".w_a", w_a);
    fn(p + ".b_a", b_a);
    if (w_m.numel()) {
      fn(p + ".w_m", w_m);
      fn(p + ".b_m", b_m);
    }
    fn(p + ".w_o", w_o);
    fn(p + ".b_o", b_o);
  }
};

// Deformable alignment: a small residual-convolution head reads the guide
// map and predicts per-group tap offsets (clamped residues) and sigmoid
// modulations; a modulated deformable 3x3 convolution then aggregates the
// concatenated maps. The head output is zero-initialized, so at init the op
// is a plain convolution with all modulations at 0.5.
template <class T>
struct DeformAlign {
  static constexpr int64_t kGroups = 4;
  static constexpr int64_t kKernel = 3;
  Tensor<T> w_h1, b_h1;  // guide conv
  Tensor<T> w_h2, b_h2;  // guide conv, residual stage
  Tensor<T> w_ho, b_ho;  // offset/mask head, zero-initialized
  Tensor<T> w_d, b_d;    // deformable kernel over the concatenated maps
  double max_residue = 10.0;

  void init(Rng& rng, int64_t width, int64_t cat_width) {
    require(cat_width % kGroups == 0,
            "deform_align: group count must divide concatenated width");
    int64_t KK = kKernel * kKernel;
    w_h1 = init_weight<T>({width, width, 3, 3}, 9 * width, rng);
    b_h1 = Tensor<T>({width}, T(0));
    w_h2 = init_weight<T>({width, width, 3, 3}, 9 * width, rng);
    b_h2 = Tensor<T>({width}, T(0));
    w_ho = Tensor<T>({3 * kGroups * KK, width, 3, 3}, T(0));
    b_ho = Tensor<T>({3 * kGroups * KK}, T(0));
    w_d = init_weight<T>({width, cat_width, kKernel, kKernel},
                         cat_width * KK, rng);
    b_d = Tensor<T>({width}, T(0));
  }

  int apply(Graph<T>& g, int f_guide, int f_cat) {
    const Tensor<T>& vg = g.val(f_guide);
    const Tensor<T>& vc = g.val(f_cat);
    require(vg.rank() == 3 && vc.rank() == 3 && vg.dim(1) == vc.dim(1) &&
                vg.dim(2) == vc.dim(2),
            "deform_align: guide and concatenated maps must align spatially");
    int h = ag::silu(g, ag::conv2d(g, f_guide, g.param(w_h1), g.param(b_h1)));
    int h2 = ag::add(
        g, ag::silu(g, ag::conv2d(g, h, g.param(w_h2), g.param(b_h2))), h);
    int head = ag::conv2d(g, h2, g.param(w_ho), g.param(b_ho));
    int64_t KK = kKernel * kKernel;
    int offs = ag::clamp_op(g, ag::narrow(g, head, 0, 0, 2 * kGroups * KK),
                            -max_residue, max_residue);
    int mask =
        ag::sigmoid(g, ag::narrow(g, head, 0, 2 * kGroups * KK, kGroups * KK));
    return ag::deform_conv2d(g, f_cat, offs, mask, g.param(w_d), g.param(b_d),
                             kGroups);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".w_h1", w_h1);
    fn(p + ".b_h1", b_h1);
    fn(p + ".w_h2", w_h2);
    fn(p + ".b_h2", b_h2);
    fn(p + ".w_ho", w_ho);
    fn(p + ".b_ho", b_ho);
    fn(p + ".w_d", w_d);
    fn(p + ".b_d", b_d);
  }
};

// Total element count across a module's visitable tensors.
template <class M>
int64_t param_count(M& m) {
  int64_t n = 0;
  m.visit("", [&](const std::string&, auto& t) { n += t.numel(); });
  return n;
}

}  // namespace medvsr
