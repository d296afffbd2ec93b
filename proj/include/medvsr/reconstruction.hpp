#pragma once

#include <string>
#include <vector>

#include "medvsr/blocks.hpp"
#include "medvsr/ops_image.hpp"
#include "medvsr/ssm.hpp"

namespace medvsr {

// Inner state-space block: fuse the branch features by channel concatenation
// and a 1x1 reduction, then run a self-scan over local windows where x, B,
// dt and C all come from one selective projection. The gate output is joined
// with the scan by concatenation (each path at half width) instead of the
// multiplicative gate; use_cat=false restores the gate form at full width,
// which costs strictly more parameters.
template <class T>
struct IssbBlock {
  Tensor<T> w_r, b_r;        // [C, J*C, 1, 1], [C]
  SelectiveProj<T> proj;     // self-scan: produces x, B, dt and C
  Tensor<T> a_log;           // [Dx]
  Tensor<T> ln_z_g, ln_z_b;  // [C]
  Tensor<T> w_z, b_z;        // [C,Dx], [Dx]
  Tensor<T> ln_o_g, ln_o_b;  // [C] (concat of halves, or the gated product)
  Tensor<T> w_o, b_o;        // [C,C], [C]
  int64_t width = 0, branches = 0, dx = 0, n = 0, l = 16;
  bool use_lw = true, use_cat = true;

  void init(Rng& rng, int64_t C, int64_t N, int64_t J, int64_t window,
            bool lw_on = true, bool cat_on = true) {
    require(J >= 1, "issb: need at least one branch");
    require(!cat_on || C % 2 == 0,
            "issb: concatenation form needs an even width");
    width = C;
    branches = J;
    n = N;
    l = window;
    use_lw = lw_on;
    use_cat = cat_on;
    dx = cat_on ? C / 2 : C;
    w_r = init_weight<T>({C, J * C, 1, 1}, J * C, rng);
    b_r = Tensor<T>({C}, T(0));
    proj.init(rng, C, dx, N, /*withC=*/true);
    a_log = init_a_log<T>(dx, rng);
    ln_z_g = Tensor<T>({C}, T(1));
    ln_z_b = Tensor<T>({C}, T(0));
    w_z = init_weight<T>({C, dx}, C, rng);
    b_z = Tensor<T>({dx}, T(0));
    ln_o_g = Tensor<T>({C}, T(1));
    ln_o_b = Tensor<T>({C}, T(0));
    w_o = init_weight<T>({C, C}, C, rng);
    b_o = Tensor<T>({C}, T(0));
  }

  int apply(Graph<T>& g, const std::vector<int>& branch_feats) {
    require(int64_t(branch_feats.size()) == branches,
            "issb: branch count mismatch");
    const Tensor<T>& f0 = g.val(branch_feats[0]);
    require(f0.rank() == 3 && f0.dim(0) == width, "issb: bad feature shape");
    for (int f : branch_feats)
      require(g.val(f).shape() == f0.shape(), "issb: branch shapes differ");
    int64_t H = f0.dim(1), W = f0.dim(2);
    int cat = branches > 1 ? ag::concat(g, branch_feats, 0) : branch_feats[0];
    int fused = ag::conv2d(g, cat, g.param(w_r), g.param(b_r));
    WindowGeometry geo =
        use_lw ? window_geometry(H, W, l) : frame_geometry(H, W);
    int v = ag::window_partition(g, fused, geo);
    auto pr = proj.apply(g, v, geo.tokens());
    int A = ag::scale(g, ag::exp_op(g, g.param(a_log)), -1.0);
    int y = ag::selective_scan(g, pr.x, pr.dt, A, pr.b, pr.c, geo.tokens());
    int z = ag::silu(
        g, ag::linear(g,
                      ag::layer_norm(g, v, g.param(ln_z_g), g.param(ln_z_b)),
                      g.param(w_z), g.param(b_z)));
    int mix = use_cat ? ag::concat(g, {y, z}, 1) : ag::mul(g, z, y);
    int out = ag::linear(g,
                         ag::layer_norm(g, mix, g.param(ln_o_g), g.param(ln_o_b)),
                         g.param(w_o), g.param(b_o));
    return ag::window_merge(g, ag::add(g, out, v), geo);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".w_r", w_r);
    fn(p + ".b_r", b_r);
    proj.visit(p + ".proj", fn);
    fn(p + ".a_log", a_log);
    fn(p + ".ln_z_g", ln_z_g);
    fn(p + ".ln_z_b", ln_z_b);
    fn(p + ".w_z", w_z);
    fn(p + ".b_z", b_z);
    fn(p + ".ln_o_g", ln_o_g);
    fn(p + ".ln_o_b", ln_o_b);
    fn(p + ".w_o", w_o);
    fn(p + ".b_o", b_o);
  }
};

// Reconstruction path: ISSB fusion, tokenwise MLP residual, then a stack of
// large-kernel blocks (each internally residual).
template <class T>
struct IssrPath {
  IssbBlock<T> issb;
  MlpBlock<T> mlp;
  std::vector<LksbBlock<T>> stack;

  void init(Rng& rng, int64_t C, int64_t N, int64_t J, int64_t window,
            int64_t depth, int64_t k, bool lw_on = true, bool cat_on = true,
            ConvBlockKind kind = ConvBlockKind::kLksb) {
    require(depth >= 0, "issr: negative depth");
    issb.init(rng, C, N, J, window, lw_on, cat_on);
    mlp.init(rng, C);
    stack.resize(size_t(depth));
    for (auto& blk : stack) blk.init(rng, C, k, kind);
  }

  int apply(Graph<T>& g, const std::vector<int>& branch_feats) {
    int ghat = issb.apply(g, branch_feats);
    const Tensor<T>& v = g.val(ghat);
    WindowGeometry geo = frame_geometry(v.dim(1), v.dim(2));
    int tok = ag::window_partition(g, ghat, geo);
    int r = ag::add(g, mlp.apply(g, tok), tok);
    int m = ag::window_merge(g, r, geo);
    for (auto& blk : stack) m = blk.apply(g, m);
    return m;
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    issb.visit(p + ".issb", fn);
    mlp.visit(p + ".mlp", fn);
    for (size_t i = 0; i < stack.size(); ++i)
      stack[i].visit(p + ".lksb" + std::to_string(i), fn);
  }
};

// x4 upsampler: two (conv, x2 sub-pixel rearrangement, activation) stages,
// a zero-initialized projection to RGB, and a bicubic x4 of the input frame
// as the global residual. Clamping to [0,1] is the caller's inference-time
// concern; the training loss sees the unclamped output.
template <class T>
struct UpsampleBlock {
  Tensor<T> w_u1, b_u1;  // [4C, C, 3, 3]
  Tensor<T> w_u2, b_u2;  // [4C, C, 3, 3]
  Tensor<T> w_f, b_f;    // [3, C, 3, 3] zero-initialized
  int64_t scale = 4;

  void init(Rng& rng, int64_t C, int64_t sc = 4) {
    require(sc == 4, "upsample: only the x4 configuration is supported");
    scale = sc;
    w_u1 = init_weight<T>({4 * C, C, 3, 3}, 9 * C, rng);
    b_u1 = Tensor<T>({4 * C}, T(0));
    w_u2 = init_weight<T>({4 * C, C, 3, 3}, 9 * C, rng);
    b_u2 = Tensor<T>({4 * C}, T(0));
    w_f = Tensor<T>({3, C, 3, 3}, T(0));
    b_f = Tensor<T>({3}, T(0));
  }

  int apply(Graph<T>& g, int g_t, const Tensor<T>& lr_frame) {
    require(g.val(g_t).rank() == 3, "upsample: feature must be [C,H,W]");
    // copy dims now: node insertion below may reallocate the graph arena
    int64_t H = g.val(g_t).dim(1), W = g.val(g_t).dim(2);
    require(lr_frame.rank() == 3 && lr_frame.dim(0) == 3 &&
                lr_frame.dim(1) == H && lr_frame.dim(2) == W,
            "upsample: frame must be RGB at the feature size");
    int h = ag::silu(
        g, ag::pixel_shuffle(
               g, ag::conv2d(g, g_t, g.param(w_u1), g.param(b_u1)), 2));
    h = ag::silu(g, ag::pixel_shuffle(
                        g, ag::conv2d(g, h, g.param(w_u2), g.param(b_u2)), 2));
    int out = ag::conv2d(g, h, g.param(w_f), g.param(b_f));
    Tensor<T> up =
        resize_bicubic(lr_frame, scale * H, scale * W, /*antialias=*/false);
    return ag::add(g, out, g.leaf(up, false));
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".w_u1", w_u1);
    fn(p + ".b_u1", b_u1);
    fn(p + ".w_u2", w_u2);
    fn(p + ".b_u2", b_u2);
    fn(p + ".w_f", w_f);
    fn(p + ".b_f", b_f);
  }
};

}  // namespace medvsr
