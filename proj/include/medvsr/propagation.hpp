#pragma once

#include <string>
#include <vector>

#include "medvsr/blocks.hpp"
#include "medvsr/ops_dcn.hpp"
#include "medvsr/ops_image.hpp"
#include "medvsr/ssm.hpp"

namespace medvsr {

enum class ComposeMode { kSum, kWarpCompose };
enum class PropScheme { kT2T, kT1T, kT2T1, kBoth };

inline const char* prop_scheme_name(PropScheme s) {
  switch (s) {
    case PropScheme::kT2T: return "t2t";
    case PropScheme::kT1T: return "t1t";
    case PropScheme::kT2T1: return "t2t1";
    case PropScheme::kBoth: return "both";
  }
  return "?";
}

// Two-hop flow composition. Flows are [2,H,W] (channel 0 = x displacement)
// mapping current-step pixel coordinates into the source frame. `o_a` is the
// farther hop, sampled where `o_b` lands; the default mode is the elementwise
// sum, which treats the farther flow as spatially constant along the hop.
template <class T>
Tensor<T> compose_flows(const Tensor<T>& o_a, const Tensor<T>& o_b,
                        ComposeMode mode) {
  require(o_a.shape() == o_b.shape(), "compose_flows: shape mismatch");
  require(o_a.rank() == 3 && o_a.dim(0) == 2, "compose_flows: flow must be [2,H,W]");
  Tensor<T> out(o_a.shape());
  int64_t H = o_a.dim(1), W = o_a.dim(2), n = H * W;
  if (mode == ComposeMode::kSum) {
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = o_a[i] + o_b[i];
    return out;
  }
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w) {
      int64_t p = h * W + w;
      T px = T(w) + o_b[p];
      T py = T(h) + o_b[n + p];
      out[p] = o_b[p] + detail::bilin_read(o_a.data(), H, W, px, py);
      out[n + p] = o_b[n + p] + detail::bilin_read(o_a.data() + n, H, W, px, py);
    }
  return out;
}

namespace ag {

// output(p) = f(p + o(p)), bilinear with zero extension; differentiable in
// both the map and the flow.
template <class T>
int warp(Graph<T>& g, int f, int flow) {
  const Tensor<T>& vf = g.val(f);
  const Tensor<T>& vo = g.val(flow);
  require(vf.rank() == 3 && vo.rank() == 3 && vo.dim(0) == 2 &&
              vo.dim(1) == vf.dim(1) && vo.dim(2) == vf.dim(2),
          "warp: map and flow must be spatially matched");
  int64_t H = vf.dim(1), W = vf.dim(2), n = H * W;
  Tensor<T> grid({2, H, W});
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w) {
      grid[h * W + w] = T(w);
      grid[n + h * W + w] = T(h);
    }
  return bilinear_sample(g, f, add(g, g.leaf(grid, false), flow));
}

template <class T>
int warp(Graph<T>& g, int f, const Tensor<T>& flow) {
  return warp(g, f, g.leaf(flow, false));
}

}  // namespace ag

// Cross state-space block: the near sequence provides the scanned input and
// data-dependent B/dt, the far (distant, warped) sequence provides the output
// matrix C through its own projection plus a learnable position embedding.
//
// Ablations: use_lpe skips the position embedding; use_sp=false drops the
// separate far projection and reads C from the shared near projection.
template <class T>
struct CssbBlock {
  SelectiveProj<T> near;
  FarProj<T> far;           // allocated only when use_sp
  Tensor<T> lpe_w, lpe_b;   // [N,3,3], [N]; identity-initialized
  Tensor<T> a_log;          // [Dx]
  Tensor<T> ln_z_g, ln_z_b; // gate path
  Tensor<T> w_z, b_z;       // [C,Dx], [Dx]
  Tensor<T> ln_o_g, ln_o_b; // output path, over Dx
  Tensor<T> w_o, b_o;       // [Dx,C], [C]
  int64_t dx = 0, n = 0;
  bool use_lpe = true, use_sp = true;

  void init(Rng& rng, int64_t C, int64_t N, bool lpe_on = true,
            bool sp_on = true) {
    dx = C;
    n = N;
    use_lpe = lpe_on;
    use_sp = sp_on;
    near.init(rng, C, dx, N, /*withC=*/!sp_on);
    if (sp_on) far.init(rng, C, N);
    if (lpe_on) {
      lpe_w = Tensor<T>({N, 3, 3}, T(0));
      for (int64_t c = 0; c < N; ++c) lpe_w[c * 9 + 4] = T(1);
      lpe_b = Tensor<T>({N}, T(0));
    }
    a_log = init_a_log<T>(dx, rng);
    ln_z_g = Tensor<T>({C}, T(1));
    ln_z_b = Tensor<T>({C}, T(0));
    w_z = init_weight<T>({C, dx}, C, rng);
    b_z = Tensor<T>({dx}, T(0));
    ln_o_g = Tensor<T>({dx}, T(1));
    ln_o_b = Tensor<T>({dx}, T(0));
    w_o = init_weight<T>({dx, C}, dx, rng);
    b_o = Tensor<T>({C}, T(0));
  }

  int apply(Graph<T>& g, int v_far, int v_near, const WindowGeometry& geo) {
    const Tensor<T>& vf = g.val(v_far);
    const Tensor<T>& vn = g.val(v_near);
    require(vf.shape() == vn.shape(),
            "cssb: window grids must share geometry");
    require(vn.rank() == 2 && vn.dim(0) == geo.length(),
            "cssb: grid does not match geometry");
    int64_t chunk = geo.tokens();
    auto pr = near.apply(g, v_near, chunk);
    int c_far = use_sp ? far.apply(g, v_far, chunk)
                       : near.apply(g, v_far, chunk).c;
    if (use_lpe)
      c_far = ag::lpe(g, c_far, g.param(lpe_w), g.param(lpe_b), geo.windows(),
                      geo.tok_h, geo.tok_w);
    int A = ag::scale(g, ag::exp_op(g, g.param(a_log)), -1.0);
    int y = ag::selective_scan(g, pr.x, pr.dt, A, pr.b, c_far, chunk);
    int z = ag::silu(
        g, ag::linear(g,
                      ag::layer_norm(g, v_near, g.param(ln_z_g), g.param(ln_z_b)),
                      g.param(w_z), g.param(b_z)));
    int gated = ag::layer_norm(g, ag::mul(g, z, y), g.param(ln_o_g),
                               g.param(ln_o_b));
    return ag::linear(g, gated, g.param(w_o), g.param(b_o));
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    near.visit(p + ".near", fn);
    if (use_sp) far.visit(p + ".far", fn);
    if (use_lpe) {
      fn(p + ".lpe_w", lpe_w);
      fn(p + ".lpe_b", lpe_b);
    }
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

// One propagation step of a branch: refine a feature with cross state-space
// propagation, then aggregate [refined, warped t-1, current] through
// deformable alignment guided by the t-1 feature. The scheme picks which
// (far, near) pair feeds the cross block; kBoth chains both hops through a
// second block. use_cssb=false bypasses the refinement entirely (alignment
// path only).
template <class T>
struct CsspStep {
  CssbBlock<T> cssb;
  MlpBlock<T> mlp;
  CssbBlock<T> cssb2;  // second hop, kBoth only
  MlpBlock<T> mlp2;
  DeformAlign<T> align;
  int64_t width = 0, l = 16;
  PropScheme scheme = PropScheme::kT2T1;
  ComposeMode compose = ComposeMode::kSum;
  bool use_lw = true, use_cssb = true;

  void init(Rng& rng, int64_t C, int64_t N, int64_t window, bool lw_on,
            bool lpe_on, bool sp_on, PropScheme sc, ComposeMode cm,
            bool cssb_on) {
    width = C;
    l = window;
    use_lw = lw_on;
    scheme = sc;
    compose = cm;
    use_cssb = cssb_on;
    if (use_cssb) {
      cssb.init(rng, C, N, lpe_on, sp_on);
      mlp.init(rng, C);
      if (scheme == PropScheme::kBoth) {
        cssb2.init(rng, C, N, lpe_on, sp_on);
        mlp2.init(rng, C);
      }
    }
    align.init(rng, C, 3 * C);
  }

  WindowGeometry geometry(int64_t H, int64_t W) const {
    return use_lw ? window_geometry(H, W, l) : frame_geometry(H, W);
  }

  int apply(Graph<T>& g, int f_tm2, int f_tm1, int f_t,
            const Tensor<T>& o_tm2, const Tensor<T>& o_tm1) {
    const Tensor<T>& v1 = g.val(f_tm1);
    require(v1.rank() == 3 && v1.dim(0) == width,
            "cssp: feature width mismatch");
    require(g.val(f_tm2).shape() == v1.shape() &&
                g.val(f_t).shape() == v1.shape(),
            "cssp: features must share one shape");
    int64_t H = v1.dim(1), W = v1.dim(2);
    require(o_tm1.rank() == 3 && o_tm1.dim(0) == 2 && o_tm1.dim(1) == H &&
                o_tm1.dim(2) == W && o_tm2.shape() == o_tm1.shape(),
            "cssp: flows must match the feature size");
    WindowGeometry geo = geometry(H, W);

    int slot = f_tm1;
    if (use_cssb) {
      switch (scheme) {
        case PropScheme::kT2T1:
          slot = refine(g, cssb, mlp, geo,
                        ag::warp(g, f_tm2, compose_flows(o_tm2, o_tm1, compose)),
                        f_tm1);
          break;
        case PropScheme::kT2T:
          slot = refine(g, cssb, mlp, geo,
                        ag::warp(g, f_tm2, compose_flows(o_tm2, o_tm1, compose)),
                        f_t);
          break;
        case PropScheme::kT1T:
          slot = refine(g, cssb, mlp, geo, ag::warp(g, f_tm1, o_tm1), f_t);
          break;
        case PropScheme::kBoth: {
          int mid = refine(g, cssb, mlp, geo,
                           ag::warp(g, f_tm2, compose_flows(o_tm2, o_tm1, compose)),
                           f_tm1);
          slot = refine(g, cssb2, mlp2, geo, ag::warp(g, mid, o_tm1), f_t);
          break;
        }
      }
    }
    int f_bar = ag::warp(g, f_tm1, o_tm1);
    int cat = ag::concat(g, {slot, f_bar, f_t}, 0);
    return align.apply(g, f_tm1, cat);
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    if (use_cssb) {
      cssb.visit(p + ".cssb", fn);
      mlp.visit(p + ".mlp", fn);
      if (scheme == PropScheme::kBoth) {
        cssb2.visit(p + ".cssb2", fn);
        mlp2.visit(p + ".mlp2", fn);
      }
    }
    align.visit(p + ".align", fn);
  }

 private:
  // cssb + residual, tokenwise MLP + residual, back to a map
  int refine(Graph<T>& g, CssbBlock<T>& blk, MlpBlock<T>& ff,
             const WindowGeometry& geo, int far_map, int near_map) {
    int v_far = ag::window_partition(g, far_map, geo);
    int v_near = ag::window_partition(g, near_map, geo);
    int v_hat = ag::add(g, blk.apply(g, v_far, v_near, geo), v_near);
    int v_out = ag::add(g, ff.apply(g, v_hat), v_hat);
    return ag::window_merge(g, v_out, geo);
  }
};

}  // namespace medvsr
