#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "medvsr/blocks.hpp"
#include "medvsr/data.hpp"
#include "medvsr/propagation.hpp"
#include "medvsr/reconstruction.hpp"

namespace medvsr {

struct ModelConfig {
  int64_t width = 32;
  int64_t state = 16;    // recurrence state size per channel
  int64_t window = 16;   // local-window side
  int64_t branches = 4;  // alternating backward/forward passes
  int64_t kernel = 7;    // large-kernel block size
  int64_t depth = 3;     // large-kernel stack depth
  int64_t scale = 4;
  FlowEstimator flow{FlowMethod::kBlockMatch, 8, 4};
  // ablation switches
  bool lpe = true, lw = true, sp = true, cat = true, cssb = true;
  PropScheme prop_scheme = PropScheme::kT2T1;
  ComposeMode compose_mode = ComposeMode::kSum;
  ConvBlockKind lksb_kind = ConvBlockKind::kLksb;

  void validate() const {
    require(width >= 1 && state >= 1 && depth >= 0, "config: bad sizes");
    require(branches >= 1 && branches % 2 == 0,
            "config: branch count must be positive and even");
    require(scale == 4, "config: only the x4 configuration is supported");
    require(window >= 2, "config: window side must be at least 2");
    require(kernel >= 1 && kernel % 2 == 1, "config: kernel must be odd");
  }
};

template <class T>
struct Model {
  ModelConfig cfg;
  Tensor<T> w_in, b_in;  // [width,3,3,3] shallow feature conv
  LksbBlock<T> extr1, extr2;
  std::vector<CsspStep<T>> branches;
  IssrPath<T> issr;
  UpsampleBlock<T> up;

  void init(Rng& rng, const ModelConfig& c) {
    c.validate();
    cfg = c;
    w_in = init_weight<T>({c.width, 3, 3, 3}, 27, rng);
    b_in = Tensor<T>({c.width}, T(0));
    extr1.init(rng, c.width, 3, ConvBlockKind::kResBlock);
    extr2.init(rng, c.width, 3, ConvBlockKind::kResBlock);
    branches.assign(size_t(c.branches), CsspStep<T>{});
    for (auto& b : branches)
      b.init(rng, c.width, c.state, c.window, c.lw, c.lpe, c.sp,
             c.prop_scheme, c.compose_mode, c.cssb);
    issr.init(rng, c.width, c.state, c.branches, c.window, c.depth, c.kernel,
              c.lw, c.cat, c.lksb_kind);
    up.init(rng, c.width, c.scale);
  }

  // Shallow features: plain 3->width convolution plus two residual blocks.
  // Frame-independent by construction.
  int extract(Graph<T>& g, int frame) {
    require(g.val(frame).rank() == 3 && g.val(frame).dim(0) == 3,
            "extract: frame must be [3,H,W]");
    int h = ag::conv2d(g, frame, g.param(w_in), g.param(b_in));
    return extr2.apply(g, extr1.apply(g, h));
  }

  // Index plumbing shared by the one-graph and per-step forward paths.
  // Even-indexed branches run backward in time (neighbors at t+1, t+2), odd
  // ones forward. Missing neighbors duplicate the boundary frame with a zero
  // flow, so every step of a branch sees the same inputs on a static clip.
  struct StepPlan {
    int64_t prev1, prev2;
    const Tensor<T>* o1;  // flow t -> neighbor (null = zero)
    const Tensor<T>* o2;  // flow neighbor -> next neighbor
  };

  StepPlan plan_step(size_t j, int64_t t, int64_t frames,
                     const ClipFlows<T>& fl) const {
    StepPlan p{};
    if (j % 2 == 0) {
      p.prev1 = std::min(t + 1, frames - 1);
      p.prev2 = std::min(t + 2, frames - 1);
      p.o1 = t + 1 < frames ? &fl.fwd[size_t(t)] : nullptr;
      p.o2 = t + 2 < frames ? &fl.fwd[size_t(t + 1)] : nullptr;
    } else {
      p.prev1 = std::max<int64_t>(t - 1, 0);
      p.prev2 = std::max<int64_t>(t - 2, 0);
      p.o1 = t >= 1 ? &fl.back[size_t(t - 1)] : nullptr;
      p.o2 = t >= 2 ? &fl.back[size_t(t - 2)] : nullptr;
    }
    return p;
  }

  // Whole clip in one graph; returns the SR frame node ids. Used for training
  // where gradients must flow end to end.
  std::vector<int> forward_nodes(Graph<T>& g, const Clip<T>& lr,
                                 const ClipFlows<T>& fl) {
    check_clip(lr, "forward");
    int64_t frames = int64_t(lr.size());
    require(int64_t(fl.fwd.size()) == frames - 1 &&
                fl.back.size() == fl.fwd.size(),
            "forward: flow count must be frames-1 per direction");
    Tensor<T> zero({2, lr[0].dim(1), lr[0].dim(2)}, T(0));
    std::vector<int> cur(static_cast<size_t>(frames));
    for (int64_t t = 0; t < frames; ++t)
      cur[size_t(t)] = extract(g, g.leaf(lr[size_t(t)], false));
    std::vector<std::vector<int>> feats(static_cast<size_t>(frames));
    for (size_t j = 0; j < branches.size(); ++j) {
      std::vector<int> next(static_cast<size_t>(frames));
      for (int64_t t = 0; t < frames; ++t) {
        StepPlan p = plan_step(j, t, frames, fl);
        next[size_t(t)] =
            branches[j].apply(g, cur[size_t(p.prev2)], cur[size_t(p.prev1)],
                              cur[size_t(t)], p.o2 ? *p.o2 : zero,
                              p.o1 ? *p.o1 : zero);
      }
      for (int64_t t = 0; t < frames; ++t)
        feats[size_t(t)].push_back(next[size_t(t)]);
      cur = next;
    }
    std::vector<int> out(static_cast<size_t>(frames));
    for (int64_t t = 0; t < frames; ++t)
      out[size_t(t)] =
          up.apply(g, issr.apply(g, feats[size_t(t)]), lr[size_t(t)]);
    return out;
  }

  // Inference over precomputed flows: one small graph per step so memory
  // stays bounded on full frames. Identical arithmetic to forward_nodes.
  Clip<T> forward_with_flows(const Clip<T>& lr, const ClipFlows<T>& fl) {
    check_clip(lr, "forward");
    int64_t frames = int64_t(lr.size());
    require(int64_t(fl.fwd.size()) == frames - 1 &&
                fl.back.size() == fl.fwd.size(),
            "forward: flow count must be frames-1 per direction");
    Tensor<T> zero({2, lr[0].dim(1), lr[0].dim(2)}, T(0));
    std::vector<Tensor<T>> cur(static_cast<size_t>(frames));
    for (int64_t t = 0; t < frames; ++t) {
      Graph<T> g;
      cur[size_t(t)] = g.val(extract(g, g.leaf(lr[size_t(t)], false)));
    }
    std::vector<std::vector<Tensor<T>>> feats(static_cast<size_t>(frames));
    for (size_t j = 0; j < branches.size(); ++j) {
      std::vector<Tensor<T>> next(static_cast<size_t>(frames));
      for (int64_t t = 0; t < frames; ++t) {
        StepPlan p = plan_step(j, t, frames, fl);
        Graph<T> g;
        int id = branches[j].apply(
            g, g.leaf(cur[size_t(p.prev2)], false),
            g.leaf(cur[size_t(p.prev1)], false), g.leaf(cur[size_t(t)], false),
            p.o2 ? *p.o2 : zero, p.o1 ? *p.o1 : zero);
        next[size_t(t)] = g.val(id);
      }
      for (int64_t t = 0; t < frames; ++t)
        feats[size_t(t)].push_back(next[size_t(t)]);
      cur = std::move(next);
    }
    Clip<T> sr(static_cast<size_t>(frames));
    for (int64_t t = 0; t < frames; ++t) {
      Graph<T> g;
      std::vector<int> ids;
      ids.reserve(feats[size_t(t)].size());
      for (const auto& f : feats[size_t(t)]) ids.push_back(g.leaf(f, false));
      sr[size_t(t)] = g.val(up.apply(g, issr.apply(g, ids), lr[size_t(t)]));
    }
    return sr;
  }

  // Full inference path: estimates flows per the configured method, then
  // reconstructs. Unclamped output; writers clamp at quantization time.
  Clip<T> forward_clip(const Clip<T>& lr) {
    check_clip(lr, "forward");
    return forward_with_flows(lr, clip_flows(lr, cfg.flow));
  }

  void visit(const std::string& p, const ParamFn<T>& fn) {
    fn(p + ".w_in", w_in);
    fn(p + ".b_in", b_in);
    extr1.visit(p + ".extr1", fn);
    extr2.visit(p + ".extr2", fn);
    for (size_t j = 0; j < branches.size(); ++j)
      branches[j].visit(p + ".branch" + std::to_string(j), fn);
    issr.visit(p + ".issr", fn);
    up.visit(p + ".up", fn);
  }
};

}  // namespace medvsr
